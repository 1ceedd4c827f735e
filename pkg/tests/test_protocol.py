import numpy as np
import pytest

from synthgen import random_blob_mask
from xclick.geometry import BinaryMask, Point, ROLES, infer_roles, simulate_extreme_clicks
from xclick.protocol import (
    Batch,
    ClickInstance,
    EventLog,
    IncompleteSessionError,
    ProtocolError,
    ProtocolState,
    QualificationSession,
    accepted_area,
    accepted_areas,
    build_batch,
    qualification_feedback,
    submit_batch,
    timing_report,
    validate_click,
)


def full_mask(width=60, height=60):
    return BinaryMask.from_bool(np.ones((height, width), dtype=bool))


class TestAcceptedArea:
    def test_full_mask_top_area_is_first_21_rows(self):
        area = accepted_area(full_mask(), "top", tolerance=10)
        got = area.mask.object_mask()
        expected = np.zeros((60, 60), dtype=bool)
        expected[:21, :] = True  # rows 0..10 selected, plus 10 px of tolerance
        assert np.array_equal(got, expected)

    def test_single_pixel_mask_gives_disk(self):
        obj = np.zeros((40, 40), dtype=bool)
        obj[5, 5] = True
        for role in ROLES:
            area = accepted_area(BinaryMask.from_bool(obj), role, tolerance=10)
            yy, xx = np.mgrid[0:40, 0:40]
            disk = (yy - 5) ** 2 + (xx - 5) ** 2 <= 100
            assert np.array_equal(area.mask.object_mask(), disk)

    def test_monotone_in_tolerance(self, rng):
        for _ in range(10):
            mask = random_blob_mask(rng, width=30, height=30)
            for role in ROLES:
                small = accepted_area(mask, role, tolerance=3).mask.object_mask()
                large = accepted_area(mask, role, tolerance=7).mask.object_mask()
                assert np.all(large[small])

    def test_simulated_clicks_accepted_at_any_tolerance(self, rng):
        for _ in range(10):
            mask = random_blob_mask(rng, width=30, height=30)
            clicks = simulate_extreme_clicks(mask)
            for tolerance in (0, 1, 10):
                areas = accepted_areas(mask, tolerance=tolerance)
                for role in ROLES:
                    assert validate_click(clicks.point_for(role), areas[role]).accepted

    def test_empty_mask_rejected(self):
        with pytest.raises(ProtocolError):
            accepted_area(BinaryMask.zeros(5, 5), "top")

    def test_chebyshev_metric_variant(self):
        obj = np.zeros((20, 20), dtype=bool)
        obj[9, 9] = True
        area = accepted_area(BinaryMask.from_bool(obj), "top", tolerance=3, metric="chebyshev")
        got = area.mask.object_mask()
        expected = np.zeros((20, 20), dtype=bool)
        expected[6:13, 6:13] = True  # chebyshev ball is a square
        assert np.array_equal(got, expected)


class TestValidateClick:
    def area_around(self, x, y, tolerance=10, size=50):
        obj = np.zeros((size, size), dtype=bool)
        obj[y, x] = True
        return accepted_area(BinaryMask.from_bool(obj), "top", tolerance=tolerance)

    def test_click_on_extreme_pixel_accepted(self):
        area = self.area_around(20, 20)
        assert validate_click(Point(20, 20), area).accepted

    def test_distance_exactly_tolerance_accepted(self):
        area = self.area_around(20, 20, tolerance=10)
        assert validate_click(Point(30, 20), area).accepted

    def test_distance_tolerance_plus_one_rejected(self):
        area = self.area_around(20, 20, tolerance=10)
        assert not validate_click(Point(31, 20), area).accepted

    def test_out_of_image_click_flagged(self):
        area = self.area_around(20, 20)
        result = validate_click(Point(120, 20), area)
        assert not result.accepted
        assert result.out_of_bounds


def make_session(passing=True, n_images=5):
    masks = {}
    session = QualificationSession(worker="w1", images=tuple(f"img{i}" for i in range(n_images)))
    rng = np.random.default_rng(5)
    for i, img in enumerate(session.images):
        mask = random_blob_mask(rng, width=30, height=30)
        masks[img] = mask
        clicks = simulate_extreme_clicks(mask)
        accepted = {role: True for role in ROLES}
        if not passing and i == n_images - 1:
            accepted["top"] = False
        session.record(img, clicks, accepted)
    return session, masks


class TestQualification:
    def test_all_accepted_passes(self):
        session, _ = make_session(passing=True)
        assert session.status == "passed"
        assert session.passed

    def test_nineteen_of_twenty_fails(self):
        session, _ = make_session(passing=False)
        assert session.status == "failed"
        feedback_ready = all(img in session.clicks for img in session.images)
        assert feedback_ready
        failing = [
            (img, role)
            for img in session.images
            for role in ROLES
            if not session.accepted[img][role]
        ]
        assert failing == [("img4", "top")]

    def test_feedback_contains_clicks_areas_and_flags(self):
        session, masks = make_session(passing=True)
        areas = {img: accepted_areas(masks[img]) for img in session.images}
        feedback = qualification_feedback(session, areas)
        assert len(feedback) == 5
        for item in feedback:
            assert set(item["accepted"]) == set(ROLES)
            assert set(item["areas"]) == set(ROLES)
            img = item["image"]
            assert item["areas"]["top"].mask.size == masks[img].size

    def test_incomplete_session_error_lists_missing(self):
        session = QualificationSession(worker="w", images=("a", "b", "c", "d", "e"))
        session.record("a", infer_roles([(1, 1)] * 4), {r: True for r in ROLES})
        with pytest.raises(IncompleteSessionError) as err:
            qualification_feedback(session, {})
        assert set(err.value.missing) == {"b", "c", "d", "e"}

    def test_retake_after_failure(self):
        failed, _ = make_session(passing=False)
        assert failed.status == "failed"
        retry, _ = make_session(passing=True)
        retry.attempt = failed.attempt + 1
        assert retry.passed
        assert retry.attempt == 2


class TestBuildBatch:
    def pool(self, n, cls="dog"):
        return [(f"task{i}", cls) for i in range(n)]

    def test_nine_plus_golden(self):
        batch = build_batch(self.pool(9), [("gold0", "dog")], seed=3)
        assert len(batch.images) == 10
        assert 0 <= batch.golden_index <= 9
        assert batch.golden_image == "gold0"
        assert batch.cls == "dog"

    def test_same_seed_same_batch(self):
        golden = [("g0", "dog"), ("g1", "dog")]
        a = build_batch(self.pool(12), golden, seed=11)
        b = build_batch(self.pool(12), golden, seed=11)
        assert a.images == b.images
        assert a.golden_index == b.golden_index

    def test_mixed_class_pool_rejected(self):
        pool = self.pool(5, "dog") + self.pool(4, "cat")
        with pytest.raises(ProtocolError):
            build_batch(pool, [("g", "dog")], seed=0)

    def test_insufficient_pool_rejected(self):
        with pytest.raises(ProtocolError):
            build_batch(self.pool(5), [("g", "dog")], seed=0)
        with pytest.raises(ProtocolError):
            build_batch(self.pool(9), [], seed=0)


class TestSubmitBatch:
    def setup_batch(self, rng):
        mask = random_blob_mask(rng, width=30, height=30)
        batch = Batch(id="b1", worker="w", cls="dog",
                      images=tuple(f"t{i}" for i in range(9)) + ("gold",),
                      golden_index=9)
        good_clicks = simulate_extreme_clicks(mask)
        clicks = {img: good_clicks for img in batch.images}
        return batch, clicks, accepted_areas(mask), mask

    def test_valid_golden_accepts_and_persists_nine(self, rng):
        batch, clicks, areas, _ = self.setup_batch(rng)
        result = submit_batch(batch, clicks, areas)
        assert result.accepted
        assert len(result.annotations) == 10
        golden_flags = [g for _, _, g in result.annotations]
        assert sum(golden_flags) == 1
        assert len([a for a in result.annotations if not a[2]]) == 9

    def test_bad_golden_blocks_everything(self, rng):
        batch, clicks, areas, mask = self.setup_batch(rng)
        clicks = dict(clicks)
        clicks["gold"] = infer_roles([(0, 0), (1, 0), (2, 0), (1, 1)])
        result = submit_batch(batch, clicks, areas)
        assert not result.accepted
        assert result.annotations == ()
        assert len(result.failed_roles) > 0

    def test_block_then_redo_accepts(self, rng):
        batch, clicks, areas, mask = self.setup_batch(rng)
        bad = dict(clicks)
        bad["gold"] = infer_roles([(0, 0), (1, 0), (2, 0), (1, 1)])
        assert not submit_batch(batch, bad, areas).accepted
        assert submit_batch(batch, clicks, areas).accepted

    def test_missing_clicks_error(self, rng):
        batch, clicks, areas, _ = self.setup_batch(rng)
        del clicks["t3"]
        with pytest.raises(ProtocolError):
            submit_batch(batch, clicks, areas)


class TestTimingReport:
    def instance(self, shown, gaps, worker="w", image="img"):
        times = []
        t = shown
        for g in gaps:
            t += g
            times.append(t)
        return ClickInstance(worker=worker, image=image, shown_at_ms=shown,
                             click_times_ms=tuple(times))

    def test_reference_timing_structure(self):
        # injected gaps 2500/1500/1500/1500 ms: slow first click, faster rest
        instances = [self.instance(1000 * i, (2500, 1500, 1500, 1500)) for i in range(5)]
        report = timing_report(instances)
        assert report.mean_total_s == pytest.approx(7.0)
        assert report.mean_first_click_s == pytest.approx(2.5)
        assert report.mean_later_click_s == pytest.approx(1.5)

    def test_single_instance(self):
        report = timing_report([self.instance(0, (2000, 1000, 500, 1500))])
        assert report.instances == 1
        assert report.mean_total_s == pytest.approx(5.0)
        assert report.mean_first_click_s == pytest.approx(2.0)
        assert report.total_hours == pytest.approx(5.0 / 3600.0)

    def test_thousand_instances_cost_arithmetic(self):
        instances = [self.instance(10_000 * i, (2500, 1500, 1500, 1500))
                     for i in range(1000)]
        report = timing_report(instances, pay_per_batch=0.15, batch_size=10)
        assert report.total_hours == pytest.approx(1000 * 7.0 / 3600.0, abs=5e-3)
        assert round(report.total_hours, 2) == 1.94
        assert report.cost == pytest.approx(15.00)

    def test_empty_and_incomplete_counting(self):
        report = timing_report([], incomplete=3)
        assert report.instances == 0
        assert report.incomplete == 3
        assert report.cost == 0.0


def simulate_worker_events(log, worker, masks, seed=0):
    """Drive one worker through qualification and a batch, appending events."""
    state = ProtocolState.from_events(log.events())
    log.append({"type": "worker_registered", "worker": worker})
    images = [f"q-{worker}-{i}" for i in range(5)]
    log.append({"type": "qual_started", "worker": worker, "attempt": 1, "images": images})
    for img in images:
        clicks = simulate_extreme_clicks(masks[img])
        log.append({
            "type": "qual_clicks", "worker": worker, "image": img,
            "points": clicks.to_json()["points"],
            "accepted": {r: True for r in ROLES},
        })
    log.append({"type": "qual_finished", "worker": worker, "attempt": 1, "passed": True})


class TestEventLogReplay:
    def test_replay_reproduces_state_after_any_prefix(self, tmp_path, rng):
        log = EventLog(tmp_path / "events.jsonl")
        masks = {f"q-w1-{i}": random_blob_mask(rng) for i in range(5)}
        simulate_worker_events(log, "w1", masks)
        events = log.events()
        incremental = ProtocolState()
        for i, event in enumerate(events):
            incremental.apply(event)
            assert ProtocolState.from_events(events[: i + 1]) == incremental
        assert incremental.workers["w1"].qualified

    def test_schema_version_stamped(self, tmp_path):
        log = EventLog(tmp_path / "events.jsonl")
        log.append({"type": "worker_registered", "worker": "w"})
        assert all(e["v"] == 1 for e in log.events())

    def test_batch_flow_through_events(self, tmp_path, rng):
        log = EventLog(tmp_path / "events.jsonl")
        log.append({"type": "worker_registered", "worker": "w"})
        log.append({"type": "qual_started", "worker": "w", "attempt": 1, "images": []})
        log.append({"type": "qual_finished", "worker": "w", "attempt": 1, "passed": True})
        images = [f"t{i}" for i in range(10)]
        log.append({"type": "batch_opened", "batch": "b1", "worker": "w",
                    "class": "dog", "images": images, "golden_index": 4})
        mask = random_blob_mask(rng)
        clicks = simulate_extreme_clicks(mask)
        points = [{**p, "t_ms": 1000 + 500 * i} for i, p in enumerate(clicks.to_json()["points"])]
        for i, img in enumerate(images):
            log.append({
                "type": "task_clicks", "batch": "b1", "worker": "w", "image": img,
                "points": points, "shown_at_ms": 500,
                "golden": i == 4, "accepted": True if i == 4 else None,
            })
        log.append({"type": "batch_submitted", "batch": "b1", "accepted": True})

        state = ProtocolState.from_events(log.events())
        assert state.batches["b1"].status == "accepted"
        assert len(state.annotations) == 10
        assert sum(1 for a in state.annotations if a.golden) == 1
        assert len(state.instances) == 10
        # replay again: identical
        assert ProtocolState.from_events(log.events()) == state

    def test_golden_block_keeps_batch_blocked(self, tmp_path):
        log = EventLog(tmp_path / "events.jsonl")
        log.append({"type": "worker_registered", "worker": "w"})
        log.append({"type": "batch_opened", "batch": "b1", "worker": "w",
                    "class": "dog", "images": [f"t{i}" for i in range(10)],
                    "golden_index": 0})
        log.append({
            "type": "task_clicks", "batch": "b1", "worker": "w", "image": "t0",
            "points": [{"x": 0, "y": 0}] * 4, "shown_at_ms": 0,
            "golden": True, "accepted": False,
        })
        state = ProtocolState.from_events(log.events())
        assert state.batches["b1"].status == "blocked"
        assert "t0" not in state.batches["b1"].clicks
