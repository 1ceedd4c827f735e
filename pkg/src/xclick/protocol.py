"""Crowdsourcing workflow: accepted areas, qualification, batches, timing.

All durable state lives in an append-only JSON-lines event log (one event
per line, schema-versioned with a ``v`` field); in-memory state is a pure
fold over that log. Validation outcomes are computed once, when an event is
created, and recorded in it, so replay never needs the ground-truth masks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import OBJECT, ROLES, BinaryMask, ExtremeClicks, Point, infer_roles

EVENT_VERSION = 1
DEFAULT_TOLERANCE = 10.0
QUALIFICATION_IMAGES = 5
BATCH_SIZE = 10

_ROLE_AXIS = {"top": ("y", +1), "bottom": ("y", -1), "left": ("x", +1), "right": ("x", -1)}


class ProtocolError(ValueError):
    pass


class IncompleteSessionError(ProtocolError):
    """A feedback page was requested before all clicks were recorded."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"session incomplete, missing clicks for: {', '.join(self.missing)}")


@dataclass(frozen=True)
class AcceptedArea:
    """Pixels where a click for one extreme role counts as correct."""

    role: str
    mask: BinaryMask
    tolerance: float


def accepted_area(
    gt_mask: BinaryMask,
    role: str,
    tolerance: float = DEFAULT_TOLERANCE,
    metric: str = "euclidean",
) -> AcceptedArea:
    """Accepted click region for one role, derived from a ground-truth mask.

    Three steps (described for top, others by symmetry): take the object
    pixels on the extreme row, widen to all object pixels within
    ``tolerance`` of that row, then accept every image pixel within
    ``tolerance`` distance of any of those. The distance metric is Euclidean
    by default; ``metric="chebyshev"`` is available for sensitivity checks.
    """
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    obj = gt_mask.object_mask()
    if not obj.any():
        raise ProtocolError("ground-truth mask has no object pixels")
    ys, xs = np.nonzero(obj)
    axis, sign = _ROLE_AXIS[role]
    coords = ys if axis == "y" else xs
    extreme = coords.min() if sign > 0 else coords.max()
    near = np.abs(coords.astype(np.int64) - int(extreme)) <= tolerance

    selected = np.zeros(obj.shape, dtype=bool)
    selected[ys[near], xs[near]] = True
    if metric == "euclidean":
        dist = ndimage.distance_transform_edt(~selected)
    elif metric == "chebyshev":
        dist = ndimage.distance_transform_cdt(~selected, metric="chessboard")
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return AcceptedArea(role=role, mask=BinaryMask.from_bool(dist <= tolerance),
                        tolerance=float(tolerance))


def accepted_areas(gt_mask: BinaryMask, tolerance: float = DEFAULT_TOLERANCE) -> dict:
    return {role: accepted_area(gt_mask, role, tolerance) for role in ROLES}


@dataclass(frozen=True)
class ClickValidation:
    accepted: bool
    out_of_bounds: bool = False


def validate_click(point: Point, area: AcceptedArea) -> ClickValidation:
    """Membership test on the accepted area; out-of-image points are rejected."""
    if not (0 <= point.x < area.mask.width and 0 <= point.y < area.mask.height):
        return ClickValidation(accepted=False, out_of_bounds=True)
    return ClickValidation(accepted=bool(area.mask.labels[point.y, point.x] == OBJECT))


def validate_clicks(clicks: ExtremeClicks, areas: dict) -> dict:
    """Per-role validation of a full set of extreme clicks."""
    return {role: validate_click(clicks.point_for(role), areas[role]) for role in ROLES}


# --------------------------------------------------------------------------
# qualification


@dataclass
class QualificationSession:
    """One attempt at the qualification test: pass needs all 20 clicks accepted."""

    worker: str
    images: tuple[str, ...]
    attempt: int = 1
    clicks: dict = field(default_factory=dict)    # image id -> ExtremeClicks
    accepted: dict = field(default_factory=dict)  # image id -> {role: bool}

    def record(self, image: str, clicks: ExtremeClicks, accepted_by_role: dict) -> None:
        if image not in self.images:
            raise ProtocolError(f"image {image!r} is not part of this session")
        self.clicks[image] = clicks
        self.accepted[image] = dict(accepted_by_role)

    @property
    def complete(self) -> bool:
        return all(img in self.clicks for img in self.images)

    @property
    def status(self) -> str:
        if not self.complete:
            return "in-progress"
        return "passed" if self.passed else "failed"

    @property
    def passed(self) -> bool:
        return self.complete and all(
            all(self.accepted[img].get(role, False) for role in ROLES)
            for img in self.images
        )


def qualification_feedback(session: QualificationSession, areas_by_image: dict) -> list:
    """Per-image feedback data: clicks, accepted areas, and pass/fail flags.

    Exactly what the feedback page renders; raises if any clicks are missing.
    """
    missing = [img for img in session.images if img not in session.clicks]
    if missing:
        raise IncompleteSessionError(missing)
    out = []
    for img in session.images:
        out.append({
            "image": img,
            "clicks": session.clicks[img],
            "accepted": dict(session.accepted[img]),
            "areas": areas_by_image[img],
        })
    return out


# --------------------------------------------------------------------------
# batches


@dataclass
class Batch:
    """Ten same-class images with one hidden golden image gating submission."""

    id: str
    worker: str
    cls: str
    images: tuple[str, ...]
    golden_index: int
    clicks: dict = field(default_factory=dict)       # image id -> ExtremeClicks
    shown_at: dict = field(default_factory=dict)     # image id -> ms timestamp
    golden_passed: bool | None = None
    status: str = "open"                             # open | blocked | accepted

    @property
    def golden_image(self) -> str:
        return self.images[self.golden_index]

    @property
    def complete(self) -> bool:
        return all(img in self.clicks for img in self.images)


def build_batch(pool, golden_pool, seed: int, batch_id: str = "", worker: str = "") -> Batch:
    """Nine task images plus one golden image at a seeded random position.

    ``pool`` supplies (image id, class) pairs of unannotated entries;
    ``golden_pool`` supplies (image id, class) pairs that have ground-truth
    masks. All ten images must share a single class.
    """
    pool = list(pool)
    golden_pool = list(golden_pool)
    if len(pool) < BATCH_SIZE - 1:
        raise ProtocolError(f"need at least {BATCH_SIZE - 1} unannotated entries, have {len(pool)}")
    if not golden_pool:
        raise ProtocolError("golden pool is empty")
    classes = {cls for _, cls in pool[:BATCH_SIZE - 1]} | {golden_pool[0][1]}
    if len(classes) != 1:
        raise ProtocolError(f"batch images must share one class, got {sorted(classes)}")

    rng = np.random.default_rng(seed)
    golden = golden_pool[int(rng.integers(len(golden_pool)))][0]
    position = int(rng.integers(BATCH_SIZE))
    images = [img for img, _ in pool[:BATCH_SIZE - 1]]
    images.insert(position, golden)
    return Batch(
        id=batch_id or f"batch-{seed}",
        worker=worker,
        cls=classes.pop(),
        images=tuple(images),
        golden_index=position,
    )


@dataclass(frozen=True)
class SubmitResult:
    accepted: bool
    failed_roles: tuple[str, ...] = ()
    annotations: tuple = ()  # (image, clicks, golden flag) triples when accepted


def submit_batch(batch: Batch, clicks_by_image: dict, golden_areas: dict) -> SubmitResult:
    """Accept the batch iff all four golden clicks pass their accepted areas.

    On acceptance every annotation is persisted with no further rejection;
    on a block the worker may redo the golden image's clicks and resubmit.
    """
    missing = [img for img in batch.images if img not in clicks_by_image]
    if missing:
        raise ProtocolError(f"missing clicks for: {', '.join(missing)}")
    golden_clicks = clicks_by_image[batch.golden_image]
    checks = validate_clicks(golden_clicks, golden_areas)
    failed = tuple(role for role in ROLES if not checks[role].accepted)
    if failed:
        return SubmitResult(accepted=False, failed_roles=failed)
    annotations = tuple(
        (img, clicks_by_image[img], img == batch.golden_image) for img in batch.images
    )
    return SubmitResult(accepted=True, annotations=annotations)


# --------------------------------------------------------------------------
# timing


@dataclass(frozen=True)
class ClickInstance:
    """One annotated image: when it appeared and the four click times."""

    worker: str
    image: str
    shown_at_ms: int
    click_times_ms: tuple[int, int, int, int]


@dataclass(frozen=True)
class TimingReport:
    instances: int
    incomplete: int
    mean_total_s: float
    mean_first_click_s: float
    mean_later_click_s: float
    total_hours: float
    cost: float

    def to_json(self) -> dict:
        return {
            "instances": self.instances,
            "incomplete": self.incomplete,
            "mean_total_s": self.mean_total_s,
            "mean_first_click_s": self.mean_first_click_s,
            "mean_later_click_s": self.mean_later_click_s,
            "total_hours": self.total_hours,
            "cost": self.cost,
        }


def timing_report(
    instances,
    incomplete: int = 0,
    pay_per_batch: float = 0.15,
    batch_size: int = BATCH_SIZE,
) -> TimingReport:
    """Response-time and cost aggregates over complete 4-click instances."""
    totals, firsts, laters = [], [], []
    count = 0
    for inst in instances:
        t = inst.click_times_ms
        totals.append((t[3] - inst.shown_at_ms) / 1000.0)
        firsts.append((t[0] - inst.shown_at_ms) / 1000.0)
        laters.append((t[3] - t[0]) / 3.0 / 1000.0)
        count += 1
    if count == 0:
        return TimingReport(0, incomplete, 0.0, 0.0, 0.0, 0.0, 0.0)
    return TimingReport(
        instances=count,
        incomplete=incomplete,
        mean_total_s=float(np.mean(totals)),
        mean_first_click_s=float(np.mean(firsts)),
        mean_later_click_s=float(np.mean(laters)),
        total_hours=float(np.sum(totals)) / 3600.0,
        cost=pay_per_batch * count / batch_size,
    )


# --------------------------------------------------------------------------
# event log and state fold


class EventLog:
    """Append-only JSON-lines log; single writer, replayable any time."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.touch(exist_ok=True)

    def append(self, event: dict) -> dict:
        event = {"v": EVENT_VERSION, **event}
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
        return event

    def events(self) -> list:
        out = []
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out


def _clicks_from_payload(points) -> ExtremeClicks:
    return infer_roles(
        [(p["x"], p["y"]) for p in points],
        timestamps_ms=[p["t_ms"] for p in points] if all("t_ms" in p for p in points) else None,
    )


@dataclass
class WorkerState:
    id: str
    qualified: bool = False
    attempts: int = 0
    session: QualificationSession | None = None
    batch_id: str | None = None


@dataclass(frozen=True)
class Annotation:
    worker: str
    image: str
    cls: str
    clicks: ExtremeClicks
    golden: bool


@dataclass
class ProtocolState:
    """Everything the protocol knows, reconstructible from the event log."""

    workers: dict = field(default_factory=dict)      # worker id -> WorkerState
    batches: dict = field(default_factory=dict)      # batch id -> Batch
    annotations: list = field(default_factory=list)  # [Annotation]
    instances: list = field(default_factory=list)    # [ClickInstance]
    incomplete_instances: int = 0                    # clicks without usable timing

    def apply(self, event: dict) -> None:
        handler = getattr(self, "_on_" + event["type"].replace("-", "_"), None)
        if handler is None:
            raise ProtocolError(f"unknown event type: {event['type']!r}")
        handler(event)

    @classmethod
    def from_events(cls, events) -> "ProtocolState":
        state = cls()
        for event in events:
            state.apply(event)
        return state

    # -- event handlers ----------------------------------------------------

    def _on_worker_registered(self, event: dict) -> None:
        self.workers.setdefault(event["worker"], WorkerState(id=event["worker"]))

    def _on_qual_started(self, event: dict) -> None:
        worker = self.workers[event["worker"]]
        worker.attempts = event["attempt"]
        worker.session = QualificationSession(
            worker=worker.id, images=tuple(event["images"]), attempt=event["attempt"],
        )

    def _on_qual_clicks(self, event: dict) -> None:
        worker = self.workers[event["worker"]]
        worker.session.record(
            event["image"],
            _clicks_from_payload(event["points"]),
            event["accepted"],
        )

    def _on_qual_finished(self, event: dict) -> None:
        worker = self.workers[event["worker"]]
        if event["passed"]:
            worker.qualified = True  # permanent: a passed worker never retakes

    def _on_batch_opened(self, event: dict) -> None:
        batch = Batch(
            id=event["batch"],
            worker=event["worker"],
            cls=event["class"],
            images=tuple(event["images"]),
            golden_index=event["golden_index"],
        )
        self.batches[batch.id] = batch
        self.workers[event["worker"]].batch_id = batch.id

    def _on_task_clicks(self, event: dict) -> None:
        batch = self.batches[event["batch"]]
        clicks = _clicks_from_payload(event["points"])
        if event.get("golden", False):
            batch.golden_passed = bool(event["accepted"])
            batch.status = "open" if batch.golden_passed else "blocked"
            if not batch.golden_passed:
                return  # blocked clicks are not kept; worker redoes the image
        batch.clicks[event["image"]] = clicks
        batch.shown_at[event["image"]] = event.get("shown_at_ms")
        if clicks.timestamps_ms is not None and event.get("shown_at_ms") is not None:
            self.instances.append(ClickInstance(
                worker=event["worker"], image=event["image"],
                shown_at_ms=event["shown_at_ms"], click_times_ms=clicks.timestamps_ms,
            ))
        else:
            self.incomplete_instances += 1

    def _on_batch_submitted(self, event: dict) -> None:
        batch = self.batches[event["batch"]]
        if not event["accepted"]:
            batch.status = "blocked"
            return
        batch.status = "accepted"
        for img in batch.images:
            self.annotations.append(Annotation(
                worker=batch.worker, image=img, cls=batch.cls,
                clicks=batch.clicks[img], golden=img == batch.golden_image,
            ))
        self.workers[batch.worker].batch_id = None


def replay(log: EventLog) -> ProtocolState:
    return ProtocolState.from_events(log.events())
