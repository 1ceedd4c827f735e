"""JSON-over-HTTP facade for the annotation protocol and the segmentation engine.

Every state change flows through the append-only event log, so killing and
restarting the service between any two requests never changes subsequent
responses. Golden identity is never serialized into a client-facing payload.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import protocol
from .edges import EdgeMapError, load_edge_map
from .evaluation import DatasetManifest, class_metrics, load_manifest
from .geometry import BinaryMask, BoundingBox, ExtremeClicks, box_from_clicks, infer_roles
from .grabcut import EnergyConfig, config_from_dict, grabcut
from .protocol import EventLog, ProtocolState, validate_clicks
from .raster import image_size, load_image

MAX_IMAGE_SIDE = 2048  # synchronous segmentation cap

INSTRUCTION = (
    "Click the four extreme points of one {cls}: its top, bottom, left-most "
    "and right-most points, in any order. Aim for about 10 seconds in total."
)


@dataclass
class ServiceConfig:
    images_root: str
    files_root: str
    event_log: str
    qualification_manifest: str | None = None
    tasks_manifest: str | None = None
    golden_manifest: str | None = None
    tolerance: float = protocol.DEFAULT_TOLERANCE
    batch_size: int = protocol.BATCH_SIZE
    qualification_images: int = protocol.QUALIFICATION_IMAGES
    pay_per_batch: float = 0.15
    seed: int = 0
    energy: EnergyConfig = field(default_factory=EnergyConfig)

    @classmethod
    def from_json_file(cls, path) -> "ServiceConfig":
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        energy = config_from_dict(data.pop("energy", {}))
        base = path.parent

        def resolve(value):
            if value is None:
                return None
            p = Path(value)
            return str(p if p.is_absolute() else base / p)

        for key in ("images_root", "files_root", "event_log",
                    "qualification_manifest", "tasks_manifest", "golden_manifest"):
            if key in data:
                data[key] = resolve(data[key])
        return cls(energy=energy, **data)


def _error(status: int, code: str, message: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "message": message, **extra})


def _parse_points(points) -> tuple[ExtremeClicks | None, JSONResponse | None]:
    if not isinstance(points, list) or len(points) != 4:
        return None, _error(400, "CLICK_COUNT",
                            f"expected exactly 4 points, got {len(points) if isinstance(points, list) else 'none'}")
    try:
        clicks = infer_roles(
            [(int(p["x"]), int(p["y"])) for p in points],
            timestamps_ms=[int(p["t_ms"]) for p in points]
            if all("t_ms" in p for p in points) else None,
        )
    except (KeyError, TypeError, ValueError):
        return None, _error(400, "BAD_POINTS", "points must be objects with integer x and y")
    return clicks, None


class AnnotationServer:
    """In-memory view of the protocol plus the task pools, fed by the log."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.files_root = Path(config.files_root)
        self.files_root.mkdir(parents=True, exist_ok=True)
        self.log = EventLog(config.event_log)
        self.state = ProtocolState.from_events(self.log.events())
        self.qualification = (
            load_manifest(config.qualification_manifest)
            if config.qualification_manifest else DatasetManifest(())
        )
        self.tasks = (
            load_manifest(config.tasks_manifest)
            if config.tasks_manifest else DatasetManifest(())
        )
        self.golden = (
            load_manifest(config.golden_manifest)
            if config.golden_manifest else DatasetManifest(())
        )
        self.entries = {e.id: e for m in (self.qualification, self.tasks, self.golden)
                        for e in m.entries}
        self.segment_cache: dict[str, dict] = {}
        self._batch_counter = sum(1 for e in self.log.events() if e["type"] == "batch_opened")
        # single-writer contract: all log appends and state folds serialize here
        self.lock = threading.RLock()

    # -- helpers ------------------------------------------------------------

    def record(self, event: dict) -> None:
        self.log.append(event)
        self.state.apply(event)

    def annotated_images(self) -> set:
        done = {a.image for a in self.state.annotations}
        for batch in self.state.batches.values():
            done.update(batch.clicks.keys())
        return done

    def qualification_areas(self, image_id: str) -> dict:
        entry = self.entries[image_id]
        mask = BinaryMask.load_png(entry.mask)
        return protocol.accepted_areas(mask, self.config.tolerance)

    def image_payload_fields(self, image_id: str) -> dict:
        entry = self.entries[image_id]
        rel = Path(entry.image).relative_to(self.config.images_root)
        w, h = image_size(entry.image)
        return {"image": f"/images/{rel.as_posix()}", "class": entry.cls,
                "width": w, "height": h}

    def next_qualification_task(self, worker: protocol.WorkerState) -> dict | None:
        session = worker.session
        if session is None or (session.complete and not session.passed):
            attempt = worker.attempts + 1
            entries = self.qualification.entries
            if len(entries) < self.config.qualification_images:
                return None
            cls = entries[0].cls
            images = [e.id for e in entries if e.cls == cls][: self.config.qualification_images]
            self.record({"type": "qual_started", "worker": worker.id,
                         "attempt": attempt, "images": images})
            session = worker.session
        for idx, image_id in enumerate(session.images):
            if image_id not in session.clicks:
                return {
                    "task_id": f"q:{session.attempt}:{idx}",
                    "kind": "qualification",
                    "progress": {"index": idx + 1, "total": len(session.images)},
                    **self.image_payload_fields(image_id),
                    "instruction": INSTRUCTION.format(cls=self.entries[image_id].cls),
                }
        return None

    def open_batch(self, worker: protocol.WorkerState) -> protocol.Batch | None:
        done = self.annotated_images()
        golden_used = {b.golden_image for b in self.state.batches.values()}
        by_class: dict[str, list] = {}
        for entry in self.tasks.entries:
            if entry.id not in done:
                by_class.setdefault(entry.cls, []).append((entry.id, entry.cls))
        for cls, pool in by_class.items():
            golden_pool = [(e.id, e.cls) for e in self.golden.entries
                           if e.cls == cls and e.mask and e.id not in golden_used]
            if len(pool) >= self.config.batch_size - 1 and golden_pool:
                self._batch_counter += 1
                batch = protocol.build_batch(
                    pool, golden_pool,
                    seed=self.config.seed + self._batch_counter,
                    batch_id=f"b{self._batch_counter:04d}",
                    worker=worker.id,
                )
                self.record({
                    "type": "batch_opened", "batch": batch.id, "worker": worker.id,
                    "class": batch.cls, "images": list(batch.images),
                    "golden_index": batch.golden_index,
                })
                return self.state.batches[batch.id]
        return None

    def next_annotation_task(self, worker: protocol.WorkerState) -> dict | None:
        batch = self.state.batches.get(worker.batch_id) if worker.batch_id else None
        if batch is None or batch.status == "accepted":
            batch = self.open_batch(worker)
            if batch is None:
                return None
        if batch.status == "blocked":
            idx = batch.golden_index  # re-present the golden image, identity hidden
        else:
            idx = next((i for i, img in enumerate(batch.images) if img not in batch.clicks), None)
            if idx is None:
                return None
        image_id = batch.images[idx]
        return {
            "task_id": f"a:{batch.id}:{idx}",
            "kind": "annotation",
            "progress": {"index": idx + 1, "total": len(batch.images)},
            **self.image_payload_fields(image_id),
            "instruction": INSTRUCTION.format(cls=batch.cls),
        }

    def metrics(self) -> dict:
        timing = protocol.timing_report(
            self.state.instances,
            incomplete=self.state.incomplete_instances,
            pay_per_batch=self.config.pay_per_batch,
            batch_size=self.config.batch_size,
        )
        pairs = []
        for ann in self.state.annotations:
            if ann.golden:
                continue  # golden tasks are excluded from quality metrics
            entry = self.entries.get(ann.image)
            if entry is not None and entry.box is not None:
                pairs.append((box_from_clicks(ann.clicks), entry.box, ann.cls))
        quality = class_metrics(pairs)
        return {
            "timing": timing.to_json(),
            "quality": quality.to_json(),
            "workers": {
                "registered": len(self.state.workers),
                "qualified": sum(1 for w in self.state.workers.values() if w.qualified),
            },
            "batches": {
                "opened": len(self.state.batches),
                "accepted": sum(1 for b in self.state.batches.values() if b.status == "accepted"),
            },
            "annotations": sum(1 for a in self.state.annotations if not a.golden),
        }

    def save_mask(self, mask: BinaryMask) -> str:
        digest = hashlib.sha256(mask.labels.tobytes()
                                + str(mask.size).encode()).hexdigest()[:24]
        rel = f"masks/{digest}.png"
        target = self.files_root / rel
        if not target.exists():
            target.parent.mkdir(parents=True, exist_ok=True)
            mask.save_png(target)
        return f"/files/{rel}"

    def save_area_overlay(self, image_id: str, role: str, area) -> str:
        rel = f"overlays/{image_id}_{role}.png"
        target = self.files_root / rel
        if not target.exists():
            target.parent.mkdir(parents=True, exist_ok=True)
            area.mask.save_png(target)
        return f"/files/{rel}"


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="xclick annotation service")
    server = AnnotationServer(config)
    app.state.server = server

    @app.post("/api/worker/{worker_id}/register")
    def register(worker_id: str):
        with server.lock:
            if worker_id not in server.state.workers:
                server.record({"type": "worker_registered", "worker": worker_id})
        return {"status": "registered", "worker": worker_id}

    @app.get("/api/worker/{worker_id}/next")
    def next_task(worker_id: str):
        with server.lock:
            worker = server.state.workers.get(worker_id)
            if worker is None:
                return _error(404, "UNKNOWN_WORKER", f"worker {worker_id!r} is not registered")
            if worker.qualified:
                task = server.next_annotation_task(worker)
            else:
                task = server.next_qualification_task(worker)
        if task is None:
            return Response(status_code=204)
        return task

    @app.post("/api/worker/{worker_id}/clicks")
    def post_clicks(worker_id: str, payload: dict = Body(...)):
        with server.lock:
            worker = server.state.workers.get(worker_id)
            if worker is None:
                return _error(404, "UNKNOWN_WORKER", f"worker {worker_id!r} is not registered")
            task_id = payload.get("task_id", "")
            clicks, err = _parse_points(payload.get("points", []))
            if err is not None:
                return err
            shown_at = payload.get("shown_at_ms")

            if task_id.startswith("q:"):
                return _handle_qualification(server, worker, task_id, clicks)
            if task_id.startswith("a:"):
                return _handle_annotation(server, worker, task_id, clicks, shown_at)
            return _error(400, "STALE_TASK", f"unknown task id {task_id!r}")

    @app.post("/api/segment")
    def segment(payload: dict = Body(...)):
        return _handle_segment(server, payload)

    @app.get("/api/admin/metrics")
    def admin_metrics():
        return server.metrics()

    app.mount("/images", StaticFiles(directory=config.images_root), name="images")
    app.mount("/files", StaticFiles(directory=str(server.files_root)), name="files")
    return app


def _expected_task(server: AnnotationServer, worker, task_id: str):
    """Return (image_id, context) when the id names the worker's current task."""
    parts = task_id.split(":")
    try:
        idx = int(parts[2])
    except (IndexError, ValueError):
        return None
    if parts[0] == "q" and worker.session is not None:
        session = worker.session
        expected = next(
            (i for i, img in enumerate(session.images) if img not in session.clicks), None)
        if int(parts[1]) == session.attempt and expected is not None and idx == expected:
            return session.images[idx], session
    if parts[0] == "a":
        batch = server.state.batches.get(parts[1])
        if batch is not None and batch.worker == worker.id and batch.status != "accepted":
            if batch.status == "blocked":
                expected = batch.golden_index
            else:
                expected = next(
                    (i for i, img in enumerate(batch.images) if img not in batch.clicks), None)
            if expected is not None and idx == expected:
                return batch.images[idx], batch
    return None


def _in_bounds(server: AnnotationServer, image_id: str, clicks: ExtremeClicks) -> bool:
    w, h = image_size(server.entries[image_id].image)
    return all(0 <= p.x < w and 0 <= p.y < h for p in clicks.points)


def _handle_qualification(server, worker, task_id, clicks):
    resolved = _expected_task(server, worker, task_id)
    if resolved is None or not isinstance(resolved[1], protocol.QualificationSession):
        return _error(409, "STALE_TASK", f"task {task_id!r} is not the worker's current task")
    image_id, session = resolved
    if not _in_bounds(server, image_id, clicks):
        return _error(400, "OUT_OF_BOUNDS", "clicks must land inside the image")

    areas = server.qualification_areas(image_id)
    checks = validate_clicks(clicks, areas)
    accepted = {role: checks[role].accepted for role in protocol.ROLES}
    server.record({
        "type": "qual_clicks", "worker": worker.id, "image": image_id,
        "points": clicks.to_json()["points"], "accepted": accepted,
    })
    overlays = {role: server.save_area_overlay(image_id, role, areas[role])
                for role in protocol.ROLES}
    body = {
        "status": "recorded",
        "kind": "qualification",
        "image": image_id,
        "accepted": accepted,
        "overlays": overlays,
    }
    session = worker.session
    if session.complete:
        server.record({"type": "qual_finished", "worker": worker.id,
                       "attempt": session.attempt, "passed": session.passed})
        body["session"] = {
            "completed": True,
            "passed": session.passed,
            "attempt": session.attempt,
            "images": [
                {"image": img, "accepted": session.accepted[img]}
                for img in session.images
            ],
        }
    return body


def _handle_annotation(server, worker, task_id, clicks, shown_at):
    resolved = _expected_task(server, worker, task_id)
    if resolved is None or not isinstance(resolved[1], protocol.Batch):
        return _error(409, "STALE_TASK", f"task {task_id!r} is not the worker's current task")
    image_id, batch = resolved
    if not _in_bounds(server, image_id, clicks):
        return _error(400, "OUT_OF_BOUNDS", "clicks must land inside the image")

    is_golden = image_id == batch.golden_image
    event = {
        "type": "task_clicks", "batch": batch.id, "worker": worker.id,
        "image": image_id, "points": clicks.to_json()["points"],
        "shown_at_ms": shown_at,
    }
    if is_golden:
        entry = server.entries[image_id]
        areas = protocol.accepted_areas(BinaryMask.load_png(entry.mask), server.config.tolerance)
        checks = validate_clicks(clicks, areas)
        passed = all(checks[role].accepted for role in protocol.ROLES)
        event.update({"golden": True, "accepted": passed})
        server.record(event)
        if not passed:
            return {"status": "blocked", "retry": True}
    else:
        server.record(event)

    batch = server.state.batches[batch.id]
    body = {"status": "recorded"}
    if batch.complete and batch.golden_passed:
        server.record({"type": "batch_submitted", "batch": batch.id, "accepted": True})
        body["batch"] = {"id": batch.id, "accepted": True}
    return body


def _handle_segment(server, payload):
    key = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    with server.lock:
        if key in server.segment_cache:
            return server.segment_cache[key]

    ref = payload.get("image")
    image_path = Path(server.config.images_root) / str(ref)
    if not ref or not image_path.exists():
        return _error(404, "NOT_FOUND", f"unknown image ref {ref!r}")
    image = load_image(image_path)
    h, w = image.shape[:2]
    if max(h, w) > MAX_IMAGE_SIDE:
        return _error(400, "IMAGE_TOO_LARGE", f"images are capped at {MAX_IMAGE_SIDE} px per side")

    try:
        config = config_from_dict(payload.get("config", {}))
    except ValueError as exc:
        return _error(400, "BAD_CONFIG", str(exc))
    mode = payload.get("mode", "box")

    edges = None
    edges_ref = payload.get("edges")
    if edges_ref:
        edges_path = Path(server.config.images_root) / str(edges_ref)
        if not edges_path.exists():
            return _error(404, "NOT_FOUND", f"unknown edge map ref {edges_ref!r}")
        try:
            edges = load_edge_map(edges_path, expect_size=(w, h))
        except EdgeMapError as exc:
            return _error(400, "BAD_EDGE_MAP", str(exc))

    try:
        if mode == "clicks":
            if "clicks" not in payload:
                return _error(400, "MISSING_CLICKS", "click mode requires clicks")
            if edges is None:
                return _error(400, "MISSING_EDGE_MAP", "click mode requires an edge map ref")
            clicks = ExtremeClicks.from_json(payload["clicks"])
            result = grabcut(image, clicks=clicks, edges=edges, config=config)
        elif mode == "box":
            if "box" not in payload:
                return _error(400, "MISSING_BOX", "box mode requires a box")
            box = BoundingBox.from_json(payload["box"])
            result = grabcut(image, box=box, edges=edges, config=config)
        else:
            return _error(400, "BAD_MODE", f"unknown mode {mode!r}")
    except ValueError as exc:
        return _error(400, "SEGMENTATION_FAILED", str(exc))

    body = {
        "mask": server.save_mask(result.labeling),
        "energy": result.energy,
        "iterations": result.iterations,
        "mode": mode,
    }
    with server.lock:
        server.segment_cache[key] = body
    return body
