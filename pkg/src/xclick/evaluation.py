"""Dataset manifests, metric aggregation, and segmentation experiments.

Quality is aggregated in two stages: per-class means first, then an
unweighted macro mean over classes. Threshold fractions use strict
comparison (IoU > t). Disagreement buckets are IoU < 0.3, [0.3, 0.7]
(closed), and > 0.7.
"""

from __future__ import annotations

import csv
import json
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .edges import load_edge_map
from .geometry import (
    BinaryMask,
    BoundingBox,
    ExtremeClicks,
    box_from_clicks,
    iou_boxes,
    iou_masks,
    tight_box_from_mask,
)
from .grabcut import EnergyConfig, grabcut
from .raster import load_image

IOU_THRESHOLDS = (0.5, 0.7, 0.9)
BUCKET_LOW, BUCKET_HIGH = 0.3, 0.7


class ManifestError(ValueError):
    """Malformed manifest line or missing referenced file."""


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image: str | None = None
    cls: str = ""
    box: BoundingBox | None = None
    mask: str | None = None
    clicks: ExtremeClicks | None = None
    edges: str | None = None

    def to_json(self) -> dict:
        out: dict = {"id": self.id, "class": self.cls}
        if self.image is not None:
            out["image"] = self.image
        if self.box is not None:
            out["box"] = self.box.to_json()
        if self.mask is not None:
            out["mask"] = self.mask
        if self.clicks is not None:
            out["clicks"] = self.clicks.to_json()
        if self.edges is not None:
            out["edges"] = self.edges
        return out


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    dataset_id: str = ""

    def __len__(self) -> int:
        return len(self.entries)


def _entry_from_json(obj: dict, base: Path, lineno: int) -> ManifestEntry:
    if not isinstance(obj, dict):
        raise ManifestError(f"line {lineno}: entry must be a JSON object")
    cls = obj.get("class", "")
    if not cls:
        raise ManifestError(f"line {lineno}: missing or empty class label")
    entry_id = str(obj.get("id") or obj.get("image") or f"entry-{lineno}")
    paths = {}
    for key in ("image", "mask", "edges"):
        value = obj.get(key)
        if value is not None:
            resolved = (base / value) if not Path(value).is_absolute() else Path(value)
            if not resolved.exists():
                raise ManifestError(f"line {lineno}: {key} file not found: {value}")
            paths[key] = str(resolved)
    box = BoundingBox.from_json(obj["box"]) if "box" in obj else None
    clicks = ExtremeClicks.from_json(obj["clicks"]) if "clicks" in obj else None
    return ManifestEntry(
        id=entry_id, image=paths.get("image"), cls=str(cls), box=box,
        mask=paths.get("mask"), clicks=clicks, edges=paths.get("edges"),
    )


def load_manifest(path) -> DatasetManifest:
    """Load a JSON-lines manifest; paths are resolved against its directory."""
    path = Path(path)
    base = path.parent
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            entries.append(_entry_from_json(obj, base, lineno))
    return DatasetManifest(entries=tuple(entries), dataset_id=path.stem)


def write_manifest(entries, path) -> None:
    """Write JSON lines; file paths are stored relative to the manifest when
    they live under its directory (portable), absolute otherwise."""
    path = Path(path)
    base = path.parent.resolve()

    def portable(value):
        resolved = Path(value).resolve()
        try:
            return resolved.relative_to(base).as_posix()
        except ValueError:
            return str(resolved)

    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            obj = entry.to_json()
            for key in ("image", "mask", "edges"):
                if key in obj:
                    obj[key] = portable(obj[key])
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


@dataclass(frozen=True)
class ClassStats:
    miou: float
    frac_above: dict  # threshold -> strict fraction
    count: int


@dataclass
class EvalReport:
    per_class: dict = field(default_factory=dict)   # class -> ClassStats
    macro_miou: float = 0.0
    macro_frac_above: dict = field(default_factory=dict)
    error_rate: float | None = None
    buckets: dict = field(default_factory=dict)     # "low"/"mid"/"high" -> [ids]
    failures: list = field(default_factory=list)    # [(id, message)]

    def to_json(self) -> dict:
        return {
            "per_class": {
                cls: {
                    "miou": stats.miou,
                    **{f"frac_iou_gt_{t}": v for t, v in stats.frac_above.items()},
                    "count": stats.count,
                }
                for cls, stats in sorted(self.per_class.items())
            },
            "macro_miou": self.macro_miou,
            **{f"macro_frac_iou_gt_{t}": v for t, v in self.macro_frac_above.items()},
            "error_rate": self.error_rate,
            "buckets": {k: sorted(v) for k, v in self.buckets.items()},
            "failures": list(self.failures),
        }


def class_metrics(pairs) -> EvalReport:
    """Two-stage aggregation of (predicted box, gt box, class) triples.

    Per-class mean IoU and strict threshold fractions are computed first,
    then macro-averaged over classes with equal weight per class.
    """
    pairs = list(pairs)
    if not pairs:
        return EvalReport()
    by_class: dict[str, list[float]] = {}
    for pred, gt, cls in pairs:
        by_class.setdefault(cls, []).append(iou_boxes(pred, gt))
    return _aggregate_ious(by_class)


def _aggregate_ious(by_class: dict[str, list[float]]) -> EvalReport:
    report = EvalReport()
    for cls, ious in by_class.items():
        arr = np.asarray(ious)
        report.per_class[cls] = ClassStats(
            miou=float(arr.mean()),
            frac_above={t: float((arr > t).mean()) for t in IOU_THRESHOLDS},
            count=len(ious),
        )
    stats = list(report.per_class.values())
    report.macro_miou = float(np.mean([s.miou for s in stats]))
    report.macro_frac_above = {
        t: float(np.mean([s.frac_above[t] for s in stats])) for t in IOU_THRESHOLDS
    }
    return report


def error_rate(pred: BinaryMask, gt: BinaryMask) -> float:
    """Fraction of mislabelled pixels, skipping ignore pixels of either mask."""
    if pred.size != gt.size:
        raise ValueError(f"mask dimensions differ: {pred.size} vs {gt.size}")
    valid = pred.known_mask() & gt.known_mask()
    total = np.count_nonzero(valid)
    if total == 0:
        return 0.0
    wrong = np.count_nonzero((pred.object_mask() != gt.object_mask()) & valid)
    return wrong / total


def bucket_disagreements(items) -> dict:
    """Partition (id, predicted box, gt box) triples into inspection buckets."""
    buckets = {"low": [], "mid": [], "high": []}
    for entry_id, pred, gt in items:
        iou = iou_boxes(pred, gt)
        if iou < BUCKET_LOW:
            buckets["low"].append(entry_id)
        elif iou > BUCKET_HIGH:
            buckets["high"].append(entry_id)
        else:
            buckets["mid"].append(entry_id)
    return buckets


@dataclass(frozen=True)
class EntryResult:
    id: str
    cls: str
    iou: float
    energy: float
    iterations: int
    time_ms: float
    error_rate: float | None = None
    pred_box: BoundingBox | None = None
    gt_box: BoundingBox | None = None


def _run_entry(entry: ManifestEntry, mode: str, config: EnergyConfig) -> EntryResult:
    if entry.image is None:
        raise ManifestError(f"{entry.id}: no image path")
    image = load_image(entry.image)
    gt_mask = BinaryMask.load_png(entry.mask) if entry.mask else None

    start = time.perf_counter()
    if mode == "clicks":
        if entry.clicks is None:
            raise ManifestError(f"{entry.id}: click mode needs clicks")
        if entry.edges is None:
            raise ManifestError(f"{entry.id}: click mode needs an edge map")
        edge_map = load_edge_map(entry.edges, expect_size=(image.shape[1], image.shape[0]))
        result = grabcut(image, clicks=entry.clicks, edges=edge_map, config=config)
    elif mode == "box":
        box = entry.box
        if box is None and entry.clicks is not None:
            box = box_from_clicks(entry.clicks)
        if box is None and gt_mask is not None:
            box = tight_box_from_mask(gt_mask)
        if box is None:
            raise ManifestError(f"{entry.id}: box mode needs a box, clicks, or mask")
        edge_map = load_edge_map(entry.edges, expect_size=(image.shape[1], image.shape[0])) if entry.edges else None
        result = grabcut(image, box=box, edges=edge_map, config=config)
    else:
        raise ValueError(f"unknown mode: {mode!r}")
    elapsed_ms = (time.perf_counter() - start) * 1000.0

    pred_box = tight_box_from_mask(result.labeling) if result.labeling.object_count() else None
    if gt_mask is not None:
        iou = iou_masks(result.labeling, gt_mask)
        err = error_rate(result.labeling, gt_mask)
        gt_box = tight_box_from_mask(gt_mask)
    elif entry.box is not None and pred_box is not None:
        iou = iou_boxes(pred_box, entry.box)
        err = None
        gt_box = entry.box
    else:
        iou, err, gt_box = 0.0, None, entry.box
    return EntryResult(
        id=entry.id, cls=entry.cls, iou=iou, energy=result.energy,
        iterations=result.iterations, time_ms=elapsed_ms, error_rate=err,
        pred_box=pred_box, gt_box=gt_box,
    )


CSV_COLUMNS = ("id", "class", "iou", "energy", "iterations", "time_ms", "error_rate")


def _run_entry_safe(args) -> "EntryResult | tuple[str, str]":
    entry, mode, config = args
    try:
        return _run_entry(entry, mode, config)
    except Exception as exc:
        return (entry.id, f"{type(exc).__name__}: {exc}")


def run_experiment(
    manifest: DatasetManifest,
    mode: str,
    config: EnergyConfig | None = None,
    out_dir=None,
    jobs: int = 1,
) -> tuple[EvalReport, list[EntryResult]]:
    """Run grabcut over every manifest entry and aggregate quality metrics.

    Per-entry failures are recorded in the report instead of aborting the
    run. Entries are independent, so ``jobs > 1`` fans them out over worker
    processes; results are ordered by manifest order regardless.
    """
    config = config or EnergyConfig()
    work = [(entry, mode, config) for entry in manifest.entries]

    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_entry_safe, work))
    else:
        outcomes = [_run_entry_safe(item) for item in work]

    results = [o for o in outcomes if isinstance(o, EntryResult)]
    failures = [o for o in outcomes if not isinstance(o, EntryResult)]

    by_class: dict[str, list[float]] = {}
    for r in results:
        by_class.setdefault(r.cls, []).append(r.iou)
    report = _aggregate_ious(by_class) if by_class else EvalReport()
    report.failures = failures
    errs = [r.error_rate for r in results if r.error_rate is not None]
    report.error_rate = float(np.mean(errs)) if errs else None
    report.buckets = bucket_disagreements(
        (r.id, r.pred_box, r.gt_box) for r in results
        if r.pred_box is not None and r.gt_box is not None
    )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "entries.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in results:
                writer.writerow([
                    r.id, r.cls, f"{r.iou:.6f}", f"{r.energy:.6f}",
                    r.iterations, f"{r.time_ms:.3f}",
                    "" if r.error_rate is None else f"{r.error_rate:.6f}",
                ])
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report, results


def convert_voc_annotations(annotations_dir, images_dir, out_path) -> int:
    """Convert a directory of PASCAL VOC XML files to a JSON-lines manifest.

    VOC boxes are 1-based inclusive; they are shifted to this toolkit's
    0-based inclusive convention. One manifest line per object, ordered by
    filename then object order. Returns the number of entries written.
    """
    annotations_dir = Path(annotations_dir)
    images_dir = Path(images_dir)
    entries = []
    for xml_path in sorted(annotations_dir.glob("*.xml")):
        root = ET.parse(xml_path).getroot()
        filename = root.findtext("filename") or (xml_path.stem + ".jpg")
        image_path = images_dir / filename
        for i, obj in enumerate(root.iter("object")):
            name = obj.findtext("name") or "unknown"
            bb = obj.find("bndbox")
            if bb is None:
                continue
            box = BoundingBox(
                int(float(bb.findtext("xmin"))) - 1,
                int(float(bb.findtext("ymin"))) - 1,
                int(float(bb.findtext("xmax"))) - 1,
                int(float(bb.findtext("ymax"))) - 1,
            )
            entries.append(ManifestEntry(
                id=f"{xml_path.stem}:{i}", image=str(image_path), cls=name, box=box,
            ))
    write_manifest(entries, out_path)
    return len(entries)
