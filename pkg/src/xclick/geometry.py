"""Points, boxes, masks, extreme-click derivation, and overlap metrics.

Pixel convention: ``x`` is the column index (0 at the left), ``y`` is the row
index (0 at the top, increasing downward), so "top" means minimal ``y``.
Bounding boxes use inclusive integer bounds. All types here are immutable
after construction and every operation is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

BACKGROUND = 0
OBJECT = 1
IGNORE = 2

# Fixed role priority; also the tie-break order during role inference.
ROLES = ("left", "top", "right", "bottom")

_LABEL_TO_PNG = np.array([0, 255, 128], dtype=np.uint8)
_PNG_TO_LABEL = {0: BACKGROUND, 255: OBJECT, 128: IGNORE}


class EmptyMaskError(ValueError):
    """An operation required at least one object pixel."""


@dataclass(frozen=True)
class Point:
    x: int
    y: int

    def as_tuple(self) -> tuple[int, int]:
        return (self.x, self.y)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with inclusive pixel bounds."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"degenerate box bounds: {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, p: Point) -> bool:
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max

    def clip(self, bounds: tuple[int, int]) -> "BoundingBox":
        """Clip to an image of (width, height) pixels."""
        w, h = bounds
        return BoundingBox(
            max(0, self.x_min), max(0, self.y_min),
            min(w - 1, self.x_max), min(h - 1, self.y_max),
        )

    def dilate(self, margin: int, bounds: tuple[int, int] | None = None) -> "BoundingBox":
        """Grow by ``margin`` pixels on every side, clipped to ``bounds`` if given."""
        grown = BoundingBox(
            self.x_min - margin, self.y_min - margin,
            self.x_max + margin, self.y_max + margin,
        )
        return grown.clip(bounds) if bounds is not None else grown

    def to_json(self) -> dict:
        return {"x_min": self.x_min, "y_min": self.y_min,
                "x_max": self.x_max, "y_max": self.y_max}

    @classmethod
    def from_json(cls, obj: dict) -> "BoundingBox":
        return cls(int(obj["x_min"]), int(obj["y_min"]),
                   int(obj["x_max"]), int(obj["y_max"]))


@dataclass(frozen=True)
class ExtremeClicks:
    """Four clicks in click order plus the role each one plays.

    ``roles`` maps each of left/top/right/bottom to an index into ``points``
    and is always a bijection onto the four click slots.
    """

    points: tuple[Point, Point, Point, Point]
    roles: dict = field(default_factory=dict)
    timestamps_ms: tuple[int, int, int, int] | None = None

    def __post_init__(self) -> None:
        if len(self.points) != 4:
            raise ValueError(f"extreme clicks need exactly 4 points, got {len(self.points)}")
        if sorted(self.roles) != sorted(ROLES) or sorted(self.roles.values()) != [0, 1, 2, 3]:
            raise ValueError(f"roles must map left/top/right/bottom onto click indices, got {self.roles}")
        if self.timestamps_ms is not None and len(self.timestamps_ms) != 4:
            raise ValueError("need one timestamp per click")

    @property
    def left(self) -> Point:
        return self.points[self.roles["left"]]

    @property
    def top(self) -> Point:
        return self.points[self.roles["top"]]

    @property
    def right(self) -> Point:
        return self.points[self.roles["right"]]

    @property
    def bottom(self) -> Point:
        return self.points[self.roles["bottom"]]

    def point_for(self, role: str) -> Point:
        return self.points[self.roles[role]]

    def to_json(self) -> dict:
        pts = []
        for i, p in enumerate(self.points):
            entry = {"x": p.x, "y": p.y}
            if self.timestamps_ms is not None:
                entry["t_ms"] = self.timestamps_ms[i]
            pts.append(entry)
        return {"points": pts}

    @classmethod
    def from_json(cls, obj: dict) -> "ExtremeClicks":
        pts = [(int(p["x"]), int(p["y"])) for p in obj["points"]]
        times = None
        if all("t_ms" in p for p in obj["points"]):
            times = tuple(int(p["t_ms"]) for p in obj["points"])
        return infer_roles(pts, timestamps_ms=times)


class BinaryMask:
    """Per-pixel labels over an image grid: background 0, object 1, ignore 2.

    Ignore pixels are excluded from every metric. Instances are immutable;
    the label array is exposed read-only.
    """

    __hash__ = None

    def __init__(self, labels: np.ndarray):
        arr = np.array(labels, dtype=np.uint8, order="C")
        if arr.ndim != 2:
            raise ValueError("mask labels must be a 2-D array")
        if arr.size and arr.max() > IGNORE:
            raise ValueError("mask labels must be in {0, 1, 2}")
        arr.flags.writeable = False
        self._labels = arr

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def height(self) -> int:
        return self._labels.shape[0]

    @property
    def width(self) -> int:
        return self._labels.shape[1]

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def from_bool(cls, objects: np.ndarray, ignore: np.ndarray | None = None) -> "BinaryMask":
        labels = np.where(objects, OBJECT, BACKGROUND).astype(np.uint8)
        if ignore is not None:
            labels[np.asarray(ignore, dtype=bool)] = IGNORE
        return cls(labels)

    def object_mask(self) -> np.ndarray:
        return self._labels == OBJECT

    def known_mask(self) -> np.ndarray:
        return self._labels != IGNORE

    def object_count(self) -> int:
        return int(np.count_nonzero(self._labels == OBJECT))

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryMask) and np.array_equal(self._labels, other._labels)

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, {self.object_count()} object px)"

    def save_png(self, path) -> None:
        Image.fromarray(_LABEL_TO_PNG[self._labels]).save(Path(path))

    @classmethod
    def load_png(cls, path) -> "BinaryMask":
        arr = np.asarray(Image.open(Path(path)).convert("L"))
        labels = np.full(arr.shape, 255, dtype=np.uint8)
        for code, label in _PNG_TO_LABEL.items():
            labels[arr == code] = label
        if (labels == 255).any():
            bad = sorted(set(np.unique(arr)) - set(_PNG_TO_LABEL))
            raise ValueError(f"{path}: mask PNG has pixel values {bad}, expected 0/128/255")
        return cls(labels)


_ROLE_KEY = {
    "left": lambda p: p.x,
    "top": lambda p: p.y,
    "right": lambda p: -p.x,
    "bottom": lambda p: -p.y,
}


def infer_roles(points, timestamps_ms=None) -> ExtremeClicks:
    """Assign left/top/right/bottom roles to four clicks given in any order.

    Each role takes the click attaining its extreme coordinate. Ties are
    resolved by walking the roles in priority order (left, top, right,
    bottom) and giving each one the earliest still-unassigned click.
    """
    pts = tuple(p if isinstance(p, Point) else Point(int(p[0]), int(p[1])) for p in points)
    if len(pts) != 4:
        raise ValueError(f"extreme clicks need exactly 4 points, got {len(pts)}")
    if timestamps_ms is not None:
        timestamps_ms = tuple(int(t) for t in timestamps_ms)

    unassigned = [0, 1, 2, 3]
    roles = {}
    for role in ROLES:
        key = _ROLE_KEY[role]
        pick = min(unassigned, key=lambda i: key(pts[i]))  # stable: earliest click wins ties
        roles[role] = pick
        unassigned.remove(pick)
    return ExtremeClicks(points=pts, roles=roles, timestamps_ms=timestamps_ms)


def box_from_clicks(clicks: ExtremeClicks) -> BoundingBox:
    """Read the box off the clicks: each click contributes one coordinate."""
    return BoundingBox(clicks.left.x, clicks.top.y, clicks.right.x, clicks.bottom.y)


def tight_box_from_mask(mask: BinaryMask) -> BoundingBox:
    """Minimal box covering all object pixels of the mask."""
    ys, xs = np.nonzero(mask.object_mask())
    if ys.size == 0:
        raise EmptyMaskError("mask has no object pixels")
    return BoundingBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def _middle(values: np.ndarray) -> int:
    return int(values[(values.size - 1) // 2])


def simulate_extreme_clicks(mask: BinaryMask) -> ExtremeClicks:
    """Derive the four extreme clicks an ideal annotator would make on a mask.

    For each role the extreme coordinate may be attained by several object
    pixels; the middle pixel of that tie run (in raster scan order) is used,
    which keeps the choice deterministic and centered.
    """
    ys, xs = np.nonzero(mask.object_mask())
    if ys.size == 0:
        raise EmptyMaskError("mask has no object pixels")

    sel = xs == xs.min()
    left = Point(int(xs.min()), _middle(ys[sel]))
    sel = ys == ys.min()
    top = Point(_middle(xs[sel]), int(ys.min()))
    sel = xs == xs.max()
    right = Point(int(xs.max()), _middle(ys[sel]))
    sel = ys == ys.max()
    bottom = Point(_middle(xs[sel]), int(ys.max()))
    return infer_roles((left, top, right, bottom))


def iou_boxes(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes using inclusive pixel areas."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    inter = max(0, iw) * max(0, ih)
    union = a.area + b.area - inter
    return inter / union


def iou_masks(a: BinaryMask, b: BinaryMask) -> float:
    """IoU over object pixels, skipping pixels marked ignore in either mask."""
    if a.size != b.size:
        raise ValueError(f"mask dimensions differ: {a.size} vs {b.size}")
    valid = a.known_mask() & b.known_mask()
    ao, bo = a.object_mask() & valid, b.object_mask() & valid
    union = np.count_nonzero(ao | bo)
    if union == 0:
        return 1.0  # both empty over the valid region: identical
    return np.count_nonzero(ao & bo) / union


def perturb_box(
    box: BoundingBox,
    delta: int,
    seed: int,
    bounds: tuple[int, int] | None = None,
    interval: bool = False,
) -> BoundingBox:
    """Shift each of the four coordinates independently by +/- ``delta``.

    By default every shift has magnitude exactly ``delta`` (sign chosen
    uniformly); with ``interval=True`` shifts are drawn uniformly from the
    integers in [-delta, +delta]. The result is re-ordered to keep min <= max
    and clipped to image ``bounds`` when supplied.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    rng = np.random.default_rng(seed)
    if interval:
        shifts = rng.integers(-delta, delta + 1, size=4)
    else:
        shifts = rng.choice(np.array([-delta, delta]), size=4)
    x0 = box.x_min + int(shifts[0])
    y0 = box.y_min + int(shifts[1])
    x1 = box.x_max + int(shifts[2])
    y1 = box.y_max + int(shifts[3])
    if x0 > x1:
        x0, x1 = x1, x0
    if y0 > y1:
        y0, y1 = y1, y0
    if bounds is not None:
        # clamp every coordinate into the image; monotone, so order survives
        w, h = bounds
        x0, x1 = (min(max(v, 0), w - 1) for v in (x0, x1))
        y0, y1 = (min(max(v, 0), h - 1) for v in (y0, y1))
    return BoundingBox(x0, y0, x1, y1)
