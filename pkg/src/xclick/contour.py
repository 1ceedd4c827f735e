"""Object contour from extreme clicks: boundary paths, surface fill, skeleton.

The contour is built from four maximin ("widest") paths between consecutive
clicks: a path maximizing its minimum edge response, shortest among ties.
Flood-filling the exterior of the closed contour yields the object surface
estimate, and thinning the surface yields the skeleton.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .edges import EdgeMap
from .geometry import BinaryMask, BoundingBox, ExtremeClicks, Point, box_from_clicks

# Fixed neighbor scan order (dy, dx): E, SE, S, SW, W, NW, N, NE.
NEIGHBOR_ORDER = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_EIGHT_CONN = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class PixelPath:
    """8-connected pixel path; bottleneck is the minimum edge response on it."""

    pixels: tuple[Point, ...]
    bottleneck: float

    def __post_init__(self) -> None:
        for a, b in zip(self.pixels, self.pixels[1:]):
            if a == b or abs(a.x - b.x) > 1 or abs(a.y - b.y) > 1:
                raise ValueError(f"pixels {a} -> {b} are not distinct 8-neighbors")

    def __len__(self) -> int:
        return len(self.pixels)


@dataclass(frozen=True)
class SurfaceEstimate:
    """Closed contour (4 paths), filled surface, and its skeleton."""

    contour: tuple[PixelPath, PixelPath, PixelPath, PixelPath]
    surface: BinaryMask
    skeleton: BinaryMask


def maximin_path(edges: EdgeMap, p: Point, q: Point, region: BoundingBox) -> PixelPath:
    """Widest path from p to q within region, shortest among widest ones.

    Phase one runs a best-first search for the highest achievable minimum
    edge response b*; phase two runs a breadth-first search restricted to
    pixels with response >= b*. Every path with bottleneck b* lies entirely
    in that restriction and every restricted path attains exactly b*, so the
    BFS result is the shortest maximin path. Deterministic via the fixed
    neighbor order.
    """
    full = BoundingBox(0, 0, edges.width - 1, edges.height - 1)
    clipped = region.clip((edges.width, edges.height))
    if clipped != region:
        raise ValueError(f"region {region} exceeds the edge map {full}")
    for name, pt in (("p", p), ("q", q)):
        if not region.contains(pt):
            raise ValueError(f"{name}={pt} lies outside region {region}")

    e = edges.values[region.y_min:region.y_max + 1, region.x_min:region.x_max + 1]
    h, w = e.shape
    sp = (p.y - region.y_min, p.x - region.x_min)
    sq = (q.y - region.y_min, q.x - region.x_min)
    if sp == sq:
        return PixelPath((p,), float(e[sp]))

    # phase 1: widest-path search for the bottleneck value
    best = np.full((h, w), -1.0)
    best[sp] = e[sp]
    heap = [(-e[sp], sp)]
    while heap:
        neg_b, (y, x) = heapq.heappop(heap)
        b = -neg_b
        if b < best[y, x]:
            continue
        if (y, x) == sq:
            break
        for dy, dx in NEIGHBOR_ORDER:
            ny, nx = y + dy, x + dx
            if not (0 <= ny < h and 0 <= nx < w):
                continue
            cand = min(b, e[ny, nx])
            if cand > best[ny, nx]:
                best[ny, nx] = cand
                heapq.heappush(heap, (-cand, (ny, nx)))
    bottleneck = float(best[sq])
    if bottleneck < 0:
        raise RuntimeError("no path found inside a connected region")

    # phase 2: shortest path over pixels with response >= bottleneck
    allowed = e >= bottleneck
    parent = np.full((h, w), -1, dtype=np.int32)
    parent[sp] = sp[0] * w + sp[1]
    queue = deque([sp])
    while queue:
        y, x = queue.popleft()
        if (y, x) == sq:
            break
        for dy, dx in NEIGHBOR_ORDER:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and allowed[ny, nx] and parent[ny, nx] < 0:
                parent[ny, nx] = y * w + x
                queue.append((ny, nx))

    if parent[sq] < 0:
        raise RuntimeError("no path found inside a connected region")
    rev = []
    node = sq
    while True:
        rev.append(node)
        prev = int(parent[node])
        prev_node = (prev // w, prev % w)
        if prev_node == node:
            break
        node = prev_node
    pixels = tuple(
        Point(x + region.x_min, y + region.y_min) for y, x in reversed(rev)
    )
    return PixelPath(pixels, bottleneck)


def min_cost_path(edges: EdgeMap, p: Point, q: Point, region: BoundingBox) -> PixelPath:
    """Alternative path objective: minimize the sum of (1 - e) over pixels.

    Kept for comparison experiments; the maximin objective is the default
    because it tracks object boundaries better. Deterministic via the fixed
    neighbor order.
    """
    clipped = region.clip((edges.width, edges.height))
    if clipped != region:
        raise ValueError(f"region {region} exceeds the edge map")
    for name, pt in (("p", p), ("q", q)):
        if not region.contains(pt):
            raise ValueError(f"{name}={pt} lies outside region {region}")

    e = edges.values[region.y_min:region.y_max + 1, region.x_min:region.x_max + 1]
    h, w = e.shape
    sp = (p.y - region.y_min, p.x - region.x_min)
    sq = (q.y - region.y_min, q.x - region.x_min)
    cost = 1.0 - e
    best = np.full((h, w), np.inf)
    best[sp] = cost[sp]
    parent = np.full((h, w), -1, dtype=np.int32)
    parent[sp] = sp[0] * w + sp[1]
    heap = [(cost[sp], sp)]
    while heap:
        c, (y, x) = heapq.heappop(heap)
        if c > best[y, x]:
            continue
        if (y, x) == sq:
            break
        for dy, dx in NEIGHBOR_ORDER:
            ny, nx = y + dy, x + dx
            if not (0 <= ny < h and 0 <= nx < w):
                continue
            cand = c + cost[ny, nx]
            if cand < best[ny, nx]:
                best[ny, nx] = cand
                parent[ny, nx] = y * w + x
                heapq.heappush(heap, (cand, (ny, nx)))

    rev = []
    node = sq
    while True:
        rev.append(node)
        prev = int(parent[node])
        prev_node = (prev // w, prev % w)
        if prev_node == node:
            break
        node = prev_node
    pixels = tuple(Point(x + region.x_min, y + region.y_min) for y, x in reversed(rev))
    bottleneck = float(min(e[y, x] for y, x in rev))
    return PixelPath(pixels, bottleneck)


def _zhang_suen_pass(img: np.ndarray, second: bool) -> tuple[np.ndarray, bool]:
    padded = np.pad(img, 1)
    p2 = padded[:-2, 1:-1]
    p3 = padded[:-2, 2:]
    p4 = padded[1:-1, 2:]
    p5 = padded[2:, 2:]
    p6 = padded[2:, 1:-1]
    p7 = padded[2:, :-2]
    p8 = padded[1:-1, :-2]
    p9 = padded[:-2, :-2]
    ring = (p2, p3, p4, p5, p6, p7, p8, p9)
    b = sum(n.astype(np.int8) for n in ring)
    a = sum(
        ((ring[i] == 0) & (ring[(i + 1) % 8] == 1)).astype(np.int8)
        for i in range(8)
    )
    if not second:
        c1 = (p2 & p4 & p6) == 0
        c2 = (p4 & p6 & p8) == 0
    else:
        c1 = (p2 & p4 & p8) == 0
        c2 = (p2 & p6 & p8) == 0
    remove = (img == 1) & (b >= 2) & (b <= 6) & (a == 1) & c1 & c2
    if not remove.any():
        return img, False
    return img & ~remove, True


def skeletonize(mask: BinaryMask) -> BinaryMask:
    """Thin a mask to a 1-pixel-wide skeleton (Zhang-Suen parallel thinning).

    The output is a subset of the input and keeps its 8-connected component
    count: the parallel scheme erases isolated 2x2 blocks entirely, so one
    centered pixel is restored for any component that would vanish.
    """
    obj = mask.object_mask().astype(np.uint8)
    if not obj.any():
        return BinaryMask.zeros(mask.width, mask.height)

    components, n_comp = ndimage.label(obj, structure=_EIGHT_CONN)
    skel = obj.copy()
    changed = True
    while changed:
        skel, c1 = _zhang_suen_pass(skel, second=False)
        skel, c2 = _zhang_suen_pass(skel, second=True)
        changed = c1 or c2

    surviving = np.bincount((components * skel).ravel(), minlength=n_comp + 1)
    for comp in range(1, n_comp + 1):
        if surviving[comp] == 0:
            ys, xs = np.nonzero(components == comp)
            mid = (ys.size - 1) // 2
            skel[ys[mid], xs[mid]] = 1
    return BinaryMask(skel)


def _single_pixel_estimate(p: Point, width: int, height: int) -> SurfaceEstimate:
    labels = np.zeros((height, width), dtype=np.uint8)
    labels[p.y, p.x] = 1
    mask = BinaryMask(labels)
    path = PixelPath((p,), 0.0)
    return SurfaceEstimate((path, path, path, path), mask, mask)


def estimate_surface(
    clicks: ExtremeClicks,
    edges: EdgeMap,
    margin: int = 5,
    objective: str = "maximin",
) -> SurfaceEstimate:
    """Contour, filled surface, and skeleton for four extreme clicks.

    Boundary paths connect the clicks in the order left-top-right-bottom-left
    and are searched within the click box dilated by ``margin``. The surface
    is everything a 4-connected flood from the region border cannot reach
    without crossing the (8-connected) contour, so diagonal contour steps do
    not leak. ``objective="sum"`` switches to the additive sum-of-(1-e)
    criterion for comparison runs.
    """
    width, height = edges.width, edges.height
    image_box = BoundingBox(0, 0, width - 1, height - 1)
    for pt in clicks.points:
        if not image_box.contains(pt):
            raise ValueError(f"click {pt} outside the {width}x{height} image")

    box = box_from_clicks(clicks)
    if box.area == 1:
        return _single_pixel_estimate(Point(box.x_min, box.y_min), width, height)

    if objective == "maximin":
        find_path = maximin_path
    elif objective == "sum":
        find_path = min_cost_path
    else:
        raise ValueError(f"unknown path objective {objective!r}")

    region = box.dilate(margin, bounds=(width, height))
    corners = (clicks.left, clicks.top, clicks.right, clicks.bottom, clicks.left)
    paths = tuple(
        find_path(edges, a, b, region) for a, b in zip(corners, corners[1:])
    )

    rh, rw = region.height, region.width
    contour = np.zeros((rh, rw), dtype=bool)
    for path in paths:
        for pt in path.pixels:
            contour[pt.y - region.y_min, pt.x - region.x_min] = True

    free = ~contour
    labels, _ = ndimage.label(free, structure=_FOUR_CONN)
    border = np.concatenate([labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]])
    exterior_ids = np.unique(border[border > 0])
    interior = free & ~np.isin(labels, exterior_ids)

    surface_labels = np.zeros((height, width), dtype=np.uint8)
    surface_labels[region.y_min:region.y_max + 1, region.x_min:region.x_max + 1] = (
        (contour | interior).astype(np.uint8)
    )
    surface = BinaryMask(surface_labels)
    return SurfaceEstimate(paths, surface, skeletonize(surface))
