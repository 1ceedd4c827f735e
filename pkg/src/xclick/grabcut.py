"""Iterative appearance-model / graph-cut segmentation, seeded two ways.

Box mode follows the optimized box-only recipe: object appearance from all
pixels in the box, background appearance from a ring around it with twice
the box area, a centered quarter-area core clamped to object, everything
outside the box clamped to background. Click mode replaces the object side
with the contour-derived surface estimate (appearance) and its skeleton
(clamp), which keeps seeds on the object even for concave shapes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from .contour import SurfaceEstimate, estimate_surface
from .edges import EdgeMap, gradient_edges
from .geometry import BinaryMask, BoundingBox, ExtremeClicks, box_from_clicks
from .gmm import GmmModel, fit_gmm, neg_log_likelihood
from .graphcut import grid_weights_from_edges, min_cut_segment, segmentation_energy


class MissingEdgeMapError(ValueError):
    """Click mode needs an edge map for boundary paths and pairwise terms."""


@dataclass(frozen=True)
class EnergyConfig:
    """Segmentation energy knobs; defaults are the calibrated values."""

    pairwise_strength: float = 5.0   # serialized as "lambda"
    edge_sharpness: float = 2.0      # serialized as "beta"
    gmm_components: int = 5
    cov_floor: float = 1e-3
    max_iterations: int = 5
    em_iterations: int = 10
    seed_margin: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.pairwise_strength < 0 or self.edge_sharpness < 0:
            raise ValueError("pairwise_strength and edge_sharpness must be >= 0")
        if self.gmm_components < 1:
            raise ValueError("gmm_components must be >= 1")
        if self.max_iterations < 1 or self.em_iterations < 1:
            raise ValueError("iteration counts must be >= 1")


_CONFIG_ALIASES = {
    "lambda": "pairwise_strength",
    "beta": "edge_sharpness",
    "seed-margin": "seed_margin",
}
_CONFIG_NAMES = {"pairwise_strength": "lambda", "edge_sharpness": "beta"}


def config_from_dict(data: dict) -> EnergyConfig:
    """Build a config from JSON-ish keys; unknown keys are rejected."""
    known = {f.name for f in fields(EnergyConfig)}
    kwargs = {}
    for key, value in data.items():
        name = _CONFIG_ALIASES.get(key, key)
        if name not in known:
            raise ValueError(f"unknown config key: {key!r}")
        kwargs[name] = value
    return EnergyConfig(**kwargs)


def config_to_dict(config: EnergyConfig) -> dict:
    return {
        _CONFIG_NAMES.get(f.name, f.name): getattr(config, f.name)
        for f in fields(EnergyConfig)
    }


@dataclass(frozen=True)
class SeedConfig:
    """Clamp and appearance-initialization regions.

    Clamp sets are disjoint and the object clamp sits inside the object
    init region. The background clamp (everything outside the box) is wider
    than the background init region (the ring), by design: only the
    immediate background should shape the appearance model.
    """

    clamp_object: BinaryMask
    clamp_background: BinaryMask
    object_init: BinaryMask
    background_init: BinaryMask

    def __post_init__(self) -> None:
        dims = self.clamp_object.size
        for m in (self.clamp_background, self.object_init, self.background_init):
            if m.size != dims:
                raise ValueError("seed masks have mismatched dimensions")
        if (self.clamp_object.object_mask() & self.clamp_background.object_mask()).any():
            raise ValueError("clamp sets overlap")
        if (self.clamp_object.object_mask() & ~self.object_init.object_mask()).any():
            raise ValueError("object clamp must lie inside the object init region")


@dataclass(frozen=True)
class SegmentationResult:
    labeling: BinaryMask
    energy: float
    iterations: int
    seeds: SeedConfig
    object_model: GmmModel = field(compare=False, default=None)
    background_model: GmmModel = field(compare=False, default=None)
    # (energy of previous labeling under current models or None, energy after cut)
    cut_steps: tuple[tuple[float | None, float], ...] = field(compare=False, default=())


def ring_margin(width: int, height: int) -> int:
    """Margin m making the ring around a w x h box roughly twice its area.

    Solves 2wh = (w+2m)(h+2m) - wh for m, rounds half up, floors at 1.
    """
    s = width + height
    m = (-s + math.sqrt(s * s + 8.0 * width * height)) / 4.0
    return max(1, int(m + 0.5))


def _box_mask(box: BoundingBox, width: int, height: int) -> np.ndarray:
    out = np.zeros((height, width), dtype=bool)
    out[box.y_min:box.y_max + 1, box.x_min:box.x_max + 1] = True
    return out


def _background_seeds(box: BoundingBox, width: int, height: int) -> tuple[BinaryMask, BinaryMask]:
    inside = _box_mask(box, width, height)
    outside = ~inside
    margin = ring_margin(box.width, box.height)
    ring = _box_mask(box.dilate(margin, bounds=(width, height)), width, height) & outside
    if not ring.any():
        warnings.warn(
            "box covers the whole image: background ring is empty, "
            "falling back to the background clamp region",
            RuntimeWarning,
        )
        ring = outside
    return BinaryMask.from_bool(outside), BinaryMask.from_bool(ring)


def build_box_seeds(box: BoundingBox, size: tuple[int, int]) -> SeedConfig:
    """Seeds for the box-only baseline."""
    width, height = size
    if box.clip((width, height)) != box:
        raise ValueError(f"box {box} exceeds the {width}x{height} image")
    inside = _box_mask(box, width, height)

    core_w = (box.width + 1) // 2
    core_h = (box.height + 1) // 2
    cx = box.x_min + (box.width - core_w) // 2
    cy = box.y_min + (box.height - core_h) // 2
    core = _box_mask(BoundingBox(cx, cy, cx + core_w - 1, cy + core_h - 1), width, height)

    clamp_background, background_init = _background_seeds(box, width, height)
    return SeedConfig(
        clamp_object=BinaryMask.from_bool(core),
        clamp_background=clamp_background,
        object_init=BinaryMask.from_bool(inside),
        background_init=background_init,
    )


def build_click_seeds(
    surface: SurfaceEstimate, box: BoundingBox, size: tuple[int, int]
) -> SeedConfig:
    """Seeds from a contour surface estimate: surface inits the object model,
    its skeleton is clamped to object; background side as in box mode."""
    width, height = size
    if box.clip((width, height)) != box:
        raise ValueError(f"box {box} exceeds the {width}x{height} image")
    clamp_background, background_init = _background_seeds(box, width, height)
    # The contour search region extends past the box by the margin, so the
    # skeleton may graze pixels that are clamped background (outside the box);
    # the background clamp is certain, so it wins.
    clamp_object = BinaryMask.from_bool(
        surface.skeleton.object_mask() & ~clamp_background.object_mask()
    )
    return SeedConfig(
        clamp_object=clamp_object,
        clamp_background=clamp_background,
        object_init=surface.surface,
        background_init=background_init,
    )


def _fit(pixels: np.ndarray, config: EnergyConfig) -> GmmModel:
    return fit_gmm(
        pixels,
        n_components=config.gmm_components,
        cov_floor=config.cov_floor,
        em_iterations=config.em_iterations,
        seed=config.seed,
    )


def grabcut(
    image: np.ndarray,
    box: BoundingBox | None = None,
    clicks: ExtremeClicks | None = None,
    edges: EdgeMap | None = None,
    config: EnergyConfig | None = None,
) -> SegmentationResult:
    """Segment one object given a box (box mode) or extreme clicks (click mode).

    ``image`` is an (H, W, 3) float array in [0, 1]. Click mode requires an
    edge map; box mode computes gradient edges when none is given. The loop
    alternates globally optimal cuts with GMM refits on the current labeling
    and stops when the labeling is stable or after ``max_iterations`` cuts.
    """
    config = config or EnergyConfig()
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("image must be (H, W, 3)")
    height, width = img.shape[:2]

    if clicks is not None:
        if edges is None:
            raise MissingEdgeMapError("click mode requires an edge map")
        box = box_from_clicks(clicks)
        surface = estimate_surface(clicks, edges, margin=config.seed_margin)
        seeds = build_click_seeds(surface, box, (width, height))
    elif box is not None:
        if edges is None:
            edges = gradient_edges(img)
        seeds = build_box_seeds(box, (width, height))
    else:
        raise ValueError("either a box or extreme clicks must be given")
    if edges.size != (width, height):
        raise ValueError(f"edge map is {edges.size}, image is {(width, height)}")

    weights = grid_weights_from_edges(edges, config.pairwise_strength, config.edge_sharpness)
    flat = img.reshape(-1, 3)

    object_model = _fit(flat[seeds.object_init.object_mask().ravel()], config)
    background_model = _fit(flat[seeds.background_init.object_mask().ravel()], config)

    labeling: BinaryMask | None = None
    cut_steps: list[tuple[float | None, float]] = []
    iterations = 0
    for it in range(config.max_iterations):
        unary_fg = neg_log_likelihood(object_model, flat).reshape(height, width)
        unary_bg = neg_log_likelihood(background_model, flat).reshape(height, width)
        new_labeling = min_cut_segment(
            unary_bg, unary_fg, weights,
            clamp_object=seeds.clamp_object,
            clamp_background=seeds.clamp_background,
        )
        before = (
            segmentation_energy(unary_bg, unary_fg, weights, labeling)
            if labeling is not None else None
        )
        after = segmentation_energy(unary_bg, unary_fg, weights, new_labeling)
        cut_steps.append((before, after))
        iterations = it + 1
        stable = labeling is not None and new_labeling == labeling
        labeling = new_labeling
        if stable:
            break
        if it + 1 < config.max_iterations:
            obj = labeling.object_mask().ravel()
            object_model = _fit(flat[obj], config)
            background_model = _fit(flat[~obj], config)

    return SegmentationResult(
        labeling=labeling,
        energy=cut_steps[-1][1],
        iterations=iterations,
        seeds=seeds,
        object_model=object_model,
        background_model=background_model,
        cut_steps=tuple(cut_steps),
    )
