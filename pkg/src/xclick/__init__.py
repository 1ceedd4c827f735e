"""Extreme-click annotation toolkit.

Turns four boundary clicks (top, bottom, left-most, right-most) into
bounding boxes and object segmentations, and provides the crowdsourcing
workflow (qualification, golden-question quality control, batching, timing)
that collects such clicks.
"""

from .edges import EdgeMap, gradient_edges, load_edge_map, save_edge_map
from .geometry import (
    BinaryMask,
    BoundingBox,
    ExtremeClicks,
    Point,
    box_from_clicks,
    infer_roles,
    iou_boxes,
    iou_masks,
    perturb_box,
    simulate_extreme_clicks,
    tight_box_from_mask,
)
from .contour import (
    PixelPath,
    SurfaceEstimate,
    estimate_surface,
    maximin_path,
    min_cost_path,
    skeletonize,
)
from .gmm import GmmModel, fit_gmm, neg_log_likelihood
from .grabcut import (
    EnergyConfig,
    SeedConfig,
    SegmentationResult,
    build_box_seeds,
    build_click_seeds,
    grabcut,
)
from .graphcut import GridWeights, grid_weights_from_edges, min_cut_segment, pairwise_weight

__version__ = "0.1.0"

__all__ = [
    "BinaryMask", "BoundingBox", "EdgeMap", "EnergyConfig", "ExtremeClicks",
    "GmmModel", "GridWeights", "PixelPath", "Point", "SeedConfig",
    "SegmentationResult", "SurfaceEstimate", "box_from_clicks",
    "build_box_seeds", "build_click_seeds", "estimate_surface", "fit_gmm",
    "grabcut", "gradient_edges", "grid_weights_from_edges", "infer_roles",
    "iou_boxes", "iou_masks", "load_edge_map", "maximin_path",
    "min_cost_path", "min_cut_segment", "neg_log_likelihood",
    "pairwise_weight", "perturb_box",
    "save_edge_map", "simulate_extreme_clicks", "skeletonize",
    "tight_box_from_mask",
]
