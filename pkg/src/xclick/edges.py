"""Per-pixel boundary probabilities: Scharr-gradient default and 16-bit PNG storage.

Any detector can be plugged in by precomputing a map and loading it from disk;
``gradient_edges`` is the built-in, dependency-free default.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

# Scharr x-kernel; the y-kernel is its transpose.
_SCHARR = np.array([[-3.0, 0.0, 3.0],
                    [-10.0, 0.0, 10.0],
                    [-3.0, 0.0, 3.0]])

_MAX_U16 = 65535


class EdgeMapError(ValueError):
    """Malformed, out-of-range, or mis-sized edge map data."""


class EdgeMap:
    """Boundary probability in [0, 1] for every pixel of an image."""

    __hash__ = None

    def __init__(self, values: np.ndarray):
        arr = np.array(values, dtype=np.float64, order="C")
        if arr.ndim != 2 or arr.size == 0:
            raise EdgeMapError("edge map must be a non-empty 2-D array")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise EdgeMapError("edge responses must lie in [0, 1]")
        arr.flags.writeable = False
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def height(self) -> int:
        return self._values.shape[0]

    @property
    def width(self) -> int:
        return self._values.shape[1]

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    def __eq__(self, other) -> bool:
        return isinstance(other, EdgeMap) and np.array_equal(self._values, other._values)


def gradient_edges(image: np.ndarray) -> EdgeMap:
    """Per-channel-max Scharr gradient magnitude, normalized to [0, 1].

    Constant images yield an all-zero map; otherwise the peak response is
    exactly 1. Borders use edge replication, so single-row and single-column
    images are fine.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.size == 0:
        raise EdgeMapError("cannot compute edges of a zero-sized image")
    if img.ndim == 2:
        img = img[:, :, None]
    response = np.zeros(img.shape[:2])
    for c in range(img.shape[2]):
        gx = ndimage.convolve(img[:, :, c], _SCHARR, mode="nearest")
        gy = ndimage.convolve(img[:, :, c], _SCHARR.T, mode="nearest")
        response = np.maximum(response, np.hypot(gx, gy))
    peak = response.max()
    if peak > 0:
        response /= peak
        # guard against rounding pushing the peak a hair above 1
        np.clip(response, 0.0, 1.0, out=response)
    return EdgeMap(response)


def save_edge_map(edge_map: EdgeMap, path) -> None:
    """Write as single-channel 16-bit PNG; value v encodes e = v / 65535."""
    u16 = np.round(edge_map.values * _MAX_U16).astype(np.uint16)
    Image.fromarray(u16).save(Path(path))


def load_edge_map(path, expect_size: tuple[int, int] | None = None) -> EdgeMap:
    """Load a 16-bit grayscale PNG edge map, optionally checking dimensions."""
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise EdgeMapError(f"{path}: not a readable image ({exc})") from exc
    if img.mode not in ("I;16", "I", "I;16B"):
        raise EdgeMapError(f"{path}: expected 16-bit grayscale PNG, got mode {img.mode}")
    arr = np.asarray(img, dtype=np.float64)
    if arr.min() < 0 or arr.max() > _MAX_U16:
        raise EdgeMapError(f"{path}: sample values outside the 16-bit range")
    edge_map = EdgeMap(arr / _MAX_U16)
    if expect_size is not None and edge_map.size != tuple(expect_size):
        raise EdgeMapError(
            f"{path}: edge map is {edge_map.size}, expected {tuple(expect_size)}"
        )
    return edge_map


def resolve_edge_map(image: np.ndarray, path=None) -> EdgeMap:
    """Load a precomputed map when a path is given, else fall back to gradients."""
    if path is not None:
        return load_edge_map(path, expect_size=(image.shape[1], image.shape[0]))
    return gradient_edges(image)
