"""RGB raster I/O as float arrays in [0, 1]."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def load_image(path) -> np.ndarray:
    """Load an image as an (H, W, 3) float64 array with values in [0, 1]."""
    with Image.open(Path(path)) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(image: np.ndarray, path) -> None:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(Path(path))


def image_size(path) -> tuple[int, int]:
    """(width, height) without decoding pixel data."""
    with Image.open(Path(path)) as img:
        return img.size
