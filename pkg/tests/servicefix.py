"""Build a complete on-disk service fixture: images, masks, manifests, config.

Usable as a library from the tests and as a script (for the frontend's
end-to-end test): ``python3 tests/servicefix.py OUT_DIR`` prints the config
path and writes ``fixture-clicks.json`` with known-good click coordinates.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from xclick.evaluation import ManifestEntry, write_manifest
from xclick.geometry import BinaryMask, simulate_extreme_clicks, tight_box_from_mask
from xclick.raster import save_image

SIZE = 40
BLUE = (0.10, 0.20, 0.80)
RED = (0.90, 0.10, 0.10)


def _blob(rng):
    obj = np.zeros((SIZE, SIZE), dtype=bool)
    x0, y0 = int(rng.integers(4, 14)), int(rng.integers(4, 14))
    w, h = int(rng.integers(10, 20)), int(rng.integers(10, 20))
    obj[y0:y0 + h, x0:x0 + w] = True
    return BinaryMask.from_bool(obj)


def _render(mask):
    img = np.empty((SIZE, SIZE, 3))
    img[:] = BLUE
    img[mask.object_mask()] = RED
    return img


def build_service_dir(root, n_tasks: int = 9, n_qual: int = 5, n_golden: int = 1,
                      cls: str = "square", seed: int = 0) -> Path:
    """Create the directory layout and return the config.json path."""
    root = Path(root).resolve()  # config paths must not depend on the caller's cwd
    images = root / "images"
    masks = root / "masks"
    files = root / "files"
    for d in (images, masks, files):
        d.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    def emit(prefix, count, with_mask):
        entries = []
        for i in range(count):
            name = f"{prefix}{i}"
            mask = _blob(rng)
            save_image(_render(mask), images / f"{name}.png")
            entry_kwargs = dict(id=name, image=str(images / f"{name}.png"), cls=cls)
            if with_mask:
                mask.save_png(masks / f"{name}.png")
                entry_kwargs["mask"] = str(masks / f"{name}.png")
            entry_kwargs["box"] = tight_box_from_mask(mask)
            entries.append(ManifestEntry(**entry_kwargs))
        return entries

    qual = emit("qual", n_qual, with_mask=True)
    tasks = emit("task", n_tasks, with_mask=False)
    golden = emit("gold", n_golden, with_mask=True)
    write_manifest(qual, root / "qualification.jsonl")
    write_manifest(tasks, root / "tasks.jsonl")
    write_manifest(golden, root / "golden.jsonl")

    config = {
        "images_root": str(images),
        "files_root": str(files),
        "event_log": str(root / "events.jsonl"),
        "qualification_manifest": str(root / "qualification.jsonl"),
        "tasks_manifest": str(root / "tasks.jsonl"),
        "golden_manifest": str(root / "golden.jsonl"),
        "tolerance": 10,
        "seed": seed,
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")

    # known-good clicks per image id, for clients that cannot read masks
    clicks_by_id = {}
    for entry in qual + golden:
        mask = BinaryMask.load_png(entry.mask)
        clicks = simulate_extreme_clicks(mask)
        clicks_by_id[entry.id] = [{"x": p.x, "y": p.y} for p in clicks.points]
    for entry in tasks:
        clicks_by_id[entry.id] = [
            {"x": entry.box.x_min, "y": (entry.box.y_min + entry.box.y_max) // 2},
            {"x": (entry.box.x_min + entry.box.x_max) // 2, "y": entry.box.y_min},
            {"x": entry.box.x_max, "y": (entry.box.y_min + entry.box.y_max) // 2},
            {"x": (entry.box.x_min + entry.box.x_max) // 2, "y": entry.box.y_max},
        ]
    (root / "fixture-clicks.json").write_text(
        json.dumps(clicks_by_id, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return config_path


if __name__ == "__main__":
    out = Path(sys.argv[1])
    print(build_service_dir(out))
