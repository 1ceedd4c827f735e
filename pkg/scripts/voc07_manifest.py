#!/usr/bin/env python3
"""Build an evaluation manifest from a PASCAL VOC segmentation split.

For every image in the chosen split that has instance segmentations, this
extracts one instance per class (the first listed in the XML), writes its
binary mask (void pixels become ignore), simulates extreme clicks from the
mask, and records the ground-truth box from the XML. Optionally links a
directory of precomputed 16-bit edge-map PNGs named <image id>.png.

Usage:
  python3 scripts/voc07_manifest.py --voc-root VOCdevkit/VOC2007 \
      --split trainval --out-dir out/voc07 [--edges-dir EDGES]
"""

from __future__ import annotations

import argparse
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
from PIL import Image

from xclick.evaluation import ManifestEntry, write_manifest
from xclick.geometry import BinaryMask, BoundingBox, simulate_extreme_clicks

VOID = 255


def instance_entries(voc_root: Path, image_id: str, out_masks: Path, edges_dir: Path | None):
    seg_path = voc_root / "SegmentationObject" / f"{image_id}.png"
    xml_path = voc_root / "Annotations" / f"{image_id}.xml"
    if not seg_path.exists() or not xml_path.exists():
        return []
    seg = np.asarray(Image.open(seg_path))
    objects = ET.parse(xml_path).getroot().findall("object")

    entries = []
    seen_classes = set()
    for index, obj in enumerate(objects, start=1):
        cls = obj.findtext("name") or "unknown"
        if cls in seen_classes:
            continue  # one instance per class per image, as in the evaluation
        instance = seg == index
        if not instance.any():
            continue
        seen_classes.add(cls)
        mask = BinaryMask.from_bool(instance, ignore=(seg == VOID))
        mask_path = out_masks / f"{image_id}_{index}.png"
        mask.save_png(mask_path)
        bb = obj.find("bndbox")
        box = BoundingBox(
            int(float(bb.findtext("xmin"))) - 1,
            int(float(bb.findtext("ymin"))) - 1,
            int(float(bb.findtext("xmax"))) - 1,
            int(float(bb.findtext("ymax"))) - 1,
        )
        edges = None
        if edges_dir is not None:
            candidate = edges_dir / f"{image_id}.png"
            if candidate.exists():
                edges = str(candidate)
        entries.append(ManifestEntry(
            id=f"{image_id}:{index}",
            image=str(voc_root / "JPEGImages" / f"{image_id}.jpg"),
            cls=cls,
            box=box,
            mask=str(mask_path),
            clicks=simulate_extreme_clicks(mask),
            edges=edges,
        ))
    return entries


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--voc-root", required=True, help="path to VOCdevkit/VOC2007")
    parser.add_argument("--split", default="trainval",
                        help="split file under ImageSets/Segmentation (default trainval)")
    parser.add_argument("--out-dir", required=True, help="output directory")
    parser.add_argument("--edges-dir", help="precomputed 16-bit edge maps, <id>.png")
    args = parser.parse_args()

    voc_root = Path(args.voc_root)
    split_file = voc_root / "ImageSets" / "Segmentation" / f"{args.split}.txt"
    if not split_file.exists():
        print(f"error: split file not found: {split_file}", file=sys.stderr)
        return 2
    out_dir = Path(args.out_dir)
    out_masks = out_dir / "instance-masks"
    out_masks.mkdir(parents=True, exist_ok=True)
    edges_dir = Path(args.edges_dir) if args.edges_dir else None

    entries = []
    for image_id in split_file.read_text().split():
        entries.extend(instance_entries(voc_root, image_id, out_masks, edges_dir))
    if not entries:
        print("error: no instances found", file=sys.stderr)
        return 2
    manifest = out_dir / "manifest.jsonl"
    write_manifest(entries, manifest)
    missing_edges = sum(1 for e in entries if e.edges is None)
    print(f"wrote {len(entries)} instances to {manifest}")
    if edges_dir is not None and missing_edges:
        print(f"warning: {missing_edges} entries have no precomputed edge map",
              file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
