"""Batch-mode command line: segment, simulate-clicks, evaluate, serve, report.

Exit codes: 0 success, 1 partial failure, 2 usage or input error. Every
subcommand is deterministic given --seed; the only non-reproducible output
column is wall-clock time_ms.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluation, protocol
from .edges import EdgeMapError, gradient_edges, load_edge_map
from .geometry import BinaryMask, BoundingBox, ExtremeClicks, simulate_extreme_clicks
from .grabcut import EnergyConfig, config_from_dict, grabcut
from .raster import load_image


class CliError(Exception):
    """Usage or input error; maps to exit code 2."""


def _load_config(path, seed: int | None) -> EnergyConfig:
    data = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise CliError(f"config file not found: {path}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CliError(f"config file {path} is not valid JSON: {exc.msg}")
    data.pop("mode", None)
    if seed is not None:
        data["seed"] = seed
    try:
        return config_from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad config: {exc}")


def _dump_surface_debug(clicks, edges, config, debug_dir: Path) -> None:
    """Write the contour estimate (surface/skeleton PNGs, contour JSON)."""
    from .contour import estimate_surface

    estimate = estimate_surface(clicks, edges, margin=config.seed_margin)
    debug_dir.mkdir(parents=True, exist_ok=True)
    estimate.surface.save_png(debug_dir / "surface.png")
    estimate.skeleton.save_png(debug_dir / "skeleton.png")
    contour = [
        {"points": [{"x": p.x, "y": p.y} for p in path.pixels],
         "bottleneck": path.bottleneck}
        for path in estimate.contour
    ]
    (debug_dir / "contour.json").write_text(
        json.dumps(contour, indent=2) + "\n", encoding="utf-8")


def cmd_segment(args) -> int:
    image_path = Path(args.image)
    if not image_path.exists():
        raise CliError(f"image not found: {args.image}")
    image = load_image(image_path)
    config = _load_config(args.config, args.seed)

    if args.mode == "clicks":
        if not args.clicks:
            raise CliError("clicks mode requires --clicks")
        if not args.edges:
            raise CliError("clicks mode requires --edges")
        clicks = ExtremeClicks.from_json(json.loads(Path(args.clicks).read_text()))
        edges = load_edge_map(args.edges, expect_size=(image.shape[1], image.shape[0]))
        if args.debug_dir:
            _dump_surface_debug(clicks, edges, config, Path(args.debug_dir))
        result = grabcut(image, clicks=clicks, edges=edges, config=config)
    else:
        if not args.box:
            raise CliError("box mode requires --box X_MIN,Y_MIN,X_MAX,Y_MAX")
        try:
            coords = [int(v) for v in args.box.split(",")]
            box = BoundingBox(*coords)
        except (ValueError, TypeError) as exc:
            raise CliError(f"bad --box value {args.box!r}: {exc}")
        edges = (
            load_edge_map(args.edges, expect_size=(image.shape[1], image.shape[0]))
            if args.edges else gradient_edges(image)
        )
        result = grabcut(image, box=box, edges=edges, config=config)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.labeling.save_png(out)
    sidecar = out.with_suffix(".json")
    sidecar.write_text(json.dumps({
        "energy": result.energy,
        "iterations": result.iterations,
        "mode": args.mode,
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {out} ({result.iterations} iterations, energy {result.energy:.3f})")
    return 0


def cmd_simulate_clicks(args) -> int:
    masks_dir = Path(args.masks)
    if not masks_dir.is_dir():
        raise CliError(f"mask directory not found: {args.masks}")
    mask_files = sorted(masks_dir.glob("*.png"))
    if not mask_files:
        raise CliError(f"no mask PNGs in {args.masks}")

    images_dir = Path(args.images) if args.images else None
    entries = []
    skipped = 0
    for mask_path in mask_files:
        try:
            mask = BinaryMask.load_png(mask_path)
            clicks = simulate_extreme_clicks(mask)
        except Exception as exc:
            print(f"warning: skipping {mask_path.name}: {exc}", file=sys.stderr)
            skipped += 1
            continue
        image_path = None
        if images_dir is not None:
            for suffix in (".png", ".jpg", ".jpeg", ".bmp"):
                candidate = images_dir / (mask_path.stem + suffix)
                if candidate.exists():
                    image_path = str(candidate)
                    break
        entries.append(evaluation.ManifestEntry(
            id=mask_path.stem, image=image_path, cls=args.cls,
            mask=str(mask_path), clicks=clicks,
            edges=_sibling_edges(mask_path, args.edges),
        ))
    if not entries:
        raise CliError("all masks were skipped")
    evaluation.write_manifest(entries, args.out)
    print(f"wrote {len(entries)} entries to {args.out}"
          + (f" ({skipped} skipped)" if skipped else ""))
    return 0


def _sibling_edges(mask_path: Path, edges_dir) -> str | None:
    if not edges_dir:
        return None
    candidate = Path(edges_dir) / (mask_path.stem + ".png")
    return str(candidate) if candidate.exists() else None


def cmd_evaluate(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise CliError(f"manifest not found: {args.manifest}")
    try:
        manifest = evaluation.load_manifest(manifest_path)
    except evaluation.ManifestError as exc:
        raise CliError(str(exc))
    config = _load_config(args.config, args.seed)
    report, _ = evaluation.run_experiment(
        manifest, args.mode, config=config, out_dir=args.report, jobs=args.jobs,
    )
    print(f"macro mIoU ({args.mode} mode): {report.macro_miou:.4f} "
          f"over {sum(s.count for s in report.per_class.values())} entries, "
          f"{len(report.failures)} failed")
    for entry_id, message in report.failures:
        print(f"failed: {entry_id}: {message}", file=sys.stderr)
    return 1 if report.failures else 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config_path = Path(args.config)
    if not config_path.exists():
        raise CliError(f"config file not found: {args.config}")
    try:
        config = ServiceConfig.from_json_file(config_path)
    except (ValueError, TypeError, KeyError) as exc:
        raise CliError(f"bad service config: {exc}")
    app = create_app(config)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except SystemExit as exc:  # uvicorn exits 1 when the port is taken
        if exc.code:
            raise CliError(f"could not serve on port {args.port}")
    return 0


def cmd_report(args) -> int:
    log_path = Path(args.log)
    if not log_path.exists():
        raise CliError(f"event log not found: {args.log}")
    state = protocol.ProtocolState.from_events(protocol.EventLog(log_path).events())
    timing = protocol.timing_report(
        state.instances,
        incomplete=state.incomplete_instances,
        pay_per_batch=args.pay_per_batch,
        batch_size=args.batch_size,
    )
    print(f"instances: {timing.instances} ({timing.incomplete} incomplete)")
    print(f"mean {timing.mean_total_s:.1f} s/instance "
          f"(first click {timing.mean_first_click_s:.1f} s, "
          f"later clicks {timing.mean_later_click_s:.1f} s)")
    print(f"total {timing.total_hours:.2f} h, cost ${timing.cost:.2f}")
    qualified = sum(1 for w in state.workers.values() if w.qualified)
    accepted = sum(1 for b in state.batches.values() if b.status == "accepted")
    print(f"workers: {len(state.workers)} registered, {qualified} qualified")
    print(f"batches: {len(state.batches)} opened, {accepted} accepted; "
          f"annotations: {sum(1 for a in state.annotations if not a.golden)}")
    return 0


def cmd_convert_voc(args) -> int:
    annotations = Path(args.annotations)
    if not annotations.is_dir():
        raise CliError(f"annotation directory not found: {args.annotations}")
    count = evaluation.convert_voc_annotations(annotations, args.images, args.out)
    print(f"wrote {count} entries to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xclick",
        description="Extreme-click annotation toolkit: segmentation, simulation, "
                    "evaluation, and the annotation service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment one image from a box or extreme clicks")
    p.add_argument("--image", required=True, help="input image path")
    p.add_argument("--clicks", help="JSON file with the four extreme clicks")
    p.add_argument("--box", help="box as X_MIN,Y_MIN,X_MAX,Y_MAX (inclusive pixels)")
    p.add_argument("--edges", help="16-bit PNG edge map (required in clicks mode)")
    p.add_argument("--mode", choices=("box", "clicks"), required=True, help="seeding mode")
    p.add_argument("--out", required=True, help="output mask PNG (JSON sidecar alongside)")
    p.add_argument("--config", help="JSON file with energy config overrides")
    p.add_argument("--debug-dir", help="also write surface/skeleton PNGs and contour JSON here")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("simulate-clicks", help="derive extreme clicks from mask PNGs")
    p.add_argument("--masks", required=True, help="directory of mask PNGs")
    p.add_argument("--out", required=True, help="output JSON-lines manifest")
    p.add_argument("--images", help="directory of matching images (by stem)")
    p.add_argument("--edges", help="directory of matching edge maps (by stem)")
    p.add_argument("--class", dest="cls", default="object", help="class label for all entries")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.set_defaults(func=cmd_simulate_clicks)

    p = sub.add_parser("evaluate", help="run grabcut over a manifest and report quality")
    p.add_argument("--manifest", required=True, help="JSON-lines manifest")
    p.add_argument("--mode", choices=("box", "clicks"), required=True, help="seeding mode")
    p.add_argument("--config", help="JSON file with energy config overrides")
    p.add_argument("--report", help="directory for report.json and entries.csv")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the annotation/segmentation HTTP service")
    p.add_argument("--config", required=True, help="service config JSON")
    p.add_argument("--port", type=int, default=8000, help="TCP port (default 8000)")
    p.add_argument("--host", default="127.0.0.1", help="bind address (default 127.0.0.1)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="print timing and quality aggregates from an event log")
    p.add_argument("--log", required=True, help="JSON-lines event log")
    p.add_argument("--pay-per-batch", type=float, default=0.15,
                   help="configured pay per batch (default 0.15)")
    p.add_argument("--batch-size", type=int, default=10, help="images per batch (default 10)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("convert-voc", help="convert PASCAL VOC XML annotations to a manifest")
    p.add_argument("--annotations", required=True, help="directory of VOC XML files")
    p.add_argument("--images", required=True, help="directory of the referenced images")
    p.add_argument("--out", required=True, help="output JSON-lines manifest")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.set_defaults(func=cmd_convert_voc)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EdgeMapError, evaluation.ManifestError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
