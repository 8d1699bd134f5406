"""Command-line surface.

Subcommands: ``synth`` (emit benchmark cases), ``refine`` (zero-shot a
single pair), ``train`` (dataset training from a manifest), ``eval``
(prediction dir vs ground-truth dir), ``export`` (depth to PLY), and
``edges`` (debug edge maps).

Every run prints its fully resolved effective config as a JSON line so
results are reproducible from the log alone. Exit codes: 0 success,
2 usage, 3 file I/O, 4 dimension/contract, 5 invalid data, 6 divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data, export, metrics, synthbench
from .core import DepthMap, DimensionError, GuidanceImage, upsample_bilinear
from .edges import binary_edges, sobel_magnitude, to_gray_plane
from .losses import LossWeights
from .trainer import DivergenceError, TrainConfig, TrainSample, train, zero_shot_refine

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIMENSION = 4
EXIT_INVALID_DATA = 5
EXIT_DIVERGED = 6


def _load_config(args) -> TrainConfig:
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise data.FileIOError(f"config file not found: {path}")
        config = TrainConfig.from_file(path)
    else:
        config = TrainConfig()
    overrides = {}
    for key in ("seed", "n_stages", "k", "lr", "epochs", "batch_size", "iterations",
                "edge_percentile"):
        val = getattr(args, key, None)
        if val is not None:
            overrides["zero_shot_iters" if key == "iterations" else key] = val
    weight_overrides = {}
    for key in ("w_sleeve", "w_cycle", "w_fe", "w_tv", "sleeve_s"):
        val = getattr(args, key, None)
        if val is not None:
            weight_overrides["s" if key == "sleeve_s" else key] = val
    if weight_overrides:
        overrides["weights"] = replace(config.weights, **weight_overrides)
    if overrides:
        config = replace(config, **overrides)
    return config


def _emit_effective_config(config: TrainConfig, command: str) -> None:
    print(json.dumps({"event": "effective_config", "command": command,
                      "config": config.to_dict()}))


def _add_config_flags(p: argparse.ArgumentParser, training: bool = True):
    p.add_argument("--config", help="JSON config file mirroring TrainConfig")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-stages", dest="n_stages", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--edge-percentile", dest="edge_percentile", type=float)
    p.add_argument("--w-sleeve", dest="w_sleeve", type=float)
    p.add_argument("--w-cycle", dest="w_cycle", type=float)
    p.add_argument("--w-fe", dest="w_fe", type=float)
    p.add_argument("--w-tv", dest="w_tv", type=float)
    p.add_argument("--sleeve-s", dest="sleeve_s", type=float)
    if training:
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--iterations", type=int, help="zero-shot iteration count")


def _write_log(log: list, path: Path) -> None:
    with open(path, "w") as f:
        for rec in log:
            f.write(json.dumps(rec) + "\n")


def cmd_synth(args) -> int:
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "depth_lr").mkdir(exist_ok=True)
    (out / "depth_true").mkdir(exist_ok=True)
    kinds = args.kinds.split(",")
    records = []
    rng = np.random.default_rng(args.seed)
    for i in range(args.cases):
        kind = kinds[i % len(kinds)].strip()
        spec = synthbench.SceneSpec(
            kind=kind, height=args.size, width=args.size,
            z0=2.0 + 0.5 * float(rng.uniform(-1, 1)),
            slope=args.slope, slope_y=args.slope * 0.3,
            seed=int(rng.integers(0, 2**31)),
        )
        case = synthbench.make_benchmark_case(
            spec, step=args.step, factor=args.factor,
            keep_fraction=args.keep_fraction, case_id=f"{kind}_{i:03d}",
        )
        data.write_image_png(case.image, out / "images" / f"{case.case_id}.png")
        data.write_depth_png(case.depth_lr, out / "depth_lr" / f"{case.case_id}.png")
        data.write_depth_png(case.true_depth, out / "depth_true" / f"{case.case_id}.png")
        records.append({
            "id": case.case_id,
            "image": f"images/{case.case_id}.png",
            "depth": f"depth_lr/{case.case_id}.png",
            "depth_true": f"depth_true/{case.case_id}.png",
            "factor": args.factor, "step": args.step,
        })
    data.write_manifest(records, out / "manifest.jsonl")
    print(json.dumps({"event": "synth_done", "cases": len(records), "out": str(out)}))
    return EXIT_OK


def cmd_refine(args) -> int:
    config = _load_config(args)
    config = replace(config, mode="zero_shot")
    _emit_effective_config(config, "refine")
    image = data.read_image(args.image)
    depth_lr = data.read_depth_png(args.depth)
    if not depth_lr.valid.any():
        raise data.InvalidDepthError(f"depth map {args.depth} has no valid pixel")
    refined, log = zero_shot_refine(image, depth_lr, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.write_depth_png(refined, out)
    if args.log:
        _write_log(log, Path(args.log))
    iters = sum(1 for r in log if r.get("event") == "iter")
    print(json.dumps({"event": "refine_done", "out": str(out), "iterations": iters}))
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args)
    config = replace(config, mode="train")
    _emit_effective_config(config, "train")
    samples = data.load_manifest_samples(args.manifest)
    train_samples = []
    for s in samples:
        depth_lr = s.depth_lr
        if depth_lr is None:
            depth_lr = data.degrade(s.depth_hr, factor=args.factor,
                                    quantize_step=args.quantize_step)
        train_samples.append(TrainSample(s.sample_id, s.image, depth_lr))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net, log = train(config, train_samples, checkpoint_dir=out)
    _write_log(log, out / "training_log.jsonl")
    print(json.dumps({"event": "train_done", "checkpoints": str(out)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    if not pred_dir.is_dir():
        raise data.FileIOError(f"prediction directory not found: {pred_dir}")
    if not gt_dir.is_dir():
        raise data.FileIOError(f"ground-truth directory not found: {gt_dir}")
    preds = sorted(pred_dir.glob("*.png"))
    if not preds:
        raise data.FileIOError(f"no PNG predictions in {pred_dir}")
    reports, rows = [], []
    for p in preds:
        gt_path = gt_dir / p.name
        if not gt_path.exists():
            raise data.FileIOError(f"missing ground truth for {p.name}: {gt_path}")
        rep = metrics.evaluate(data.read_depth_png(p), data.read_depth_png(gt_path))
        reports.append(rep)
        rows.append(rep.row(p.stem[:16]))
        print(json.dumps({"event": "eval_image", "id": p.stem, **rep.as_dict()}))
    agg = metrics.aggregate(reports)
    print(metrics.table_header())
    for row in rows:
        print(row)
    print(agg.row("mean"))
    print(json.dumps({"event": "eval_done", **agg.as_dict()}))
    if args.report:
        with open(args.report, "w") as f:
            json.dump(agg.as_dict(), f, indent=2)
    return EXIT_OK


def cmd_export(args) -> int:
    d = data.read_depth_png(args.depth)
    if not d.valid.any():
        raise data.InvalidDepthError(f"depth map {args.depth} has no valid pixel")
    if args.fx is not None:
        k = export.Intrinsics(args.fx, args.fy or args.fx,
                              args.cx if args.cx is not None else (d.width - 1) / 2.0,
                              args.cy if args.cy is not None else (d.height - 1) / 2.0)
    else:
        k = export.Intrinsics.generic(d.height, d.width)
    counts = export.write_mesh(d, k, args.out, max_gap=args.max_gap)
    print(json.dumps({"event": "export_done", "out": str(args.out), **counts}))
    return EXIT_OK


def cmd_edges(args) -> int:
    img = data.read_image(args.image)
    gray = to_gray_plane(img)
    mag = sobel_magnitude(gray)
    em = binary_edges(gray, args.percentile)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    peak = mag.max()
    mag_img = GuidanceImage((mag / peak if peak > 0 else mag)[:, :, None])
    data.write_image_png(mag_img, f"{prefix}_magnitude.png")
    data.write_image_png(GuidanceImage(em.as_float()[:, :, None]), f"{prefix}_edges.png")
    print(json.dumps({"event": "edges_done", "threshold": em.threshold,
                      "edge_fraction": em.fraction}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthsr",
        description="Self-supervised edge-guided depth super-resolution",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="emit synthetic benchmark cases")
    p.add_argument("--out", required=True)
    p.add_argument("--cases", type=int, default=3)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--kinds", default="ramp,box_on_plane,curved")
    p.add_argument("--step", type=float, default=synthbench.DEFAULT_STEP)
    p.add_argument("--factor", type=int, default=8)
    p.add_argument("--slope", type=float, default=0.0025)
    p.add_argument("--keep-fraction", dest="keep_fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("refine", help="zero-shot refine a single RGBD pair")
    p.add_argument("--image", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    _add_config_flags(p, training=False)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("train", help="dataset training from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--factor", type=int, default=8)
    p.add_argument("--quantize-step", dest="quantize_step", type=float)
    _add_config_flags(p, training=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a prediction dir against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="export a depth map as an ASCII PLY mesh")
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fx", type=float)
    p.add_argument("--fy", type=float)
    p.add_argument("--cx", type=float)
    p.add_argument("--cy", type=float)
    p.add_argument("--max-gap", dest="max_gap", type=float,
                   default=export.DEFAULT_DISCONTINUITY)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("edges", help="write debug edge-magnitude and binary maps")
    p.add_argument("--image", required=True)
    p.add_argument("--out-prefix", dest="out_prefix", required=True)
    p.add_argument("--percentile", type=float, default=50.0)
    p.set_defaults(func=cmd_edges)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except data.FileIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except data.InvalidDepthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_DATA
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
