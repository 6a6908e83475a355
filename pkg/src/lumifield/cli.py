"""Command-line interface: synth, train, render, eval, edit.

Every run writes the fully resolved configuration to `config.json` in its
output directory; rerunning with `--config <that file>` reproduces the run.
All randomness descends from the single `--seed` value.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import dataset as dataset_mod
from . import metrics as metrics_mod
from . import plots
from .field import FieldConfig, EncodingConfig
from .images import write_png
from .isp import DegradationParams
from .rendering import render_image
from .scene import build_scene, pose_rig
from .training import TrainConfig, restore_networks, train

THREADS_ENV = "LLNERF_THREADS"


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="root random seed (default 0, or the --config value)")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: {THREADS_ENV} or machine parallelism)")
    p.add_argument("--config", type=str, default=None,
                   help="JSON config dump from a previous run; flags given "
                        "explicitly still override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lumifield",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic low-light dataset")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--views", type=int, default=20)
    p.add_argument("--test-views", type=int, default=0)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--focal", type=float, default=170.0)
    p.add_argument("--radius", type=float, default=3.8)
    p.add_argument("--elevation", type=float, default=60.0)
    p.add_argument("--near", type=float, default=2.0)
    p.add_argument("--far", type=float, default=6.0)
    p.add_argument("--reference-samples", type=int, default=96)
    p.add_argument("--exposure", type=float, default=None, help="exposure scale s")
    p.add_argument("--gains", type=str, default=None, help="r,g,b channel gains")
    p.add_argument("--shot-noise", type=float, default=None, help="shot noise coefficient a")
    p.add_argument("--read-noise", type=float, default=None, help="read noise coefficient b")

    p = sub.add_parser("train", help="train the field on a dataset")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch", type=int, default=None, help="center rays per step")
    p.add_argument("--samples", type=int, default=None, help="samples per ray")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--lr-final", type=float, default=None)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--ckpt-every", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None, help="density trunk width")
    p.add_argument("--depth", type=int, default=None, help="density trunk depth")
    p.add_argument("--pos-freqs", type=int, default=None)
    p.add_argument("--no-lc1", action="store_true", help="disable the brightness term")
    p.add_argument("--no-lc2", action="store_true", help="disable the gray-world term")
    p.add_argument("--no-lc3", action="store_true", help="disable the gamma regularizer")
    p.add_argument("--no-ls", action="store_true", help="disable the smoothness loss")

    p = sub.add_parser("render", help="render novel views from a checkpoint")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--mode", choices=("enhanced", "raw"), default="enhanced")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--maps", action="store_true",
                   help="also write lighting (V) and basis (R) maps")

    p = sub.add_parser("eval", help="score renders against the references")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("enhanced", "gamma", "raw"), default="enhanced")
    p.add_argument("--baseline-ckpt", type=str, default=None,
                   help="checkpoint rendered with the fixed-gamma baseline for deltas")
    p.add_argument("--gamma", type=float, default=2.2)
    p.add_argument("--samples", type=int, default=None)

    p = sub.add_parser("edit", help="render with a color-temperature edit")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=("warm", "cold"), default=None)
    p.add_argument("--gains", type=str, default=None, help="r,g,b gains on the enhanced lighting")
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--samples", type=int, default=None)
    return parser


def _load_config_file(args: argparse.Namespace, argv: list[str]) -> dict:
    """Start from a dumped config, letting explicitly passed flags win."""
    if not args.config:
        return {}
    with open(args.config, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _dump_config(out_dir: str, payload: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_gains(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise ValueError("gains must be three comma-separated numbers")
    return tuple(parts)


def _maybe(value, fallback):
    return fallback if value is None else value


def cmd_synth(args, argv) -> int:
    base = _load_config_file(args, argv)
    seed = _maybe(args.seed, base.get("seed", 0))
    deg_base = base.get("degradation", {})
    defaults = DegradationParams()
    params = DegradationParams(
        exposure=_maybe(args.exposure, deg_base.get("s", defaults.exposure)),
        gains=_parse_gains(args.gains) if args.gains else tuple(deg_base.get("gains", defaults.gains)),
        shot_noise=_maybe(args.shot_noise, deg_base.get("a", defaults.shot_noise)),
        read_noise=_maybe(args.read_noise, deg_base.get("b", defaults.read_noise)),
    )
    scene = build_scene(seed)
    cams = pose_rig(args.views, args.radius, args.elevation,
                    width=args.width, height=args.height, focal=args.focal)
    manifest = dataset_mod.emit_dataset(
        scene, cams, params, args.out, seed, test_count=args.test_views,
        near=args.near, far=args.far, reference_samples=args.reference_samples)
    _dump_config(args.out, {
        "command": "synth", "seed": seed, "views": args.views,
        "test_views": args.test_views, "width": args.width, "height": args.height,
        "focal": args.focal, "radius": args.radius, "elevation": args.elevation,
        "near": args.near, "far": args.far,
        "reference_samples": args.reference_samples,
        "degradation": params.to_dict(),
    })
    print(f"wrote {len(manifest.frames)} train + {len(manifest.gt_frames)} reference "
          f"images to {args.out}")
    return 0


def _train_config_from_args(args, base: dict) -> TrainConfig:
    cfg = TrainConfig.from_dict(base["train"]) if "train" in base else TrainConfig()
    if args.steps is not None:
        cfg.steps = args.steps
    if args.batch is not None:
        cfg.batch_size = args.batch
    if args.samples is not None:
        cfg.samples_per_ray = args.samples
    if args.lr is not None:
        cfg.lr = args.lr
    if args.lr_final is not None:
        cfg.lr_final = args.lr_final
    if args.warmup is not None:
        cfg.warmup_steps = args.warmup
    if args.ckpt_every is not None:
        cfg.checkpoint_interval = args.ckpt_every
    if args.seed is not None:
        cfg.seed = args.seed
    fc = cfg.field_config
    if args.hidden is not None or args.depth is not None or args.pos_freqs is not None:
        width = _maybe(args.hidden, fc.density_hidden[0])
        depth = _maybe(args.depth, len(fc.density_hidden))
        pos = EncodingConfig(num_frequencies=_maybe(args.pos_freqs,
                                                    fc.pos_encoding.num_frequencies))
        cfg.field_config = FieldConfig(
            pos_encoding=pos, dir_encoding=fc.dir_encoding,
            feature_dim=fc.feature_dim, density_hidden=(width,) * depth,
            head_hidden=fc.head_hidden, gamma0=fc.gamma0,
            alpha_floor=fc.alpha_floor, gamma_cap=fc.gamma_cap,
            scene_bound=fc.scene_bound)
    cfg.loss = cfg.loss.ablated(
        enable_brightness=not args.no_lc1 and cfg.loss.enable_brightness,
        enable_grayworld=not args.no_lc2 and cfg.loss.enable_grayworld,
        enable_gamma_reg=not args.no_lc3 and cfg.loss.enable_gamma_reg,
        enable_smooth=not args.no_ls and cfg.loss.enable_smooth)
    return cfg


def cmd_train(args, argv) -> int:
    base = _load_config_file(args, argv)
    cfg = _train_config_from_args(args, base)
    data = dataset_mod.load_dataset(args.data)
    _dump_config(args.out, {"command": "train", "data": os.path.abspath(args.data),
                            "seed": cfg.seed, "train": cfg.to_dict()})
    result = train(data, cfg, out_dir=args.out)
    if result.metrics:
        plots.save_loss_curves(result.metrics, os.path.join(args.out, "metrics.png"))
    print(f"trained {result.state.step} steps; checkpoint {result.final_checkpoint}")
    return 0


def _split_records(manifest, split: str):
    if split == "all":
        return manifest.frames
    return [f for f in manifest.frames if f.split == split]


def cmd_render(args, argv) -> int:
    data = dataset_mod.load_dataset(args.data)
    nets, step, echo = restore_networks(args.ckpt)
    cfg = TrainConfig.from_dict(echo)
    n_samples = _maybe(args.samples, cfg.samples_per_ray)
    threads = _maybe(args.threads, _default_threads())
    m = data.manifest
    os.makedirs(args.out, exist_ok=True)
    _dump_config(args.out, {"command": "render", "ckpt": os.path.abspath(args.ckpt),
                            "data": os.path.abspath(args.data), "split": args.split,
                            "mode": args.mode, "samples": n_samples, "maps": args.maps,
                            "seed": _maybe(args.seed, 0)})
    count = 0
    for rec in _split_records(m, args.split):
        cam = rec.camera(m.width, m.height, m.focal)
        bufs = render_image(nets, cam, near=m.near, far=m.far, n_samples=n_samples,
                            mode="both" if args.mode == "enhanced" else "raw",
                            threads=threads)
        stem = os.path.splitext(rec.file)[0]
        key = "enhanced" if args.mode == "enhanced" else "rgb"
        write_png(os.path.join(args.out, f"{stem}_{args.mode}.png"),
                  np.clip(bufs[key], 0.0, 1.0))
        if args.maps:
            write_png(os.path.join(args.out, f"{stem}_lighting.png"),
                      np.clip(np.repeat(bufs["lighting"][:, :, None], 3, axis=2), 0, 1))
            write_png(os.path.join(args.out, f"{stem}_basis.png"),
                      np.clip(bufs["basis"], 0.0, 1.0))
        count += 1
    print(f"rendered {count} views (step {step} checkpoint) to {args.out}")
    return 0


def cmd_eval(args, argv) -> int:
    data = dataset_mod.load_dataset(args.data)
    nets, _step, echo = restore_networks(args.ckpt)
    cfg = TrainConfig.from_dict(echo)
    n_samples = _maybe(args.samples, cfg.samples_per_ray)
    threads = _maybe(args.threads, _default_threads())
    report, renders = metrics_mod.evaluate_views(
        nets, data, n_samples, mode=args.mode, gamma_fixed=args.gamma, threads=threads)
    if args.baseline_ckpt:
        base_nets, _s, _e = restore_networks(args.baseline_ckpt)
        base_report, _ = metrics_mod.evaluate_views(
            base_nets, data, n_samples, mode="gamma", gamma_fixed=args.gamma,
            threads=threads)
        report.baseline_views = base_report.views
    os.makedirs(args.out, exist_ok=True)
    _dump_config(args.out, {"command": "eval", "ckpt": os.path.abspath(args.ckpt),
                            "data": os.path.abspath(args.data), "mode": args.mode,
                            "samples": n_samples, "gamma": args.gamma,
                            "baseline_ckpt": args.baseline_ckpt, "seed": _maybe(args.seed, 0)})
    report_path = os.path.join(args.out, "report.tsv")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_tsv())
    plots.save_metric_bars(report, os.path.join(args.out, "report.png"))
    for rec, img in zip(data.manifest.split_gt_frames("test"), renders):
        stem = os.path.splitext(rec.file)[0].replace("gt_", "pred_")
        write_png(os.path.join(args.out, f"{stem}.png"), np.clip(img, 0, 1))
    print(report.to_tsv(), end="")
    print(f"report written to {report_path}")
    return 0


def cmd_edit(args, argv) -> int:
    if (args.preset is None) == (args.gains is None):
        raise ValueError("give exactly one of --preset or --gains")
    if args.preset:
        edit = metrics_mod.WARM_EDIT if args.preset == "warm" else metrics_mod.COLD_EDIT
    else:
        edit = metrics_mod.EditSpec(gains=_parse_gains(args.gains))
    data = dataset_mod.load_dataset(args.data)
    nets, _step, echo = restore_networks(args.ckpt)
    cfg = TrainConfig.from_dict(echo)
    n_samples = _maybe(args.samples, cfg.samples_per_ray)
    threads = _maybe(args.threads, _default_threads())
    m = data.manifest
    os.makedirs(args.out, exist_ok=True)
    _dump_config(args.out, {"command": "edit", "ckpt": os.path.abspath(args.ckpt),
                            "data": os.path.abspath(args.data),
                            "gains": list(edit.gains), "samples": n_samples,
                            "split": args.split, "seed": _maybe(args.seed, 0)})
    count = 0
    for rec in _split_records(m, args.split):
        cam = rec.camera(m.width, m.height, m.focal)
        bufs = metrics_mod.edit_render(nets, cam, edit, m.near, m.far, n_samples,
                                       threads=threads)
        stem = os.path.splitext(rec.file)[0]
        write_png(os.path.join(args.out, f"{stem}_edit.png"),
                  np.clip(bufs["enhanced"], 0.0, 1.0))
        count += 1
    print(f"rendered {count} edited views to {args.out}")
    return 0


_COMMANDS = {"synth": cmd_synth, "train": cmd_train, "render": cmd_render,
             "eval": cmd_eval, "edit": cmd_edit}


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args, argv)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
