"""Command-line entry point: synth, train, track, eval.

Exit codes: 0 success, 1 usage or configuration error, 2 data validation
error, 3 runtime failure.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import config as cfg
from .data import SynthConfig, load_dataset, synthesize_dataset
from .errors import DataValidationError, UsageError
from .inference import read_trajectory_csv, track_clip, write_trajectory_csv
from .metrics import FrameRecord, evaluate, evaluate_sweep
from .model import count_parameters, load_checkpoint
from .train import train as run_training


def _dest(key: str) -> str:
    return key.replace(".", "__")


def _config_flag(parser, flag: str, key: str, help_text: str):
    parser.add_argument(flag, dest=_dest(key), metavar="V", default=None, help=help_text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise UsageError(message)


def _collect_overrides(args, keys) -> dict:
    overrides = {}
    for key in keys:
        raw = getattr(args, _dest(key), None)
        if raw is not None:
            overrides[key] = cfg.parse_override(key, raw)
    return overrides


def _merged(args, keys, extra=None) -> dict:
    config_path = args.config or cfg.default_config_path()
    values = cfg.merge_layers(config_path, _collect_overrides(args, keys))
    if extra:
        values.update(extra)
    return values


_SYNTH_KEYS = [k for k in cfg.SCHEMA if k.startswith("synth.")]
_NET_KEYS = [k for k in cfg.SCHEMA if k.startswith("net.")]
_TRAIN_KEYS = [k for k in cfg.SCHEMA if k.startswith("train.")]
_INFER_KEYS = [k for k in cfg.SCHEMA if k.startswith("infer.")]
_GT_KEYS = [k for k in cfg.SCHEMA if k.startswith(("gtmap.", "loss."))]
_EVAL_KEYS = ["eval.tau"]


# ------------------------------------------------------------------ synth


def _cmd_synth(args) -> int:
    values = _merged(args, _SYNTH_KEYS)
    values.setdefault("synth.frames_per_clip", 60)
    if "synth.n_clips" not in values:
        raise UsageError("synth requires --n-clips (or synth.n_clips in the config file)")
    synth_cfg = cfg.build_section("synth", values, SynthConfig)
    out = Path(args.output)
    records = synthesize_dataset(synth_cfg, out, split=args.split)
    cfg.echo_config(out, {"synth": synth_cfg})
    frames = sum(len(c) for c in records)
    print(f"wrote {len(records)} clips ({frames} frames) to {out / args.split}")
    return 0


# ------------------------------------------------------------------ train


def _cmd_train(args) -> int:
    extra = {"train.hlsm_epoch": None} if args.no_hlsm else None
    values = _merged(args, _NET_KEYS + _TRAIN_KEYS + _INFER_KEYS + _GT_KEYS, extra)
    net_config = cfg.build_section("net", values)
    train_config = cfg.build_section("train", values)
    gt_config = cfg.build_section("gtmap", values)
    loss_config = cfg.build_section("loss", values)
    infer_config = cfg.build_section("infer", values)

    dataset = load_dataset(args.data, args.split)
    if not dataset:
        raise DataValidationError(f"split {args.split!r} under {args.data} has no clips")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    cfg.echo_config(
        out,
        {
            "net": net_config,
            "train": train_config,
            "gtmap": gt_config,
            "loss": loss_config,
            "infer": infer_config,
        },
    )

    def progress(epoch, mean_loss):
        print(f"epoch {epoch}/{train_config.epochs} mean_loss {mean_loss:.4f}", flush=True)

    model = run_training(
        dataset,
        net_config,
        train_config,
        out,
        gt_config=gt_config,
        loss_config=loss_config,
        infer_config=infer_config,
        workers=args.workers,
        progress=progress,
    )
    print(f"trained {count_parameters(model)} parameters; checkpoint at {out / 'checkpoint.pt'}")
    return 0


# ------------------------------------------------------------------ track


def _clip_dirs(input_dir: Path):
    """(relative_id, dir) pairs; a dir with img files is a single clip."""
    if sorted(input_dir.glob("img_*.png")):
        return [(None, input_dir)]
    found = []
    for match_dir in sorted(p for p in input_dir.iterdir() if p.is_dir()):
        for clip_dir in sorted(p for p in match_dir.iterdir() if p.is_dir()):
            if sorted(clip_dir.glob("img_*.png")):
                found.append((f"{match_dir.name}/{clip_dir.name}", clip_dir))
    if not found:
        raise DataValidationError(f"no clips found under {input_dir}")
    return found


def _read_clip_frames(clip_dir: Path):
    frames = []
    for path in sorted(clip_dir.glob("img_*.png")):
        with Image.open(path) as img:
            frames.append(np.asarray(img.convert("RGB"), dtype=np.uint8))
    return frames


def _write_overlays(overlay_dir: Path, clip_dir: Path, trajectory):
    overlay_dir.mkdir(parents=True, exist_ok=True)
    paths = sorted(clip_dir.glob("img_*.png"))
    for path, point in zip(paths, trajectory):
        with Image.open(path) as img:
            img = img.convert("RGB")
            if point.visible:
                draw = ImageDraw.Draw(img)
                x, y = point.position
                r = 6
                draw.ellipse([x - r, y - r, x + r, y + r], outline=(255, 0, 0), width=2)
            img.save(overlay_dir / path.name)


def _cmd_track(args) -> int:
    extra = {"infer.use_tracker": False} if args.no_tracker else None
    values = _merged(args, _INFER_KEYS, extra)
    infer_config = cfg.build_section("infer", values)

    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise UsageError(f"checkpoint not found: {ckpt}")
    model = load_checkpoint(ckpt)
    model.eval()

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    cfg.echo_config(out, {"infer": infer_config})

    for rel_id, clip_dir in _clip_dirs(Path(args.input)):
        frames = _read_clip_frames(clip_dir)
        trajectory = track_clip(model, frames, infer_config, workers=args.workers)
        target_dir = out if rel_id is None else out / rel_id
        target_dir.mkdir(parents=True, exist_ok=True)
        csv_path = target_dir / "trajectory.csv"
        write_trajectory_csv(trajectory, csv_path)
        if args.overlay_dir:
            overlay = Path(args.overlay_dir) if rel_id is None else Path(args.overlay_dir) / rel_id
            _write_overlays(overlay, clip_dir, trajectory)
        seen = sum(1 for p in trajectory if p.visible)
        label = rel_id or clip_dir.name
        print(f"{label}: {seen}/{len(trajectory)} frames visible -> {csv_path}")
    return 0


# ------------------------------------------------------------------- eval


def _parse_tau_sweep(raw: str):
    parts = raw.split(":")
    if len(parts) != 3:
        raise UsageError(f"--tau-sweep expects lo:hi:step, got {raw!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"--tau-sweep expects numbers, got {raw!r}") from exc
    if step <= 0 or hi < lo:
        raise UsageError(f"--tau-sweep needs lo <= hi and step > 0, got {raw!r}")
    taus = []
    k = 0
    while lo + k * step <= hi + 1e-9:
        taus.append(lo + k * step)
        k += 1
    return taus


def _prediction_paths(pred: Path, clips):
    if pred.is_file():
        if len(clips) != 1:
            raise DataValidationError(
                f"single prediction file given but split has {len(clips)} clips"
            )
        return [(clips[0], pred)]
    pairs = []
    for clip in clips:
        path = pred / clip.clip_id / "trajectory.csv"
        if not path.is_file():
            raise DataValidationError(f"missing prediction file: {path}")
        pairs.append((clip, path))
    return pairs


def _cmd_eval(args) -> int:
    values = _merged(args, _EVAL_KEYS)
    eval_config = cfg.build_section("eval", values)
    clips = load_dataset(args.data, args.split)
    if not clips:
        raise DataValidationError(f"split {args.split!r} under {args.data} has no clips")

    records = []
    for clip, path in _prediction_paths(Path(args.pred), clips):
        trajectory = read_trajectory_csv(path)
        if len(trajectory) != len(clip):
            raise DataValidationError(
                f"{path}: {len(trajectory)} predictions for {len(clip)} frames of {clip.clip_id}"
            )
        for label, point in zip(clip.labels, trajectory):
            records.append(
                FrameRecord(
                    gt=label.position if label.visible else None,
                    pred=point.position if point.visible else None,
                    confidence=point.confidence if point.visible else None,
                )
            )

    if args.tau_sweep:
        result = evaluate_sweep(records, _parse_tau_sweep(args.tau_sweep))
        summary = result[-1]
    else:
        result = evaluate(records, eval_config)
        summary = result

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    cfg.echo_config(out, {"eval": eval_config})
    tmp = out / "metrics.json.tmp"
    tmp.write_text(json.dumps(result, indent=2) + "\n")
    os.replace(tmp, out / "metrics.json")
    print(
        f"tau={summary['tau']:g} f1={summary['f1']:.4f} accuracy={summary['accuracy']:.4f} "
        f"ap={summary['ap']:.4f} ({summary['frames']} frames)"
    )
    return 0


# ------------------------------------------------------------------ parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="balltrack", description="Ball detection and tracking toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help=f"config file (default ${cfg.ENV_CONFIG})")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--output", required=True, help="dataset root directory")
    p.add_argument("--split", default="train", help="split name (default train)")
    _config_flag(p, "--n-clips", "synth.n_clips", "number of clips")
    _config_flag(p, "--frames-per-clip", "synth.frames_per_clip", "frames per clip (default 60)")
    _config_flag(p, "--size", "synth.size", "frame size WxH (default 512x288)")
    _config_flag(p, "--ball-radius", "synth.ball_radius", "ball radius in pixels")
    _config_flag(p, "--distractors", "synth.n_distractors", "number of distractor blobs")
    _config_flag(p, "--motion", "synth.motion", "linear | quadratic | bounce")
    _config_flag(p, "--occlusion-rate", "synth.occlusion_rate", "occluded fraction [0,1]")
    _config_flag(p, "--jitter", "synth.camera_jitter", "camera jitter in pixels")
    _config_flag(p, "--seed", "synth.seed", "generator seed")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--data", required=True, help="dataset root directory")
    p.add_argument("--split", default="train", help="training split (default train)")
    p.add_argument("--output", required=True, help="run output directory")
    p.add_argument("--workers", type=int, default=0, help="parallel worker threads")
    p.add_argument("--no-hlsm", action="store_true", help="disable hard-sample mining")
    _config_flag(p, "--epochs", "train.epochs", "training epochs (default 30)")
    _config_flag(p, "--batch-size", "train.batch_size", "batch size (default 8)")
    _config_flag(p, "--optimizer", "train.optimizer", "adam | sgd")
    _config_flag(p, "--lr", "train.learning_rate", "learning rate (default 1e-3)")
    _config_flag(p, "--hlsm-epoch", "train.hlsm_epoch", "mining epoch (default 20)")
    _config_flag(p, "--hlsm-threshold", "train.hlsm_threshold", "hard distance in px (default 4)")
    _config_flag(p, "--seed", "train.seed", "training seed")
    _config_flag(p, "--n-frames", "net.n_frames", "frames per window (default 3)")
    _config_flag(p, "--stem-variant", "net.stem_variant", "stem stride variant a | b | c")
    _config_flag(p, "--branch-widths", "net.branch_widths", "e.g. 16,32,64,128")
    _config_flag(p, "--blocks-per-branch", "net.blocks_per_branch", "residual blocks per stage")
    _config_flag(p, "--input-size", "net.input_size", "model input HxW (default 288x512)")
    _config_flag(p, "--gtmap-mode", "gtmap.mode", "binary | real")
    _config_flag(p, "--gtmap-d", "gtmap.d", "target disc radius (default 2.5)")
    _config_flag(p, "--gtmap-cmin", "gtmap.c_min", "boundary value of real maps (default 0.7)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("track", help="run tracking over clips")
    common(p)
    p.add_argument("--checkpoint", required=True, help="trained checkpoint file")
    p.add_argument("--input", required=True, help="clip directory or split tree")
    p.add_argument("--output", required=True, help="trajectory output directory")
    p.add_argument("--workers", type=int, default=0, help="parallel worker threads")
    p.add_argument("--no-tracker", action="store_true", help="disable the motion tracker")
    p.add_argument("--overlay-dir", default=None, help="write frames with detection circles")
    _config_flag(p, "--step", "infer.step", "window stride (default 3)")
    _config_flag(p, "--localization", "infer.localization", "geometric | coh")
    _config_flag(p, "--gate-radius", "infer.gate_radius", "gating distance in model px")
    _config_flag(p, "--connectivity", "infer.connectivity", "blob connectivity 4 | 8")
    _config_flag(p, "--miss-reset", "infer.miss_reset", "misses before history reset")
    _config_flag(p, "--batch-size", "infer.batch_size", "windows per forward batch")
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("eval", help="score trajectories against labels")
    common(p)
    p.add_argument("--pred", required=True, help="trajectory csv or directory tree")
    p.add_argument("--data", required=True, help="dataset root directory")
    p.add_argument("--split", default="test", help="labelled split (default test)")
    p.add_argument("--output", required=True, help="metrics output directory")
    p.add_argument("--tau-sweep", default=None, help="grid lo:hi:step instead of one tau")
    _config_flag(p, "--tau", "eval.tau", "distance threshold in px (default 4)")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataValidationError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
