"""Command-line entry point: ``viewplan <subcommand> ...``.

Options may also come from a ``key=value`` config file (``--config``);
command-line flags take precedence. Exit status: 0 on success, 2 on usage
errors, 1 on data errors (with the failing record's line number).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .geom import DEFAULT_INTRINSICS, CameraTrajectory, DegenerateRotation, Intrinsics
from .synth import MalformedRecord, generate_dataset, read_dataset, write_dataset

TRAJ_FORMAT = "viewplan-trajectories"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# options
# ---------------------------------------------------------------------------

# per-subcommand defaults; argparse defaults are None so config files can fill gaps
DEFAULTS = {
    "common": {"seed": 0, "width": DEFAULT_INTRINSICS.width_px, "height": DEFAULT_INTRINSICS.height_px,
               "focal": DEFAULT_INTRINSICS.focal_px},
    "synth": {"count": 8, "frames": 16},
    "train": {"steps": 1000, "lr": 5e-5, "batch": 16, "d": 64, "blocks": 4, "heads": 4, "factor": 4,
              "warmup": 0, "cosine": 0, "min_lr": 0.0, "clip": 0.0},
    "sample": {"steps": 50, "shift": 1.0},
    "pnp": {},
    "eval": {},
    "viz": {"sample": 0, "frame": 0},
    "classify": {},
}


_EXTRA_TYPES = {"time_budget": float}


def read_config(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int, help="image width in pixels")
    p.add_argument("--height", type=int, help="image height in pixels")
    p.add_argument("--focal", type=float, help="focal length in pixels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viewplan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"viewplan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the camera denoiser")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="per-step JSON-lines log")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--time-budget", type=float, help="stop after this many seconds")
    for name, typ in (("steps", int), ("lr", float), ("batch", int), ("d", int), ("blocks", int),
                      ("heads", int), ("factor", int), ("warmup", int), ("cosine", int), ("min_lr", float),
                      ("clip", float)):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ)

    p = sub.add_parser("sample", help="sample camera trajectories from a checkpoint")
    _add_common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--shift", type=float)

    p = sub.add_parser("pnp", help="recover cameras from 2D/3D joints")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score predicted trajectories")
    _add_common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True, help="dataset with motions and reference cameras")
    p.add_argument("--report", required=True)
    p.add_argument("--json", help="also write one JSON report per line")

    p = sub.add_parser("viz", help="render tri-view and overlay SVGs for one sample")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--pred", help="trajectories to draw instead of the dataset cameras")
    p.add_argument("--sample", type=int)
    p.add_argument("--frame", type=int)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("classify", help="label shots offline or with the remote evaluator")
    _add_common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--data", required=True, help="dataset providing the motions")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--offline", action="store_true")
    mode.add_argument("--remote", action="store_true")
    p.add_argument("--out", help="JSON-lines output (default stdout)")
    return parser


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the config file, then from defaults."""
    cfg = read_config(args.config) if args.config else {}
    defaults = {**DEFAULTS["common"], **DEFAULTS[args.command]}
    known = set(vars(args))
    for key in cfg:
        if key not in known or key in ("command", "config"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
    for key in known:
        if getattr(args, key) is not None or key not in cfg and key not in defaults:
            continue
        if key in cfg:
            default = defaults.get(key)
            typ = type(default) if default is not None else _EXTRA_TYPES.get(key, str)
            try:
                value = typ(float(cfg[key])) if typ is int else typ(cfg[key])
            except ValueError:
                raise UsageError(f"config key {key!r}: bad value {cfg[key]!r}") from None
        else:
            value = defaults[key]
        setattr(args, key, value)
    return args


def intrinsics(args) -> Intrinsics:
    return Intrinsics(args.width, args.height, args.focal)


def header(args, kind: str) -> dict:
    return {"format": kind, "version": __version__, "seed": args.seed, "command": args.command}


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------


def load_dataset(path):
    try:
        return read_dataset(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except MalformedRecord as exc:
        raise DataError(f"{path}: bad record at line {exc.line}: {exc}") from None


def write_trajectories(path, trajectories, args) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header(args, TRAJ_FORMAT)) + "\n")
        for i, tr in enumerate(trajectories):
            rec = {"index": i, "fps": tr.fps, "camera": np.round(tr.to_9d(), 10).tolist()}
            fh.write(json.dumps(rec) + "\n")


def read_trajectories(path) -> list[CameraTrajectory]:
    out = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if "format" in rec:
                    continue
                out.append(CameraTrajectory.from_9d(np.array(rec["camera"], dtype=np.float64), float(rec["fps"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}: bad record at line {lineno}: {exc}") from None
    return out


def _paired(args):
    preds = read_trajectories(args.pred)
    data = load_dataset(args.truth if args.command == "eval" else args.data)
    if len(preds) != len(data):
        raise DataError(f"{len(preds)} trajectories but {len(data)} dataset records")
    for i, (p, s) in enumerate(zip(preds, data)):
        if len(p) != len(s.motion):
            raise DataError(f"record {i}: trajectory has {len(p)} frames, motion {len(s.motion)}")
    return preds, data


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> None:
    if args.count < 0 or args.frames < 8:
        raise UsageError("--count must be >= 0 and --frames >= 8")
    samples = generate_dataset(args.count, args.seed, args.frames, intrinsics=intrinsics(args))
    write_dataset(samples, args.out, args.seed)


def cmd_train(args) -> None:
    from .camflow import DenoiserConfig, NonFiniteLoss, train_stage2

    data = load_dataset(args.data)
    if not data:
        raise DataError(f"{args.data}: no records")
    try:
        cfg = DenoiserConfig(d=args.d, blocks=args.blocks, heads=args.heads, f=len(data[0].motion),
                             factor=args.factor, lr=args.lr, batch=args.batch, steps=args.steps, seed=args.seed,
                             warmup=args.warmup, cosine=args.cosine, min_lr=args.min_lr, clip=args.clip)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.log:
        with open(args.log, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(header(args, "viewplan-trainlog")) + "\n")
    try:
        train_stage2(data, cfg, out=args.out, log=args.log, resume=args.resume,
                     time_budget=args.time_budget, K=intrinsics(args))
    except NonFiniteLoss as exc:
        raise DataError(str(exc)) from None


def cmd_sample(args) -> None:
    from .camflow import Conditions, Denoiser, euler_sample
    from .nncore import CheckpointError

    try:
        model, _ = Denoiser.load(args.ckpt)
    except (OSError, CheckpointError) as exc:
        raise DataError(f"cannot load checkpoint {args.ckpt}: {exc}") from None
    data = load_dataset(args.data)
    cond = Conditions.from_samples(data, model.cfg, intrinsics(args)).astype(model.dtype)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0x5E]))
    try:
        trajs = euler_sample(model, cond, args.steps, args.shift, rng, fps=data[0].motion.fps)
    except DegenerateRotation as exc:
        raise DataError(str(exc)) from None
    write_trajectories(args.out, trajs, args)


def cmd_pnp(args) -> None:
    from .pnp import PnPError, solve_trajectory

    data = load_dataset(args.data)
    K = intrinsics(args)
    out = []
    for i, s in enumerate(data):
        try:
            out.append(solve_trajectory(s, K).trajectory)
        except PnPError as exc:
            raise DataError(f"record {i}: {exc}") from None
    write_trajectories(args.out, out, args)


def cmd_eval(args) -> None:
    from .metrics import evaluate, format_table

    preds, data = _paired(args)
    K = intrinsics(args)
    reports = [evaluate(p, s.motion, s.camera, K) for p, s in zip(preds, data)]
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(header(args, "viewplan-report")) + "\n")
        fh.write(format_table(range(len(reports)), reports) + "\n")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header(args, "viewplan-report")) + "\n")
            for r in reports:
                fh.write(r.to_json() + "\n")


def cmd_viz(args) -> None:
    from .viz import FrameOutOfRange, render_overlay, render_triview

    data = load_dataset(args.data)
    if not 0 <= args.sample < len(data):
        raise DataError(f"sample {args.sample} outside 0..{len(data) - 1}")
    s = data[args.sample]
    camera = read_trajectories(args.pred)[args.sample] if args.pred else s.camera
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stamp = f"<!-- viewplan {__version__} seed={args.seed} sample={args.sample} -->\n"
    try:
        tri = render_triview(camera, s.motion)
        ov = render_overlay(camera, s.motion, intrinsics(args), args.frame)
    except FrameOutOfRange as exc:
        raise DataError(str(exc)) from None
    (out / f"triview_{args.sample:04d}.svg").write_text(_stamp(tri, stamp), encoding="utf-8")
    (out / f"overlay_{args.sample:04d}_{args.frame:03d}.svg").write_text(_stamp(ov, stamp), encoding="utf-8")


def _stamp(doc: str, comment: str) -> str:
    first, rest = doc.split("\n", 1)
    return first + "\n" + comment + rest


def cmd_classify(args) -> None:
    from .evalclient import EvalError, build_prompt, evaluate_many, evaluate_offline

    preds, data = _paired(args)
    if args.remote:
        prompts = [build_prompt("style", p, s.motion) for p, s in zip(preds, data)]
        try:
            labels = [r.as_dict() for r in evaluate_many(prompts)]
        except EvalError as exc:
            raise DataError(f"remote evaluation failed: {exc}") from None
    else:
        labels = [evaluate_offline(p, s.motion).as_dict() for p, s in zip(preds, data)]
    lines = [json.dumps(header(args, "viewplan-labels"))]
    lines += [json.dumps({"index": i, **lab}, sort_keys=True) for i, lab in enumerate(labels)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "sample": cmd_sample, "pnp": cmd_pnp,
            "eval": cmd_eval, "viz": cmd_viz, "classify": cmd_classify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        resolve(args)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"viewplan {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"viewplan {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"viewplan {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
