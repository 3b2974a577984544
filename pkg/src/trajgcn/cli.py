"""Command-line entry point: ``trajgcn {synth|train|eval|predict|gradcheck|dct-analyze}``.

Exit codes: 0 success, 1 verification failure, 2 configuration/data error,
3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import encoding as dctmod
from .data import prepare
from .errors import ConfigError, DataError, TrajGCNError
from .evaluation import build_variant, evaluate_horizons
from .formats import (RunConfig, Sequence, load_checkpoint, read_mask, read_sequence,
                      read_tree, save_checkpoint, write_mask, write_sequence)
from .gradcheck import gradient_check, randomize_parameters
from .kinematics import preprocess, restore_channels
from .numeric import make_rng
from .optimize import ClipConfig, LrSchedule, TrainConfig, train
from .pipeline import VariantConfig, data_scale
from .synth import generate_corpus, write_corpus

log = logging.getLogger("trajgcn")

GRADCHECK_LIMITS = {"channels": 8, "width": 32, "blocks": 2}
GRADCHECK_TOLERANCE = 1e-4


def load_config(args) -> RunConfig:
    overrides = {"seed": getattr(args, "seed", None)}
    if getattr(args, "config", None):
        return RunConfig.from_file(args.config, **overrides)
    return RunConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def variant_of(cfg: RunConfig) -> VariantConfig:
    return VariantConfig(cfg.use_dct, cfg.use_padding, cfg.use_residual, cfg.connectivity)


def make_pipeline(cfg: RunConfig, nodes, *, fill=None, scale=1.0, rng=None, mask=None):
    tree = read_tree(cfg.tree) if cfg.tree else None
    num_coeffs = cfg.num_coeffs if cfg.use_dct else None
    pipe_fill = (mask, fill) if (cfg.repr == "expmap" and mask is not None
                                 and fill is not None) else None
    return build_variant(variant_of(cfg), nodes=nodes, n_observed=cfg.n_observed,
                         n_future=cfg.n_future, num_coeffs=num_coeffs, width=cfg.width,
                         blocks=cfg.blocks, repr_=cfg.repr, use_bias=cfg.use_bias,
                         tree=tree, fc_blocks=cfg.fc_blocks, rng=rng, fill=pipe_fill,
                         scale=scale)


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(epochs=cfg.epochs, batch=cfg.batch,
                       schedule=LrSchedule(cfg.lr, cfg.lr_decay, cfg.decay_every),
                       clip=ClipConfig(cfg.clip_norm),
                       max_steps=cfg.max_steps or None)


def mask_path(checkpoint) -> Path:
    return Path(str(checkpoint) + ".mask")


def load_trained(cfg, checkpoint):
    """Rebuild the pipeline from config + checkpoint + mask sidecar."""
    side = mask_path(checkpoint)
    if not side.exists():
        raise DataError(f"missing channel mask {side} next to the checkpoint")
    mask, fill, scale = read_mask(side)
    pipe = make_pipeline(cfg, len(mask.retained), fill=fill, scale=scale or 1.0, mask=mask)
    pipe.params.load(load_checkpoint(checkpoint))
    return pipe, mask, fill


def cmd_synth(args):
    cfg = load_config(args)
    split = tuple(float(x) for x in args.split.split(","))
    corpus = generate_corpus(cfg.seed if args.seed is None else args.seed, args.n_sequences,
                             args.channels, args.frames, args.fps, args.repr, args.actions,
                             split)
    files = write_corpus(args.out, corpus, args.fps, args.repr)
    print(f"wrote {len(files)} sequences to {args.out}")
    return 0


def cmd_train(args):
    cfg = load_config(args)
    window = cfg.n_observed + cfg.n_future
    data = prepare(args.data, window, cfg.window_stride, cfg.downsample, cfg.preprocess)
    train_w = data.stacked("train")
    if len(train_w) == 0:
        raise DataError(f"no training windows of {window} frames under {args.data}")
    val_w = data.stacked("val")
    scale = data_scale(train_w)
    pipe = make_pipeline(cfg, train_w.shape[1], fill=data.fill, scale=scale,
                         rng=make_rng(cfg.seed), mask=data.mask)
    result = train(pipe, train_w, val_w if len(val_w) else None, train_config(cfg),
                   rng=make_rng(cfg.seed + 1))
    pipe.params.load(result.best_params)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, pipe.params)
    write_mask(mask_path(out), data.mask, data.fill, scale)
    log_path = Path(args.log) if args.log else Path(str(out) + ".log.csv")
    result.to_csv(log_path)
    r0, best = result.rows[0], result.rows[result.best_epoch]
    print(f"initial train loss {r0['train_loss']:.6g}, val {r0['val_metric']:.6g}")
    print(f"best epoch {result.best_epoch}: train {best['train_loss']:.6g}, "
          f"val {best['val_metric']:.6g}; {result.steps} steps")
    return 0


def cmd_eval(args):
    cfg = load_config(args)
    pipe, mask, fill = load_trained(cfg, args.checkpoint)
    window = cfg.n_observed + cfg.n_future
    data = prepare(args.data, window, cfg.window_stride, cfg.downsample, cfg.preprocess,
                   mask=mask, fill=fill, splits=(args.split,))
    by_action = data.windows[args.split]
    if not by_action:
        raise DataError(f"no {window}-frame windows in split {args.split!r}")
    horizons = [int(h) for h in args.horizons.split(",")] if args.horizons \
        else cfg.horizon_list(data.fps)
    report = evaluate_horizons(pipe, by_action, data.fps, horizons)
    if args.out:
        report.to_csv(args.out)
    for name, m, b in report.rows():
        print(f"{name:>12}  model " + " ".join(f"{x:8.3f}" for x in m)
              + "  | zero-vel " + " ".join(f"{x:8.3f}" for x in b))
    return 0


def predict_sequence(pipe, cfg, mask, raw: Sequence) -> np.ndarray:
    """Full-dimension ``(K, N+T)`` prediction from the first N frames of ``raw``."""
    N, T = cfg.n_observed, cfg.n_future
    values = raw.values[:, ::cfg.downsample]
    if values.shape[1] < N:
        raise DataError(f"input has {values.shape[1]} frames, need at least {N}")
    observed = values[:, :N]
    if not cfg.preprocess:
        return pipe.predict(observed)
    traj, _, meta = preprocess(observed, raw.repr, mask)
    pred = pipe.predict(traj)
    root = centroid = None
    if raw.repr == "xyz":
        root = dctmod.pad_replicate(meta["root"], T)
        centroid = dctmod.pad_replicate(meta["centroid"], T)
    full = restore_channels(pred, mask, meta["reference"], root, centroid)
    if raw.repr == "expmap":
        full[0:3] = dctmod.pad_replicate(meta["global"], T)
    return full


def cmd_predict(args):
    cfg = load_config(args)
    pipe, mask, _ = load_trained(cfg, args.checkpoint)
    raw = read_sequence(args.input)
    if raw.repr != cfg.repr:
        raise ConfigError(f"input repr {raw.repr} != config repr {cfg.repr}")
    full = predict_sequence(pipe, cfg, mask, raw)
    write_sequence(args.out, Sequence(full, raw.fps // cfg.downsample, raw.repr))
    print(f"wrote {full.shape[1]} frames to {args.out}")
    return 0


def run_gradcheck(cfg: RunConfig, seed: int, losses, eps=1e-5):
    """Gradient check on a tiny random pipeline; ``{loss: {param: rel err}}``."""
    for key, limit in GRADCHECK_LIMITS.items():
        if getattr(cfg, key) > limit:
            raise ConfigError(f"gradcheck needs {key} <= {limit}, got {getattr(cfg, key)}")
    reports = {}
    for loss in losses:
        repr_ = "xyz" if loss == "mpjpe" else "expmap"
        if repr_ == "xyz" and cfg.channels % 3:
            raise ConfigError("the mpjpe loss needs channels divisible by 3")
        local = RunConfig.from_dict({**vars(cfg), "repr": repr_})
        rng = make_rng(seed)
        pipe = make_pipeline(local, cfg.channels)
        randomize_parameters(pipe.model, rng)
        windows = rng.normal(size=(3, cfg.channels, cfg.n_observed + cfg.n_future))
        reports[loss] = gradient_check(pipe, windows, eps)
    return reports


def cmd_gradcheck(args):
    cfg = load_config(args)
    losses = ("angle", "mpjpe") if args.loss == "both" else (args.loss,)
    reports = run_gradcheck(cfg, cfg.seed if args.seed is None else args.seed, losses)
    worst = 0.0
    for loss, rep in reports.items():
        for name, err in rep.items():
            print(f"{loss:>6} {name:<24} max_rel_err={err:.3e}")
            worst = max(worst, err)
    ok = worst < GRADCHECK_TOLERANCE
    print(f"max relative error {worst:.3e} ({'PASS' if ok else 'FAIL'} at {GRADCHECK_TOLERANCE:g})")
    return 0 if ok else 1


def dct_analysis(values, max_coeffs):
    errors = dctmod.reconstruction_errors(values, max_coeffs)
    rms = float(np.sqrt(np.mean(np.asarray(values) ** 2)))
    return [(L, float(e), float(e / rms) if rms > 0 else 0.0)
            for L, e in enumerate(errors, 1)]


def cmd_dct_analyze(args):
    seq = read_sequence(args.input)
    max_coeffs = args.max_coeffs or seq.frames
    if not 1 <= max_coeffs <= seq.frames:
        raise ConfigError(f"max-coeffs must lie in 1..{seq.frames}")
    rows = dct_analysis(seq.values, max_coeffs)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "reconstruction_error", "relative_error"])
        for L, e, r in rows:
            w.writerow([L, repr(e), repr(r)])
    finally:
        if args.out:
            fh.close()
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="trajgcn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--config", help="key=value run config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required)
        return sp

    s = common(sub.add_parser("synth", help="write a synthetic train/val/test corpus"), True)
    s.add_argument("--n-sequences", type=int, default=100)
    s.add_argument("--channels", type=int, default=24)
    s.add_argument("--frames", type=int, default=100)
    s.add_argument("--fps", type=int, default=25)
    s.add_argument("--repr", choices=("xyz", "expmap"), default="xyz")
    s.add_argument("--actions", type=int, default=3)
    s.add_argument("--split", default="0.7,0.1,0.2")
    s.set_defaults(func=cmd_synth)

    s = common(sub.add_parser("train", help="train and write the best checkpoint"), True)
    s.add_argument("--data", required=True)
    s.add_argument("--log", help="training log CSV (default <out>.log.csv)")
    s.set_defaults(func=cmd_train)

    s = common(sub.add_parser("eval", help="per-action horizon errors vs zero-velocity"))
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test")
    s.add_argument("--horizons", help="comma-separated milliseconds")
    s.set_defaults(func=cmd_eval)

    s = common(sub.add_parser("predict", help="predict one sequence file"), True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True)
    s.set_defaults(func=cmd_predict)

    s = common(sub.add_parser("gradcheck", help="finite-difference gradient check"))
    s.add_argument("--loss", choices=("angle", "mpjpe", "both"), default="both")
    s.set_defaults(func=cmd_gradcheck)

    s = common(sub.add_parser("dct-analyze", help="reconstruction error vs coefficients"))
    s.add_argument("--input", required=True)
    s.add_argument("--max-coeffs", type=int, default=0)
    s.set_defaults(func=cmd_dct_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TrajGCNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
