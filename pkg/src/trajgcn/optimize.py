"""Training losses, ADAM, gradient clipping, the step-decay schedule and the
training loop.

Trajectories are channel-major ``(..., K, F)`` arrays; for 3D positions the
channels are ``x0, y0, z0, x1, ...`` so ``J = K // 3``. Losses over a batch
are the mean of the per-sample losses.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, StateError, TrainingError
from .numeric import ParameterStore, global_l2_norm

log = logging.getLogger(__name__)

__all__ = [
    "loss_angle",
    "loss_mpjpe",
    "loss_and_grad",
    "ClipConfig",
    "clip_gradients",
    "AdamState",
    "adam_step",
    "LrSchedule",
    "lr_at",
    "TrainConfig",
    "TrainingLog",
    "train",
]


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} != ground truth {gt.shape}")
    return pred, gt


def _batch_size(x):
    return int(np.prod(x.shape[:-2])) if x.ndim > 2 else 1


def loss_angle(pred, gt) -> float:
    """Mean absolute error over all channels and all (observed + future) frames."""
    pred, gt = _check_pair(pred, gt)
    return float(np.mean(np.abs(pred - gt)))


def loss_mpjpe(pred, gt) -> float:
    """Squared joint-position error averaged over joints and frames."""
    pred, gt = _check_pair(pred, gt)
    K, F = pred.shape[-2:]
    if K % 3:
        raise ShapeError(f"3D trajectories need a multiple of 3 channels, got {K}")
    sq = np.sum((pred - gt) ** 2)
    return float(sq / (_batch_size(pred) * (K // 3) * F))


def loss_and_grad(pred, gt, kind: str):
    """Return ``(loss, dloss/dpred)`` for ``kind`` in {"angle", "mpjpe"}."""
    pred, gt = _check_pair(pred, gt)
    diff = pred - gt
    if kind == "angle":
        return loss_angle(pred, gt), np.sign(diff) / diff.size
    if kind == "mpjpe":
        K, F = pred.shape[-2:]
        denom = _batch_size(pred) * (K // 3) * F
        return loss_mpjpe(pred, gt), 2.0 * diff / denom
    raise ConfigError(f"unknown loss {kind!r}")


@dataclass(frozen=True)
class ClipConfig:
    max_norm: float = 1.0

    def __post_init__(self):
        if not self.max_norm > 0:
            raise ConfigError(f"max_norm must be positive, got {self.max_norm}")


def clip_gradients(store: ParameterStore, cfg: ClipConfig = ClipConfig()) -> float:
    """Rescale all gradients so their global norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = global_l2_norm(store)
    if norm > cfg.max_norm:
        scale = cfg.max_norm / norm
        for _, _, g in store.items():
            g *= scale
    return norm


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_store(cls, store: ParameterStore, **kw):
        return cls(
            m={n: np.zeros_like(v) for n, v, _ in store.items()},
            v={n: np.zeros_like(v) for n, v, _ in store.items()},
            **kw,
        )


def adam_step(store: ParameterStore, state: AdamState, lr: float):
    """One bias-corrected ADAM update; gradients are zeroed afterwards."""
    if list(state.m) != store.names():
        raise StateError("optimizer state does not match the parameter store")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, theta, g in store.items():
        m, v = state.m[name], state.v[name]
        if m.shape != theta.shape:
            raise StateError(f"optimizer moment for {name} has shape {m.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        g.fill(0.0)


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 0.0005
    decay: float = 0.96
    decay_every: int = 2

    def __post_init__(self):
        if not (self.base_lr > 0 and self.decay > 0 and self.decay_every >= 1):
            raise ConfigError(f"invalid learning-rate schedule {self}")


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    return schedule.base_lr * schedule.decay ** (epoch // schedule.decay_every)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch: int = 16
    schedule: LrSchedule = field(default_factory=LrSchedule)
    clip: ClipConfig = field(default_factory=ClipConfig)
    max_steps: int | None = None


@dataclass
class TrainingLog:
    """Per-epoch records. Row 0 evaluates the untrained model."""

    rows: list = field(default_factory=list)
    best_epoch: int = 0
    best_params: dict | None = None
    steps: int = 0

    HEADER = ("epoch", "lr", "train_loss", "val_metric", "wallclock_seconds")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.HEADER)
            for r in self.rows:
                w.writerow([r["epoch"], repr(r["lr"]), repr(r["train_loss"]),
                            repr(r["val_metric"]), f"{r['wallclock_seconds']:.3f}"])

    def column(self, key):
        return [r[key] for r in self.rows]


def _param_norms(store):
    return ", ".join(f"{n}={np.linalg.norm(v):.3g}" for n, v, _ in store.items())


def train(pipeline, train_windows, val_windows=None, config: TrainConfig = TrainConfig(),
          rng: np.random.Generator | None = None) -> TrainingLog:
    """Minibatch ADAM training of ``pipeline`` on ``(S, K, N+T)`` windows.

    The best-validation parameters are kept in ``TrainingLog.best_params``;
    without a validation set the last epoch wins. The pipeline's model is
    left at its final (not best) parameters.
    """
    train_windows = np.asarray(train_windows, dtype=np.float64)
    if train_windows.ndim != 3 or len(train_windows) == 0:
        raise ConfigError("training set must be a non-empty (S, K, F) array")
    if config.batch < 1 or config.epochs < 0:
        raise ConfigError(f"invalid training config {config}")
    if rng is None:
        rng = np.random.default_rng(0)
    store = pipeline.params
    state = AdamState.for_store(store)
    out = TrainingLog()
    start = time.perf_counter()

    def validate():
        if val_windows is None or len(val_windows) == 0:
            return math.nan
        return pipeline.validation_metric(val_windows)

    out.rows.append(dict(epoch=0, lr=lr_at(config.schedule, 0),
                         train_loss=pipeline.evaluate_loss(train_windows),
                         val_metric=validate(), wallclock_seconds=0.0))
    best = out.rows[0]["val_metric"]
    out.best_params = store.snapshot()

    S = len(train_windows)
    for epoch in range(config.epochs):
        lr = lr_at(config.schedule, epoch)
        order = rng.permutation(S)
        total = 0.0
        seen = 0
        for bi, lo in enumerate(range(0, S, config.batch)):
            if config.max_steps is not None and out.steps >= config.max_steps:
                break
            idx = order[lo:lo + config.batch]
            loss = pipeline.loss_and_backward(train_windows[idx])
            if not math.isfinite(loss):
                store.zero_grad()
                raise TrainingError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {bi}; "
                    f"parameter norms: {_param_norms(store)}"
                )
            clip_gradients(store, config.clip)
            adam_step(store, state, lr)
            out.steps += 1
            total += loss * len(idx)
            seen += len(idx)
        if seen == 0:
            break
        val = validate()
        out.rows.append(dict(epoch=epoch + 1, lr=lr, train_loss=total / seen,
                             val_metric=val,
                             wallclock_seconds=time.perf_counter() - start))
        log.info("epoch %d lr %.6g train %.6g val %.6g", epoch + 1, lr, total / seen, val)
        if math.isnan(val) or val <= best or math.isnan(best):
            best = val
            out.best_epoch = epoch + 1
            out.best_params = store.snapshot()
    return out
