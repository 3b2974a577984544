"""Observed frames -> padded trajectory -> DCT -> network -> residual -> IDCT.

:class:`Pipeline` wires the temporal encoding around a network and exposes
the three things training needs: batched prediction, a loss with its
backward pass, and the validation metric. Ablation switches live on
:class:`VariantConfig`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoding as dctmod
from .errors import ConfigError, ShapeError
from .kinematics import ChannelMask, expmap_to_euler
from .optimize import loss_and_grad

__all__ = [
    "VariantConfig",
    "Pipeline",
    "frame_errors",
    "zero_velocity_predict",
    "data_scale",
]

CONNECTIVITY = ("learned", "fixed_tree", "fully_connected")
REPRESENTATIONS = ("xyz", "expmap")


@dataclass(frozen=True)
class VariantConfig:
    use_dct: bool = True
    use_padding: bool = True
    use_residual: bool = True
    connectivity: str = "learned"

    def __post_init__(self):
        if self.connectivity not in CONNECTIVITY:
            raise ConfigError(
                f"connectivity must be one of {CONNECTIVITY}, got {self.connectivity!r}"
            )


def data_scale(windows) -> float:
    """Standard deviation of all training values; 1.0 for constant data."""
    s = float(np.std(np.asarray(windows, dtype=np.float64)))
    return s if s > 0 and np.isfinite(s) else 1.0


def zero_velocity_predict(observed, future_frames: int) -> np.ndarray:
    """Repeat the last observed frame ``future_frames`` times."""
    observed = np.asarray(observed, dtype=np.float64)
    if observed.shape[-1] < 1:
        raise ShapeError("zero-velocity prediction needs at least one observed frame")
    if future_frames < 0:
        raise ConfigError(f"future_frames must be >= 0, got {future_frames}")
    return np.repeat(observed[..., -1:], future_frames, axis=-1)


def frame_errors(pred, gt, repr_: str, fill: tuple | None = None) -> np.ndarray:
    """Per-frame reported error, shape ``pred.shape[:-2] + (F,)``.

    3D: mean over joints of the Euclidean distance (same unit as the data).
    expmap: Euclidean norm of the Euler-angle difference over all channels;
    ``fill = (mask, values)`` re-inserts dropped constant channels first so
    every joint has three components.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} != ground truth {gt.shape}")
    if repr_ == "xyz":
        K, F = pred.shape[-2:]
        d = (pred - gt).reshape(pred.shape[:-2] + (K // 3, 3, F))
        return np.sqrt(np.sum(d * d, axis=-2)).mean(axis=-2)
    if repr_ == "expmap":
        if fill is not None:
            pred, gt = _fill(pred, *fill), _fill(gt, *fill)
        diff = expmap_to_euler(pred) - expmap_to_euler(gt)
        return np.sqrt(np.sum(diff * diff, axis=-2))
    raise ConfigError(f"unknown representation {repr_!r}")


def _fill(x, mask: ChannelMask, values):
    full = np.broadcast_to(np.asarray(values, dtype=np.float64)[:, None],
                           x.shape[:-2] + (mask.total, x.shape[-1])).copy()
    full[..., mask.retained, :] = x
    return full


class Pipeline:
    """Prediction pipeline around ``model`` (a MotionGCN or FullyConnectedNet).

    Windows are ``(B, K, N+T)`` ground-truth arrays; only the first
    ``n_observed`` frames are ever shown to the network. The network sees
    coefficients divided by ``scale`` and its residual is multiplied back,
    so outputs stay in data units.
    """

    def __init__(self, model, n_observed, n_future, num_coeffs=None, repr_="xyz",
                 variant: VariantConfig = VariantConfig(), fill=None, scale=1.0):
        if repr_ not in REPRESENTATIONS:
            raise ConfigError(f"repr must be one of {REPRESENTATIONS}, got {repr_!r}")
        if n_observed < 1 or n_future < 0:
            raise ConfigError(f"invalid horizon N={n_observed}, T={n_future}")
        self.model = model
        self.n_observed, self.n_future = int(n_observed), int(n_future)
        self.total = self.n_observed + self.n_future
        self.repr = repr_
        self.variant = variant
        self.fill = fill
        if not scale > 0:
            raise ConfigError(f"data scale must be positive, got {scale}")
        self.scale = float(scale)
        self.loss_kind = "mpjpe" if repr_ == "xyz" else "angle"
        if num_coeffs is None:
            num_coeffs = self.total
        self.num_coeffs = int(num_coeffs)
        if variant.use_dct:
            self.out_basis = dctmod.build_basis(self.total, self.num_coeffs)
            in_frames = self.total if variant.use_padding else self.n_observed
            self.in_basis = dctmod.build_basis(in_frames, min(self.num_coeffs, in_frames))
            self.features = self.num_coeffs
        else:
            self.out_basis = self.in_basis = None
            self.features = self.total
        if model.features != self.features:
            raise ConfigError(
                f"model feature width {model.features} != pipeline width {self.features}"
            )

    @property
    def params(self):
        return self.model.params

    def _observed(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[-1] < self.n_observed:
            raise ShapeError(f"need at least {self.n_observed} frames, got {x.shape[-1]}")
        return x[..., : self.n_observed]

    def encode(self, observed):
        v = self.variant
        x = dctmod.pad_replicate(observed, self.n_future) if v.use_padding else observed
        c = dctmod.dct(x, self.in_basis) if v.use_dct else x
        if c.shape[-1] < self.features:
            c = np.concatenate(
                [c, np.zeros(c.shape[:-1] + (self.features - c.shape[-1],))], axis=-1)
        return c

    def decode(self, coeffs):
        return dctmod.idct(coeffs, self.out_basis) if self.variant.use_dct else coeffs

    def _run(self, x):
        c_in = self.encode(self._observed(x))
        residual, tape = self.model.forward(c_in / self.scale)
        residual = residual * self.scale
        out = dctmod.compose_residual(c_in, residual) if self.variant.use_residual \
            else residual
        return self.decode(out), tape

    def predict(self, x, chunk=512):
        """Full ``N+T`` frame prediction for a batch (or single window)."""
        obs = self._observed(x)
        parts = [self._run(obs[i:i + chunk])[0] for i in range(0, len(obs), chunk)]
        pred = np.concatenate(parts, axis=0)
        return pred if np.ndim(x) == 3 else pred[0]

    def loss_and_backward(self, windows) -> float:
        """Batch loss; parameter gradients are accumulated into the store."""
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim != 3 or windows.shape[-1] != self.total:
            raise ShapeError(f"windows must be (B, K, {self.total}), got {windows.shape}")
        pred, tape = self._run(windows)
        loss, g = loss_and_grad(pred, windows, self.loss_kind)
        if self.variant.use_dct:
            g = g @ self.out_basis.forward.T
        self.model.backward(tape, g * self.scale)
        return loss

    def evaluate_loss(self, windows, chunk=512) -> float:
        windows = np.asarray(windows, dtype=np.float64)
        total = 0.0
        for i in range(0, len(windows), chunk):
            w = windows[i:i + chunk]
            pred = self.predict(w)
            total += loss_and_grad(pred, w, self.loss_kind)[0] * len(w)
        return total / len(windows)

    def future_errors(self, windows, pred=None) -> np.ndarray:
        """``(B, T)`` reported error on each future frame."""
        windows = np.asarray(windows, dtype=np.float64)
        if pred is None:
            pred = self.predict(windows)
        N = self.n_observed
        return frame_errors(pred[..., N:], windows[..., N:self.total], self.repr, self.fill)

    def baseline_errors(self, windows) -> np.ndarray:
        windows = np.asarray(windows, dtype=np.float64)
        zv = zero_velocity_predict(windows[..., : self.n_observed], self.n_future)
        N = self.n_observed
        return frame_errors(zv, windows[..., N:self.total], self.repr, self.fill)

    def validation_metric(self, windows) -> float:
        """Average error over all future frames and samples."""
        return float(np.mean(self.future_errors(windows)))

    def baseline_metric(self, windows) -> float:
        return float(np.mean(self.baseline_errors(windows)))
