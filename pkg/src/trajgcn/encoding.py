"""Trajectory-space encoding with a truncated orthonormal DCT-II basis.

A trajectory is a ``K x F`` array holding one row per pose channel. Any
number of leading batch axes is accepted by :func:`dct` and :func:`idct`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ShapeError

__all__ = [
    "DctBasis",
    "build_basis",
    "dct",
    "idct",
    "pad_replicate",
    "compose_residual",
    "reconstruction_errors",
]


@dataclass(frozen=True)
class DctBasis:
    total_frames: int
    num_coeffs: int
    forward: np.ndarray  # L x F

    @property
    def inverse(self) -> np.ndarray:
        return self.forward.T


@lru_cache(maxsize=64)
def _forward_matrix(total_frames: int, num_coeffs: int) -> np.ndarray:
    # 1-based l, n exactly as in the coefficient formula
    l = np.arange(1, num_coeffs + 1, dtype=np.float64)[:, None]
    n = np.arange(1, total_frames + 1, dtype=np.float64)[None, :]
    delta = (l == 1).astype(np.float64)
    m = (
        np.sqrt(2.0 / total_frames)
        / np.sqrt(1.0 + delta)
        * np.cos(np.pi / (2.0 * total_frames) * (2.0 * n - 1.0) * (l - 1.0))
    )
    m.setflags(write=False)
    return m


def build_basis(total_frames: int, num_coeffs: int | None = None) -> DctBasis:
    if num_coeffs is None:
        num_coeffs = total_frames
    total_frames, num_coeffs = int(total_frames), int(num_coeffs)
    if total_frames < 1 or not 1 <= num_coeffs <= total_frames:
        raise ConfigError(
            f"need 1 <= num_coeffs <= total_frames, got L={num_coeffs}, F={total_frames}"
        )
    return DctBasis(total_frames, num_coeffs, _forward_matrix(total_frames, num_coeffs))


def dct(traj: np.ndarray, basis: DctBasis) -> np.ndarray:
    """Coefficients ``C = X @ forward.T``; shape ``(..., K, L)``."""
    traj = np.asarray(traj, dtype=np.float64)
    if traj.ndim < 2 or traj.shape[-1] != basis.total_frames:
        raise ShapeError(
            f"trajectory shape {traj.shape} does not have {basis.total_frames} frames"
        )
    return traj @ basis.forward.T


def idct(coeffs: np.ndarray, basis: DctBasis) -> np.ndarray:
    """Trajectory ``X = C @ forward``, i.e. the inverse sum truncated at L terms."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim < 2 or coeffs.shape[-1] != basis.num_coeffs:
        raise ShapeError(
            f"coefficient shape {coeffs.shape} does not have {basis.num_coeffs} coefficients"
        )
    return coeffs @ basis.forward


def pad_replicate(observed: np.ndarray, future_frames: int) -> np.ndarray:
    """Append ``future_frames`` copies of the last observed frame."""
    observed = np.asarray(observed, dtype=np.float64)
    if future_frames < 0:
        raise ConfigError(f"future_frames must be >= 0, got {future_frames}")
    if observed.ndim < 2 or observed.shape[-1] < 1:
        raise ShapeError(f"observed trajectory has shape {observed.shape}")
    tail = np.repeat(observed[..., -1:], future_frames, axis=-1)
    return np.concatenate([observed, tail], axis=-1)


def compose_residual(input_coeffs: np.ndarray, residual: np.ndarray) -> np.ndarray:
    if np.shape(input_coeffs) != np.shape(residual):
        raise ShapeError(
            f"residual shape {np.shape(residual)} != input shape {np.shape(input_coeffs)}"
        )
    return np.asarray(input_coeffs, dtype=np.float64) + residual


def reconstruction_errors(traj: np.ndarray, max_coeffs: int | None = None) -> np.ndarray:
    """Mean absolute error of the L-term reconstruction for L = 1..max_coeffs."""
    traj = np.asarray(traj, dtype=np.float64)
    frames = traj.shape[-1]
    if max_coeffs is None:
        max_coeffs = frames
    full = build_basis(frames, frames)
    coeffs = dct(traj, full)
    errors = np.empty(max_coeffs)
    for L in range(1, max_coeffs + 1):
        recon = coeffs[..., :L] @ full.forward[:L]
        errors[L - 1] = np.mean(np.abs(recon - traj))
    return errors
