"""Central finite-difference check of every analytic parameter gradient."""
from __future__ import annotations

import numpy as np

from .numeric import xavier_init

__all__ = ["randomize_parameters", "gradient_check", "relative_error"]


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def randomize_parameters(model, rng, adjacency_scale=0.5, bias_scale=0.1):
    """Generic non-degenerate parameters (no zero decoder, O(1) adjacency).

    At the zero-velocity initialisation most gradients vanish exactly, which
    leaves finite differences nothing to check.
    """
    for layer in model.layers():
        if layer.learn_adjacency:
            layer.A[...] = rng.uniform(-adjacency_scale, adjacency_scale, layer.A.shape)
        layer.W[...] = xavier_init(layer.f_in, layer.f_out, rng)
        if layer.b is not None:
            layer.b[...] = rng.uniform(-bias_scale, bias_scale, layer.b.shape)


def gradient_check(pipeline, windows, eps=1e-5):
    """Return ``{name: max relative error}`` over every parameter entry."""
    store = pipeline.params
    store.zero_grad()
    pipeline.loss_and_backward(windows)
    analytic = {n: g.copy() for n, _, g in store.items()}
    store.zero_grad()
    report = {}
    for name, value, _ in store.items():
        numeric = np.empty_like(value)
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + eps
            up = pipeline.evaluate_loss(windows)
            value[idx] = orig - eps
            down = pipeline.evaluate_loss(windows)
            value[idx] = orig
            numeric[idx] = (up - down) / (2.0 * eps)
        report[name] = float(np.max(relative_error(analytic[name], numeric)))
    return report
