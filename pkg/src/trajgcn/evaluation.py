"""Horizon metrics, the zero-velocity baseline, and the ablation variants."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, ShapeError
from .gcn import FullyConnectedNet, MotionGCN
from .kinematics import KinematicTree
from .pipeline import Pipeline, VariantConfig, frame_errors, zero_velocity_predict

__all__ = [
    "SHORT_HORIZONS_MS",
    "LONG_HORIZONS_MS",
    "zero_velocity_predict",
    "euler_error_at",
    "mpjpe_at",
    "horizon_frames",
    "HorizonReport",
    "evaluate_horizons",
    "fixed_tree_adjacency",
    "build_variant",
    "fc_param_count",
]

SHORT_HORIZONS_MS = (80, 160, 320, 400)
LONG_HORIZONS_MS = (560, 1000)


def _check_frame(pred, gt, frame_index):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} != ground truth {gt.shape}")
    if not 0 <= frame_index < pred.shape[-1]:
        raise IndexError(f"frame {frame_index} outside 0..{pred.shape[-1] - 1}")
    return pred[..., frame_index:frame_index + 1], gt[..., frame_index:frame_index + 1]


def euler_error_at(pred, gt, frame_index: int) -> float:
    """L2 norm of the Euler-angle difference at one (0-based) frame.

    Both inputs are already Euler trajectories ``(K, F)``.
    """
    p, g = _check_frame(pred, gt, frame_index)
    return float(np.linalg.norm(p - g))


def mpjpe_at(pred, gt, frame_index: int) -> float:
    """Mean unsquared joint distance at one (0-based) frame of ``(3J, F)`` data."""
    p, g = _check_frame(pred, gt, frame_index)
    return float(frame_errors(p, g, "xyz")[..., 0])


def horizon_frames(fps: int, horizons_ms, prediction_length: int | None = None):
    """1-based future frame index for each horizon, rounding half up."""
    out = []
    for ms in horizons_ms:
        exact = Fraction(ms) * fps / 1000
        idx = int(exact + Fraction(1, 2))  # floor(x + 1/2) for positive x
        if idx < 1:
            raise ConfigError(f"horizon {ms} ms is shorter than one frame at {fps} fps")
        if prediction_length is not None and idx > prediction_length:
            raise ConfigError(
                f"horizon {ms} ms is frame {idx}, beyond the {prediction_length} predicted"
            )
        out.append(idx)
    return out


@dataclass
class HorizonReport:
    """Mean error per (action, horizon) for the model and the baseline."""

    horizons_ms: list
    model: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)

    @property
    def actions(self):
        return list(self.model)

    def average(self, table):
        return [float(np.mean([table[a][i] for a in table]))
                for i in range(len(self.horizons_ms))]

    def rows(self):
        for a in self.actions:
            yield a, self.model[a], self.baseline[a]
        yield "Average", self.average(self.model), self.average(self.baseline)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["action"] + [f"model_{h}ms" for h in self.horizons_ms]
                       + [f"zero_velocity_{h}ms" for h in self.horizons_ms])
            for name, m, b in self.rows():
                w.writerow([name] + [repr(float(x)) for x in m] + [repr(float(x)) for x in b])


def evaluate_horizons(pipeline: Pipeline, windows_by_action: dict, fps: int,
                      horizons_ms=SHORT_HORIZONS_MS) -> HorizonReport:
    frames = horizon_frames(fps, horizons_ms, pipeline.n_future)
    report = HorizonReport(list(horizons_ms))
    for action, windows in windows_by_action.items():
        errs = pipeline.future_errors(windows).mean(axis=0)
        base = pipeline.baseline_errors(windows).mean(axis=0)
        report.model[action] = [float(errs[f - 1]) for f in frames]
        report.baseline[action] = [float(base[f - 1]) for f in frames]
    return report


def fixed_tree_adjacency(nodes: int, tree: KinematicTree | None = None) -> np.ndarray:
    """Normalised skeleton adjacency with each joint expanded to 3 channels.

    Only like coordinates are linked, ``kron(A_joint, I_3)``.
    """
    if nodes % 3:
        raise ConfigError(f"fixed-tree adjacency needs 3 channels per joint, K={nodes}")
    if tree is None:
        tree = KinematicTree.chain(nodes // 3)
    if 3 * tree.num_joints != nodes:
        raise ConfigError(f"tree has {tree.num_joints} joints but the data has K={nodes}")
    return np.kron(tree.adjacency(), np.eye(3))


def fc_param_count(inputs, width, blocks=1, use_bias=True):
    n = inputs * width + 2 * blocks * width * width + width * inputs
    if use_bias:
        n += width + 2 * blocks * width + inputs
    return n


def build_variant(cfg: VariantConfig, *, nodes, n_observed, n_future, num_coeffs=None,
                  width=256, blocks=12, repr_="xyz", use_bias=True, tree=None,
                  fc_blocks=1, rng=None, fill=None, scale=1.0) -> Pipeline:
    """Assemble the network and pipeline for one ablation setting.

    ``rng`` initialises the parameters; without it they stay zero.
    """
    total = n_observed + n_future
    if num_coeffs is None:
        num_coeffs = total
    if not cfg.use_dct and num_coeffs != total:
        raise ConfigError("coefficient truncation requested with the DCT disabled")
    features = num_coeffs if cfg.use_dct else total
    if cfg.connectivity == "fully_connected":
        model = FullyConnectedNet(nodes, features, width, fc_blocks, use_bias)
    else:
        adjacency = fixed_tree_adjacency(nodes, tree) if cfg.connectivity == "fixed_tree" \
            else None
        model = MotionGCN(nodes, features, width, blocks, use_bias, adjacency=adjacency)
    if rng is not None:
        model.init_parameters(rng)
    return Pipeline(model, n_observed, n_future, num_coeffs, repr_, cfg, fill=fill,
                    scale=scale)
