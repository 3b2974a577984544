"""Loading a data directory and cutting fixed-length training windows.

Layout: ``<root>/{train,val,test}/<action>_<n>.seq``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .formats import Sequence, read_sequence
from .kinematics import ChannelMask, fit_channel_mask, preprocess

__all__ = ["action_of", "load_split", "sliding_windows", "PreparedData", "prepare"]


def action_of(path) -> str:
    stem = Path(path).stem
    return stem.rsplit("_", 1)[0] if "_" in stem else stem


def load_split(root, split):
    """``[(action, Sequence), ...]`` in sorted file order; empty if absent."""
    d = Path(root) / split
    if not d.is_dir():
        return []
    return [(action_of(p), read_sequence(p)) for p in sorted(d.glob("*.seq"))]


def sliding_windows(values, length, stride=1):
    """All ``(K, length)`` slices with the given stride, as ``(S, K, length)``."""
    values = np.asarray(values, dtype=np.float64)
    F = values.shape[-1]
    if F < length:
        return np.empty((0, values.shape[0], length))
    starts = range(0, F - length + 1, stride)
    return np.stack([values[:, s:s + length] for s in starts])


@dataclass
class PreparedData:
    mask: ChannelMask
    fill: np.ndarray
    fps: int
    repr: str
    windows: dict = field(default_factory=dict)  # split -> {action: (S, K, N+T)}

    def stacked(self, split):
        parts = list(self.windows.get(split, {}).values())
        if not parts:
            return np.empty((0, len(self.mask.retained), 0))
        return np.concatenate(parts, axis=0)


def _check_meta(seqs, fps=None, repr_=None):
    for _, s in seqs:
        fps = s.fps if fps is None else fps
        repr_ = s.repr if repr_ is None else repr_
        if s.fps != fps or s.repr != repr_:
            raise DataError("all sequences must share fps and representation")
    return fps, repr_


def prepare(root, window, stride=1, downsample=1, use_preprocess=True, mask=None,
            fill=None, splits=("train", "val", "test")) -> PreparedData:
    """Read every split, fit the channel mask on train, and cut windows."""
    loaded = {s: load_split(root, s) for s in splits}
    fps, repr_ = None, None
    for s in splits:
        fps, repr_ = _check_meta(loaded[s], fps, repr_)
    if fps is None:
        raise DataError(f"no .seq files under {root}")
    fps = fps // downsample
    if mask is None:
        train = [s.values[:, ::downsample] for _, s in loaded.get("train", [])]
        if not train:
            raise DataError(f"{root}: the train split is empty")
        if use_preprocess:
            mask = fit_channel_mask(train, repr_)
        else:
            mask = ChannelMask.identity(train[0].shape[0])
        fill = preprocess(train[0], repr_, mask)[2]["reference"] if use_preprocess \
            else train[0][:, 0].copy()
    out = PreparedData(mask, fill, fps, repr_)
    for s in splits:
        by_action = {}
        for action, seq in loaded[s]:
            if use_preprocess:
                traj = preprocess(seq.values, repr_, mask, downsample)[0]
            else:
                traj = seq.values[:, ::downsample]
            w = sliding_windows(traj, window, stride)
            if len(w):
                by_action.setdefault(action, []).append(w)
        out.windows[s] = {a: np.concatenate(v) for a, v in by_action.items()}
    return out
