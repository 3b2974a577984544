"""Text file formats: sequences, run configs, checkpoints, trees and masks.

Every format is plain text so runs can be diffed. Floats are written with
17 significant digits, which round-trips IEEE doubles exactly.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .kinematics import ChannelMask, KinematicTree

__all__ = [
    "Sequence",
    "read_sequence",
    "write_sequence",
    "RunConfig",
    "save_checkpoint",
    "load_checkpoint",
    "read_tree",
    "write_tree",
    "read_mask",
    "write_mask",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = "trajgcn-checkpoint 1"


def _fmt(x: float) -> str:
    return "%.17g" % x


@dataclass
class Sequence:
    """One motion clip as ``(K, F)`` channel-major values."""

    values: np.ndarray
    fps: int = 25
    repr: str = "xyz"

    @property
    def channels(self):
        return self.values.shape[0]

    @property
    def frames(self):
        return self.values.shape[1]


def _parse_header(line, path):
    fields = {}
    for tok in line.split():
        if "=" not in tok:
            raise DataError(f"{path}: malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        fields[k] = v
    missing = {"channels", "frames", "fps", "repr"} - set(fields)
    if missing:
        raise DataError(f"{path}: header lacks {sorted(missing)}")
    try:
        K, F, fps = int(fields["channels"]), int(fields["frames"]), int(fields["fps"])
    except ValueError as exc:
        raise DataError(f"{path}: non-integer header field ({exc})") from None
    if fields["repr"] not in ("xyz", "expmap"):
        raise DataError(f"{path}: unknown repr {fields['repr']!r}")
    if K < 1 or F < 1 or fps < 1:
        raise DataError(f"{path}: header sizes must be positive")
    return K, F, fps, fields["repr"]


def read_sequence(path) -> Sequence:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    K, F, fps, repr_ = _parse_header(lines[0], path)
    rows = lines[1:]
    if len(rows) != F:
        raise DataError(f"{path}: header says {F} frames, found {len(rows)}")
    data = np.empty((F, K))
    for i, row in enumerate(rows):
        parts = row.split()
        if len(parts) != K:
            raise DataError(f"{path}: frame {i + 1} has {len(parts)} values, expected {K}")
        try:
            data[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise DataError(f"{path}: frame {i + 1}: {exc}") from None
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite values")
    return Sequence(data.T.copy(), fps, repr_)


def write_sequence(path, seq: Sequence):
    values = np.asarray(seq.values, dtype=np.float64)
    K, F = values.shape
    lines = [f"channels={K} frames={F} fps={seq.fps} repr={seq.repr}"]
    lines += [" ".join(_fmt(x) for x in frame) for frame in values.T]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_bool(s):
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class RunConfig:
    """``key=value`` run configuration; defaults follow the reference setup.

    ``dct_coeffs=0`` picks the representation default (3D: 15 short-term,
    30 long-term; angles: 20 / 35). ``horizons`` empty means every standard
    horizon that fits inside ``n_future``.
    """

    n_observed: int = 10
    n_future: int = 10
    dct_coeffs: int = 0
    width: int = 256
    blocks: int = 12
    lr: float = 0.0005
    lr_decay: float = 0.96
    decay_every: int = 2
    batch: int = 16
    epochs: int = 50
    clip_norm: float = 1.0
    seed: int = 0
    repr: str = "xyz"
    use_dct: bool = True
    use_padding: bool = True
    use_residual: bool = True
    use_bias: bool = True
    connectivity: str = "learned"
    fc_blocks: int = 1
    window_stride: int = 1
    downsample: int = 1
    preprocess: bool = True
    max_steps: int = 0
    horizons: str = ""
    tree: str = ""
    channels: int = 6  # gradcheck only

    @classmethod
    def from_file(cls, path, **overrides):
        values = {}
        for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key=value, got {raw!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            values[k] = v
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(values)

    @classmethod
    def from_dict(cls, values):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for k, v in values.items():
            if k not in types:
                raise ConfigError(f"unknown config key {k!r}")
            t = types[k]
            try:
                if not isinstance(v, str):
                    kwargs[k] = v
                elif t == "bool":
                    kwargs[k] = _parse_bool(v)
                elif t == "int":
                    kwargs[k] = int(v)
                elif t == "float":
                    kwargs[k] = float(v)
                else:
                    kwargs[k] = v
            except ValueError as exc:
                raise ConfigError(f"config key {k}: {exc}") from None
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self):
        if self.n_observed < 1 or self.n_future < 1:
            raise ConfigError("n_observed and n_future must be positive")
        if self.repr not in ("xyz", "expmap"):
            raise ConfigError(f"repr must be xyz or expmap, got {self.repr!r}")
        if self.width < 1 or self.blocks < 0 or self.batch < 1 or self.epochs < 0:
            raise ConfigError("width, batch must be >= 1; blocks, epochs >= 0")
        if not (self.lr > 0 and self.lr_decay > 0 and self.clip_norm > 0):
            raise ConfigError("lr, lr_decay and clip_norm must be positive")
        if self.window_stride < 1 or self.downsample < 1 or self.decay_every < 1:
            raise ConfigError("window_stride, downsample and decay_every must be >= 1")
        if self.dct_coeffs < 0 or self.dct_coeffs > self.n_observed + self.n_future:
            raise ConfigError("dct_coeffs must lie in 0..n_observed+n_future")
        if not self.use_dct and self.dct_coeffs not in (0, self.n_observed + self.n_future):
            raise ConfigError("dct_coeffs truncation needs use_dct=true")
        if self.connectivity not in ("learned", "fixed_tree", "fully_connected"):
            raise ConfigError(f"unknown connectivity {self.connectivity!r}")

    @property
    def num_coeffs(self) -> int:
        if not self.use_dct:
            return self.n_observed + self.n_future
        if self.dct_coeffs:
            return self.dct_coeffs
        long_term = self.n_future > 10
        if self.repr == "xyz":
            L = 30 if long_term else 15
        else:
            L = 35 if long_term else 20
        return min(L, self.n_observed + self.n_future)

    def horizon_list(self, fps):
        if self.horizons.strip():
            try:
                return [int(h) for h in self.horizons.replace(",", " ").split()]
            except ValueError:
                raise ConfigError(f"bad horizons {self.horizons!r}") from None
        from .evaluation import LONG_HORIZONS_MS, SHORT_HORIZONS_MS

        limit = self.n_future * 1000 / fps
        return [h for h in SHORT_HORIZONS_MS + LONG_HORIZONS_MS if h <= limit + 1e-9]


def save_checkpoint(path, store):
    lines = [CHECKPOINT_VERSION]
    for name, value, _ in store.items():
        if value.ndim != 2:
            raise ShapeError(f"parameter {name} is not a matrix")
        rows, cols = value.shape
        lines.append(f"{name} {rows} {cols}")
        lines += [" ".join(_fmt(x) for x in row) for row in value]
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> dict:
    """Ordered ``name -> array`` mapping from a checkpoint file."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_VERSION:
        raise DataError(f"{path}: not a {CHECKPOINT_VERSION!r} file")
    out = {}
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        try:
            name, rows, cols = lines[i].split()
            rows, cols = int(rows), int(cols)
            block = lines[i + 1:i + 1 + rows]
            value = np.array([[float(x) for x in ln.split()] for ln in block])
        except ValueError as exc:
            raise DataError(f"{path}:{i + 1}: malformed record ({exc})") from None
        if value.shape != (rows, cols):
            raise DataError(f"{path}: parameter {name} is truncated")
        out[name] = value.reshape(rows, cols)
        i += 1 + rows
    return out


def read_tree(path) -> KinematicTree:
    parents, offsets = [], []
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ConfigError(f"{path}:{n}: expected 'index parent x y z'")
        idx, parent = int(parts[0]), int(parts[1])
        if idx != len(parents):
            raise ConfigError(f"{path}:{n}: joints must be listed in index order")
        parents.append(parent)
        offsets.append([float(x) for x in parts[2:]])
    return KinematicTree(np.array(parents), np.array(offsets).reshape(-1, 3))


def write_tree(path, tree: KinematicTree):
    lines = [f"{j} {p} " + " ".join(_fmt(x) for x in tree.offsets[j])
             for j, p in enumerate(tree.parents)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_mask(path, mask: ChannelMask, fill=None, scale=None):
    """Channel mask: ``total=K`` line and the retained indices line.

    Optional ``fill`` (reference value per raw channel) and ``scale`` (the
    pipeline's data scale) lines follow.
    """
    lines = [f"total={mask.total}", " ".join(str(i) for i in mask.retained)]
    if fill is not None:
        lines.append("fill " + " ".join(_fmt(x) for x in fill))
    if scale is not None:
        lines.append(f"scale {_fmt(scale)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mask(path):
    """Return ``(mask, fill, scale)``; missing optional lines give None."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    fill = scale = None
    try:
        total = int(lines[0].split("=", 1)[1])
        retained = [int(x) for x in lines[1].split()] if len(lines) > 1 else []
        for ln in lines[2:]:
            key, *vals = ln.split()
            if key == "fill":
                fill = np.array([float(x) for x in vals])
            elif key == "scale":
                scale = float(vals[0])
            else:
                raise ValueError(f"unknown line {key!r}")
    except (IndexError, ValueError) as exc:
        raise DataError(f"{path}: malformed channel mask ({exc})") from None
    if fill is not None and (len(fill) != total or not np.all(np.isfinite(fill))):
        raise DataError(f"{path}: fill must hold {total} finite values")
    if scale is not None and not (math.isfinite(scale) and scale > 0):
        raise DataError(f"{path}: scale must be positive")
    return ChannelMask(total, retained), fill, scale
