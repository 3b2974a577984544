"""Rotation conversions, forward kinematics and pose preprocessing.

Euler angles use the intrinsic Z-Y-X order: ``R = Rz(a) @ Ry(b) @ Rx(c)``,
returned as ``(a, b, c)``. Rotation helpers accept arrays with arbitrary
leading axes, ``(..., 3)`` vectors and ``(..., 3, 3)`` matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ShapeError

__all__ = [
    "expmap_to_rotmat",
    "rotmat_to_expmap",
    "quat_to_rotmat",
    "euler_to_rotmat",
    "rotmat_to_euler",
    "expmap_to_euler",
    "KinematicTree",
    "forward_kinematics",
    "ChannelMask",
    "fit_channel_mask",
    "preprocess",
    "restore_channels",
    "downsample",
    "STD_THRESHOLD",
    "GIMBAL_THRESHOLD",
]

STD_THRESHOLD = 1e-4
GIMBAL_THRESHOLD = 1.0 - 1e-7


def _skew(v):
    z = np.zeros(v.shape[:-1])
    x, y, w = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([
        np.stack([z, -w, y], -1),
        np.stack([w, z, -x], -1),
        np.stack([-y, x, z], -1),
    ], -2)


def expmap_to_rotmat(v) -> np.ndarray:
    """Rodrigues' formula; the zero vector maps to the identity."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != 3:
        raise ShapeError(f"expmap vectors need 3 components, got shape {v.shape}")
    theta = np.linalg.norm(v, axis=-1)[..., None, None]
    small = theta < 1e-12
    safe = np.where(small, 1.0, theta)
    K = _skew(v) / safe
    eye = np.broadcast_to(np.eye(3), K.shape)
    R = eye + np.sin(safe) * K + (1.0 - np.cos(safe)) * (K @ K)
    return np.where(small, eye, R)


def rotmat_to_expmap(R) -> np.ndarray:
    """Inverse of :func:`expmap_to_rotmat` with angle in ``[0, pi]``."""
    R = np.asarray(R, dtype=np.float64)
    cos = (np.trace(R, axis1=-2, axis2=-1) - 1.0) / 2.0
    # antisymmetric part is 2 sin(theta) k; atan2 keeps theta accurate near 0 and pi
    anti = np.stack([R[..., 2, 1] - R[..., 1, 2],
                     R[..., 0, 2] - R[..., 2, 0],
                     R[..., 1, 0] - R[..., 0, 1]], -1)
    sin = np.linalg.norm(anti, axis=-1) / 2.0
    theta = np.arctan2(sin, cos)
    out = np.zeros(R.shape[:-2] + (3,))
    small = cos > 0
    scale = np.where(sin > 1e-300, theta / np.where(sin > 1e-300, 2.0 * sin, 1.0), 0.5)
    out[small] = anti[small] * scale[small][..., None]
    # past pi/2 take the axis from the symmetric part, (1 - cos) k k^T
    wide = ~small
    if np.any(wide):
        Rw = R[wide]
        S = (Rw + np.swapaxes(Rw, -1, -2)) / 2.0 - cos[wide][..., None, None] * np.eye(3)
        cols = np.argmax(np.diagonal(S, axis1=-2, axis2=-1), axis=-1)
        ax = S[np.arange(len(Rw)), :, cols]
        ax /= np.linalg.norm(ax, axis=-1, keepdims=True)
        sign = np.where(np.sum(ax * anti[wide], axis=-1) < 0, -1.0, 1.0)
        out[wide] = ax * (sign * theta[wide])[..., None]
    return out


def quat_to_rotmat(q) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` to rotation matrix."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def _elemental(axis, angle):
    angle = np.asarray(angle, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    o, z = np.ones_like(angle), np.zeros_like(angle)
    if axis == "x":
        rows = [[o, z, z], [z, c, -s], [z, s, c]]
    elif axis == "y":
        rows = [[c, z, s], [z, o, z], [-s, z, c]]
    else:
        rows = [[c, -s, z], [s, c, z], [z, z, o]]
    return np.stack([np.stack(r, -1) for r in rows], -2)


def euler_to_rotmat(e) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    return _elemental("z", e[..., 0]) @ _elemental("y", e[..., 1]) @ _elemental("x", e[..., 2])


def rotmat_to_euler(R) -> np.ndarray:
    """Z-Y-X Euler triple. At gimbal lock the x angle is set to 0."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape[-2:] != (3, 3):
        raise ShapeError(f"expected (..., 3, 3) rotation matrices, got {R.shape}")
    r20 = R[..., 2, 0]
    locked = np.abs(r20) > GIMBAL_THRESHOLD
    y = -np.arcsin(np.clip(r20, -1.0, 1.0))
    z = np.where(locked, np.arctan2(-R[..., 0, 1], R[..., 1, 1]),
                 np.arctan2(R[..., 1, 0], R[..., 0, 0]))
    x = np.where(locked, 0.0, np.arctan2(R[..., 2, 1], R[..., 2, 2]))
    y = np.where(locked, -np.sign(r20) * np.pi / 2, y)
    return np.stack([z, y, x], -1)


def expmap_to_euler(channels) -> np.ndarray:
    """Convert ``(..., 3J, F)`` expmap trajectories to Euler trajectories."""
    channels = np.asarray(channels, dtype=np.float64)
    K, F = channels.shape[-2:]
    if K % 3:
        raise ShapeError(f"expmap trajectories need a multiple of 3 channels, got {K}")
    lead = channels.shape[:-2]
    v = np.moveaxis(channels.reshape(lead + (K // 3, 3, F)), -1, -2)
    e = rotmat_to_euler(expmap_to_rotmat(v))
    return np.moveaxis(e, -2, -1).reshape(channels.shape)


@dataclass
class KinematicTree:
    """Skeleton: ``parents[j]`` (-1 for the root) and bone offsets in mm."""

    parents: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        self.parents = np.asarray(self.parents, dtype=int)
        self.offsets = np.asarray(self.offsets, dtype=np.float64)
        J = len(self.parents)
        if J == 0 or self.offsets.shape != (J, 3):
            raise ConfigError(
                f"tree needs J parents and (J, 3) offsets, got {J} and {self.offsets.shape}"
            )
        if self.parents[0] != -1:
            raise ConfigError("joint 0 must be the root (parent -1)")
        for j in range(1, J):
            if not 0 <= self.parents[j] < j:
                raise ConfigError(
                    f"joint {j} has parent {self.parents[j]}; parents must precede children"
                )

    @property
    def num_joints(self):
        return len(self.parents)

    @classmethod
    def chain(cls, num_joints, bone=(100.0, 0.0, 0.0)):
        offsets = np.tile(np.asarray(bone, dtype=np.float64), (num_joints, 1))
        offsets[0] = 0.0
        return cls(np.arange(num_joints) - 1, offsets)

    def adjacency(self):
        """Symmetric-normalised joint adjacency with self loops."""
        J = self.num_joints
        A = np.eye(J)
        for j in range(1, J):
            A[j, self.parents[j]] = A[self.parents[j], j] = 1.0
        d = 1.0 / np.sqrt(A.sum(axis=1))
        return A * d[:, None] * d[None, :]


def forward_kinematics(pose, tree: KinematicTree) -> np.ndarray:
    """Joint positions ``(..., J, 3)`` from expmap channels ``(..., 3J)``."""
    pose = np.asarray(pose, dtype=np.float64)
    J = tree.num_joints
    if pose.shape[-1] != 3 * J:
        raise ShapeError(f"pose has {pose.shape[-1]} channels, tree needs {3 * J}")
    local = expmap_to_rotmat(pose.reshape(pose.shape[:-1] + (J, 3)))
    lead = pose.shape[:-1]
    pos = np.zeros(lead + (J, 3))
    rot = np.zeros(lead + (J, 3, 3))
    for j in range(J):
        p = tree.parents[j]
        if p < 0:
            pos[..., j, :] = tree.offsets[j]
            rot[..., j, :, :] = local[..., j, :, :]
        else:
            pos[..., j, :] = pos[..., p, :] + rot[..., p, :, :] @ tree.offsets[j]
            rot[..., j, :, :] = rot[..., p, :, :] @ local[..., j, :, :]
    return pos


@dataclass
class ChannelMask:
    """Which of ``total`` raw channels survive preprocessing."""

    total: int
    retained: list = field(default_factory=list)

    def __post_init__(self):
        self.retained = [int(i) for i in self.retained]
        if sorted(set(self.retained)) != self.retained:
            raise ConfigError("retained channel indices must be sorted and unique")
        if self.retained and not 0 <= self.retained[-1] < self.total:
            raise ConfigError("retained channel index out of range")

    @property
    def dropped(self):
        keep = set(self.retained)
        return [i for i in range(self.total) if i not in keep]

    @classmethod
    def identity(cls, total):
        return cls(total, list(range(total)))


def downsample(seq, stride: int):
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    return np.asarray(seq)[..., ::stride]


def _remove_global(seq, repr_):
    """Global part removed: root-relative positions, or zeroed root rotation."""
    seq = np.array(seq, dtype=np.float64)
    if repr_ == "xyz":
        K = seq.shape[0]
        root = seq[0:3].copy()
        seq -= np.tile(root, (K // 3, 1))
        return seq, root
    if repr_ == "expmap":
        root = seq[0:3].copy()
        seq[0:3] = 0.0
        return seq, root
    raise ConfigError(f"unknown representation {repr_!r}")


def fit_channel_mask(sequences, repr_="xyz", threshold=STD_THRESHOLD) -> ChannelMask:
    """Drop channels whose sample std over all training frames is below ``threshold``.

    For 3D data whole joints are dropped, since centring mixes a joint's
    coordinates with the others.
    """
    seqs = [_remove_global(s, repr_)[0] for s in sequences]
    if not seqs:
        raise DataError("cannot fit a channel mask on an empty training set")
    K = seqs[0].shape[0]
    if K % 3:
        raise ShapeError(f"channel count {K} is not a multiple of 3")
    stacked = np.concatenate(seqs, axis=1)
    std = stacked.std(axis=1, ddof=1) if stacked.shape[1] > 1 else np.zeros(K)
    moving = std >= threshold
    if repr_ == "xyz":
        moving = np.repeat(moving.reshape(-1, 3).any(axis=1), 3)
    else:
        moving[0:3] = False
    retained = np.flatnonzero(moving).tolist()
    if not retained:
        raise DataError("every channel is constant; nothing to predict")
    return ChannelMask(K, retained)


def preprocess(raw, repr_="xyz", mask: ChannelMask | None = None, stride: int = 1,
               threshold=STD_THRESHOLD):
    """Prepare one raw ``(K, F)`` sequence for the network.

    Returns ``(trajectory, mask, metadata)``. ``metadata["reference"]`` is the
    first globally-normalised frame, used to refill dropped channels. For 3D
    data ``metadata["root"]`` and ``metadata["centroid"]`` are the ``(3, F)``
    translations that were subtracted.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.size == 0:
        raise DataError(f"raw sequence must be a non-empty (K, F) array, got {raw.shape}")
    raw = downsample(raw, stride)
    if mask is None:
        mask = fit_channel_mask([raw], repr_, threshold)
    if mask.total != raw.shape[0]:
        raise ShapeError(f"mask expects {mask.total} channels, sequence has {raw.shape[0]}")
    seq, root = _remove_global(raw, repr_)
    traj = seq[mask.retained]
    meta = {"reference": seq[:, 0].copy(), "repr": repr_}
    if repr_ == "xyz":
        centroid = traj.reshape(-1, 3, traj.shape[1]).mean(axis=0)
        traj = traj - np.tile(centroid, (len(mask.retained) // 3, 1))
        meta.update(root=root, centroid=centroid)
    return traj, mask, meta


def restore_channels(pred, mask: ChannelMask, reference, root=None, centroid=None):
    """Re-insert dropped channels at their reference values.

    ``root`` and ``centroid`` (3D only, ``(3, F)``) undo the translations
    removed by :func:`preprocess`; the centroid only applies to retained
    joints.
    """
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim < 2 or pred.shape[-2] != len(mask.retained):
        raise ShapeError(
            f"prediction has shape {pred.shape}, mask retains {len(mask.retained)} channels"
        )
    reference = np.asarray(reference, dtype=np.float64)
    if reference.shape != (mask.total,):
        raise ShapeError(f"reference frame must have {mask.total} values")
    F = pred.shape[-1]
    shape = pred.shape[:-2] + (mask.total, F)
    full = np.broadcast_to(reference[:, None], shape).copy()
    if centroid is not None:
        pred = pred + np.tile(_frames(centroid, F), (len(mask.retained) // 3, 1))
    full[..., mask.retained, :] = pred
    if root is not None:
        full += np.tile(_frames(root, F), (mask.total // 3, 1))
    return full


def _frames(t, F):
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (3, F):
        raise ShapeError(f"translation must have shape (3, {F}), got {t.shape}")
    return t
