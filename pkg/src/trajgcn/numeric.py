"""Dense matrix helpers, seeded randomness and the parameter store.

Matrices are plain float64 numpy arrays. The helpers here add the shape
checks the rest of the package relies on; no broadcasting is performed
unless a function says so.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError

__all__ = [
    "as_matrix",
    "matmul",
    "tanh_map",
    "make_rng",
    "xavier_init",
    "ParameterStore",
    "global_l2_norm",
]


def as_matrix(values) -> np.ndarray:
    m = np.array(values, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def tanh_map(m: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(m, dtype=np.float64))


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the stream is fixed by numpy's documented algorithm."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def xavier_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform Glorot init on [-b, b] with b = sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"xavier_init needs positive dims, got ({rows}, {cols})")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


class ParameterStore:
    """Ordered name -> (value, gradient) store.

    Values and gradients are owned arrays; layers keep references to them,
    so every update here is done in place.
    """

    def __init__(self):
        self._values: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> np.ndarray:
        if name in self._values:
            raise KeyError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=np.float64)
        self._values[name] = value
        self._grads[name] = np.zeros_like(value)
        return value

    def __contains__(self, name):
        return name in self._values

    def __len__(self):
        return len(self._values)

    def __iter__(self):
        return iter(self._values)

    def names(self) -> list[str]:
        return list(self._values)

    def value(self, name: str) -> np.ndarray:
        return self._values[name]

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def items(self):
        for name, v in self._values.items():
            yield name, v, self._grads[name]

    def zero_grad(self):
        for g in self._grads.values():
            g.fill(0.0)

    def num_scalars(self) -> int:
        return sum(v.size for v in self._values.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self._values.items()}

    def load(self, values: dict[str, np.ndarray]):
        if list(values) != self.names():
            raise ShapeError("parameter names do not match the store")
        for name, v in values.items():
            target = self._values[name]
            v = np.asarray(v, dtype=np.float64)
            if v.shape != target.shape:
                raise ShapeError(
                    f"parameter {name}: expected shape {target.shape}, got {v.shape}"
                )
            target[...] = v


def global_l2_norm(store: ParameterStore) -> float:
    total = 0.0
    for _, _, g in store.items():
        total += float(np.dot(g.ravel(), g.ravel()))
    return float(np.sqrt(total))
