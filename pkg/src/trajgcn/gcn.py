"""Residual graph convolutional network with learnable adjacency.

Every layer computes ``act(A @ H @ W + b)`` where ``A`` mixes the K nodes
and ``W`` mixes features. Inputs are ``(K, F)`` or batched ``(B, K, F)``.
Gradients are derived by hand per layer; :class:`ForwardTape` carries the
intermediates from the forward pass to :meth:`MotionGCN.backward`.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, StateError
from .numeric import ParameterStore, xavier_init

__all__ = [
    "GraphConvLayer",
    "ResidualBlock",
    "MotionGCN",
    "FullyConnectedNet",
    "ForwardTape",
    "param_count",
    "gcn_param_count",
]

ADJACENCY_INIT_SCALE = 1e-2

_serials = itertools.count(1)


def _left_mix(A: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``A @ H`` for every batch item in a single BLAS call."""
    B, K, F = H.shape
    return (A @ H.transpose(1, 0, 2).reshape(K, B * F)).reshape(K, B, F).transpose(1, 0, 2)


class GraphConvLayer:
    """One graph convolution.

    ``adjacency`` fixes A to a constant (no gradient, not in the store);
    otherwise A is a learnable ``K x K`` parameter.
    """

    def __init__(self, name, store, nodes, f_in, f_out, activation="tanh",
                 adjacency=None, use_bias=True):
        if activation not in ("tanh", "identity"):
            raise ValueError(f"unknown activation {activation!r}")
        self.name = name
        self.nodes, self.f_in, self.f_out = nodes, f_in, f_out
        self.activation = activation
        if adjacency is None:
            self.learn_adjacency = True
            self.A = store.add(f"{name}.A", np.zeros((nodes, nodes)))
        else:
            adjacency = np.array(adjacency, dtype=np.float64)
            if adjacency.shape != (nodes, nodes):
                raise ShapeError(
                    f"{name}: fixed adjacency {adjacency.shape} != ({nodes}, {nodes})"
                )
            adjacency.setflags(write=False)
            self.learn_adjacency = False
            self.A = adjacency
        self.W = store.add(f"{name}.W", np.zeros((f_in, f_out)))
        self.b = store.add(f"{name}.b", np.zeros((1, f_out))) if use_bias else None
        self._store = store

    def param_names(self):
        names = [f"{self.name}.A"] if self.learn_adjacency else []
        names.append(f"{self.name}.W")
        if self.b is not None:
            names.append(f"{self.name}.b")
        return names

    def num_params(self):
        n = self.W.size + (self.A.size if self.learn_adjacency else 0)
        return n + (self.b.size if self.b is not None else 0)

    def forward(self, H):
        if H.ndim != 3 or H.shape[1:] != (self.nodes, self.f_in):
            raise ShapeError(
                f"{self.name}: expected input (*, {self.nodes}, {self.f_in}), got {H.shape}"
            )
        AH = _left_mix(self.A, H)
        B = H.shape[0]
        Z = (AH.reshape(B * self.nodes, self.f_in) @ self.W).reshape(B, self.nodes, self.f_out)
        if self.b is not None:
            Z += self.b
        out = np.tanh(Z) if self.activation == "tanh" else Z
        return out, (H, AH, out)

    def backward(self, record, G):
        """Accumulate parameter gradients and return dL/dH."""
        H, AH, out = record
        B = H.shape[0]
        dZ = G * (1.0 - out * out) if self.activation == "tanh" else G
        dZ2 = dZ.reshape(B * self.nodes, self.f_out)
        self._store.grad(f"{self.name}.W")[...] += AH.reshape(B * self.nodes, self.f_in).T @ dZ2
        if self.b is not None:
            self._store.grad(f"{self.name}.b")[...] += dZ2.sum(axis=0, keepdims=True)
        dAH = (dZ2 @ self.W.T).reshape(B, self.nodes, self.f_in)
        if self.learn_adjacency:
            # sum_b dAH_b @ H_b^T
            K = self.nodes
            self._store.grad(f"{self.name}.A")[...] += (
                dAH.transpose(1, 0, 2).reshape(K, B * self.f_in)
                @ H.transpose(1, 0, 2).reshape(K, B * self.f_in).T
            )
        return _left_mix(self.A.T, dAH)


class ResidualBlock:
    def __init__(self, name, store, nodes, width, adjacency=None, use_bias=True):
        self.layer1 = GraphConvLayer(f"{name}.layer1", store, nodes, width, width,
                                     "tanh", adjacency, use_bias)
        self.layer2 = GraphConvLayer(f"{name}.layer2", store, nodes, width, width,
                                     "tanh", adjacency, use_bias)


@dataclass
class ForwardTape:
    owner: int
    serial: int
    batched: bool
    records: list = field(default_factory=list)


class MotionGCN:
    """Encoder graph conv, ``blocks`` two-layer residual blocks, linear decoder.

    The decoder output is the residual added to the input coefficients by
    the caller.
    """

    def __init__(self, nodes, features, width=256, blocks=12, use_bias=True,
                 adjacency=None, store=None, prefix=""):
        self.nodes, self.features = int(nodes), int(features)
        self.width, self.num_blocks = int(width), int(blocks)
        self.use_bias = use_bias
        self.params = store if store is not None else ParameterStore()
        p = prefix
        self.encoder = GraphConvLayer(f"{p}encoder", self.params, nodes, features, width,
                                      "tanh", adjacency, use_bias)
        self.blocks = [
            ResidualBlock(f"{p}block{i:02d}", self.params, nodes, width, adjacency, use_bias)
            for i in range(blocks)
        ]
        self.decoder = GraphConvLayer(f"{p}decoder", self.params, nodes, width, features,
                                      "identity", adjacency, use_bias)
        self._serial = 0

    def layers(self):
        yield self.encoder
        for blk in self.blocks:
            yield blk.layer1
            yield blk.layer2
        yield self.decoder

    def init_parameters(self, rng: np.random.Generator):
        for layer in self.layers():
            if layer.learn_adjacency:
                layer.A[...] = rng.uniform(-ADJACENCY_INIT_SCALE, ADJACENCY_INIT_SCALE,
                                           size=layer.A.shape)
            layer.W[...] = xavier_init(layer.f_in, layer.f_out, rng)
            if layer.b is not None:
                layer.b.fill(0.0)
        # decoder starts at zero so the untrained net is the zero-velocity baseline
        self.decoder.W.fill(0.0)
        if self.decoder.b is not None:
            self.decoder.b.fill(0.0)

    def num_params(self):
        return sum(layer.num_params() for layer in self.layers())

    def forward(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        batched = coeffs.ndim == 3
        H = coeffs if batched else coeffs[None]
        if H.ndim != 3 or H.shape[1:] != (self.nodes, self.features):
            raise ShapeError(
                f"model expects input ({self.nodes}, {self.features}), got {coeffs.shape}"
            )
        self._serial = next(_serials)
        tape = ForwardTape(id(self), self._serial, batched)
        H, rec = self.encoder.forward(H)
        tape.records.append(rec)
        for blk in self.blocks:
            Y, rec1 = blk.layer1.forward(H)
            Y, rec2 = blk.layer2.forward(Y)
            tape.records += [rec1, rec2]
            H = H + Y
        out, rec = self.decoder.forward(H)
        tape.records.append(rec)
        return (out if batched else out[0]), tape

    def backward(self, tape: ForwardTape, grad_out):
        """Accumulate dL/dtheta into the store; return dL/dinput."""
        if tape.owner != id(self) or tape.serial != self._serial:
            raise StateError("tape was not produced by the latest forward of this model")
        if len(tape.records) != 2 + 2 * self.num_blocks:
            raise StateError("tape does not match the model depth")
        G = np.asarray(grad_out, dtype=np.float64)
        if not tape.batched:
            G = G[None]
        recs = tape.records
        G = self.decoder.backward(recs[-1], G)
        for i in range(self.num_blocks - 1, -1, -1):
            blk = self.blocks[i]
            dY = blk.layer2.backward(recs[2 + 2 * i], G)
            dY = blk.layer1.backward(recs[1 + 2 * i], dY)
            G = G + dY
        G = self.encoder.backward(recs[0], G)
        return G if tape.batched else G[0]


class FullyConnectedNet:
    """Same residual stack on the flattened ``K*L`` coefficient vector.

    Implemented as a one-node graph with the adjacency fixed to 1, which
    reduces every graph convolution to a dense layer.
    """

    def __init__(self, nodes, features, width=256, blocks=1, use_bias=True, store=None):
        self.nodes, self.features = int(nodes), int(features)
        self.width, self.num_blocks = int(width), int(blocks)
        self.use_bias = use_bias
        self.net = MotionGCN(1, self.nodes * self.features, width, blocks, use_bias,
                             adjacency=np.ones((1, 1)), store=store, prefix="fc.")
        self.params = self.net.params

    def layers(self):
        return self.net.layers()

    def init_parameters(self, rng):
        self.net.init_parameters(rng)

    def num_params(self):
        return self.net.num_params()

    def forward(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        batched = coeffs.ndim == 3
        H = coeffs if batched else coeffs[None]
        if H.shape[1:] != (self.nodes, self.features):
            raise ShapeError(
                f"model expects input ({self.nodes}, {self.features}), got {coeffs.shape}"
            )
        out, tape = self.net.forward(H.reshape(H.shape[0], 1, -1))
        tape.batched = batched
        out = out.reshape(H.shape)
        return (out if batched else out[0]), tape

    def backward(self, tape, grad_out):
        G = np.asarray(grad_out, dtype=np.float64)
        shape = G.shape
        G = G.reshape(-1, 1, self.nodes * self.features)
        batched, tape.batched = tape.batched, True
        try:
            dX = self.net.backward(tape, G)
        finally:
            tape.batched = batched
        return dX.reshape(shape)


def gcn_param_count(nodes, features, width=256, blocks=12, use_bias=True,
                    learn_adjacency=True):
    """Closed-form parameter count of :class:`MotionGCN`."""
    layers = 2 + 2 * blocks
    n = layers * nodes * nodes if learn_adjacency else 0
    n += features * width + blocks * 2 * width * width + width * features
    if use_bias:
        n += width + blocks * 2 * width + features
    return n


def param_count(model) -> int:
    return model.num_params()
