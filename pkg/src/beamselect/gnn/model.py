"""Parameters, forward pass and exact gradients of the node classifier."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import ParseError, UsageError
from . import kernels
from .features import V_A, V_E, V_U, GraphSample

CHECKPOINT_MAGIC = b"BSGNNv1\x00"
B_Z = 10.0
DEFAULT_E = 32


def param_shapes(E, va=V_A, vu=V_U, ve=V_E):
    """Shapes of (Z1, ..., Z16, beta) in storage order."""
    return [(E, va), (E, vu), (E, ve)] + [(E, E)] * 13 + [(E,)]


def param_count(E, va=V_A, vu=V_U, ve=V_E):
    return E * (va + vu + ve) + 13 * E * E + E


@dataclass(frozen=True, eq=False)
class GnnParams:
    """Immutable flat parameter vector with per-matrix views."""

    E: int
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).ravel()
        if theta.size != param_count(self.E):
            raise UsageError(f"expected {param_count(self.E)} parameters for E={self.E}, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise UsageError("parameters must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def mats(self):
        out = []
        k = 0
        for shape in param_shapes(self.E):
            size = int(np.prod(shape))
            out.append(self.theta[k : k + size].reshape(shape))
            k += size
        return tuple(out)

    @property
    def size(self):
        return self.theta.size

    def replace(self, theta):
        return GnnParams(self.E, theta)

    def __eq__(self, other):
        return isinstance(other, GnnParams) and self.E == other.E and np.array_equal(self.theta, other.theta)


def flatten(mats):
    return np.concatenate([np.asarray(m, dtype=float).ravel() for m in mats])


def init_params(E=DEFAULT_E, seed=0) -> GnnParams:
    """Glorot-uniform initialisation of every matrix and the readout vector."""
    rng = np.random.default_rng(seed)
    parts = []
    for shape in param_shapes(E):
        fan_out = shape[0] if len(shape) == 2 else 1
        fan_in = shape[1] if len(shape) == 2 else shape[0]
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        parts.append(rng.uniform(-lim, lim, size=shape))
    return GnnParams(E, flatten(parts))


def zero_params(E=DEFAULT_E) -> GnnParams:
    return GnnParams(E, np.zeros(param_count(E)))


def project_spectral(params: GnnParams, bound=B_Z) -> GnnParams:
    """Rescale each aggregation matrix to spectral norm at most ``bound``."""
    mats = [np.array(m) for m in params.mats()]
    changed = False
    for i in range(16):
        s = np.linalg.norm(mats[i], 2)
        if s > bound:
            mats[i] *= bound / s
            changed = True
    return params.replace(flatten(mats)) if changed else params


def _stack(samples):
    shapes = {(s.n_antennas, s.n_users) for s in samples}
    if len(shapes) != 1:
        raise UsageError(f"samples in one batch must share (N, M), got {sorted(shapes)}")
    xa = np.stack([s.antenna for s in samples])
    xu = np.stack([s.user for s in samples])
    xe = np.stack([s.edge for s in samples])
    return xa, xu, xe


def _groups(samples):
    groups = {}
    for i, s in enumerate(samples):
        groups.setdefault((s.n_antennas, s.n_users), []).append(i)
    return groups.values()


def _check(params, sample):
    if not isinstance(sample, GraphSample):
        raise UsageError("expected a GraphSample")


def forward_logits(params: GnnParams, samples, backend=None) -> np.ndarray:
    samples = list(samples)
    out = np.empty(len(samples))
    mats = params.mats()
    for idx in _groups(samples):
        xa, xu, xe = _stack([samples[i] for i in idx])
        out[idx] = kernels.logits(mats, xa, xu, xe, backend)
    return out


def forward_batch(params: GnnParams, samples, backend=None) -> np.ndarray:
    z = forward_logits(params, samples, backend)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward(params: GnnParams, sample: GraphSample, backend=None) -> float:
    """Probability that the node's subtree holds the optimal antenna set."""
    _check(params, sample)
    return float(forward_batch(params, [sample], backend)[0])


def loss_and_grad(params: GnnParams, samples, labels, weights, backend=None):
    """Weighted cross-entropy summed over ``samples`` and its gradient as a flat vector."""
    samples = list(samples)
    labels = np.asarray(labels, dtype=float)
    weights = np.asarray(weights, dtype=float)
    mats = params.mats()
    total = 0.0
    grad = np.zeros(params.size)
    for idx in _groups(samples):
        idx = list(idx)
        xa, xu, xe = _stack([samples[i] for i in idx])
        loss, grads = kernels.loss_grad(mats, xa, xu, xe, labels[idx], weights[idx], backend)
        total += loss
        grad += flatten(grads)
    return total, grad


def backward(params: GnnParams, sample: GraphSample, y, w=1.0, backend=None):
    """Gradient of ``w * BCE(forward(sample), y)``; returns ``(grad, loss)``."""
    if y not in (0, 1):
        raise UsageError(f"label must be 0 or 1, got {y}")
    if w <= 0:
        raise UsageError("weight must be positive")
    loss, grad = loss_and_grad(params, [sample], [y], [w], backend)
    return grad, loss


def save_checkpoint(params: GnnParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<4I", params.E, V_A, V_U, V_E))
        fh.write(params.theta.astype("<f8").tobytes())


def load_checkpoint(path) -> GnnParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ParseError("not a classifier checkpoint", offset=0)
    off = len(CHECKPOINT_MAGIC)
    if len(data) < off + 16:
        raise ParseError("truncated checkpoint header", offset=off)
    E, va, vu, ve = struct.unpack_from("<4I", data, off)
    if (va, vu, ve) != (V_A, V_U, V_E):
        raise ParseError(f"feature dimensions {(va, vu, ve)} do not match {(V_A, V_U, V_E)}", offset=off)
    off += 16
    n = param_count(E)
    if len(data) - off != 8 * n:
        raise ParseError(f"expected {n} parameters, found {(len(data) - off) / 8:g}", offset=off)
    theta = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(float)
    return GnnParams(E, theta)
