"""Bipartite antenna/user graph built from a branch-and-bound node."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import UsageError

V_A = 3
V_U = 8
V_E = 9


@dataclass(eq=False)
class GraphSample:
    antenna: np.ndarray  # (N, V_A)
    user: np.ndarray  # (M, V_U)
    edge: np.ndarray  # (N, M, V_E)

    def __post_init__(self):
        self.antenna = np.ascontiguousarray(self.antenna, dtype=float)
        self.user = np.ascontiguousarray(self.user, dtype=float)
        self.edge = np.ascontiguousarray(self.edge, dtype=float)
        N, M = self.antenna.shape[0], self.user.shape[0]
        if self.antenna.shape != (N, V_A) or self.user.shape != (M, V_U) or self.edge.shape != (N, M, V_E):
            raise UsageError(
                f"inconsistent sample shapes {self.antenna.shape}, {self.user.shape}, {self.edge.shape}"
            )

    @property
    def n_antennas(self):
        return self.antenna.shape[0]

    @property
    def n_users(self):
        return self.user.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, GraphSample)
            and np.array_equal(self.antenna, other.antenna)
            and np.array_equal(self.user, other.user)
            and np.array_equal(self.edge, other.edge)
        )

    def to_dict(self):
        return {
            "N": self.n_antennas,
            "M": self.n_users,
            "antenna": self.antenna.ravel().tolist(),
            "user": self.user.ravel().tolist(),
            "edge": self.edge.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        N, M = int(d["N"]), int(d["M"])
        return cls(
            np.asarray(d["antenna"], dtype=float).reshape(N, V_A),
            np.asarray(d["user"], dtype=float).reshape(M, V_U),
            np.asarray(d["edge"], dtype=float).reshape(N, M, V_E),
        )


def _scaled(value, ref):
    if not math.isfinite(value):
        return 0.0
    return value / ref


def _complex_triplet(Z):
    return np.stack([Z.real, Z.imag, np.abs(Z)], axis=-1)


def extract_features(node, snapshot, inst) -> GraphSample:
    """Node features from its relaxation and the engine's global state.

    Bounds are divided by the root lower bound; infinite values become 0.
    """
    if snapshot is None:
        raise UsageError("feature extraction needs the engine snapshot (l_G, u_G, incumbent)")
    N, M = inst.N, inst.M
    H = inst.H
    W_lb = node.W_lb if node.W_lb is not None else np.zeros((N, M), dtype=complex)
    W_inc = snapshot.W_incumbent if snapshot.W_incumbent is not None else np.zeros((N, M), dtype=complex)
    ref = snapshot.root_lb if math.isfinite(snapshot.root_lb) and snapshot.root_lb > 0 else 1.0

    antenna = np.zeros((N, V_A))
    antenna[list(node.include), 0] = 1.0
    antenna[list(node.exclude), 1] = 1.0
    antenna[:, 2] = np.sum(np.abs(W_lb) ** 2, axis=1)

    G = np.abs(W_lb.conj().T @ H) ** 2  # G[j, m] = |w_j^H h_m|^2
    signal = np.diag(G)
    interference = G.sum(axis=0) - signal
    l_G = _scaled(snapshot.l_G, ref)
    u_G = _scaled(snapshot.u_G, ref)
    lb = _scaled(node.lb, ref)
    ub = _scaled(node.ub, ref)
    near = 1.0 if (math.isfinite(node.ub) and math.isfinite(snapshot.u_G) and ub - u_G < snapshot.rel_gap) else 0.0
    user = np.empty((M, V_U))
    user[:, 0] = signal
    user[:, 1] = interference
    user[:, 2:] = [l_G, u_G, lb, ub, float(node.level), near]

    edge = np.concatenate([_complex_triplet(H), _complex_triplet(W_inc), _complex_triplet(W_lb)], axis=-1)
    return GraphSample(antenna, user, edge)
