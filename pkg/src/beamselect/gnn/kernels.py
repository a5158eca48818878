"""Forward and gradient kernels of the two-layer bipartite message-passing net.

All samples in one call share the same (N, M).  ``mats`` is the tuple
``(Z1, ..., Z16, beta)``.  Two implementations exist: a batched numpy one and
a per-sample loop compiled with numba.  ``BEAMSELECT_NUMBA=0`` forces numpy;
otherwise numba is used when importable.
"""

from __future__ import annotations

import os

import numpy as np

CLAMP = 1e-12


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# ---------------------------------------------------------------------------
# numpy


def _forward_np(mats, xa, xu, xe):
    Z1, Z2, Z3, Z4, Z5, Z6, Z7, Z8, Z9, Z10, Z11, Z12, Z13, Z14, Z15, Z16, beta = mats
    c = {}
    c["a0"] = xa @ Z1.T
    q0a = _relu(c["a0"])
    c["u0"] = xu @ Z2.T
    q0u = _relu(c["u0"])
    c["e0"] = xe @ Z3.T
    ee = _relu(c["e0"])
    # antenna update
    c["p1"] = (q0a @ Z6.T)[:, :, None, :] + (q0u @ Z5.T)[:, None, :, :] + ee @ Z4.T
    s1 = _relu(c["p1"]).sum(axis=2)
    c["p2"] = q0a @ Z8.T + s1 @ Z7.T
    h1 = _relu(c["p2"])
    q1a = h1 @ Z9.T
    # user update
    c["p3"] = (q0u @ Z12.T)[:, None, :, :] + (q1a @ Z11.T)[:, :, None, :] + ee @ Z10.T
    s3 = _relu(c["p3"]).sum(axis=1)
    c["p4"] = q0u @ Z14.T + s3 @ Z13.T
    h4 = _relu(c["p4"])
    q2u = h4 @ Z15.T
    c["p5"] = q2u @ Z16.T
    r = _relu(c["p5"])
    logit = (r @ beta).mean(axis=1)
    c.update(q0a=q0a, q0u=q0u, ee=ee, s1=s1, h1=h1, q1a=q1a, s3=s3, h4=h4, q2u=q2u, r=r)
    return logit, c


def _backward_np(mats, xa, xu, xe, c, dlogit):
    Z1, Z2, Z3, Z4, Z5, Z6, Z7, Z8, Z9, Z10, Z11, Z12, Z13, Z14, Z15, Z16, beta = mats
    M = xu.shape[1]
    mm = "sie,sif->ef"
    g = {}
    dr = (dlogit[:, None, None] / M) * beta[None, None, :]
    g["beta"] = np.einsum("sme,s->e", c["r"], dlogit / M)
    dp5 = dr * (c["p5"] > 0)
    g[16] = np.einsum(mm, dp5, c["q2u"])
    dq2u = dp5 @ Z16
    g[15] = np.einsum(mm, dq2u, c["h4"])
    dp4 = (dq2u @ Z15) * (c["p4"] > 0)
    g[14] = np.einsum(mm, dp4, c["q0u"])
    dq0u = dp4 @ Z14
    g[13] = np.einsum(mm, dp4, c["s3"])
    dp3 = (dp4 @ Z13)[:, None, :, :] * (c["p3"] > 0)
    g[12] = np.einsum(mm, dp3.sum(axis=1), c["q0u"])
    dq0u += dp3.sum(axis=1) @ Z12
    dp3_n = dp3.sum(axis=2)
    g[11] = np.einsum(mm, dp3_n, c["q1a"])
    dq1a = dp3_n @ Z11
    g[10] = np.einsum("snme,snmf->ef", dp3, c["ee"])
    dee = dp3 @ Z10
    g[9] = np.einsum(mm, dq1a, c["h1"])
    dp2 = (dq1a @ Z9) * (c["p2"] > 0)
    g[8] = np.einsum(mm, dp2, c["q0a"])
    dq0a = dp2 @ Z8
    g[7] = np.einsum(mm, dp2, c["s1"])
    dp1 = (dp2 @ Z7)[:, :, None, :] * (c["p1"] > 0)
    dp1_n = dp1.sum(axis=2)
    g[6] = np.einsum(mm, dp1_n, c["q0a"])
    dq0a += dp1_n @ Z6
    dp1_m = dp1.sum(axis=1)
    g[5] = np.einsum(mm, dp1_m, c["q0u"])
    dq0u += dp1_m @ Z5
    g[4] = np.einsum("snme,snmf->ef", dp1, c["ee"])
    dee += dp1 @ Z4
    g[3] = np.einsum("snme,snmf->ef", dee * (c["e0"] > 0), xe)
    g[2] = np.einsum(mm, dq0u * (c["u0"] > 0), xu)
    g[1] = np.einsum(mm, dq0a * (c["a0"] > 0), xa)
    return [g[i] for i in range(1, 17)] + [g["beta"]]


def logits_numpy(mats, xa, xu, xe):
    return _forward_np(mats, xa, xu, xe)[0]


def loss_grad_numpy(mats, xa, xu, xe, y, w):
    """Sum of weighted cross-entropies and its gradient for every matrix in ``mats``."""
    logit, cache = _forward_np(mats, xa, xu, xe)
    pi = np.clip(_sigmoid(logit), CLAMP, 1.0 - CLAMP)
    loss = float(np.sum(w * -(y * np.log(pi) + (1.0 - y) * np.log(1.0 - pi))))
    grads = _backward_np(mats, xa, xu, xe, cache, w * (pi - y))
    return loss, grads


# ---------------------------------------------------------------------------
# numba

try:
    import numba as _numba
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None


_NB = None


def numba_available():
    return _numba is not None


def use_numba():
    flag = os.environ.get("BEAMSELECT_NUMBA", "1").strip().lower()
    return numba_available() and flag not in ("0", "false", "no", "off")


def _nb():
    global _NB
    if _NB is None:
        from . import _nb_kernels

        _NB = (_nb_kernels.logits_nb, _nb_kernels.loss_grad_nb)
    return _NB


def logits_numba(mats, xa, xu, xe):
    return _nb()[0](*mats, xa, xu, xe)


def loss_grad_numba(mats, xa, xu, xe, y, w):
    g = np.zeros(sum(Z.size for Z in mats))
    loss = _nb()[1](*mats, xa, xu, xe, np.asarray(y, float), np.asarray(w, float), g)
    grads, k = [], 0
    for Z in mats:
        grads.append(g[k : k + Z.size].reshape(Z.shape))
        k += Z.size
    return float(loss), grads


def logits(mats, xa, xu, xe, backend=None):
    if (backend or ("numba" if use_numba() else "numpy")) == "numba":
        return logits_numba(mats, xa, xu, xe)
    return logits_numpy(mats, xa, xu, xe)


def loss_grad(mats, xa, xu, xe, y, w, backend=None):
    if (backend or ("numba" if use_numba() else "numpy")) == "numba":
        return loss_grad_numba(mats, xa, xu, xe, y, w)
    return loss_grad_numpy(mats, xa, xu, xe, y, w)
