"""Conic subproblem construction.

Every program is stored in the standard form

    minimize    c^T x
    subject to  s = b - A x,   s in K_1 x ... x K_p

with cones ``("zero", d)``, ``("nonneg", d)``, ``("soc", d)`` (first entry is
the norm bound) and ``("psd", k)``.  A PSD block occupies ``k*k`` rows holding
the full symmetric matrix in column-major order; backends convert it to their
own layout.  Complex quantities are lowered to real ones: a complex beamformer
column is split into real and imaginary parts, and a Hermitian matrix ``Z`` is
constrained through ``[[Re Z, -Im Z], [Im Z, Re Z]] >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..errors import UsageError
from ..instance import ProblemInstance


@dataclass(eq=False)
class ConicProgram:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: list
    kind: str
    n_antennas: int
    n_users: int
    excluded: frozenset
    decode: Callable = field(repr=False, default=None)
    trivially_infeasible: bool = False

    @property
    def n_vars(self):
        return self.c.shape[0]

    @property
    def active(self):
        return tuple(i for i in range(self.n_antennas) if i not in self.excluded)

    def dump(self, path) -> None:
        """Write a plain-text standard-form dump for external cross-checks."""
        A = self.A.tocoo()
        with open(path, "w") as fh:
            fh.write(f"# conic program kind={self.kind} n_vars={self.n_vars} n_rows={A.shape[0]}\n")
            fh.write("cones " + " ".join(f"{k}:{d}" for k, d in self.cones) + "\n")
            fh.write("c " + " ".join(repr(float(v)) for v in self.c) + "\n")
            fh.write("b " + " ".join(repr(float(v)) for v in self.b) + "\n")
            for i, j, v in zip(A.row, A.col, A.data):
                fh.write(f"A {i} {j} {float(v)!r}\n")


def _split_excluded(inst: ProblemInstance, excluded):
    excluded = frozenset(int(i) for i in excluded)
    if any(i < 0 or i >= inst.N for i in excluded):
        raise UsageError(f"excluded antennas {sorted(excluded)} outside [0, {inst.N})")
    active = np.array([i for i in range(inst.N) if i not in excluded], dtype=int)
    return excluded, active


class _Rows:
    """Accumulates dense constraint rows grouped by cone."""

    def __init__(self, n_vars):
        self.n_vars = n_vars
        self.blocks = []
        self.cones = []

    def add(self, kind, dim, A, b):
        A = np.asarray(A, dtype=float).reshape(-1, self.n_vars)
        b = np.asarray(b, dtype=float).reshape(-1)
        self.blocks.append((A, b))
        self.cones.append((kind, dim))

    def finish(self):
        A = np.vstack([blk[0] for blk in self.blocks])
        b = np.concatenate([blk[1] for blk in self.blocks])
        return sp.csc_matrix(A), b, list(self.cones)


def _full_W(inst, active, Wa):
    W = np.zeros((inst.N, inst.M), dtype=complex)
    if active.size:
        W[active] = Wa
    return W


# ---------------------------------------------------------------------------
# beamformer SOCP and its variants


def _bf_layout(n, M):
    """Indices of Re and Im parts of each active beamformer entry (after the lead variable)."""
    re = 1 + np.arange(n * M).reshape(n, M)
    im = 1 + n * M + np.arange(n * M).reshape(n, M)
    return re, im


def _sinr_rows(rows, inst, active, re, im, n_vars):
    """Zero rows pinning Im(w_m^H h_m) = 0 and one SOC per user for the SINR target.

    The cone reads Re(w_m^H h_m) / sqrt(gamma_m) >= ||[(w_l^H h_m)_{l != m}, sigma_m]||,
    which squares to the SINR constraint exactly.
    """
    M = inst.M
    Hs = inst.H[active]
    hr, hi = Hs.real, Hs.imag
    Z = np.zeros((M, n_vars))
    for m in range(M):
        Z[m, re[:, m]] = hi[:, m]
        Z[m, im[:, m]] = -hr[:, m]
    rows.add("zero", M, Z, np.zeros(M))
    scale = 1.0 / np.sqrt(inst.config.gamma)
    noise = np.sqrt(inst.config.sigma2)
    for m in range(M):
        G = np.zeros((2 * M, n_vars))
        b = np.zeros(2 * M)
        G[0, re[:, m]] = scale[m] * hr[:, m]
        G[0, im[:, m]] = scale[m] * hi[:, m]
        r = 1
        for l in range(M):
            if l == m:
                continue
            G[r, re[:, l]] = hr[:, m]
            G[r, im[:, l]] = hi[:, m]
            G[r + 1, re[:, l]] = hi[:, m]
            G[r + 1, im[:, l]] = -hr[:, m]
            r += 2
        b[-1] = noise[m]
        rows.add("soc", 2 * M, -G, b)


def _objective_rows(rows, n_bf, n_vars):
    """tau >= ||vec(W)||, with tau the first variable."""
    G = np.zeros((1 + n_bf, n_vars))
    G[0, 0] = 1.0
    G[1:, 1 : 1 + n_bf] = np.eye(n_bf)
    rows.add("soc", 1 + n_bf, -G, np.zeros(1 + n_bf))


def _decode_bf(inst, active, n, M):
    re, im = _bf_layout(n, M)

    def decode(x):
        Wa = x[re] + 1j * x[im]
        return {"W": _full_W(inst, active, Wa)}

    return decode


def _infeasible_stub(inst, excluded, kind):
    return ConicProgram(
        c=np.zeros(1),
        A=sp.csc_matrix((0, 1)),
        b=np.zeros(0),
        cones=[],
        kind=kind,
        n_antennas=inst.N,
        n_users=inst.M,
        excluded=excluded,
        decode=lambda x: {"W": np.zeros((inst.N, inst.M), dtype=complex)},
        trivially_infeasible=True,
    )


def build_bf_socp(inst: ProblemInstance, excluded=()) -> ConicProgram:
    """Power minimisation under SINR targets with the rows in ``excluded`` removed."""
    if inst.config.robust:
        raise UsageError("SOCP formulation requires perfect CSI; use build_rbf_sdr")
    excluded, active = _split_excluded(inst, excluded)
    n, M = active.size, inst.M
    if n == 0:
        return _infeasible_stub(inst, excluded, "socp")
    n_bf = 2 * n * M
    n_vars = 1 + n_bf
    re, im = _bf_layout(n, M)
    rows = _Rows(n_vars)
    _sinr_rows(rows, inst, active, re, im, n_vars)
    _objective_rows(rows, n_bf, n_vars)
    A, b, cones = rows.finish()
    c = np.zeros(n_vars)
    c[0] = 1.0
    return ConicProgram(c, A, b, cones, "socp", inst.N, inst.M, excluded, _decode_bf(inst, active, n, M))


def build_z_relaxation(inst: ProblemInstance, include=(), exclude=(), big_c=1.0) -> ConicProgram:
    """Box relaxation of the Boolean antenna-indicator formulation.

    Rows in ``exclude`` are fixed off (z=0, removed), rows in ``include`` have
    z=1, the rest carry ``z(n) in [0, 1]`` with ``||W(n,:)|| <= big_c z(n)`` and
    the budget ``sum z <= L``.
    """
    if inst.config.robust:
        raise UsageError("indicator relaxation is implemented for perfect CSI only")
    excluded, active = _split_excluded(inst, exclude)
    include = frozenset(int(i) for i in include)
    if include & excluded:
        raise UsageError("include and exclude sets overlap")
    n, M = active.size, inst.M
    if n == 0:
        return _infeasible_stub(inst, excluded, "zsocp")
    free = [k for k, i in enumerate(active) if i not in include]
    fixed = [k for k, i in enumerate(active) if i in include]
    n_bf = 2 * n * M
    nz = len(free)
    n_vars = 1 + n_bf + nz
    re, im = _bf_layout(n, M)
    zidx = 1 + n_bf + np.arange(nz)
    rows = _Rows(n_vars)
    _sinr_rows(rows, inst, active, re, im, n_vars)
    _objective_rows(rows, n_bf, n_vars)
    if nz:
        G = np.zeros((2 * nz + 1, n_vars))
        b = np.zeros(2 * nz + 1)
        G[np.arange(nz), zidx] = 1.0  # z >= 0
        G[nz + np.arange(nz), zidx] = -1.0  # 1 - z >= 0
        b[nz : 2 * nz] = 1.0
        G[2 * nz, zidx] = -1.0  # L - |include| - sum z >= 0
        b[2 * nz] = inst.L - len(include)
        rows.add("nonneg", 2 * nz + 1, -G, b)
    for k in range(n):
        G = np.zeros((1 + 2 * M, n_vars))
        b = np.zeros(1 + 2 * M)
        if k in fixed:
            b[0] = big_c
        else:
            G[0, zidx[free.index(k)]] = big_c
        G[1 : 1 + M, re[k]] = np.eye(M)
        G[1 + M :, im[k]] = np.eye(M)
        rows.add("soc", 1 + 2 * M, -G, b)
    A, b, cones = rows.finish()
    c = np.zeros(n_vars)
    c[0] = 1.0
    base = _decode_bf(inst, active, n, M)

    def decode(x):
        out = base(x)
        z = np.zeros(inst.N)
        z[active[fixed]] = 1.0
        z[active[free]] = x[zidx]
        out["z"] = z
        return out

    return ConicProgram(c, A, b, cones, "zsocp", inst.N, inst.M, excluded, decode)


def build_reweighted_socp(inst: ProblemInstance, weights, lam, excluded=()) -> ConicProgram:
    """min ||W||_F^2 + lam * sum_n u_n t_n with t_n >= |W(n, j)| for all j.

    The squared Frobenius norm is carried by a rotated-cone epigraph
    ``tau >= ||W||_F^2`` written as a standard second-order cone.
    """
    excluded, active = _split_excluded(inst, excluded)
    n, M = active.size, inst.M
    if n == 0:
        return _infeasible_stub(inst, excluded, "ircvx")
    u = np.asarray(weights, dtype=float)[active]
    n_bf = 2 * n * M
    n_vars = 1 + n_bf + n
    re, im = _bf_layout(n, M)
    tidx = 1 + n_bf + np.arange(n)
    rows = _Rows(n_vars)
    _sinr_rows(rows, inst, active, re, im, n_vars)
    # (tau + 1)/2 >= || ((tau - 1)/2, vec W) ||  <=>  tau >= ||vec W||^2
    G = np.zeros((2 + n_bf, n_vars))
    b = np.zeros(2 + n_bf)
    G[0, 0], b[0] = 0.5, 0.5
    G[1, 0], b[1] = 0.5, -0.5
    G[2:, 1 : 1 + n_bf] = np.eye(n_bf)
    rows.add("soc", 2 + n_bf, -G, b)
    for k in range(n):
        for j in range(M):
            G = np.zeros((3, n_vars))
            G[0, tidx[k]] = 1.0
            G[1, re[k, j]] = 1.0
            G[2, im[k, j]] = 1.0
            rows.add("soc", 3, -G, np.zeros(3))
    A, b, cones = rows.finish()
    c = np.zeros(n_vars)
    c[0] = 1.0
    c[tidx] = lam * u
    base = _decode_bf(inst, active, n, M)

    def decode(x):
        out = base(x)
        t = np.zeros(inst.N)
        t[active] = x[tidx]
        out["t"] = t
        return out

    return ConicProgram(c, A, b, cones, "ircvx", inst.N, inst.M, excluded, decode)


# ---------------------------------------------------------------------------
# robust SDR


@lru_cache(maxsize=None)
def hermitian_basis(n):
    """Basis matrices of n x n Hermitian matrices: diag, symmetric real, skew imaginary parts.

    Returns ``(basis, is_diag)`` with ``basis`` of shape ``(n*n, n, n)``.
    """
    mats = []
    diag = []
    for j in range(n):
        for i in range(j + 1):
            B = np.zeros((n, n), dtype=complex)
            B[i, j] = 1.0
            B[j, i] = 1.0
            mats.append(B)
            diag.append(i == j)
    for j in range(n):
        for i in range(j):
            B = np.zeros((n, n), dtype=complex)
            B[i, j] = 1j
            B[j, i] = -1j
            mats.append(B)
            diag.append(False)
    basis = np.array(mats).reshape(n * n, n, n)
    basis.setflags(write=False)
    return basis, np.array(diag)


def real_embedding(Z):
    """[[Re Z, -Im Z], [Im Z, Re Z]] applied over the last two axes."""
    re, im = Z.real, Z.imag
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def _vec_cols(mats):
    """Column-major vectorisation of a stack of square matrices -> (k*k, count)."""
    k = mats.shape[-1]
    return np.transpose(mats, (0, 2, 1)).reshape(mats.shape[0], k * k).T


def _lmi_lift(B, h):
    """Map Hermitian matrices B (stack) to [[B, Bh], [h^H B, h^H B h]]."""
    Bh = B @ h
    hBh = np.einsum("i,kij,j->k", h.conj(), B, h)
    count, n = B.shape[0], B.shape[1]
    out = np.zeros((count, n + 1, n + 1), dtype=complex)
    out[:, :n, :n] = B
    out[:, :n, n] = Bh
    out[:, n, :n] = Bh.conj()
    out[:, n, n] = hBh.real
    return out


def build_rbf_sdr(inst: ProblemInstance, excluded=(), row_weights=None, lam=0.0) -> ConicProgram:
    """S-procedure SDR of worst-case robust beamforming over the active rows.

    For user m with Q_m = W_m / gamma_m - sum_{j != m} W_j the constraint is

        [[Q_m + t_m I, Q_m h_m], [h_m^H Q_m, h_m^H Q_m h_m - sigma_m^2 - t_m eps_m^2]] >= 0.

    With ``row_weights`` the objective gains ``lam * sum_n u_n r_n`` where
    ``r_n >= W_m(n, n)`` for every user.
    """
    if not inst.config.robust:
        raise UsageError("SDR formulation requires robust CSI; use build_bf_socp")
    excluded, active = _split_excluded(inst, excluded)
    n, M = active.size, inst.M
    if n == 0:
        return _infeasible_stub(inst, excluded, "sdr")
    cfg = inst.config
    basis, is_diag = hermitian_basis(n)
    nb = n * n
    n_rw = n if row_weights is not None else 0
    n_vars = M * nb + M + n_rw
    tvar = M * nb + np.arange(M)
    rvar = M * nb + M + np.arange(n_rw)
    diag_idx = np.flatnonzero(is_diag)
    Hs = inst.H[active]
    rows = _Rows(n_vars)

    emb_basis = _vec_cols(real_embedding(basis))  # (4n^2, nb)
    for m in range(M):
        G = np.zeros((4 * n * n, n_vars))
        G[:, m * nb : (m + 1) * nb] = emb_basis
        rows.add("psd", 2 * n, -G, np.zeros(4 * n * n))

    k = 2 * (n + 1)
    for m in range(M):
        h = Hs[:, m]
        lifted = _vec_cols(real_embedding(_lmi_lift(basis, h)))  # (k*k, nb)
        G = np.zeros((k * k, n_vars))
        for j in range(M):
            coef = 1.0 / cfg.gamma[m] if j == m else -1.0
            G[:, j * nb : (j + 1) * nb] = coef * lifted
        tmat = np.zeros((n + 1, n + 1), dtype=complex)
        tmat[:n, :n] = np.eye(n)
        tmat[n, n] = -cfg.eps[m] ** 2
        G[:, tvar[m]] = _vec_cols(real_embedding(tmat[None]))[:, 0]
        const = np.zeros((n + 1, n + 1), dtype=complex)
        const[n, n] = -cfg.sigma2[m]
        b = _vec_cols(real_embedding(const[None]))[:, 0]
        rows.add("psd", k, -G, b)
    rows.add("nonneg", M, -np.eye(M, n_vars, M * nb), np.zeros(M))
    if n_rw:
        G = np.zeros((M * n, n_vars))
        for m in range(M):
            for k in range(n):
                G[m * n + k, rvar[k]] = 1.0
                G[m * n + k, m * nb + diag_idx[k]] = -1.0
        rows.add("nonneg", M * n, -G, np.zeros(M * n))

    A, b, cones = rows.finish()
    c = np.zeros(n_vars)
    for m in range(M):
        c[m * nb : (m + 1) * nb][is_diag] = 1.0
    if n_rw:
        c[rvar] = lam * np.asarray(row_weights, dtype=float)[active]

    def decode(x):
        lifted = [np.tensordot(x[m * nb : (m + 1) * nb], basis, axes=1) for m in range(M)]
        Wa, ratio, ratios = extract_rank_one(lifted, return_all=True)
        return {
            "W": _full_W(inst, active, Wa),
            "lifted": lifted,
            "rank_ratio": ratios,
            "slack": x[tvar].copy(),
            "t": _row_vals(inst, active, x[rvar]) if n_rw else None,
        }

    return ConicProgram(c, A, b, cones, "sdr", inst.N, inst.M, excluded, decode)


def _row_vals(inst, active, vals):
    out = np.zeros(inst.N)
    out[active] = vals
    return out


def build_restricted(inst: ProblemInstance, excluded=()) -> ConicProgram:
    """The continuous subproblem for the instance's CSI mode."""
    if inst.config.robust:
        return build_rbf_sdr(inst, excluded)
    return build_bf_socp(inst, excluded)


RANK_ONE_RTOL = 1e-7


def extract_rank_one(lifted, return_all=False):
    """Dominant-eigenpair beamformers ``w_m = sqrt(lambda_1) v_1`` and min ``lambda_1/lambda_2``.

    The returned beamformers are phase-normalised so their largest-magnitude
    entry is real and positive.
    """
    cols = []
    ratios = []
    for Wm in lifted:
        Wm = 0.5 * (Wm + Wm.conj().T)
        vals, vecs = np.linalg.eigh(Wm)
        l1 = max(vals[-1], 0.0)
        l2 = max(vals[-2], 0.0) if vals.size > 1 else 0.0
        v = vecs[:, -1]
        k = int(np.argmax(np.abs(v)))
        if abs(v[k]) > 0:
            v = v * (abs(v[k]) / v[k])
        cols.append(np.sqrt(l1) * v)
        if l1 <= 0.0 or l2 <= RANK_ONE_RTOL * l1:
            ratios.append(np.inf)
        else:
            ratios.append(l1 / l2)
    W = np.column_stack(cols) if cols else np.zeros((0, 0), dtype=complex)
    ratios = np.array(ratios)
    rmin = float(ratios.min()) if ratios.size else np.inf
    if return_all:
        return W, rmin, ratios
    return W, rmin


@dataclass(frozen=True)
class TightnessCheck:
    ok: bool
    reason: str = None
    margins: tuple = ()

    def __bool__(self):
        return self.ok


def check_sdr_tightness(inst: ProblemInstance, subset) -> TightnessCheck:
    """Sufficient condition for the SDR to be tight on the antenna subset ``subset``."""
    S = sorted(int(i) for i in subset)
    M = inst.M
    if len(S) < M:
        raise UsageError(f"subset of size {len(S)} cannot separate {M} users")
    Hs = inst.H[S]
    gamma, eps = inst.config.gamma, inst.config.eps
    margins = []
    for m in range(M):
        Hm = np.delete(Hs, m, axis=1)
        h = Hs[:, m]
        if Hm.shape[1]:
            s = np.linalg.svd(Hm, compute_uv=False)
            if s[-1] <= 1e-12 * max(s[0], 1.0):
                return TightnessCheck(False, f"interference channel of user {m} is rank deficient")
            G = Hm.conj().T @ Hm
            proj = h - Hm @ np.linalg.solve(G, Hm.conj().T @ h)
        else:
            proj = h
        lhs = np.inf if eps[m] == 0 else np.linalg.norm(proj) ** 2 / eps[m] ** 2
        rhs = 1 + M + (M - 1.0 / M) * gamma[m]
        margins.append(lhs - rhs)
    ok = all(v > 0 for v in margins)
    return TightnessCheck(ok, None if ok else "separation condition violated", tuple(margins))
