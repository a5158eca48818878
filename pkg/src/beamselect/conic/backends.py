"""Standard-form cone solvers.

Both backends consume a :class:`ConicProgram` and return a :class:`RawResult`
with the primal vector, the cone slack and a coarse status string
(``"solved"``, ``"almost"``, ``"infeasible"`` or ``"failed"``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass
class RawResult:
    status: str
    x: np.ndarray = None
    s: np.ndarray = None
    z: np.ndarray = None
    info: dict = None


class ConicBackend:
    name = "abstract"

    def solve(self, prog) -> RawResult:
        raise NotImplementedError


def _psd_tri_map(k):
    """Row indices (i + j*k, j + i*k) and scale of each upper-triangle entry, column-wise."""
    pairs = []
    for j in range(k):
        for i in range(j + 1):
            pairs.append((i + j * k, j + i * k, 1.0 if i == j else np.sqrt(2.0)))
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    w = np.array([p[2] for p in pairs])
    return a, b, w


class ClarabelBackend(ConicBackend):
    """Interior-point backend built on the Clarabel solver."""

    name = "clarabel"

    def __init__(self, tol=1e-8, max_iter=200):
        self.tol = tol
        self.max_iter = max_iter

    def _convert(self, prog):
        import clarabel

        A = prog.A.tocsr()
        b = prog.b
        blocks_A, blocks_b, cones = [], [], []
        row = 0
        for kind, dim in prog.cones:
            if kind == "psd":
                size = dim * dim
                ia, ib, w = _psd_tri_map(dim)
                Ablk = A[row : row + size]
                blocks_A.append(sp.diags(0.5 * w) @ (Ablk[ia] + Ablk[ib]))
                blocks_b.append(0.5 * w * (b[row + ia] + b[row + ib]))
                cones.append(clarabel.PSDTriangleConeT(dim))
            else:
                size = dim
                blocks_A.append(A[row : row + size])
                blocks_b.append(b[row : row + size])
                if kind == "zero":
                    cones.append(clarabel.ZeroConeT(dim))
                elif kind == "nonneg":
                    cones.append(clarabel.NonnegativeConeT(dim))
                elif kind == "soc":
                    cones.append(clarabel.SecondOrderConeT(dim))
                else:
                    raise ValueError(f"unknown cone {kind!r}")
            row += size
        Ac = sp.vstack(blocks_A).tocsc()
        bc = np.concatenate(blocks_b)
        return Ac, bc, cones

    # settings tried in order; ill-conditioned SDRs near the feasibility
    # boundary often only converge without dynamic regularization
    PROFILES = (
        {},
        {"dynamic_regularization_enable": False, "static_regularization_constant": 1e-7},
        {"dynamic_regularization_enable": False, "max_step_fraction": 0.9},
    )

    def _run(self, prog, Ac, bc, cones, profile):
        import clarabel

        n = prog.n_vars
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_feas = self.tol
        settings.tol_gap_abs = self.tol
        settings.tol_gap_rel = self.tol
        settings.max_iter = self.max_iter
        for key, value in profile.items():
            setattr(settings, key, value)
        return clarabel.DefaultSolver(sp.csc_matrix((n, n)), prog.c, Ac, bc, cones, settings).solve()

    def solve(self, prog) -> RawResult:
        Ac, bc, cones = self._convert(prog)
        first = None
        for attempt, profile in enumerate(self.PROFILES):
            sol = self._run(prog, Ac, bc, cones, profile)
            status = str(sol.status)
            if status in ("Solved", "PrimalInfeasible"):
                break
            if first is None:
                first = (sol, status, attempt)
        else:
            sol, status, attempt = first
        x = np.asarray(sol.x)
        z = np.asarray(sol.z)
        info = {"backend": self.name, "raw_status": status, "iterations": sol.iterations, "attempt": attempt}
        if status == "Solved":
            code = "solved"
        elif status == "AlmostSolved":
            code = "almost"
        elif status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            code = "infeasible"
        else:
            code = "failed"
        s = prog.b - prog.A @ x
        return RawResult(code, x, s, z, info)


class CvxoptBackend(ConicBackend):
    """Reference backend: dense primal-dual barrier method from cvxopt (small sizes only)."""

    name = "cvxopt"

    def __init__(self, tol=1e-8, max_iter=200):
        self.tol = tol
        self.max_iter = max_iter

    def solve(self, prog) -> RawResult:
        from cvxopt import matrix, solvers

        A = prog.A.toarray()
        b = prog.b
        eq_rows, l_rows, q_rows, s_rows = [], [], [], []
        dims = {"l": 0, "q": [], "s": []}
        row = 0
        for kind, dim in prog.cones:
            size = dim * dim if kind == "psd" else dim
            idx = list(range(row, row + size))
            if kind == "zero":
                eq_rows += idx
            elif kind == "nonneg":
                l_rows += idx
                dims["l"] += dim
            elif kind == "soc":
                q_rows += idx
                dims["q"].append(dim)
            elif kind == "psd":
                s_rows += idx
                dims["s"].append(dim)
            row += size
        order = l_rows + q_rows + s_rows
        G = matrix(A[order])
        h = matrix(b[order])
        kwargs = {}
        if eq_rows:
            kwargs["A"] = matrix(A[eq_rows])
            kwargs["b"] = matrix(b[eq_rows])
        opts = {
            "show_progress": False,
            "abstol": self.tol,
            "reltol": self.tol,
            "feastol": self.tol,
            "maxiters": self.max_iter,
        }
        try:
            sol = solvers.conelp(matrix(prog.c), G, h, dims, options=opts, **kwargs)
        except (ValueError, ArithmeticError) as exc:
            return RawResult("failed", info={"backend": self.name, "raw_status": str(exc)})
        status = sol["status"]
        info = {"backend": self.name, "raw_status": status, "iterations": sol.get("iterations")}
        if status == "optimal":
            x = np.array(sol["x"]).ravel()
            return RawResult("solved", x, prog.b - prog.A @ x, None, info)
        if status == "primal infeasible":
            return RawResult("infeasible", info=info)
        if sol.get("x") is not None:
            x = np.array(sol["x"]).ravel()
            return RawResult("almost", x, prog.b - prog.A @ x, None, info)
        return RawResult("failed", info=info)


_BACKENDS = {"clarabel": ClarabelBackend, "cvxopt": CvxoptBackend}


def get_backend(name=None) -> ConicBackend:
    """Backend by name; defaults to ``$BEAMSELECT_BACKEND`` or Clarabel."""
    name = name or os.environ.get("BEAMSELECT_BACKEND", "clarabel")
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise ValueError(f"unknown conic backend {name!r}; choose from {sorted(_BACKENDS)}") from None
