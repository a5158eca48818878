from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import SolverError
from ..instance import row_powers
from .backends import ConicBackend, get_backend

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_ERROR = "numerical_error"

# relative residual accepted for an "almost solved" backend answer
ALMOST_TOL = 1e-6


@dataclass
class ConicSolution:
    status: str
    objective: float
    W: np.ndarray
    row_powers: np.ndarray
    rank_ratio: np.ndarray = None
    lifted: list = None
    x: np.ndarray = field(default=None, repr=False)
    info: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def feasible(self):
        return self.status == OPTIMAL

    @property
    def min_rank_ratio(self):
        if self.rank_ratio is None or len(self.rank_ratio) == 0:
            return np.inf
        return float(np.min(self.rank_ratio))


def cone_residual(prog, s) -> float:
    """Largest cone violation of the slack ``s`` (0 when s lies in K)."""
    worst = 0.0
    row = 0
    for kind, dim in prog.cones:
        if kind == "zero":
            v = float(np.max(np.abs(s[row : row + dim]))) if dim else 0.0
            row += dim
        elif kind == "nonneg":
            v = float(max(0.0, -np.min(s[row : row + dim]))) if dim else 0.0
            row += dim
        elif kind == "soc":
            blk = s[row : row + dim]
            v = max(0.0, float(np.linalg.norm(blk[1:]) - blk[0]))
            row += dim
        else:
            S = s[row : row + dim * dim].reshape(dim, dim, order="F")
            v = max(0.0, -float(np.linalg.eigvalsh(0.5 * (S + S.T))[0]))
            row += dim * dim
        worst = max(worst, v)
    return worst


def _empty(prog, status, info=None):
    W = np.zeros((prog.n_antennas, prog.n_users), dtype=complex)
    return ConicSolution(status, np.inf, W, np.zeros(prog.n_antennas), info=info or {})


def solve(prog, backend: ConicBackend = None, strict=False) -> ConicSolution:
    """Solve a conic program.

    Infeasible programs report an infinite objective.  Backend failures give
    status ``numerical_error``, or raise :class:`SolverError` when ``strict``.
    """
    if prog.trivially_infeasible:
        return _empty(prog, INFEASIBLE, {"backend": "none", "raw_status": "no active antennas"})
    backend = backend or get_backend()
    raw = backend.solve(prog)
    info = dict(raw.info or {})
    if raw.status == "infeasible":
        return _empty(prog, INFEASIBLE, info)
    if raw.status in ("solved", "almost") and raw.x is not None and np.all(np.isfinite(raw.x)):
        scale = 1.0 + float(np.max(np.abs(prog.b))) + float(np.max(np.abs(raw.x)))
        resid = cone_residual(prog, raw.s)
        info["residual"] = resid
        limit = 1e-7 if raw.status == "solved" else ALMOST_TOL
        if resid <= limit * scale:
            out = prog.decode(raw.x)
            W = out.pop("W")
            sol = ConicSolution(
                OPTIMAL,
                float(np.sum(np.abs(W) ** 2)),
                W,
                row_powers(W),
                rank_ratio=out.pop("rank_ratio", None),
                lifted=out.pop("lifted", None),
                x=raw.x,
                info=info,
                extra=out,
            )
            if sol.lifted is not None:
                sol.objective = float(sum(np.trace(X).real for X in sol.lifted))
            return sol
    if strict:
        raise SolverError(f"conic backend {info.get('backend')} failed: {info.get('raw_status')}")
    return _empty(prog, NUMERICAL_ERROR, info)
