"""Generalization-gap calculator for the bounded-weight classifier."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class BoundInputs:
    B_x: float
    B_Z: float
    B_beta: float
    C_xi: float
    C_zeta: float
    C_L: float
    B_L: float
    U: int
    E: int
    D: int
    K: int
    delta: float

    def __post_init__(self):
        for name in ("B_x", "B_Z", "B_beta", "C_xi", "C_zeta", "C_L", "B_L"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("U", "E", "D", "K"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer")
        if not 0 < self.delta < 1:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")


def _check_alpha(alpha):
    if abs(alpha - 1.0) < 1e-12:
        raise DomainError("alpha = 1 makes the depth-dependent factors undefined")


def bound_constants(p: BoundInputs) -> dict:
    alpha = (1.0 + p.U * p.C_xi) * p.C_xi * p.B_Z
    _check_alpha(alpha)
    geo = (alpha**p.D - 1.0) / (alpha - 1.0)
    geo2 = (alpha ** (p.D + 1) - 2.0 * alpha + 1.0) / (alpha - 1.0) ** 2
    s_z1 = p.C_zeta * p.B_beta * p.U * p.C_xi**3 * p.B_Z * p.B_x * geo2
    s_z2 = p.U * p.C_xi * s_z1
    s_z3 = p.C_zeta * p.B_beta * p.U * p.C_xi**2 * p.B_Z * p.B_x * geo
    s_beta = p.C_zeta * p.B_x * alpha**p.D + p.C_zeta * p.U * p.C_xi**2 * p.B_Z * p.B_x * geo
    lam = 1.0 + 12.0 * math.sqrt(p.E * p.K) * p.B_Z * max(s_z1, s_z2, s_z3, (p.B_beta / p.B_Z) * s_beta)
    return {"alpha": alpha, "sigma_z1": s_z1, "sigma_z2": s_z2, "sigma_z3": s_z3, "sigma_beta": s_beta, "Lambda": lam}


def gap_terms(p: BoundInputs, Lambda=None):
    """The three additive terms of the gap; ``Lambda`` may be pinned by the caller."""
    lam = bound_constants(p)["Lambda"] if Lambda is None else Lambda
    if not lam > 1.0:
        raise DomainError(f"Lambda must exceed 1, got {lam}")
    K = p.K
    t1 = 8.0 * p.C_L / K
    t2 = 24.0 * p.C_L * p.B_L * math.sqrt((3 * p.E**2 + p.E) * math.log(lam)) / math.sqrt(K)
    t3 = 3.0 * p.B_L * math.sqrt(math.log(2.0 / p.delta) / (2.0 * K))
    return t1, t2, t3


def generalization_gap(p: BoundInputs, Lambda=None) -> float:
    """Upper bound on expected minus empirical loss holding with probability 1 - delta."""
    return float(sum(gap_terms(p, Lambda)))
