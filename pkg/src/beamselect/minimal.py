"""Branch and bound with a learned gate on node expansion."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bnb import BnbConfig, BnbResult, _engine
from .errors import ConfigurationError, DomainError
from .instance import ProblemInstance
from .policy import as_policy


@dataclass
class MinimalConfig:
    gate: float = 0.5
    rel_gap: float = 1e-4
    max_nodes: int = 100_000
    backend: str = None
    # skip the classifier until some feasible point is known
    feasibility_fallback: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gate <= 1.0:
            raise ConfigurationError(f"gate threshold must lie in [0, 1], got {self.gate}")


def run_minimal(inst: ProblemInstance, policy, config: MinimalConfig = None, reference=None, memo=None) -> BnbResult:
    """Expand a popped node only when the policy scores it at least ``config.gate``.

    ``reference`` (an exact objective) sets ``optimal_flag``.
    """
    cfg = config or MinimalConfig()
    pol = as_policy(policy)

    def gate(node, snap):
        return pol.prob(node, snap, inst) >= cfg.gate

    bcfg = BnbConfig(rel_gap=cfg.rel_gap, max_nodes=cfg.max_nodes, backend=cfg.backend)
    res = _engine(
        inst,
        bcfg,
        gate=gate,
        memo=memo,
        method="minimal",
        bypass_gate_until_feasible=cfg.feasibility_fallback,
    )
    if reference is not None and math.isfinite(reference):
        res.optimal_flag = bool(res.objective <= reference * (1.0 + 1e-6) + 1e-12)
    return res


def node_budget_bound(rho: float, N: int) -> float:
    """Expected number of expanded nodes for a classifier of per-node accuracy ``rho``."""
    if not 0.5 < rho <= 1.0:
        raise DomainError(f"accuracy must lie in (0.5, 1], got {rho}")
    return 2.0 * N * (2.0 * rho - rho**N) / (2.0 * rho - 1.0) + 1.0


def accuracy_lower_bound(expected_loss: float) -> float:
    """Per-node accuracy implied by an expected cross-entropy."""
    if expected_loss < 0:
        raise DomainError("expected loss must be nonnegative")
    return math.exp(-expected_loss)


def optimality_probability_floor(rho: float, N: int) -> float:
    """Probability that all N decisions along the optimal path are correct."""
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"accuracy must lie in [0, 1], got {rho}")
    return rho**N
