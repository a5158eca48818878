"""Heuristic comparison methods: greedy antenna deletion and reweighted sparse relaxation."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .bnb import RANK_WARNING_RATIO, BnbResult, SubproblemCache
from .conic import INFEASIBLE, build_rbf_sdr, build_reweighted_socp, get_backend
from .errors import ConfigurationError
from .instance import ProblemInstance


def _result(inst, method, W, A, obj, cache, t0, status=None):
    if W is None:
        W = np.zeros((inst.N, inst.M), dtype=complex)
    feasible = math.isfinite(obj)
    return BnbResult(
        W_star=W,
        A_star=frozenset(A) if feasible else frozenset(),
        objective=obj,
        conic_solve_count=cache.solves,
        nodes_visited=0,
        bound_trace=[(obj, obj)],
        wall_time=time.perf_counter() - t0,
        status=status or ("feasible" if feasible else INFEASIBLE),
        rank_warning=bool(inst.config.robust and cache.min_rank_ratio < RANK_WARNING_RATIO),
        min_rank_ratio=cache.min_rank_ratio,
        method=method,
    )


def run_greedy(inst: ProblemInstance, backend=None) -> BnbResult:
    """Switch off, one at a time, the antenna whose removal costs the least power."""
    t0 = time.perf_counter()
    N, L = inst.N, inst.L
    # no memo: every candidate of every stage is a distinct solve
    cache = SubproblemCache(inst, backend if backend is not None else get_backend(), enabled=False)
    kept = list(range(N))
    if L == N:
        sol = cache.restricted(frozenset())
        return _result(inst, "greedy", sol.W, kept, sol.objective, cache, t0)
    best_sol = None
    while len(kept) > L:
        off = frozenset(range(N)) - frozenset(kept)
        best_n, best_sol = None, None
        for n in kept:
            sol = cache.restricted(off | {n})
            if sol.status != INFEASIBLE and (best_sol is None or sol.objective < best_sol.objective):
                best_n, best_sol = n, sol
        if best_n is None:
            return _result(inst, "greedy", None, (), math.inf, cache, t0)
        kept.remove(best_n)
    return _result(inst, "greedy", best_sol.W, kept, best_sol.objective, cache, t0)


@dataclass
class IrCvxConfig:
    max_inner: int = 30
    bisection_steps: int = 30
    reweight_tol: float = 1e-4
    eps_smooth: float = 1e-6
    zero_row_rtol: float = 1e-6
    lambda_init: float = None
    lambda_growth_steps: int = 10

    def __post_init__(self):
        for name in ("max_inner", "bisection_steps", "lambda_growth_steps"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("reweight_tol", "eps_smooth", "zero_row_rtol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")


def _reweighted_solve(inst, lam, cfg, cache):
    """Inner reweighting loop at fixed ``lam``; returns (solution, active row count)."""
    N = inst.N
    u = np.ones(N)
    sol = None
    for _ in range(cfg.max_inner):
        if inst.config.robust:
            prog = build_rbf_sdr(inst, (), row_weights=u, lam=lam)
        else:
            prog = build_reweighted_socp(inst, u, lam)
        sol = cache.fresh(prog)
        if sol.status == INFEASIBLE:
            return None, N + 1
        t = np.maximum(sol.extra["t"], 0.0)
        active = int(np.sum(t > cfg.zero_row_rtol * max(t.max(), 1e-300)))
        if active <= inst.L:
            return sol, active
        u_new = 1.0 / (t + cfg.eps_smooth)
        change = np.linalg.norm(u_new - u) / np.linalg.norm(u)
        u = u_new
        if change < cfg.reweight_tol:
            break
    return sol, active


def run_ircvxopt(inst: ProblemInstance, cfg: IrCvxConfig = None, backend=None) -> BnbResult:
    """Row-sparse reweighted relaxation, bisection on the sparsity weight, then a restricted re-solve."""
    cfg = cfg or IrCvxConfig()
    t0 = time.perf_counter()
    N, L = inst.N, inst.L
    cache = SubproblemCache(inst, backend if backend is not None else get_backend(), enabled=False)
    if L == N:
        sol = cache.restricted(frozenset())
        return _result(inst, "ircvxopt", sol.W, range(N), sol.objective, cache, t0)

    base = cache.restricted(frozenset())
    if base.status == INFEASIBLE:
        return _result(inst, "ircvxopt", None, (), math.inf, cache, t0)
    lam_hi = cfg.lambda_init if cfg.lambda_init is not None else base.objective
    lam_lo = 0.0
    good, count = _reweighted_solve(inst, lam_hi, cfg, cache)
    last = good
    steps = 0
    while count > L and steps < cfg.lambda_growth_steps:
        lam_lo = lam_hi
        lam_hi *= 10.0
        sol, count = _reweighted_solve(inst, lam_hi, cfg, cache)
        last = sol or last
        good = sol if count <= L else None
        steps += 1
    if good is not None and count < L:
        for _ in range(cfg.bisection_steps):
            lam = 0.5 * (lam_lo + lam_hi)
            sol, c = _reweighted_solve(inst, lam, cfg, cache)
            if sol is not None and c <= L:
                lam_hi, good, count = lam, sol, c
                if c == L:
                    break
            else:
                lam_lo = lam
    final = good or last
    if final is None:
        return _result(inst, "ircvxopt", None, (), math.inf, cache, t0)
    power = np.sum(np.abs(final.W) ** 2, axis=1)
    keep = sorted(sorted(range(N), key=lambda i: (-power[i], i))[:L])
    sol = cache.restricted(frozenset(range(N)) - frozenset(keep))
    if sol.status == INFEASIBLE:
        return _result(inst, "ircvxopt", None, (), math.inf, cache, t0)
    return _result(inst, "ircvxopt", sol.W, keep, sol.objective, cache, t0)
