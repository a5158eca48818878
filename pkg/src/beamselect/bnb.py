"""Branch and bound over antenna include/exclude partitions.

A node fixes a set ``A`` of active antennas and a set ``B`` of switched-off
antennas.  Its lower bound drops the cardinality constraint and solves the
continuous problem with rows ``B`` removed; its upper bound switches off, in
addition, the weakest undecided rows of that relaxation until exactly ``L``
remain and solves the restricted problem.  Both programs depend on ``B`` only,
so a single cache keyed by the switched-off set serves every node, and a right
child (which keeps its parent's ``B``) costs no solve at all.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .conic import (
    INFEASIBLE,
    NUMERICAL_ERROR,
    build_restricted,
    build_z_relaxation,
    get_backend,
    solve,
)
from .errors import ConfigurationError, RefusalError, SolverError, UsageError
from .instance import ProblemInstance

log = logging.getLogger(__name__)

RANK_WARNING_RATIO = 1e4
EXHAUSTIVE_LIMIT = 10**6

DIRECT = "direct"
Z_AUX = "z_aux"


@dataclass(eq=False)
class NodeState:
    include: frozenset
    exclude: frozenset
    level: int
    node_id: int
    parent: int = None
    lb: float = math.inf
    ub: float = math.inf
    W_lb: np.ndarray = field(default=None, repr=False)
    W_ub: np.ndarray = field(default=None, repr=False)
    ub_support: frozenset = None
    is_leaf: bool = False

    def undecided(self, n):
        return [i for i in range(n) if i not in self.include and i not in self.exclude]


@dataclass
class BnbConfig:
    rel_gap: float = 1e-4
    max_nodes: int = 100_000
    formulation: str = DIRECT
    reuse_right_child: bool = True
    big_C: float = None
    backend: str = None

    def __post_init__(self):
        if not 0 < self.rel_gap < 1:
            raise ConfigurationError(f"rel_gap must lie in (0, 1), got {self.rel_gap}")
        if self.max_nodes < 1:
            raise ConfigurationError("max_nodes must be positive")
        if self.formulation not in (DIRECT, Z_AUX):
            raise ConfigurationError(f"unknown formulation {self.formulation!r}")
        if self.big_C is not None and self.big_C <= 0:
            raise ConfigurationError("big_C must be positive")


@dataclass
class BnbResult:
    W_star: np.ndarray
    A_star: frozenset
    objective: float
    conic_solve_count: int
    nodes_visited: int
    bound_trace: list
    wall_time: float
    status: str
    rank_warning: bool = False
    min_rank_ratio: float = math.inf
    big_C_binding: bool = False
    pruned_node_count: int = 0
    classifier_calls: int = 0
    optimal_flag: bool = None
    method: str = "bb"

    @property
    def feasible(self):
        return math.isfinite(self.objective)


@dataclass(frozen=True)
class Snapshot:
    """Global engine state visible to a node gate when a node is popped."""

    l_G: float
    u_G: float
    W_incumbent: np.ndarray
    root_lb: float
    rel_gap: float


# ---------------------------------------------------------------------------
# counting


def q_compute(N: int, L: int) -> int:
    """Worst-case number of conic solves of the direct formulation."""
    _check_nl(N, L)
    return math.comb(N, L) + sum(math.comb(N - i, L - 1) for i in range(2, N - L + 2))


def q_compute_alt(N: int, L: int) -> int:
    """Worst-case number of conic solves with the indicator-variable formulation."""
    _check_nl(N, L)
    return 2 * math.comb(N, L) - 1


def _check_nl(N, L):
    if not 1 <= L <= N:
        raise UsageError(f"need 1 <= L <= N, got N={N}, L={L}")


# ---------------------------------------------------------------------------
# subproblem cache


class SubproblemCache:
    """Restricted-problem solutions keyed by the switched-off antenna set.

    ``memo`` may be shared between engines working on the same instance to
    avoid recomputation; ``solves`` still counts every solve this engine would
    have issued on its own.
    """

    def __init__(self, inst, backend=None, enabled=True, memo=None):
        self.inst = inst
        self.backend = backend if backend is not None else get_backend()
        self.enabled = enabled
        self.local = set()
        self.memo = memo if memo is not None else {}
        self.solves = 0
        self.min_rank_ratio = math.inf

    def restricted(self, excluded, node_id=None):
        key = frozenset(excluded)
        if self.enabled and key in self.local:
            return self.memo[key]
        self.solves += 1
        self.local.add(key)
        if key in self.memo:
            sol = self.memo[key]
        else:
            sol = self._solve(build_restricted(self.inst, key), node_id)
            self.memo[key] = sol
        self.min_rank_ratio = min(self.min_rank_ratio, sol.min_rank_ratio)
        return sol

    def fresh(self, prog, node_id=None):
        self.solves += 1
        return self._solve(prog, node_id)

    def _solve(self, prog, node_id):
        sol = solve(prog, self.backend)
        if sol.status == NUMERICAL_ERROR:
            # second opinion from the reference backend before giving up
            ref = get_backend("cvxopt") if self.backend.name != "cvxopt" else None
            if ref is not None:
                sol = solve(prog, ref)
        if sol.status == NUMERICAL_ERROR:
            raise SolverError(f"conic solve failed ({sol.info.get('raw_status')})", node_id=node_id)
        return sol


# ---------------------------------------------------------------------------
# node operations


def lower_bound(node: NodeState, inst: ProblemInstance, cache: SubproblemCache):
    """Relaxation bound with the cardinality constraint dropped and rows ``B`` removed."""
    sol = cache.restricted(node.exclude, node.node_id)
    if sol.status == INFEASIBLE:
        return math.inf, None
    return sol.objective, sol.W


def ub_exclusion(node: NodeState, W_lb, N: int, L: int) -> frozenset:
    """B plus the weakest undecided rows of ``W_lb`` until N - L rows are off."""
    need = N - L - len(node.exclude)
    if need <= 0:
        return frozenset(node.exclude)
    free = node.undecided(N)
    power = np.sum(np.abs(W_lb) ** 2, axis=1)
    order = sorted(free, key=lambda i: (power[i], i))
    return frozenset(node.exclude) | frozenset(order[:need])


def upper_bound(node: NodeState, W_lb, inst: ProblemInstance, cache: SubproblemCache):
    """Feasible value obtained by keeping the L strongest admissible rows of the relaxation."""
    if W_lb is None:
        return math.inf, None, None
    support = ub_exclusion(node, W_lb, inst.N, inst.L)
    sol = cache.restricted(support, node.node_id)
    if sol.status == INFEASIBLE:
        return math.inf, None, support
    return sol.objective, sol.W, support


def select_node(open_nodes):
    """Lowest lower bound first, ties to the shallower node, then the older one.

    Returns ``None`` when there is nothing left to branch on.
    """
    candidates = [nd for nd in open_nodes if not nd.is_leaf]
    if not candidates:
        return None
    return min(candidates, key=lambda nd: (nd.lb, nd.level, nd.node_id))


def select_branch_antenna(node: NodeState, W_lb, N: int) -> int:
    """Undecided antenna carrying the largest relaxation power (ties to the smallest index)."""
    free = node.undecided(N)
    if not free:
        raise UsageError(f"node {node.node_id} has no undecided antennas")
    power = np.sum(np.abs(W_lb) ** 2, axis=1)
    return max(free, key=lambda i: (power[i], -i))


def complete(include, exclude, N, L):
    """Leaf auto-completion once either side of the partition is full."""
    if len(include) == L:
        exclude = frozenset(range(N)) - include
    elif len(exclude) == N - L:
        include = frozenset(range(N)) - exclude
    return include, exclude


def branch(node: NodeState, n_star: int, N: int, L: int, ids=None):
    """Children ``(off, on)``: the first switches ``n_star`` off, the second keeps it."""
    if n_star in node.include or n_star in node.exclude:
        raise UsageError(f"antenna {n_star} is already decided at node {node.node_id}")
    ids = ids if ids is not None else itertools.count(node.node_id + 1)
    out = []
    for inc, exc in (
        (node.include, node.exclude | {n_star}),
        (node.include | {n_star}, node.exclude),
    ):
        inc, exc = complete(frozenset(inc), frozenset(exc), N, L)
        out.append(
            NodeState(
                include=inc,
                exclude=exc,
                level=node.level + 1,
                node_id=next(ids),
                parent=node.node_id,
                is_leaf=len(inc) == L and len(exc) == N - L,
            )
        )
    return out[0], out[1]


def make_root(N, L) -> NodeState:
    inc, exc = complete(frozenset(), frozenset(), N, L)
    return NodeState(inc, exc, 0, 0, None, is_leaf=len(inc) == L and len(exc) == N - L)


# ---------------------------------------------------------------------------
# engine


class _Bounder:
    """Computes node bounds for one formulation."""

    def __init__(self, inst, cfg, cache):
        self.inst = inst
        self.cfg = cfg
        self.cache = cache
        self.big_C = None

    def bound(self, node):
        inst = self.inst
        if node.is_leaf:
            lb, W = lower_bound(node, inst, self.cache)
            node.lb = node.ub = lb
            node.W_lb = node.W_ub = W
            node.ub_support = node.exclude
            return
        if self.cfg.formulation == DIRECT:
            node.lb, node.W_lb = lower_bound(node, inst, self.cache)
        else:
            prog = build_z_relaxation(inst, node.include, node.exclude, self.big_C)
            sol = self.cache.fresh(prog, node.node_id)
            if sol.status == INFEASIBLE:
                node.lb, node.W_lb = math.inf, None
            else:
                node.lb, node.W_lb = sol.objective, sol.W
        node.ub, node.W_ub, node.ub_support = upper_bound(node, node.W_lb, inst, self.cache)
        if node.ub < node.lb:
            # both values come from solvers with finite accuracy
            node.ub = max(node.ub, node.lb)


GateFn = Callable[[NodeState, Snapshot], bool]


def _engine(
    inst: ProblemInstance,
    cfg: BnbConfig,
    gate: GateFn = None,
    memo=None,
    method="bb",
    bypass_gate_until_feasible=False,
) -> BnbResult:
    t0 = time.perf_counter()
    N, L = inst.N, inst.L
    backend = get_backend(cfg.backend)
    cache = SubproblemCache(inst, backend, enabled=cfg.reuse_right_child or cfg.formulation == Z_AUX, memo=memo)
    bounder = _Bounder(inst, cfg, cache)
    if cfg.formulation == Z_AUX:
        if inst.config.robust:
            raise UsageError("the indicator formulation is implemented for perfect CSI only")
        if cfg.big_C is not None:
            bounder.big_C = cfg.big_C
        else:
            # sizing solve for the constant; not part of the search itself
            probe = solve(build_restricted(inst, ()), backend)
            base = probe.objective if math.isfinite(probe.objective) else 1.0
            bounder.big_C = 10.0 * math.sqrt(base)

    ids = itertools.count()
    root = make_root(N, L)
    next(ids)
    bounder.bound(root)
    root_lb = root.lb
    u_G = root.ub
    W_inc = root.W_ub
    A_inc = frozenset(range(N)) - root.ub_support if root.ub_support is not None else frozenset()
    l_G = min(root.lb, u_G)
    trace = [(l_G, u_G)]

    def finish(status, visited, pruned, calls):
        W = W_inc if W_inc is not None else np.zeros((N, inst.M), dtype=complex)
        ratio = cache.min_rank_ratio
        return BnbResult(
            W_star=W,
            A_star=A_inc if math.isfinite(u_G) else frozenset(),
            objective=u_G,
            conic_solve_count=cache.solves,
            nodes_visited=visited,
            bound_trace=trace,
            wall_time=time.perf_counter() - t0,
            status=status,
            rank_warning=bool(inst.config.robust and ratio < RANK_WARNING_RATIO),
            min_rank_ratio=ratio,
            big_C_binding=bool(
                bounder.big_C is not None and np.sqrt(np.max(np.sum(np.abs(W) ** 2, axis=1))) >= 0.999 * bounder.big_C
            ),
            pruned_node_count=pruned,
            classifier_calls=calls,
            method=method,
        )

    if not math.isfinite(root.lb):
        trace[-1] = (math.inf, math.inf)
        return finish(INFEASIBLE, 0, 0, 0)

    heap = []
    if not root.is_leaf and math.isfinite(root.lb):
        heapq.heappush(heap, (root.lb, root.level, root.node_id, root))
    visited = pruned = calls = 0
    any_pruned = False
    status = "optimal"

    while heap:
        if math.isfinite(u_G) and (u_G - l_G) <= cfg.rel_gap * l_G:
            break
        lb, _, _, node = heapq.heappop(heap)
        if lb > u_G:
            continue
        if gate is not None and not (bypass_gate_until_feasible and not math.isfinite(u_G)):
            calls += 1
            snap = Snapshot(l_G, u_G, W_inc, root_lb, cfg.rel_gap)
            if not gate(node, snap):
                pruned += 1
                any_pruned = True
                l_G = _refresh_lower(heap, l_G, u_G)
                trace.append((l_G, u_G))
                continue
        if visited >= cfg.max_nodes:
            heapq.heappush(heap, (lb, node.level, node.node_id, node))
            status = "node_cap"
            break
        visited += 1
        n_star = select_branch_antenna(node, node.W_lb, N)
        for child in branch(node, n_star, N, L, ids):
            bounder.bound(child)
            if child.ub < u_G:
                u_G = child.ub
                W_inc = child.W_ub
                A_inc = frozenset(range(N)) - child.ub_support
            if not child.is_leaf and math.isfinite(child.lb) and child.lb <= u_G:
                heapq.heappush(heap, (child.lb, child.level, child.node_id, child))
        l_G = _refresh_lower(heap, l_G, u_G)
        trace.append((l_G, u_G))

    if not math.isfinite(u_G) and status != "node_cap":
        # either no subset is feasible or the gate pruned every route to one
        status = INFEASIBLE
    elif status == "optimal" and any_pruned:
        status = "feasible"
    return finish(status, visited, pruned, calls)


def _refresh_lower(heap, l_prev, u_G):
    live = [entry[0] for entry in heap if entry[0] <= u_G]
    l_new = min(live) if live else u_G
    return min(max(l_prev, l_new), u_G)


def run_bb(inst: ProblemInstance, config: BnbConfig = None, memo=None) -> BnbResult:
    """Exact branch and bound with the direct formulation."""
    cfg = config or BnbConfig()
    if cfg.formulation != DIRECT:
        return run_bb_alt(inst, cfg)
    return _engine(inst, cfg, memo=memo, method="bb")


def run_bb_alt(inst: ProblemInstance, config: BnbConfig = None) -> BnbResult:
    """Branch and bound over box-relaxed antenna indicators."""
    cfg = config or BnbConfig(formulation=Z_AUX)
    if cfg.formulation != Z_AUX:
        cfg = BnbConfig(
            rel_gap=cfg.rel_gap,
            max_nodes=cfg.max_nodes,
            formulation=Z_AUX,
            reuse_right_child=cfg.reuse_right_child,
            big_C=cfg.big_C,
            backend=cfg.backend,
        )
    return _engine(inst, cfg, method="bb-alt")


def run_exhaustive(inst: ProblemInstance, backend=None, first_feasible=False) -> BnbResult:
    """Solve every L-subset; with ``first_feasible`` stop at the first feasible one."""
    t0 = time.perf_counter()
    N, L = inst.N, inst.L
    total = math.comb(N, L)
    if total > EXHAUSTIVE_LIMIT:
        raise RefusalError(f"C({N},{L}) = {total} subsets exceeds the limit {EXHAUSTIVE_LIMIT}")
    cache = SubproblemCache(inst, backend if backend is not None else get_backend())
    best, best_W, best_A = math.inf, None, frozenset()
    for subset in itertools.combinations(range(N), L):
        excluded = frozenset(range(N)) - frozenset(subset)
        sol = cache.restricted(excluded)
        if sol.objective < best:
            best, best_W, best_A = sol.objective, sol.W, frozenset(subset)
            if first_feasible:
                break
    if best_W is None:
        best_W = np.zeros((N, inst.M), dtype=complex)
    ratio = cache.min_rank_ratio
    return BnbResult(
        W_star=best_W,
        A_star=best_A,
        objective=best,
        conic_solve_count=cache.solves,
        nodes_visited=0,
        bound_trace=[(best, best)],
        wall_time=time.perf_counter() - t0,
        status="optimal" if math.isfinite(best) else INFEASIBLE,
        rank_warning=bool(inst.config.robust and ratio < RANK_WARNING_RATIO),
        min_rank_ratio=ratio,
        method="exhaustive",
    )
