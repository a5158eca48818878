"""Batch experiments, per-run records and summary tables."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .baselines import run_greedy, run_ircvxopt
from .bnb import BnbConfig, run_bb, run_bb_alt, run_exhaustive
from .errors import BeamselectError, ConfigurationError, ParseError
from .instance import InstanceConfig, db_to_linear, generate_instance
from .minimal import MinimalConfig, run_minimal

log = logging.getLogger(__name__)

METHODS = ("bb", "bb-alt", "exhaustive", "minimal", "greedy", "ircvxopt")


def ogap(obj, opt):
    """Percentage excess power over the optimum."""
    return 100.0 * (obj - opt) / opt


def speedup(t_bb, t_method):
    return t_bb / t_method


@dataclass
class RunRecord:
    cell: str
    instance_id: str
    seed: int
    N: int
    M: int
    L: int
    csi_mode: str
    gamma: float
    sigma2: float
    eps: float
    method: str
    objective: float
    ogap: float
    wall_time: float
    conic_solves: int
    nodes_visited: int
    nodes_pruned: int
    feasible: bool
    status: str
    trace_ok: bool = True

    @classmethod
    def header(cls):
        return [f.name for f in fields(cls)]


_INT_FIELDS = {"seed", "N", "M", "L", "conic_solves", "nodes_visited", "nodes_pruned"}
_FLOAT_FIELDS = {"gamma", "sigma2", "eps", "objective", "ogap", "wall_time"}
_BOOL_FIELDS = {"feasible", "trace_ok"}


def write_records(records, path, append=False):
    path = Path(path)
    new = not path.exists() or not append
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(RunRecord.header())
        for r in records:
            w.writerow([getattr(r, k) for k in RunRecord.header()])


def read_records(path):
    out = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != RunRecord.header():
            raise ParseError(f"unexpected record header {header}", line=1)
        for lineno, row in enumerate(rd, 2):
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            kw = {}
            for k, v in zip(header, row):
                if k in _INT_FIELDS:
                    kw[k] = int(v)
                elif k in _FLOAT_FIELDS:
                    kw[k] = float(v)
                elif k in _BOOL_FIELDS:
                    kw[k] = v == "True"
                else:
                    kw[k] = v
            out.append(RunRecord(**kw))
    return out


def trace_is_monotone(trace, tol=1e-9):
    """l nondecreasing, u nonincreasing and l <= u along a bound trace."""
    for (l0, u0), (l1, u1) in zip(trace, trace[1:]):
        if l1 < l0 - tol * max(1.0, abs(l0)) or u1 > u0 + tol * max(1.0, abs(u0)):
            return False
    return all(l <= u + tol * max(1.0, abs(u)) for l, u in trace if math.isfinite(u))


def write_trace(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "lower", "upper"])
        for i, (l, u) in enumerate(trace):
            w.writerow([i, l, u])


# ---------------------------------------------------------------------------
# experiment specs


@dataclass
class Cell:
    name: str
    N: int
    M: int
    L: int
    gamma: float = 1.0
    sigma2: float = 1.0
    eps: float = 0.0
    trials: int = 10
    seed: int = 0
    methods: tuple = ("bb",)
    rel_gap: float = 1e-4

    def instance_config(self, trial):
        return InstanceConfig.uniform(
            self.N, self.M, self.L, gamma=self.gamma, sigma2=self.sigma2, eps=self.eps, seed=self.seed + trial
        )


def parse_spec(data) -> list:
    """Cells from a spec mapping ``{"cells": [...]}``; ``gamma_db`` is accepted in place of ``gamma``."""
    if isinstance(data, (str, os.PathLike)):
        with open(data) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid spec file: {exc.msg}", line=exc.lineno, offset=exc.colno) from None
    cells = []
    for i, raw in enumerate(data.get("cells", [])):
        raw = dict(raw)
        if "gamma_db" in raw:
            raw["gamma"] = float(db_to_linear(raw.pop("gamma_db")))
        raw.setdefault("name", f"cell{i}")
        raw["methods"] = tuple(raw.get("methods", ("bb",)))
        bad = [m for m in raw["methods"] if m not in METHODS]
        if bad:
            raise ConfigurationError(f"unknown methods {bad} in cell {raw['name']}")
        try:
            cells.append(Cell(**raw))
        except TypeError as exc:
            raise ConfigurationError(f"cell {raw['name']}: {exc}") from None
    if not cells:
        raise ConfigurationError("spec lists no cells")
    return cells


def solve_method(inst, method, rel_gap=1e-4, policy=None, gate=0.5, reference=None):
    if method == "bb":
        return run_bb(inst, BnbConfig(rel_gap=rel_gap))
    if method == "bb-alt":
        return run_bb_alt(inst, BnbConfig(rel_gap=rel_gap, formulation="z_aux"))
    if method == "exhaustive":
        return run_exhaustive(inst)
    if method == "minimal":
        if policy is None:
            raise ConfigurationError("method minimal needs a policy")
        return run_minimal(inst, policy, MinimalConfig(gate=gate, rel_gap=rel_gap), reference=reference)
    if method == "greedy":
        return run_greedy(inst)
    if method == "ircvxopt":
        return run_ircvxopt(inst)
    raise ConfigurationError(f"unknown method {method!r}")


def run_experiment(spec, records_path=None, trace_dir=None, policy=None, gate=0.5):
    """Run every (instance, method) pair of every cell.

    Ogap uses an exact reference: the exhaustive or ``bb`` result of the same
    instance when the cell runs one, otherwise a dedicated exact solve.
    Returns ``(records, summary_rows)``.
    """
    cells = parse_spec(spec)
    records = []
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    for cell in cells:
        for trial in range(cell.trials):
            cfg = cell.instance_config(trial)
            inst = generate_instance(cfg)
            iid = f"{cell.name}-{trial}"
            results = {}
            for method in cell.methods:
                try:
                    results[method] = solve_method(inst, method, cell.rel_gap, policy, gate)
                except BeamselectError as exc:
                    log.warning("cell %s trial %d method %s failed: %s", cell.name, trial, method, exc)
                    results[method] = exc
            ref = None
            for m in ("exhaustive", "bb"):
                if m in results and not isinstance(results[m], Exception):
                    ref = results[m].objective
                    break
            if ref is None:
                ref = run_bb(inst, BnbConfig(rel_gap=1e-6)).objective
            for method, res in results.items():
                if isinstance(res, Exception):
                    rec = RunRecord(cell.name, iid, cfg.seed, cfg.n_antennas, cfg.n_users, cfg.budget, cfg.csi_mode,
                                    float(cfg.gamma[0]), float(cfg.sigma2[0]), float(cfg.eps[0]), method, math.inf,
                                    math.nan, 0.0, 0, 0, 0, False, f"error: {res}", True)
                    records.append(rec)
                    continue
                ok = trace_is_monotone(res.bound_trace)
                gap = ogap(res.objective, ref) if math.isfinite(ref) and math.isfinite(res.objective) else math.nan
                rec = RunRecord(
                    cell.name, iid, cfg.seed, cfg.n_antennas, cfg.n_users, cfg.budget, cfg.csi_mode,
                    float(cfg.gamma[0]), float(cfg.sigma2[0]), float(cfg.eps[0]), method, res.objective, gap,
                    res.wall_time, res.conic_solve_count, res.nodes_visited, res.pruned_node_count,
                    res.feasible, res.status, ok,
                )
                records.append(rec)
                if trace_dir is not None:
                    write_trace(res.bound_trace, Path(trace_dir) / f"{iid}-{method}.csv")
    if records_path is not None:
        write_records(records, records_path)
    return records, summarize(records)


def _mean_se(values):
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def summarize(records):
    """Per (cell, method) means and standard errors, recomputed from the records alone."""
    groups = {}
    for r in records:
        groups.setdefault((r.cell, r.method), []).append(r)
    rows = []
    for (cell, method), rs in groups.items():
        row = {"cell": cell, "N": rs[0].N, "M": rs[0].M, "L": rs[0].L, "method": method, "runs": len(rs)}
        for key in ("objective", "ogap", "conic_solves", "nodes_visited", "wall_time"):
            row[key], row[key + "_se"] = _mean_se([getattr(r, key) for r in rs])
        row["feasible"] = sum(r.feasible for r in rs)
        row["trace_ok"] = all(r.trace_ok for r in rs)
        rows.append(row)
    return rows


def render_table(rows, columns=("conic_solves", "ogap", "wall_time", "feasible")):
    """Plain-text table, one line per (cell, method)."""
    head = ["cell", "(N,M,L)", "method"] + list(columns)
    lines = []
    for r in rows:
        cells = [r["cell"], f"({r['N']},{r['M']},{r['L']})", r["method"]]
        for c in columns:
            v = r[c]
            if c + "_se" in r and isinstance(v, float):
                cells.append(f"{v:.3f} ± {r[c + '_se']:.3f}" if math.isfinite(v) else "n/a")
            else:
                cells.append(str(v))
        lines.append(cells)
    widths = [max(len(str(x)) for x in col) for col in zip(head, *lines)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*head), fmt.format(*["-" * w for w in widths])]
    out += [fmt.format(*l) for l in lines]
    return "\n".join(out)


def result_to_dict(res):
    d = {
        "method": res.method,
        "status": res.status,
        "objective": res.objective,
        "A_star": sorted(res.A_star),
        "conic_solve_count": res.conic_solve_count,
        "nodes_visited": res.nodes_visited,
        "pruned_node_count": res.pruned_node_count,
        "classifier_calls": res.classifier_calls,
        "wall_time": res.wall_time,
        "rank_warning": res.rank_warning,
        "min_rank_ratio": res.min_rank_ratio,
        "big_C_binding": res.big_C_binding,
        "W_real": np.real(res.W_star).tolist(),
        "W_imag": np.imag(res.W_star).tolist(),
    }
    if res.optimal_flag is not None:
        d["optimal_flag"] = res.optimal_flag
    return d
