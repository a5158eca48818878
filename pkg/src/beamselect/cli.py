"""Command-line entry point: ``beamselect {gen|solve|train|eval|report}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .bnb import BnbConfig
from .errors import BeamselectError, UsageError
from .harness import (
    METHODS,
    read_records,
    render_table,
    result_to_dict,
    run_experiment,
    solve_method,
    summarize,
    write_trace,
)
from .instance import InstanceConfig, db_to_linear, generate_instance, load_instance, save_instance


def _gen(args):
    cfg = InstanceConfig.uniform(
        args.n,
        args.m,
        args.l,
        gamma=float(db_to_linear(args.gamma_db)),
        sigma2=args.sigma2,
        eps=args.eps,
        csi_mode=args.csi,
        seed=args.seed,
    )
    save_instance(generate_instance(cfg), args.out)
    print(f"wrote {args.out}")


def _load_policy(path):
    from .gnn import load_checkpoint

    return load_checkpoint(path)


def _solve(args):
    inst = load_instance(args.instance)
    policy = _load_policy(args.policy) if args.policy else None
    if args.method == "minimal" and policy is None:
        raise UsageError("--method minimal requires --policy")
    reference = None
    if args.reference == "exact":
        from .bnb import run_bb

        reference = run_bb(inst, BnbConfig(rel_gap=1e-6)).objective
    res = solve_method(inst, args.method, args.rel_gap, policy, args.gate, reference)
    out = result_to_dict(res)
    if args.trace:
        out["bound_trace"] = [list(p) for p in res.bound_trace]
        write_trace(res.bound_trace, args.trace)
    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(f"{res.method}: status={res.status} objective={res.objective:.6g} solves={res.conic_solve_count}")


def _train(args):
    from .gnn import save_checkpoint
    from .imitation import TrainerConfig, save_dataset, train_online

    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    known = {f.name for f in dataclasses.fields(TrainerConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise UsageError(f"unknown trainer options {unknown}")
    cfg = TrainerConfig(**raw)
    log = train_online(cfg, dump_path=args.out + ".diverged", progress=print)
    save_checkpoint(log.selected.params, args.out)
    if args.dataset:
        for batch in log.datasets:
            save_dataset(batch, args.dataset)
    print(f"selected batch {log.selected.batch} (validation loss {log.selected.validation_loss:.4f}); wrote {args.out}")


def _eval(args):
    policy = _load_policy(args.policy) if args.policy else None
    records, rows = run_experiment(args.spec, args.out, args.trace, policy, args.gate)
    print(render_table(rows))


def _report(args):
    rows = summarize(read_records(args.records))
    text = render_table(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def build_parser():
    p = argparse.ArgumentParser(prog="beamselect", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="draw a random instance")
    g.add_argument("--n", type=int, required=True, help="antennas")
    g.add_argument("--m", type=int, required=True, help="users")
    g.add_argument("--l", type=int, required=True, help="antenna budget")
    g.add_argument("--gamma-db", type=float, default=0.0, help="SINR target in dB")
    g.add_argument("--sigma2", type=float, default=1.0)
    g.add_argument("--eps", type=float, default=0.0, help="channel uncertainty radius")
    g.add_argument("--csi", choices=("perfect", "robust"), default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_gen)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--method", choices=METHODS, default="bb")
    s.add_argument("--instance", required=True)
    s.add_argument("--rel-gap", type=float, default=1e-4)
    s.add_argument("--out")
    s.add_argument("--trace", help="write the bound trace to this CSV file")
    s.add_argument("--policy", help="classifier checkpoint for --method minimal")
    s.add_argument("--gate", type=float, default=0.5)
    s.add_argument("--reference", choices=("exact",), help="compare against an exact solve")
    s.set_defaults(func=_solve)

    t = sub.add_parser("train", help="train the node classifier")
    t.add_argument("--config", help="JSON file with trainer options")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--dataset", help="append the collected pairs to this JSONL file")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="run an experiment spec")
    e.add_argument("--spec", required=True)
    e.add_argument("--out", help="records CSV")
    e.add_argument("--trace", help="directory for bound-trace files")
    e.add_argument("--policy")
    e.add_argument("--gate", type=float, default=0.5)
    e.set_defaults(func=_eval)

    r = sub.add_parser("report", help="summarise a records CSV")
    r.add_argument("--records", required=True)
    r.add_argument("--out")
    r.set_defaults(func=_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except BeamselectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
