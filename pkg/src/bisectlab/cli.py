"""Command-line front end: ``bisectlab {gen,recover,threshold,oracle,sweep,calibrate}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import harness, oracles, thresholds
from .graph_model import (
    ModelParams,
    Sense,
    generate,
    read_graph,
    read_labels,
    write_graph,
    write_labels,
)
from .refine import ReplicaConfig, StageError, recover


class _Encoder(json.JSONEncoder):
    # floats are written with repr, which round-trips every double; inf and nan become strings
    def iterencode(self, o, _one_shot=False):
        return super().iterencode(_clean(o), _one_shot)


def _clean(o):
    if isinstance(o, float) and not math.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def _dump(obj) -> None:
    json.dump(obj, sys.stdout, cls=_Encoder, indent=2)
    sys.stdout.write("\n")


def cmd_gen(args) -> int:
    inst = generate(ModelParams(args.n, args.p, args.q), args.seed)
    write_graph(inst.graph, args.out_graph)
    write_labels(inst.hidden, args.out_labels)
    return 0


def cmd_recover(args) -> int:
    g = read_graph(args.graph)
    hidden = read_labels(args.labels) if args.labels else None
    cfg = ReplicaConfig(m=args.m, epsilon=args.epsilon, seed=args.seed, use_guaranteed_m=args.guaranteed_m)
    try:
        trace = recover(g, cfg, hidden)
    except StageError as exc:
        print(f"recovery failed: {exc}", file=sys.stderr)
        return 2
    lab = {
        "spectral": trace.spectral_labelling,
        "replica": trace.replica_labelling,
        "final": trace.final_labelling,
    }[args.stage]
    if args.json:
        out = trace.to_dict()
        out["stage"] = args.stage
        out["labelling"] = lab.signs.tolist()
        _dump(out)
    else:
        sys.stdout.write("".join("+1\n" if s == 1 else "-1\n" for s in lab.signs))
    return 0


def cmd_threshold(args) -> int:
    if args.a is not None or args.b is not None:
        if args.a is None or args.b is None or args.p is not None or args.q is not None:
            raise SystemExit("threshold: give either --p and --q, or --a and --b")
        params = ModelParams.from_ab(args.n, args.a, args.b)
    else:
        if args.p is None or args.q is None:
            raise SystemExit("threshold: give either --p and --q, or --a and --b")
        params = ModelParams(args.n, args.p, args.q)
    _dump(thresholds.report(params.n, params.p, params.q).to_dict())
    return 0


def cmd_oracle(args) -> int:
    g = read_graph(args.graph)
    needs_labels = args.kind in ("likelihood", "swapcheck")
    if needs_labels and not args.labels:
        raise SystemExit(f"oracle {args.kind}: --labels is required")
    tau = read_labels(args.labels) if args.labels else None
    if args.kind == "likelihood":
        br = oracles.log_likelihood(g, tau, args.p, args.q)
        _dump({"log_likelihood": br.log_likelihood, "counts": list(br.counts)})
    elif args.kind in ("map", "minbisect"):
        if args.kind == "map":
            res = oracles.map_bruteforce(g, args.p, args.q)
            key = "log_likelihood"
        else:
            res = oracles.min_bisection_bruteforce(g)
            key = "cut_size"
        value = int(res.value) if args.kind == "minbisect" else res.value
        _dump({key: value, "num_optima": len(res.plus_sets), "plus_sets": res.plus_sets.tolist()})
    else:
        rep = oracles.minority_swap_check(g, tau, args.p, args.q, Sense.from_params(args.p, args.q))
        _dump(
            {
                "pair_exists": rep.pair_exists,
                "witness": list(rep.witness) if rep.witness else None,
                "ll_before": rep.ll_before,
                "ll_after": rep.ll_after,
                "holds": rep.holds,
                "plus_minorities": rep.plus_minorities,
                "minus_minorities": rep.minus_minorities,
            }
        )
    return 0


def cmd_sweep(args) -> int:
    spec = harness.ExperimentSpec.from_json(args.spec)
    result = harness.run_sweep(spec, args.workers)
    harness.write_rows_csv(result.rows, spec, args.out)
    summary_path = args.summary or Path(args.out).with_suffix(".summary.csv")
    harness.write_summary_csv(result.summary, summary_path)
    failed = sum(s.failed_trials for s in result.summary)
    if failed:
        print(f"{failed} trial(s) recorded an error", file=sys.stderr)
    return 0


def cmd_calibrate(args) -> int:
    table = harness.calibrate_perturbation(harness.default_calibration_grid())
    _dump(
        {
            "max_ratio": table.max_ratio,
            "max_ratio_pos": table.max_ratio_pos,
            "constant": table.constant,
            "rows": [r.__dict__ for r in table.rows],
        }
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bisectlab", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="sample a planted bisection instance")
    g.add_argument("--n", type=int, required=True, help="nodes per side")
    g.add_argument("--p", type=float, required=True)
    g.add_argument("--q", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-graph", required=True)
    g.add_argument("--out-labels", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("recover", help="run the recovery pipeline on a graph file")
    r.add_argument("--graph", required=True)
    r.add_argument("--labels", help="hidden labelling, used only for stage errors")
    r.add_argument("--epsilon", type=float, default=0.5)
    r.add_argument("--m", type=int, default=10)
    r.add_argument("--paper-m", dest="guaranteed_m", action="store_true", help="derive m from epsilon")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--stage", choices=("spectral", "replica", "final"), default="final")
    r.add_argument("--json", action="store_true", help="print the trace as JSON")
    r.set_defaults(func=cmd_recover)

    t = sub.add_parser("threshold", help="threshold statistics as JSON")
    t.add_argument("--n", type=int, required=True)
    t.add_argument("--p", type=float)
    t.add_argument("--q", type=float)
    t.add_argument("--a", type=float)
    t.add_argument("--b", type=float)
    t.set_defaults(func=cmd_threshold)

    o = sub.add_parser("oracle", help="exact small-instance oracles")
    o.add_argument("kind", choices=("map", "minbisect", "likelihood", "swapcheck"))
    o.add_argument("--graph", required=True)
    o.add_argument("--labels")
    o.add_argument("--p", type=float, required=True)
    o.add_argument("--q", type=float, required=True)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("sweep", help="Monte Carlo sweep from a JSON spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--summary", help="per-point summary CSV (default: OUT with .summary.csv)")
    s.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate", help="perturbation-constant table on the default grid")
    c.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"bisectlab {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
