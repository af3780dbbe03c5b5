"""Command-line entry point: ``biasconsensus <subcommand> [options]``.

Subcommands: graph, simulate, sweep, scaling, drift-check, oracle. Batch
commands read an optional JSON config (an ExperimentConfig dict, or any JSON
output of a previous run) and apply flag overrides on top. Every output
embeds the effective configuration and ``schema_version``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import re
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, oracle
from .dynamics import BiasParams, Rule
from .errors import CapacityError, GenerationError, ParameterError, SpectralError, StructureError
from .graph import (
    MAX_CONDUCTANCE_N,
    build_graph,
    exact_conductance,
    format_edgelist,
    read_edgelist,
    second_eigenvalue,
)
from .harness import (
    SCHEMA_VERSION,
    ConfigError,
    ExperimentConfig,
    GraphSpec,
    InitialCondition,
    dumps,
)

log = logging.getLogger("biasconsensus")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _csv_with_header(config: dict, body: str) -> str:
    meta = json.dumps({"schema_version": SCHEMA_VERSION, "config": config},
                      sort_keys=True, separators=(",", ":"))
    return f"# {meta}\n{body}"


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


# --- argument parsing -------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--seed", type=int, help="root seed for all randomness")
    p.add_argument("--workers", type=int, default=1, help="parallel trial workers")
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _graph_flags(p: argparse.ArgumentParser):
    p.add_argument("--kind", choices=("complete", "cycle", "random-regular"))
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--graph-seed", type=int)


def _experiment_flags(p: argparse.ArgumentParser):
    _graph_flags(p)
    p.add_argument("--rule", choices=("voter", "two-choices"))
    p.add_argument("--q0", type=float)
    p.add_argument("--q1", type=float)
    start = p.add_mutually_exclusive_group()
    start.add_argument("--a0", type=int, help="exact initial count of opinion 1")
    start.add_argument("--fraction", type=float, help="initial fraction of opinion 1")
    start.add_argument("--clog", type=float, metavar="KAPPA", help="A0 = ceil(KAPPA ln n)")
    p.add_argument("--adversary", choices=("none", "random_shuffle", "cut_minimizing_greedy"))
    p.add_argument("--placement", choices=("uniform", "fixed"))
    p.add_argument("--trials", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--trajectory-stride", type=int)
    p.add_argument("--record-trajectory", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biasconsensus", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph", help="generate a graph and report its spectral profile")
    _common(p)
    p.add_argument("--kind", choices=("complete", "cycle", "random-regular"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int)

    p = sub.add_parser("simulate", help="run a batch of trials")
    _common(p)
    _experiment_flags(p)

    p = sub.add_parser("sweep", help="batches over initial fractions")
    _common(p)
    _experiment_flags(p)
    p.add_argument("--fractions", type=_float_list)

    p = sub.add_parser("scaling", help="median consensus time against ln n")
    _common(p)
    _experiment_flags(p)
    p.add_argument("--sizes", type=_int_list)

    p = sub.add_parser("drift-check", help="exact vs empirical vs bounded drift")
    _common(p)
    _graph_flags(p)
    p.add_argument("--rule", choices=("voter", "two-choices"), required=True)
    p.add_argument("--q0", type=float, required=True)
    p.add_argument("--q1", type=float, required=True)
    p.add_argument("--states", type=int, default=50)
    p.add_argument("--replays", type=int, default=10000)
    p.add_argument("--sigma", type=float, default=4.0)
    p.add_argument("--c", type=float, help="spectral margin for the refined bound")

    p = sub.add_parser("oracle", help="exact absorption analysis on tiny graphs")
    _common(p)
    _graph_flags(p)
    p.add_argument("--graph", help="complete<N>, cycle<N>, or an edge-list file")
    p.add_argument("--rule", choices=("voter", "two-choices"), required=True)
    p.add_argument("--q0", type=float, required=True)
    p.add_argument("--q1", type=float, required=True)
    p.add_argument("--compare-mc", action="store_true")
    p.add_argument("--trials", type=int, default=20000)
    p.add_argument("--z-max", type=float, default=3.0)
    return parser


# --- config assembly ----------------------------------------------------------------


def _load_config(path: Path | None) -> tuple[dict, dict]:
    """Experiment dict and extra command arguments from a config file."""
    if path is None:
        return {}, {}
    data = json.loads(Path(path).read_text())
    if "schema_version" in data and "config" in data:
        return dict(data["config"]), dict(data.get("command_args", {}))
    return data, {}


def effective_config(args, base: dict) -> ExperimentConfig:
    cfg = ExperimentConfig.from_dict(base) if base else ExperimentConfig()
    graph = cfg.graph
    if args.kind is not None:
        graph = replace(graph, kind=args.kind)
    if args.n is not None:
        graph = replace(graph, n=args.n)
    if args.d is not None:
        graph = replace(graph, d=args.d)
    if args.graph_seed is not None:
        graph = replace(graph, seed=args.graph_seed)
    elif "seed" not in base.get("graph", {}) and args.seed is not None:
        graph = replace(graph, seed=args.seed)
    if graph.kind != "random-regular":
        graph = replace(graph, d=None)
    updates = {"graph": graph}
    for name in ("rule", "q0", "q1", "adversary", "placement", "trials", "max_steps",
                 "trajectory_stride", "record_trajectory"):
        value = getattr(args, name, None)
        if value is not None:
            updates[name] = value
    if args.a0 is not None:
        updates["initial"] = InitialCondition("count", args.a0)
    elif args.fraction is not None:
        updates["initial"] = InitialCondition("fraction", args.fraction)
    elif args.clog is not None:
        updates["initial"] = InitialCondition("clog", args.clog)
    if args.seed is not None:
        updates["root_seed"] = args.seed
    return replace(cfg, **updates)


def _batch_config(args, base: dict, extra: dict | None = None) -> ExperimentConfig:
    """Effective config, raising one error that names every invalid field."""
    bad = dict(extra or {})
    if args.seed is None and "root_seed" not in base:
        bad["seed"] = "batch commands require --seed (or root_seed in --config)"
    try:
        cfg = effective_config(args, base)
    except TypeError as err:
        raise ConfigError(bad | {"config": str(err)}) from None
    bad |= cfg.problems()
    if bad:
        raise ConfigError(bad)
    return cfg


# --- commands ---------------------------------------------------------------------


def cmd_graph(args) -> int:
    seed = args.seed if args.seed is not None else 0
    g = build_graph(args.kind, args.n, args.d, seed)
    effective = {"kind": args.kind, "n": args.n, "d": g.d, "seed": seed, "tol": args.tol,
                 "max_iter": args.max_iter}
    report = {"schema_version": SCHEMA_VERSION, "config": effective, "n": g.n, "d": g.d,
              "edges": g.num_edges, "connected": g.connected}
    status = EXIT_OK
    if g.connected:
        try:
            prof = second_eigenvalue(g, args.tol, args.max_iter)
            report["spectral"] = prof.to_dict() | {"converged": True}
        except SpectralError as err:
            prof = None
            report["spectral"] = {"lambda": err.estimate, "residual": err.residual,
                                  "iterations": err.iterations, "converged": False}
            print(f"warning: {err}", file=sys.stderr)
            status = EXIT_CHECK_FAILED
        report["exact_conductance"] = exact_conductance(g) if g.n <= MAX_CONDUCTANCE_N else None
    else:
        report["spectral"] = None
        report["exact_conductance"] = None
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "graph.edges").write_text(format_edgelist(g))
    (args.out_dir / "graph.json").write_text(dumps(report))
    lam = report["spectral"]["lambda"] if report["spectral"] else float("nan")
    print(f"graph n={g.n} d={g.d} connected={g.connected} lambda={lam:.12g}")
    return status


def _theory_total(pred: dict | None) -> str:
    return "n/a" if not pred else str(pred["total"])


def cmd_simulate(args) -> int:
    base, _ = _load_config(args.config)
    cfg = _batch_config(args, base)
    g = harness.make_graph(cfg.graph)
    batch = harness.run_batch(g, cfg, args.workers)
    payload = batch.to_json_dict() | {"command": "simulate", "command_args": {}}
    csv_text = _csv_with_header(cfg.to_dict(), harness.records_csv(batch.records))
    harness.write_outputs(args.out_dir, "simulate", payload, csv_text, args.format)
    s = batch.summary
    median = s["consensus_median"]
    print(f"win1_frequency={s['win1_frequency']:.4f} median_consensus_step="
          f"{'n/a' if median is None else f'{median:g}'} timeouts={s['timeouts']} "
          f"theory_T1+T2={_theory_total(batch.plan.prediction)}")
    return EXIT_OK


def _points_csv(points: list[dict], key: str) -> str:
    cols = [key, "a0", "trials", "win1_frequency", "win1_ci_halfwidth", "consensus_mean",
            "consensus_median", "timeouts"]
    lines = [",".join(cols)]
    for p in points:
        lines.append(",".join("" if p[c] is None else repr(p[c]) if isinstance(p[c], float)
                              else str(p[c]) for c in cols))
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    base, extra = _load_config(args.config)
    fractions = args.fractions if args.fractions is not None else extra.get("fractions")
    cfg = _batch_config(args, base, None if fractions else {"fractions": "give --fractions"})
    result = harness.sweep_initial_fraction(cfg, fractions, args.workers)
    payload = result.to_json_dict() | {"command": "sweep",
                                       "command_args": {"fractions": result.fractions}}
    csv_text = _csv_with_header(cfg.to_dict() | {"fractions": result.fractions},
                                _points_csv(result.points, "fraction"))
    harness.write_outputs(args.out_dir, "sweep", payload, csv_text, args.format)
    freqs = " ".join(f"{p['fraction']:g}:{p['win1_frequency']:.3f}" for p in result.points)
    thr = "n/a" if result.threshold is None else f"{result.threshold:.4f}"
    print(f"threshold={thr} win1_frequency {freqs}")
    return EXIT_OK


def cmd_scaling(args) -> int:
    base, extra = _load_config(args.config)
    sizes = args.sizes if args.sizes is not None else extra.get("sizes")
    cfg = _batch_config(args, base, None if sizes else {"sizes": "give --sizes"})
    result = harness.scaling_study(cfg, sizes, args.workers)
    payload = result.to_json_dict() | {"command": "scaling", "command_args": {"sizes": sizes}}
    csv_text = _csv_with_header(cfg.to_dict() | {"sizes": sizes},
                                _points_csv(result.rows, "n"))
    harness.write_outputs(args.out_dir, "scaling", payload, csv_text, args.format)
    for row in result.rows:
        print(f"n={row['n']} median_consensus_step={row['consensus_median']} "
              f"win1_frequency={row['win1_frequency']:.4f}")
    if result.slope is not None:
        print(f"fit: median = {result.slope:.4f} * ln n + {result.intercept:.4f}")
    return EXIT_OK


def _graph_from_args(args, extra_named: str | None = None):
    if extra_named:
        m = re.fullmatch(r"(complete|cycle)(\d+)", extra_named)
        if m:
            return build_graph(m.group(1), int(m.group(2)))
        return read_edgelist(extra_named)
    if args.kind is None or args.n is None:
        raise ConfigError({"graph": "give --graph or --kind and --n"})
    seed = args.graph_seed if args.graph_seed is not None else (args.seed or 0)
    return build_graph(args.kind, args.n, args.d, seed)


def cmd_drift_check(args) -> int:
    if args.seed is None:
        raise ConfigError({"seed": "drift-check requires --seed"})
    g = _graph_from_args(args)
    bias = BiasParams(args.q0, args.q1)
    audit = harness.drift_audit(g, bias, args.rule, args.states, args.replays, args.seed,
                                args.sigma, c=args.c)
    effective = {"kind": args.kind, "n": g.n, "d": g.d,
                 "graph_seed": args.graph_seed if args.graph_seed is not None else args.seed,
                 "rule": Rule.parse(args.rule).value, "q0": args.q0, "q1": args.q1,
                 "states": args.states, "replays": args.replays, "sigma": args.sigma,
                 "c": args.c, "seed": args.seed}
    payload = {"schema_version": SCHEMA_VERSION, "command": "drift-check",
               "config": effective, "summary": audit.summary()}
    harness.write_outputs(args.out_dir, "drift_check", payload,
                          _csv_with_header(effective, audit.to_csv()), args.format)
    for r in audit.rows:
        lb = "-" if r.lower_bound is None else f"{r.lower_bound:.6g}"
        ref = "skip" if r.refined_bound is None else f"{r.refined_bound:.6g}"
        print(f"state {r.state_index} A={r.a} exact={r.exact:.6g} lower={lb} refined={ref} "
              f"empirical={r.empirical_mean:.6g}+-{r.empirical_se:.3g}"
              f"{'' if r.empirical_ok and r.bounds_ok else '  FAIL'}")
    print(f"bound_failures={audit.bound_failures} empirical_failures={audit.empirical_failures} "
          f"refined_skipped={audit.refined_skipped}")
    return EXIT_OK if audit.ok else EXIT_CHECK_FAILED


def cmd_oracle(args) -> int:
    if args.graph is None and args.kind is None and args.n is not None:
        args.kind = "complete"
    if args.n is not None and args.n > oracle.MAX_ORACLE_N:
        raise CapacityError(f"oracle limited to n <= {oracle.MAX_ORACLE_N}, got n={args.n}")
    g = _graph_from_args(args, args.graph)
    if g.n > oracle.MAX_ORACLE_N:
        raise CapacityError(f"oracle limited to n <= {oracle.MAX_ORACLE_N}, got n={g.n}")
    bias = BiasParams(args.q0, args.q1)
    sol = oracle.solve_absorption(g, bias, args.rule)
    effective = {"graph": args.graph, "kind": args.kind, "n": g.n, "d": g.d,
                 "graph_seed": args.graph_seed, "rule": sol.rule.value,
                 "q0": args.q0, "q1": args.q1}
    status = EXIT_OK
    payload = {"schema_version": SCHEMA_VERSION, "command": "oracle", "config": effective,
               "by_count": {str(a): list(sol.by_count(a)) for a in range(g.n + 1)}}
    if args.compare_mc:
        if args.seed is None:
            raise ConfigError({"seed": "--compare-mc requires --seed"})
        effective |= {"trials": args.trials, "seed": args.seed, "z_max": args.z_max}
        rows = []
        for a in range(1, g.n):
            cfg = ExperimentConfig(GraphSpec("complete", g.n, None, 0), sol.rule.value,
                                   args.q0, args.q1, InitialCondition("count", a),
                                   trials=args.trials, root_seed=args.seed + a)
            plan = harness.Plan(a, 10**6, None, False, None)
            s = harness.summarize(harness.run_trials(g, cfg, plan, args.workers))
            p, _ = sol.by_count(a)
            z = oracle.binomial_z(s["wins_one"], args.trials, p)
            rows.append({"a0": a, "oracle": p, "empirical": s["win1_frequency"],
                         "z": z if math.isfinite(z) else None})
            print(f"A0={a} oracle={p:.6f} empirical={s['win1_frequency']:.6f} z={z:+.3f}")
            if not abs(z) <= args.z_max:
                status = EXIT_CHECK_FAILED
        payload["compare_mc"] = rows
    harness.write_outputs(args.out_dir, "oracle", payload,
                          _csv_with_header(effective, sol.to_csv()), args.format)
    print(f"oracle n={g.n} states={1 << g.n} written to {args.out_dir}")
    return status


COMMANDS = {
    "graph": cmd_graph,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "scaling": cmd_scaling,
    "drift-check": cmd_drift_check,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as err:
        for name, why in err.fields.items():
            print(f"error: {name}: {why}", file=sys.stderr)
        return EXIT_USAGE
    except (ParameterError, CapacityError, GenerationError, StructureError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
