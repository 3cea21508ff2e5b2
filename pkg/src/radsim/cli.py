"""Command-line entry points for scenario runs and utilities.

Exit codes: 0 success, 2 configuration or input errors, 3 non-convergence,
1 anything unexpected.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import deployment as deployment_mod
from . import pipeline, scenario, synth, topology, traffic
from .engine import converge
from .errors import NonConvergenceError, RadsimError, ScenarioError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_NON_CONVERGENCE = 3


def _parse_overrides(items: list[str] | None) -> dict[str, str]:
    overrides = {}
    for item in items or []:
        if "=" not in item:
            raise ScenarioError(f"--override expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _add_scenario_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenario", required=True, help="scenario key-value file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--threads", type=int, default=None, help="worker threads")
    parser.add_argument(
        "--seed", type=int, default=None, help="reserved; the pipeline is deterministic"
    )
    parser.add_argument(
        "--override",
        action="append",
        metavar="KEY=VALUE",
        help="override a scenario key (repeatable)",
    )


def _load(args) -> scenario.ScenarioConfig:
    overrides = _parse_overrides(args.override)
    if args.threads is not None:
        overrides["threads"] = str(args.threads)
    return scenario.load_scenario(args.scenario, overrides)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    result = pipeline.run_scenario(cfg, args.out)
    print(f"scenario {result.scenario_hash[:12]} -> {args.out}")
    print(f"direct cost: {result.direct_units!r} units")
    if result.defection is not None:
        print(f"grand total: {result.grand_total_units!r} units")
    return EXIT_OK


def cmd_deploy(args) -> int:
    cfg = _load(args)
    graph = pipeline.load_topology(cfg)
    members = pipeline.resolve_members(cfg, graph)
    matrix = pipeline.resolve_matrix(cfg, graph)
    rib = converge(graph, graph.parent_blocks().values(), max_sweeps=cfg.convergence_cap,
                   threads=cfg.threads)
    chosen = pipeline.resolve_deployment(cfg, graph, rib, matrix, members)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "deployment.txt").write_text("".join(f"{d}\n" for d in chosen.sorted()))
    print(f"selected {len(chosen)} deployers -> {out / 'deployment.txt'}")
    return EXIT_OK


def cmd_matrix(args) -> int:
    cfg = _load(args)
    graph = pipeline.load_topology(cfg)
    matrix = pipeline.resolve_matrix(cfg, graph)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "matrix.csv").write_text(matrix.to_csv())
    print(f"{len(matrix)} flows, {matrix.total()!r} units -> {out / 'matrix.csv'}")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = pipeline.recompute_report(args.out)
    for key, value in rows:
        print(f"{key} = {value}")
    return EXIT_OK


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    graph = synth.synth_topology(args.nodes, seed=args.seed)
    build_s = time.perf_counter() - t0
    parents = sorted(graph.parent_blocks().values(), key=lambda b: b.origin)
    sample = parents if args.full else parents[:: max(1, len(parents) // args.sample)][: args.sample]
    t0 = time.perf_counter()
    converge(graph, sample, keep_candidates=False, threads=args.threads)
    solve_s = time.perf_counter() - t0
    per_block = solve_s / len(sample)
    projected = per_block * len(parents) * 2  # baseline + one attack convergence
    meta = {
        "nodes": args.nodes,
        "edges": len(graph.edges) // 2,
        "build_seconds": round(build_s, 3),
        "blocks_converged": len(sample),
        "seconds_per_block": round(per_block, 4),
        "full_run": bool(args.full),
        "wall_clock_seconds": round(solve_s, 3),
        "projected_full_both_convergences_seconds": round(projected, 1),
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ci_metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(json.dumps(meta, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radsim",
        description="AS-level routing and transit-economics attack simulator",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the full attack pipeline")
    _add_scenario_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("deploy", help="deployer selection only")
    _add_scenario_args(p)
    p.set_defaults(func=cmd_deploy)

    p = sub.add_parser("matrix", help="traffic matrix only")
    _add_scenario_args(p)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("report", help="recompute economics from a saved run")
    p.add_argument("--out", required=True, help="directory written by simulate")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("bench", help="synthetic-topology convergence benchmark")
    p.add_argument("--nodes", type=int, default=49755)
    p.add_argument("--sample", type=int, default=30, help="blocks to converge")
    p.add_argument("--full", action="store_true", help="converge every block")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="directory for ci_metadata.json")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NON_CONVERGENCE
    except (ScenarioError, RadsimError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
