"""Command-line entry points.

``expnet run`` executes an experiment campaign from a JSON config and
writes the results CSV (optionally with per-round distributed-solver
traces). ``expnet topo`` generates a network and writes it as an edge
list that ``expnet run`` can load back via a ``file`` topology.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import (ConfigError, ExperimentSpec, load_config, run)
from .topology import generate


def _parse_sweep(text: str) -> tuple:
    if "=" not in text:
        raise ConfigError("--sweep expects VAR=v1,v2,... ")
    var, _, values_text = text.partition("=")
    var = var.strip()
    values = []
    for tok in values_text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            values.append(int(tok) if tok.lstrip("+-").isdigit()
                          else float(tok))
        except ValueError as exc:
            raise ConfigError(f"bad sweep value {tok!r}") from exc
    if not values:
        raise ConfigError("--sweep needs at least one value")
    return var, values


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    sweep_var, sweep_values = "none", None
    if args.sweep:
        sweep_var, sweep_values = _parse_sweep(args.sweep)
    spec = ExperimentSpec(config=config, sweep_var=sweep_var,
                          sweep_values=sweep_values, out=Path(args.out),
                          trace=args.trace)
    result = run(spec)
    print(f"wrote {len(result.rows)} rows to {args.out}")
    return 0


_SIZE_FLAGS = {
    "er": ("nodes", "p"),
    "bt": ("branching", "depth"),
    "hc": ("dim",),
    "star": ("nodes",),
    "grid": ("rows", "cols"),
    "sw": ("nodes", "k", "p"),
}


def _cmd_topo(args: argparse.Namespace) -> int:
    if args.kind not in _SIZE_FLAGS:
        raise ConfigError(f"unknown topology kind {args.kind!r}")
    size = {}
    for flag in _SIZE_FLAGS[args.kind]:
        value = getattr(args, flag if flag != "p" else "edge_prob", None)
        if flag == "p":
            value = args.edge_prob
        if value is not None:
            size[flag] = value
    graph = generate(args.kind, size, args.seed,
                     cap_range=(args.cap_lo, args.cap_hi))
    lines = [f"# {args.kind} topology, seed {args.seed}"]
    for (u, v), cap in zip(graph.edges, graph.capacities):
        if args.no_caps:
            lines.append(f"{u} {v}")
        else:
            lines.append(f"{u} {v} {cap!r}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(graph.edges)} directed edges to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expnet",
        description="Rate allocation for networks of Bayesian learners.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log per-cell progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment campaign")
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--sweep", default=None, metavar="VAR=V1,V2,...",
                       help="sweep one variable (source_rate, num_sources, "
                            "num_learners, stepsize)")
    p_run.add_argument("--out", default="results.csv",
                       help="results CSV path (resumes if it exists)")
    p_run.add_argument("--trace", action="store_true",
                       help="write per-round distributed-solver traces")
    p_run.set_defaults(func=_cmd_run)

    p_topo = sub.add_parser("topo", help="generate a network edge list")
    p_topo.add_argument("--kind", required=True,
                        help="er | bt | hc | star | grid | sw")
    p_topo.add_argument("--nodes", type=int, default=None)
    p_topo.add_argument("--edge-prob", "--p", dest="edge_prob", type=float,
                        default=None, help="edge probability (er, sw)")
    p_topo.add_argument("--branching", type=int, default=None)
    p_topo.add_argument("--depth", type=int, default=None)
    p_topo.add_argument("--dim", type=int, default=None)
    p_topo.add_argument("--rows", type=int, default=None)
    p_topo.add_argument("--cols", type=int, default=None)
    p_topo.add_argument("--k", type=int, default=None,
                        help="ring degree (sw)")
    p_topo.add_argument("--seed", type=int, default=0)
    p_topo.add_argument("--cap-lo", type=float, default=5.0)
    p_topo.add_argument("--cap-hi", type=float, default=10.0)
    p_topo.add_argument("--no-caps", action="store_true",
                        help="omit capacities from the edge list")
    p_topo.add_argument("--out", required=True, help="output edge-list path")
    p_topo.set_defaults(func=_cmd_topo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
