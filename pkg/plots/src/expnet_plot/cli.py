"""Command-line entry point: ``expnet-plot``."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .panels import METRICS, PANELS, PanelSpec, PlotError, render


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expnet-plot",
        description="Render figures from an expnet results CSV.")
    parser.add_argument("--csv", required=True, help="results CSV path")
    parser.add_argument("--panel", required=True, choices=PANELS)
    parser.add_argument("--metric", default="utility",
                        choices=("all",) + METRICS)
    parser.add_argument("--solvers",
                        help="comma-separated solver order (default: all)")
    parser.add_argument("--out", required=True, help="output image path")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    solvers = args.solvers.split(",") if args.solvers else None
    try:
        out = render(PanelSpec(csv=args.csv, panel=args.panel, out=args.out,
                               metric=args.metric, solvers=solvers))
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
