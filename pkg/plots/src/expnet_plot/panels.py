"""Panel specifications and rendering for the results-CSV schema.

The input is the CSV written by ``expnet run``::

    solver,sweep_var,sweep_value,seed,utility,utility_stderr,infeasibility,est_error,runtime_s

``bars_by_topology`` reads the benchmark rows (``sweep_var == "none"``,
where ``sweep_value`` names the topology) and draws one bar per solver per
topology; ``lines_by_sweep`` reads the sweep rows and draws one line per
solver over the swept variable. Values are averaged over seeds. Utility
panels carry error bars propagated from ``utility_stderr``; the other
metrics carry the across-seed standard deviation. ``metric="all"`` stacks
the three metric panels in one figure.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import matplotlib
import numpy as np
import pandas as pd

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

REQUIRED_COLUMNS = ("solver", "sweep_var", "sweep_value", "seed", "utility",
                    "utility_stderr", "infeasibility", "est_error",
                    "runtime_s")
_NUMERIC_COLUMNS = ("utility", "utility_stderr", "infeasibility", "est_error",
                    "runtime_s")
SOLVER_ORDER = ("fw", "pga", "maxtp", "maxfair", "dfw", "dpga", "dmaxtp",
                "dmaxfair")
METRICS = ("utility", "infeasibility", "est_error")
PANELS = ("bars_by_topology", "lines_by_sweep")
_LABEL = {"utility": "aggregate utility", "infeasibility": "infeasibility",
          "est_error": "estimation error"}


class PlotError(RuntimeError):
    """Raised for unreadable, empty, or schema-violating inputs."""


@dataclass(frozen=True)
class PanelSpec:
    """What to render: input CSV, panel kind, metric, styling, output path.

    ``metric`` is one of the metric columns or ``"all"`` for a stacked
    three-metric figure. ``solvers`` restricts and orders the bars/lines
    (default: every solver present, in the standard order); ``colors``
    overrides the per-solver colors.
    """

    csv: str
    panel: str
    out: str
    metric: str = "utility"
    solvers: Optional[Sequence[str]] = None
    colors: Optional[Mapping[str, str]] = None

    def __post_init__(self) -> None:
        if self.panel not in PANELS:
            raise PlotError(f"unknown panel {self.panel!r}; "
                            f"expected one of {', '.join(PANELS)}")
        if self.metric != "all" and self.metric not in METRICS:
            raise PlotError(f"unknown metric {self.metric!r}; "
                            f"expected 'all' or one of {', '.join(METRICS)}")


def _load(spec: PanelSpec) -> pd.DataFrame:
    path = Path(spec.csv)
    if not path.is_file():
        raise PlotError(f"results CSV not found: {path}")
    try:
        frame = pd.read_csv(path, dtype={"sweep_value": str})
    except pd.errors.EmptyDataError:
        raise PlotError(f"empty results CSV: {path}") from None
    except (pd.errors.ParserError, UnicodeDecodeError, ValueError) as exc:
        raise PlotError(f"could not parse {path}: {exc}") from None
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise PlotError(f"{path} is missing columns: {', '.join(missing)}")
    if frame.empty:
        raise PlotError(f"{path} has a header but no data rows")
    for col in _NUMERIC_COLUMNS:
        try:
            frame[col] = pd.to_numeric(frame[col])
        except (ValueError, TypeError) as exc:
            raise PlotError(f"non-numeric values in column {col!r} "
                            f"of {path}: {exc}") from None
    return frame


def _solver_list(spec: PanelSpec, frame: pd.DataFrame) -> list[str]:
    present = set(frame["solver"].astype(str))
    if spec.solvers is not None:
        chosen = [str(s) for s in spec.solvers]
        absent = [s for s in chosen if s not in present]
        if absent:
            raise PlotError(f"solver(s) not in the CSV: {', '.join(absent)}")
        return chosen
    ordered = [s for s in SOLVER_ORDER if s in present]
    return ordered + sorted(present - set(ordered))


def _color(spec: PanelSpec, solver: str) -> object:
    if spec.colors and solver in spec.colors:
        return spec.colors[solver]
    cmap = plt.get_cmap("tab10")
    index = (SOLVER_ORDER.index(solver) if solver in SOLVER_ORDER
             else len(SOLVER_ORDER))
    return cmap(index % 10)


def _mean_and_err(rows: pd.DataFrame, metric: str) -> tuple[float, float]:
    values = rows[metric].dropna()
    if values.empty:
        return float("nan"), 0.0
    mean = float(values.mean())
    if metric == "utility":
        stderr = rows.loc[values.index, "utility_stderr"].fillna(0.0)
        return mean, float(np.linalg.norm(stderr) / len(values))
    return mean, float(values.std(ddof=0))


def _metric_axes(spec: PanelSpec) -> tuple[plt.Figure, list, list[str]]:
    metrics = list(METRICS) if spec.metric == "all" else [spec.metric]
    fig, axes = plt.subplots(len(metrics), 1, squeeze=False,
                             figsize=(7.0, 2.6 * len(metrics)), sharex=True)
    return fig, [row[0] for row in axes], metrics


def _render_bars(spec: PanelSpec, frame: pd.DataFrame) -> plt.Figure:
    data = frame[frame["sweep_var"] == "none"]
    if data.empty:
        raise PlotError("no benchmark rows (sweep_var == 'none') in the CSV")
    solvers = _solver_list(spec, data)
    if not solvers:
        raise PlotError("no matching solvers in the benchmark rows")
    groups = list(dict.fromkeys(data["sweep_value"]))
    fig, axes, metrics = _metric_axes(spec)
    width = 0.8 / len(solvers)
    x = np.arange(len(groups))
    for ax, metric in zip(axes, metrics):
        for i, solver in enumerate(solvers):
            stats = [_mean_and_err(
                data[(data["solver"] == solver)
                     & (data["sweep_value"] == g)], metric) for g in groups]
            offset = (i - (len(solvers) - 1) / 2) * width
            ax.bar(x + offset, [m for m, _ in stats], width,
                   yerr=[e for _, e in stats], capsize=2,
                   color=_color(spec, solver), label=solver)
        ax.set_ylabel(_LABEL[metric])
        ax.set_xticks(x)
        ax.set_xticklabels(groups)
    axes[0].legend(ncol=min(len(solvers), 4), fontsize="small")
    axes[-1].set_xlabel("topology")
    return fig


def _render_lines(spec: PanelSpec, frame: pd.DataFrame) -> plt.Figure:
    data = frame[frame["sweep_var"] != "none"]
    if data.empty:
        raise PlotError("no sweep rows (sweep_var != 'none') in the CSV")
    variables = sorted(set(data["sweep_var"]))
    if len(variables) > 1:
        raise PlotError(f"CSV mixes sweep variables {', '.join(variables)}; "
                        "filter to one before plotting")
    try:
        data = data.assign(_x=data["sweep_value"].astype(float))
    except ValueError as exc:
        raise PlotError(f"non-numeric sweep values: {exc}") from None
    solvers = _solver_list(spec, data)
    fig, axes, metrics = _metric_axes(spec)
    for ax, metric in zip(axes, metrics):
        for solver in solvers:
            rows = data[data["solver"] == solver]
            xs = sorted(set(rows["_x"]))
            stats = [_mean_and_err(rows[rows["_x"] == v], metric) for v in xs]
            ax.errorbar(xs, [m for m, _ in stats], yerr=[e for _, e in stats],
                        marker="o", capsize=2, color=_color(spec, solver),
                        label=solver)
        ax.set_ylabel(_LABEL[metric])
    axes[0].legend(ncol=min(len(solvers), 4), fontsize="small")
    axes[-1].set_xlabel(variables[0])
    return fig


def render(spec: PanelSpec) -> Path:
    """Render ``spec`` and write the image file; returns the output path.

    Raises
    ------
    PlotError
        If the CSV is missing, unparsable, empty, lacks schema columns, or
        the panel's row selection comes up empty.
    """
    frame = _load(spec)
    if spec.panel == "bars_by_topology":
        fig = _render_bars(spec, frame)
    else:
        fig = _render_lines(spec, frame)
    out = Path(spec.out)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
