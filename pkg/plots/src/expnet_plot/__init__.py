"""Figure rendering for expnet results CSVs.

Figures are a pure function of the CSV: this package reads the results
schema written by ``expnet run`` and renders either grouped benchmark bars
(one group per topology row, one bar per solver) or sweep lines (one line
per solver over the swept variable). It never recomputes metrics and never
imports the solver package.
"""

from .panels import METRICS, PANELS, SOLVER_ORDER, PanelSpec, PlotError, render

__all__ = ["METRICS", "PANELS", "SOLVER_ORDER", "PanelSpec", "PlotError",
           "render"]
