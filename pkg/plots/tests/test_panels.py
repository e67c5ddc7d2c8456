"""Unit tests for panel validation and rendering from synthetic CSVs."""

import matplotlib.pyplot as plt
import pytest

from expnet_plot.panels import (REQUIRED_COLUMNS, SOLVER_ORDER, PanelSpec,
                                PlotError, _solver_list, render)
from expnet_plot.cli import main

HEADER = ",".join(REQUIRED_COLUMNS)


def _bench_csv(path, solvers=("fw", "maxtp"), groups=("er", "star"),
               seeds=(1, 2)):
    lines = [HEADER]
    value = 10.0
    for g in groups:
        for s in solvers:
            for seed in seeds:
                lines.append(f"{s},none,{g},{seed},{value},{value/20},"
                             f"0.01,{1/value},1.0")
                value += 1.0
    path.write_text("\n".join(lines) + "\n")
    return path


def _sweep_csv(path, var="source_rate", values=(2.0, 6.0),
               solvers=("fw", "maxtp"), seeds=(1, 2)):
    lines = [HEADER]
    for v in values:
        for s in solvers:
            for seed in seeds:
                u = v * 3.0 + seed
                lines.append(f"{s},{var},{v},{seed},{u},{u/20},0.0,"
                             f"{1/u},1.0")
    path.write_text("\n".join(lines) + "\n")
    return path


def test_spec_validation():
    with pytest.raises(PlotError, match="unknown panel"):
        PanelSpec(csv="x.csv", panel="pie", out="y.png")
    with pytest.raises(PlotError, match="unknown metric"):
        PanelSpec(csv="x.csv", panel="lines_by_sweep", out="y.png",
                  metric="runtime")


def test_bars_render(tmp_path):
    csv = _bench_csv(tmp_path / "r.csv")
    out = render(PanelSpec(csv=str(csv), panel="bars_by_topology",
                           out=str(tmp_path / "bars.png")))
    assert out.is_file() and out.stat().st_size > 0


def test_all_metrics_stacks_three_panels(tmp_path):
    csv = _bench_csv(tmp_path / "r.csv")
    single = render(PanelSpec(csv=str(csv), panel="bars_by_topology",
                              out=str(tmp_path / "one.png")))
    stacked = render(PanelSpec(csv=str(csv), panel="bars_by_topology",
                               metric="all", out=str(tmp_path / "all.png")))
    h1 = plt.imread(single).shape[0]
    h3 = plt.imread(stacked).shape[0]
    assert h3 > 2.5 * h1


def test_lines_render(tmp_path):
    csv = _sweep_csv(tmp_path / "s.csv")
    out = render(PanelSpec(csv=str(csv), panel="lines_by_sweep",
                           out=str(tmp_path / "lines.png")))
    assert out.is_file() and out.stat().st_size > 0


def test_deterministic_bytes(tmp_path):
    csv = _sweep_csv(tmp_path / "s.csv")
    a = render(PanelSpec(csv=str(csv), panel="lines_by_sweep",
                         out=str(tmp_path / "a.png")))
    b = render(PanelSpec(csv=str(csv), panel="lines_by_sweep",
                         out=str(tmp_path / "b.png")))
    assert a.read_bytes() == b.read_bytes()


def test_solver_selection_and_order(tmp_path):
    import pandas as pd
    frame = pd.read_csv(_bench_csv(tmp_path / "r.csv",
                                   solvers=("maxtp", "fw", "custom")))
    spec = PanelSpec(csv="r.csv", panel="bars_by_topology", out="o.png")
    assert _solver_list(spec, frame) == ["fw", "maxtp", "custom"]
    narrowed = PanelSpec(csv="r.csv", panel="bars_by_topology", out="o.png",
                         solvers=["maxtp"])
    assert _solver_list(narrowed, frame) == ["maxtp"]
    with pytest.raises(PlotError, match="not in the CSV"):
        _solver_list(PanelSpec(csv="r.csv", panel="bars_by_topology",
                               out="o.png", solvers=["bogus"]), frame)
    assert set(SOLVER_ORDER) >= {"fw", "maxtp"}


def test_missing_file_error(tmp_path):
    with pytest.raises(PlotError, match="not found"):
        render(PanelSpec(csv=str(tmp_path / "absent.csv"),
                         panel="bars_by_topology",
                         out=str(tmp_path / "o.png")))


def test_empty_file_error(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(PlotError, match="empty results CSV"):
        render(PanelSpec(csv=str(empty), panel="bars_by_topology",
                         out=str(tmp_path / "o.png")))
    assert not (tmp_path / "o.png").exists()


def test_header_only_error(tmp_path):
    hdr = tmp_path / "hdr.csv"
    hdr.write_text(HEADER + "\n")
    with pytest.raises(PlotError, match="no data rows"):
        render(PanelSpec(csv=str(hdr), panel="bars_by_topology",
                         out=str(tmp_path / "o.png")))


def test_missing_columns_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("solver,utility\nfw,1.0\n")
    with pytest.raises(PlotError, match="missing columns.*sweep_var"):
        render(PanelSpec(csv=str(bad), panel="bars_by_topology",
                         out=str(tmp_path / "o.png")))


def test_binary_garbage_error(tmp_path):
    junk = tmp_path / "junk.csv"
    junk.write_bytes(bytes([0x89, 0x50, 0x4E, 0x47, 0x00, 0xFF, 0xFE, 0x00])
                     * 32)
    with pytest.raises(PlotError):
        render(PanelSpec(csv=str(junk), panel="bars_by_topology",
                         out=str(tmp_path / "o.png")))


def test_non_numeric_metric_error(tmp_path):
    bad = tmp_path / "nn.csv"
    bad.write_text(HEADER + "\nfw,none,er,1,oops,0.1,0.0,0.5,1.0\n")
    with pytest.raises(PlotError, match="non-numeric values in column"):
        render(PanelSpec(csv=str(bad), panel="bars_by_topology",
                         out=str(tmp_path / "o.png")))


def test_empty_selection_errors(tmp_path):
    sweep_only = _sweep_csv(tmp_path / "s.csv")
    with pytest.raises(PlotError, match="no benchmark rows"):
        render(PanelSpec(csv=str(sweep_only), panel="bars_by_topology",
                         out=str(tmp_path / "o.png")))
    bench_only = _bench_csv(tmp_path / "b.csv")
    with pytest.raises(PlotError, match="no sweep rows"):
        render(PanelSpec(csv=str(bench_only), panel="lines_by_sweep",
                         out=str(tmp_path / "o.png")))


def test_mixed_sweep_variables_error(tmp_path):
    mixed = tmp_path / "m.csv"
    lines = [HEADER,
             "fw,source_rate,2.0,1,5.0,0.2,0.0,0.2,1.0",
             "fw,num_learners,3,1,6.0,0.2,0.0,0.2,1.0"]
    mixed.write_text("\n".join(lines) + "\n")
    with pytest.raises(PlotError, match="mixes sweep variables"):
        render(PanelSpec(csv=str(mixed), panel="lines_by_sweep",
                         out=str(tmp_path / "o.png")))


def test_nan_cells_are_skipped(tmp_path):
    csv = tmp_path / "nan.csv"
    lines = [HEADER,
             "fw,none,er,1,10.0,0.5,0.01,0.1,1.0",
             "fw,none,er,2,nan,nan,nan,nan,2.0"]
    csv.write_text("\n".join(lines) + "\n")
    out = render(PanelSpec(csv=str(csv), panel="bars_by_topology",
                           out=str(tmp_path / "o.png")))
    assert out.is_file()


def test_cli_roundtrip(tmp_path, capsys):
    csv = _bench_csv(tmp_path / "r.csv")
    out = tmp_path / "fig.png"
    assert main(["--csv", str(csv), "--panel", "bars_by_topology",
                 "--metric", "all", "--out", str(out)]) == 0
    assert out.is_file()
    assert "wrote" in capsys.readouterr().out


def test_cli_error_exit(tmp_path, capsys):
    code = main(["--csv", str(tmp_path / "nope.csv"),
                 "--panel", "bars_by_topology", "--out",
                 str(tmp_path / "fig.png")])
    assert code == 2
    assert "error:" in capsys.readouterr().err
