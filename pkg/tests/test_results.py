import xml.etree.ElementTree as ET

import pytest

from otapcm.errors import FormatError
from otapcm.pipeline import CSV_COLUMNS, ResultRow
from otapcm.results import aggregate, build_figure, emit_csv, emit_plot, read_csv


def rows_for(kind):
    out = []
    if kind == "drift":
        for t in (1.0, 3600.0, 86400.0, 2592000.0, 31536000.0):
            for k in range(3):
                out.append(ResultRow("drift-analog", 5, "10", "10", t, k, 0.9 - 0.01 * k - t * 1e-9, 1.0, 0.1))
    else:
        for m in (1, 2, 3):
            for k in range(2):
                out.append(ResultRow("sensors-analog", m, "10", "10", 0.0, k, 0.8 + 0.01 * m, 1.0, 0.1, 1e-6))
    return out


def test_single_row_csv(tmp_path):
    path = emit_csv(rows_for("sensors")[:1], tmp_path / "r.csv")
    text = path.read_bytes().decode("utf-8")
    assert text.count("\n") == 2 and text.endswith("\n")
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)


def test_grid_row_count(tmp_path):
    rows = [ResultRow("x", m, str(s), "10", 0.0, k, 0.5, 1.0, 0.0)
            for m in (1, 2, 3) for s in (0, 10) for k in range(25)]
    parsed = read_csv(emit_csv(rows, tmp_path / "g.csv"))
    assert len(parsed) == 150
    assert [r["trial_id"] for r in parsed[:26]] == list(range(25)) + [0]


def test_empty_table_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_csv([], tmp_path / "e.csv")


def test_malformed_csv_names_line(tmp_path):
    path = emit_csv(rows_for("sensors"), tmp_path / "r.csv")
    lines = path.read_text().splitlines()
    lines[3] = lines[3].rsplit(",", 2)[0]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match=":4:"):
        read_csv(path)
    path.write_text("a,b\n")
    with pytest.raises(FormatError, match=":1:"):
        read_csv(path)


def test_aggregate():
    rows = [dict(M=1, accuracy=0.5), dict(M=1, accuracy=0.7), dict(M=2, accuracy=1.0)]
    agg = aggregate(rows, ("M",))
    assert agg[(1,)][0] == pytest.approx(0.6) and agg[(1,)][2] == 2
    assert list(agg) == [(1,), (2,)]


def test_drift_plot_is_log_x_with_five_bars(tmp_path):
    rows = read_csv(emit_csv(rows_for("drift"), tmp_path / "d.csv"))
    fig = build_figure(rows, "drift")
    ax = fig.axes[0]
    assert ax.get_xscale() == "log"
    assert len(ax.patches) == 5
    assert ax.get_legend() is not None


def test_plot_is_deterministic_svg(tmp_path):
    csv = emit_csv(rows_for("sensors"), tmp_path / "s.csv")
    a = emit_plot(csv, "sensors", tmp_path / "a.svg").read_bytes()
    b = emit_plot(csv, "sensors", tmp_path / "b.svg").read_bytes()
    assert a == b
    ET.fromstring(a)


def test_empty_series_is_an_error(tmp_path):
    with pytest.raises(ValueError):
        build_figure([], "sensors")
    with pytest.raises(ValueError):
        build_figure([], "histogram")
