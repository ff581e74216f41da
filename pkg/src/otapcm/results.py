"""Result tables: CSV emission/parsing and static SVG plots.

Plots go through matplotlib's SVG backend with a fixed hash salt and no
date metadata, so the same CSV always renders to the same bytes.
"""
from __future__ import annotations

import csv
import io
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import FormatError
from .pipeline import CSV_COLUMNS, ResultRow

PLOT_KINDS = ("sensors", "snr_matrix", "drift")


def emit_csv(rows: list[ResultRow], path) -> Path:
    if not rows:
        raise ValueError("refusing to write an empty result table")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.as_list())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")
    return path


def read_csv(path) -> list[dict]:
    """Parse a result CSV, validating the schema line by line."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError(f"{path}:1: empty file") from None
    if header != CSV_COLUMNS:
        raise FormatError(f"{path}:1: header {header} does not match {CSV_COLUMNS}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(CSV_COLUMNS):
            raise FormatError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields, got {len(rec)}")
        d = dict(zip(CSV_COLUMNS, rec))
        try:
            d["M"] = int(d["M"])
            d["trial_id"] = int(d["trial_id"])
            for k in ("drift_time_s", "accuracy", "p_final", "sigma_n2"):
                d[k] = float(d[k])
            d["energy_total_j"] = float(d["energy_total_j"]) if d["energy_total_j"] else None
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        rows.append(d)
    return rows


def aggregate(rows: list[dict], keys: tuple[str, ...]) -> "OrderedDict[tuple, tuple[float, float, int]]":
    """Mean, std and count of accuracy per distinct key tuple, in first-seen order."""
    groups: OrderedDict[tuple, list[float]] = OrderedDict()
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r["accuracy"])
    return OrderedDict((k, (float(np.mean(v)), float(np.std(v)), len(v))) for k, v in groups.items())


def _series(rows, kind):
    if kind == "sensors":
        cells = aggregate(rows, ("experiment_id", "M"))
        out = OrderedDict()
        for (exp, m), stats in cells.items():
            out.setdefault(exp, []).append((m, *stats))
        return out, "number of sensors M", False
    if kind == "snr_matrix":
        out = OrderedDict()
        for r in rows:
            r["_x"] = float(r["test_snr_db"])
        cells = aggregate(rows, ("experiment_id", "train_snr_db", "_x"))
        for (exp, tr, x), stats in cells.items():
            out.setdefault(f"{exp} train {tr} dB", []).append((x, *stats))
        return out, "test SNR (dB)", False
    if kind == "drift":
        cells = aggregate(rows, ("experiment_id", "drift_time_s"))
        out = OrderedDict()
        for (exp, t), stats in cells.items():
            out.setdefault(exp, []).append((t, *stats))
        return out, "drift time (s)", True
    raise ValueError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")


def build_figure(rows: list[dict], kind: str):
    """Matplotlib figure of accuracy with one-std error bars."""
    series, xlabel, logx = _series(rows, kind)
    if not series:
        raise ValueError("no rows to plot")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if kind == "drift":
        n = len(series)
        for i, (name, pts) in enumerate(series.items()):
            shift = 10.0 ** ((i - (n - 1) / 2) * 0.3 / n)
            xs = np.array([p[0] for p in pts]) * shift
            ax.bar(xs, [p[1] for p in pts], width=xs * 0.5, yerr=[p[2] for p in pts],
                   capsize=3, label=name)
    else:
        for name, pts in series.items():
            pts = sorted(pts)
            ax.errorbar([p[0] for p in pts], [p[1] for p in pts], yerr=[p[2] for p in pts],
                        marker="o", capsize=3, label=name)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("test accuracy")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    fig.tight_layout()
    return fig


def emit_plot(csv_path, kind: str, out_path) -> Path:
    """Render a sweep CSV to a static SVG."""
    import matplotlib
    import matplotlib.pyplot as plt

    rows = read_csv(csv_path)
    with matplotlib.rc_context({"svg.hashsalt": "otapcm", "svg.fonttype": "none"}):
        fig = build_figure(rows, kind)
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out_path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return out_path
