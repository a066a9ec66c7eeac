"""CSV tables and line plots for experiment output."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, UsageError


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if v is None:
        return ""
    return str(v)


def csv_text(rows: list[dict], columns=None) -> str:
    """Header plus one line per row, floats with 17 significant digits."""
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, rows: list[dict], columns=None) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(csv_text(rows, columns))
    except OSError as exc:
        raise ConfigurationError(f"cannot write {path}: {exc}", where="report.write_csv") from exc
    return path


def emit_plot(series: dict, path, *, xlabel="x", ylabel="y", logy=False, title=None) -> Path:
    """Single SVG line plot of labeled ``(x, y)`` series."""
    if not series or any(len(np.atleast_1d(xy[0])) == 0 for xy in series.values()):
        raise UsageError("nothing to plot: empty series", where="report.emit_plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "transferlab"

    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, (x, y) in series.items():
        ax.plot(x, y, marker="o", label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        # fixed metadata keeps the file reproducible
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise ConfigurationError(f"cannot write plot {path}: {exc}", where="report.emit_plot") from exc
    finally:
        plt.close(fig)
    return path
