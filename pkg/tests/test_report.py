import numpy as np
import pytest

from transferlab.errors import ConfigurationError, UsageError
from transferlab.experiments import Check
from transferlab.report import csv_text, emit_plot, format_value, write_csv
from transferlab.suite import aggregate


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(np.float64(1 / 3)) == "0.33333333333333331"
    assert format_value(3) == "3"
    assert format_value(True) == "true"
    assert format_value(None) == ""
    assert format_value("x") == "x"


def test_csv_text_roundtrip():
    rows = [{"a": 1, "b": 0.5}, {"a": 2, "c": "z"}]
    assert csv_text(rows) == "a,b\n1,0.5\n2,\n"
    assert csv_text(rows, ["c", "a"]) == "c,a\n,1\nz,2\n"
    assert float(csv_text([{"v": np.pi}]).splitlines()[1]) == np.pi


def test_write_csv_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ConfigurationError):
        write_csv(blocker / "sub" / "x.csv", [{"a": 1}])


def test_plot_deterministic(tmp_path):
    gap = [1.0, 2.0, 3.0]
    series = {"bound": (gap, np.exp(-np.array(gap))), "direct": (gap, 0.9 * np.exp(-np.array(gap)))}
    a = emit_plot(series, tmp_path / "a.svg", logy=True, xlabel="gap", title="decoupling")
    b = emit_plot(series, tmp_path / "b.svg", logy=True, xlabel="gap", title="decoupling")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().lstrip().startswith("<?xml")


def test_plot_errors(tmp_path):
    with pytest.raises(UsageError):
        emit_plot({}, tmp_path / "x.svg")
    with pytest.raises(UsageError):
        emit_plot({"s": ([], [])}, tmp_path / "x.svg")
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ConfigurationError):
        emit_plot({"s": ([1], [1])}, blocker / "x.svg")


def test_check_semantics():
    assert Check("c", "q", 1e-9, "<=", 1e-8).passed
    assert not Check("c", "q", 2e-8, "<=", 1e-8).passed
    assert Check("c", "q", 0.96, ">=", 0.95).passed
    assert not Check("c", "q", float("nan"), ">=", 0.95).passed
    assert Check("c", "q", float("nan"), "info", 0.0).passed


def test_aggregate_keeps_worst():
    checks = [
        Check("C1", "r", 1e-12, "<=", 1e-8, "a"),
        Check("C1", "r", 1e-10, "<=", 1e-8, "b"),
        Check("C2", "rate", 1.2, ">=", 0.95, "x"),
        Check("C2", "rate", 0.97, ">=", 0.95, "y"),
        Check("C2", "unordered", 0.3, "info", 0.0),
        Check("C3", "r", float("nan"), "<=", 1e-8, "broken"),
        Check("C3", "r", 0.0, "<=", 1e-8, "fine"),
    ]
    rows = {(r["id"], r["quantity"]): r for r in aggregate(checks)}
    assert rows[("C1", "r")]["worst"] == "b" and rows[("C1", "r")]["checks"] == 2
    assert rows[("C2", "rate")]["worst"] == "y"
    assert ("C2", "unordered") not in rows
    assert rows[("C3", "r")]["worst"] == "broken" and not rows[("C3", "r")]["pass"]
    assert list(rows) == sorted(rows)
