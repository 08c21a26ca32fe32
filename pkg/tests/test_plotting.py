import numpy as np
import pytest

from quenchlab.errors import DomainError
from quenchlab.plotting import KINDS, emit_plot

DATA = {
    "timeseries": {"t": [0, 1, 2], "value": [1, 0.5, 0.25], "group": ["a", "a", "a"]},
    "rate_vs_hn": {"h": [0.5, 1.0, 1.5], "f": [-0.1, -1.2, -1.27]},
    "loglog_scaling": {"h_n": [1e-3, 1e-2, 1e-1], "y": [1e-3, 1e-2, 1e-1], "fit": [1e-3, 1e-2, 1e-1]},
    "op_scaling": {"h_n": [1e-3, 1e-2], "op": [1e-3, 1e-2], "err": [1e-4, 1e-3]},
    "region_map": [{"h": 1.0, "gamma1": 0.9, "gamma2": 0.1}, {"h": 2.0, "gamma1": 0.2, "gamma2": 0.8}],
}


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_every_kind_renders_deterministically(kind, tmp_path):
    a = emit_plot(DATA[kind], kind, tmp_path / "a.svg", title="x")
    b = emit_plot(DATA[kind], kind, tmp_path / "b.svg", title="x")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().lstrip().startswith("<?xml")


def test_empty_dataset_writes_nothing(tmp_path):
    with pytest.raises(DomainError):
        emit_plot({"t": [], "value": []}, "timeseries", tmp_path / "e.svg")
    with pytest.raises(DomainError):
        emit_plot([], "timeseries", tmp_path / "e.svg")
    assert not (tmp_path / "e.svg").exists()


def test_bad_kind_and_columns(tmp_path):
    with pytest.raises(DomainError):
        emit_plot(DATA["timeseries"], "pie", tmp_path / "p.svg")
    with pytest.raises(DomainError):
        emit_plot({"t": [1, 2]}, "timeseries", tmp_path / "p.svg")
    with pytest.raises(DomainError):
        emit_plot({"t": [1, 2], "value": [1]}, "timeseries", tmp_path / "p.svg")
