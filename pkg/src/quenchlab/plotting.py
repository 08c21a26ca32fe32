"""Static SVG figures for sweep outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DomainError

KINDS = {
    "timeseries": ("t", "value"),
    "rate_vs_hn": ("h", "f"),
    "loglog_scaling": ("h_n", "y"),
    "op_scaling": ("h_n", "op"),
    "region_map": ("h", "gamma1", "gamma2"),
}


def _columns(dataset) -> dict:
    if isinstance(dataset, Mapping):
        cols = {k: list(v) for k, v in dataset.items()}
    else:
        rows = list(dataset)
        if not rows:
            return {}
        keys = list(rows[0].keys())
        cols = {k: [r.get(k) for r in rows] for k in keys}
    return cols


def _groups(cols, n):
    g = cols.get("group")
    if g is None:
        return {"": np.arange(n)}
    out = {}
    for i, name in enumerate(g):
        out.setdefault(str(name), []).append(i)
    return {k: np.array(v) for k, v in sorted(out.items())}


def emit_plot(dataset, kind: str, path, title: str = "") -> Path:
    """Render ``dataset`` (dict of columns or list of row dicts) to an SVG file.

    An optional ``group`` column splits the data into labelled curves.
    """
    if kind not in KINDS:
        raise DomainError(f"unknown plot kind {kind!r}; expected one of {sorted(KINDS)}")
    cols = _columns(dataset)
    need = KINDS[kind]
    missing = [c for c in need if c not in cols]
    if missing:
        raise DomainError(f"plot kind {kind!r} needs columns {need}, missing {missing}")
    n = len(cols[need[0]])
    if n == 0:
        raise DomainError("empty dataset")
    if any(len(cols[c]) != n for c in cols):
        raise DomainError("columns differ in length")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "quenchlab"
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    groups = _groups(cols, n)
    arr = {k: np.asarray(v, dtype=float) for k, v in cols.items() if k != "group" and k != "region"}

    if kind == "timeseries":
        for name, idx in groups.items():
            ax.plot(arr["t"][idx], arr["value"][idx], lw=1.2, label=name or None)
        ax.set_xlabel("t J")
        ax.set_ylabel("C(t)")
    elif kind == "rate_vs_hn":
        for name, idx in groups.items():
            ax.semilogy(arr["h"][idx], -arr["f"][idx], "o-", ms=3, label=name or None)
        ax.set_xlabel("h / J")
        ax.set_ylabel("-f")
    elif kind == "loglog_scaling":
        for name, idx in groups.items():
            keep = idx[(arr["h_n"][idx] > 0) & (arr["y"][idx] > 0)]
            ax.loglog(arr["h_n"][keep], arr["y"][keep], "o", ms=3, label=name or None)
            if "fit" in arr:
                ax.loglog(arr["h_n"][keep], arr["fit"][keep], "-", lw=1)
        ax.set_xlabel("h_n")
        ax.set_ylabel("exp(f) - C0")
    elif kind == "op_scaling":
        for name, idx in groups.items():
            keep = idx[(arr["h_n"][idx] > 0) & (arr["op"][idx] > 0)]
            err = arr["err"][keep] if "err" in arr else None
            ax.errorbar(arr["h_n"][keep], arr["op"][keep], yerr=err, fmt="o", ms=3,
                        label=name or None)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("h_n")
        ax.set_ylabel("C'")
    elif kind == "region_map":
        ax.plot(arr["h"], arr["gamma1"], "o-", ms=3, label="gamma1")
        ax.plot(arr["h"], arr["gamma2"], "d-", ms=3, label="gamma2")
        ax.set_xlabel("h / J")
        ax.set_ylabel("amplitude")
    if title:
        ax.set_title(title)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
