"""Sweeps over (N, h, kappa): compute series, fit, scale, persist, plot.

Layout of one sweep directory::

    <out>/<sweep-id>/series/N{N}_h{h}.csv      t, value, valid
    <out>/<sweep-id>/fits/<stage>.jsonl        one ResultRecord per line
    <out>/<sweep-id>/summary.csv               long-format table of every stage
    <out>/<sweep-id>/plots/*.svg

CSV and summary contents depend only on the configuration; wall times live
in the jsonl records alone.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from . import analysis, edsim, freefermion
from .errors import ConfigError, DomainError, QuenchLabError
from .model import (ChainSpec, QuenchSpec, TimeGrid, TimeSeries, cluster_valid_to,
                    lightcone_window, quasiparticle_velocity)

log = logging.getLogger(__name__)

ENGINES = ("freefermion", "edsim")
ANALYSES = ("fits", "scaling", "op", "crossover", "binder", "otoc")
C0_MODES = ("measured", "analytic")
FLOAT_FMT = "%.17g"
SMALL_N_BOTH_SECTORS = 32
DEFAULT_OUT = "quenchlab-out"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % float(x)
    return "" if x is None else str(x)


def h_label(h: float) -> str:
    return f"{h:.10g}"


# configuration

@dataclass(frozen=True)
class SweepConfig:
    engine: str = "freefermion"
    N: tuple = (48,)
    boundary: str = "periodic"
    J: float = 1.0
    delta: float = 0.0
    h: tuple = ()
    h_c: float = 1.0
    kappa: tuple = (5.0,)
    t_max: Optional[float] = None
    dt: float = 0.05
    site: Optional[int] = None
    t_L: tuple = ()
    alpha: tuple = ()
    analyses: tuple = ("fits",)
    C0_mode: str = "measured"
    scaling_window: tuple = (1e-4, 3e-2)
    out: str = ""
    workers: int = 1
    sweep_id: str = ""
    plots: bool = True

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if not self.N:
            raise ConfigError("empty N list")
        if not self.h:
            raise ConfigError("empty h grid")
        if not self.kappa or any(k <= 0 for k in self.kappa):
            raise ConfigError("kappa list must be nonempty and positive")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.t_max is not None and not self.t_max > 0:
            raise ConfigError("t_max must be positive")
        bad = set(self.analyses) - set(ANALYSES)
        if bad:
            raise ConfigError(f"unknown analyses {sorted(bad)}; choose from {ANALYSES}")
        if self.C0_mode not in C0_MODES:
            raise ConfigError(f"C0_mode must be one of {C0_MODES}")
        if len(self.scaling_window) != 2 or not 0 < self.scaling_window[0] < self.scaling_window[1]:
            raise ConfigError("scaling_window needs 0 < lo < hi")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if any(h < 0 for h in self.h):
            raise ConfigError("transverse fields must be nonnegative")
        for N in self.N:
            try:
                ChainSpec(N, self.boundary, self.J, self.delta, 0.0)
            except QuenchLabError as exc:
                raise ConfigError(str(exc)) from exc
        if self.engine == "freefermion":
            if self.delta != 0.0:
                raise ConfigError("the freefermion engine needs delta = 0 (integrable chain)")
            if self.boundary != "periodic":
                raise ConfigError("the freefermion engine supports periodic chains only")
            if {"binder", "otoc"} & set(self.analyses):
                raise ConfigError("binder and otoc analyses need the edsim engine")
        if self.engine == "edsim" and max(self.N) > edsim.N_CAP:
            raise ConfigError(f"edsim is capped at N = {edsim.N_CAP}")

    def chain(self, N: int, h: float) -> ChainSpec:
        return ChainSpec(int(N), self.boundary, self.J, self.delta, float(h))

    @property
    def identity(self) -> dict:
        """Fields that determine the results (not where or how fast)."""
        d = asdict(self)
        for k in ("out", "workers", "sweep_id", "plots"):
            d.pop(k)
        return d

    def resolved_id(self) -> str:
        if self.sweep_id:
            return self.sweep_id
        blob = json.dumps(self.identity, sort_keys=True, default=str)
        return "sweep-" + hashlib.sha1(blob.encode()).hexdigest()[:10]

    def out_root(self) -> Path:
        return Path(self.out or os.environ.get("QUENCHLAB_OUT", DEFAULT_OUT))


def expand_grid(spec: str, h_c: float = 1.0) -> list[float]:
    """'lin a b n', 'log a b n' or 'hn-log a b n' (h = h_c (1 - h_n), plus h_c)."""
    parts = spec.replace(":", " ").replace(",", " ").split()
    if len(parts) != 4:
        raise ConfigError(f"bad grid {spec!r}; expected '<lin|log|hn-log> start stop count'")
    kind, a, b, n = parts[0], float(parts[1]), float(parts[2]), int(parts[3])
    if n < 1:
        raise ConfigError("grid count must be positive")
    if kind == "lin":
        vals = np.linspace(a, b, n)
    elif kind in ("log", "hn-log"):
        if a <= 0 or b <= 0:
            raise ConfigError("log grids need positive bounds")
        vals = np.logspace(math.log10(a), math.log10(b), n)
        if kind == "hn-log":
            vals = np.concatenate([[h_c], h_c * (1.0 - vals)])
    else:
        raise ConfigError(f"unknown grid kind {kind!r}")
    return [float(v) for v in np.round(vals, 12)]


_LIST_KEYS = {"N": int, "h": float, "kappa": float, "t_L": float, "alpha": float,
              "analyses": str, "scaling_window": float}
_SCALAR_KEYS = {"engine": str, "boundary": str, "J": float, "delta": float, "h_c": float,
                "t_max": float, "dt": float, "site": int, "C0_mode": str, "out": str,
                "workers": int, "sweep_id": str, "plots": "bool"}
CONFIG_KEYS = sorted(set(_LIST_KEYS) | set(_SCALAR_KEYS) | {"h_grid"})


def _to_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def parse_config_text(text: str, extra_keys: Iterable[str] = ()) -> dict:
    """Flat key = value lines; repeated keys (or commas) build lists."""
    allowed = set(CONFIG_KEYS) | set(extra_keys)
    raw: dict[str, list[str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        raw.setdefault(key, []).append(value)
    return raw


def config_from_mapping(raw: dict, base: Optional[SweepConfig] = None) -> SweepConfig:
    """Build a SweepConfig from {key: [str, ...]}; later values override ``base``."""
    kw: dict[str, Any] = {}
    try:
        for key, values in raw.items():
            if key == "h_grid" or key not in CONFIG_KEYS:
                continue
            if key in _LIST_KEYS:
                conv = _LIST_KEYS[key]
                items = [p for v in values for p in str(v).replace(",", " ").split()]
                kw[key] = tuple(conv(float(x)) if conv is int else conv(x) for x in items)
            else:
                conv = _SCALAR_KEYS[key]
                v = str(values[-1])
                kw[key] = _to_bool(v) if conv == "bool" else (int(float(v)) if conv is int else conv(v))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if "h_grid" in raw:
        h_c = kw.get("h_c", base.h_c if base else 1.0)
        grid = [h for spec in raw["h_grid"] for h in expand_grid(spec, h_c)]
        kw["h"] = tuple(kw.get("h", ())) + tuple(grid)
    if "h" in kw:
        kw["h"] = tuple(sorted(set(kw["h"])))
    if base is None:
        return SweepConfig(**kw)
    return replace(base, **kw)


def load_config(path) -> SweepConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_mapping(parse_config_text(text))


# records and files

@dataclass
class ResultRecord:
    stage: str
    inputs: dict
    payload: dict
    engine: str
    status: str = "ok"
    error: str = ""
    wall_time: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=_json_default)

    @classmethod
    def from_json(cls, line: str) -> "ResultRecord":
        d = json.loads(line)
        return cls(**{f.name: d[f.name] for f in fields(cls) if f.name in d})


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


def write_series_csv(series: TimeSeries, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "value", "valid"])
    valid = series.valid
    for t, v, ok in zip(series.times, series.values, valid):
        w.writerow([fmt(float(t)), fmt(float(v)), "1" if ok else "0"])
    path.write_text(buf.getvalue())
    return path


def read_series_csv(path, label: str = "magnetization") -> TimeSeries:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty series file")
    t = np.array([float(r["t"]) for r in rows])
    v = np.array([float(r["value"]) for r in rows])
    ok = np.array([r["valid"] == "1" for r in rows])
    valid_to = float(t[ok].max()) if ok.any() else float(t[0])
    return TimeSeries(t, v, valid_to, label, {"source": str(path)})


def write_jsonl(records: Iterable[ResultRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(r.to_json() + "\n" for r in records))
    return path


def read_jsonl(path) -> list[ResultRecord]:
    return [ResultRecord.from_json(l) for l in Path(path).read_text().splitlines() if l.strip()]


SUMMARY_COLUMNS = ("stage", "N", "h", "kappa", "key", "quantity", "value", "sigma",
                   "status", "error")


def write_table(rows: list[dict], path, columns=SUMMARY_COLUMNS) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    path.write_text(buf.getvalue())
    return path


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# per-point computations (top level so worker processes can pickle them)

def _time_grid(cfg: SweepConfig, spec: ChainSpec) -> TimeGrid:
    t_max = cfg.t_max
    if t_max is None:
        if spec.h == 0:
            t_max = 10.0
        elif cfg.engine == "freefermion":
            t_max = cluster_valid_to(spec)
        else:
            site = cfg.site if cfg.site is not None else spec.N // 2
            t_max = lightcone_window(spec, 1e-9, site if spec.boundary == "open" else None).tau_s
    n = max(2, int(math.ceil(t_max / cfg.dt - 1e-9)))
    return TimeGrid(0.0, n * cfg.dt, cfg.dt)


def compute_series(cfg: SweepConfig, N: int, h: float) -> TimeSeries:
    spec = cfg.chain(N, h)
    quench = QuenchSpec(spec, _time_grid(cfg, spec), cfg.site)
    if cfg.engine == "freefermion":
        if N <= SMALL_N_BOTH_SECTORS:
            return freefermion.magnetization_cluster(quench, sector="both", signed=True)
        return freefermion.magnetization_cluster(quench)
    return edsim.magnetization(quench)


def _series_job(args):
    cfg, N, h = args
    t0 = time.perf_counter()
    try:
        s = compute_series(cfg, N, h)
        return N, h, s, "", time.perf_counter() - t0
    except Exception as exc:  # recorded per point, the sweep goes on
        msg = f"{type(exc).__name__}: {exc}"
        log.debug("series N=%s h=%s failed\n%s", N, h, traceback.format_exc())
        return N, h, None, msg, time.perf_counter() - t0


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# analysis stages

def _is_disordered(cfg: SweepConfig, h: float) -> bool:
    return h > cfg.h_c


def rate_fit(cfg: SweepConfig, series: TimeSeries, N: int, h: float, kappa: float) -> dict:
    """Decay rate of one series: plain, oscillating or two-term exponential."""
    spec = cfg.chain(N, h)
    site = cfg.site if cfg.site is not None else N // 2
    if cfg.delta != 0.0:
        # the two-term model covers the early transient too: window starts at 0
        lc = lightcone_window(spec, 1e-9, site if spec.boundary == "open" else None)
        tt = analysis.fit_two_term(series, (0.0, min(lc.tau_s, series.valid_to)))
        return {"model_id": "two_term", "f": tt.f1, "sigma": tt.sigma[1],
                "region": analysis.classify_region(tt).value, "omega": tt.omega,
                "gamma1": tt.gamma1, "gamma2": tt.gamma2, "f2": tt.f2,
                "residual_rms": tt.residual_rms, "fit": tt.to_record()}
    lc = lightcone_window(spec, kappa, site if spec.boundary == "open" else None)
    if _is_disordered(cfg, h):
        hint = analysis.analytic_omega(h) if cfg.delta == 0 and h >= 1 else None
        res = analysis.fit_osc_exponential(series, lc, omega_hint=hint)
        return {"model_id": "osc_exp", "f": float(res.params[2]), "sigma": float(res.sigma[2]),
                "omega": float(res.params[1]), "region": "dynamically_disordered",
                "fit": res.to_record()}
    res = analysis.fit_exponential(series, lc)
    return {"model_id": "exp", "f": float(res.params[1]), "sigma": float(res.sigma[1]),
            "region": "dynamically_ordered", "fit": res.to_record()}


@dataclass
class SweepResult:
    config: SweepConfig
    root: Path
    series: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    scaling: list = field(default_factory=list)
    op: list = field(default_factory=list)
    crossover: list = field(default_factory=list)
    binder: list = field(default_factory=list)
    otoc: list = field(default_factory=list)
    summary: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _c0(cfg: SweepConfig, rates: dict, N: int, kappa: float) -> float:
    if cfg.C0_mode == "analytic":
        return analysis.C0_ANALYTIC
    key = (N, round(cfg.h_c, 12), kappa)
    if key not in rates:
        raise QuenchLabError(f"measured C0 needs the h = h_c = {cfg.h_c:g} point in the grid")
    return math.exp(rates[key]["f"])


def _h_n(cfg: SweepConfig, h: float) -> float:
    return (cfg.h_c - h) / cfg.h_c


def run_sweep(cfg: SweepConfig, write: bool = True) -> SweepResult:
    root = cfg.out_root() / cfg.resolved_id()
    res = SweepResult(cfg, root)
    records: dict[str, list[ResultRecord]] = {}
    summary = res.summary

    def record(stage, inputs, payload, status="ok", error="", wall=0.0):
        records.setdefault(stage, []).append(
            ResultRecord(stage, inputs, payload, _engine_version(cfg), status, error, wall))
        if status == "error":
            res.failures.append((stage, inputs, error))

    # series
    items = [(cfg, N, h) for N in sorted(cfg.N) for h in sorted(cfg.h)]
    for N, h, s, err, wall in _map(_series_job, items, cfg.workers):
        inputs = {"N": N, "h": h, **{k: v for k, v in cfg.identity.items() if k not in ("N", "h")}}
        if s is None:
            record("series", inputs, {}, "error", err, wall)
            summary.append({"stage": "series", "N": N, "h": h, "status": "error", "error": err})
            continue
        res.series[(N, round(h, 12))] = s
        path = root / "series" / f"N{N}_h{h_label(h)}.csv"
        if write:
            write_series_csv(s, path)
        record("series", inputs, {"file": str(path.relative_to(root)), "valid_to": s.valid_to,
                                  "samples": int(s.times.size)}, wall=wall)
        summary.append({"stage": "series", "N": N, "h": h, "quantity": "valid_to",
                        "value": s.valid_to, "status": "ok"})

    do = set(cfg.analyses)
    rates: dict = {}
    if do & {"fits", "scaling", "op", "crossover"}:
        for (N, h), s in sorted(res.series.items()):
            for kappa in cfg.kappa:
                t0 = time.perf_counter()
                inputs = {"N": N, "h": h, "kappa": kappa}
                try:
                    r = rate_fit(cfg, s, N, h, kappa)
                except Exception as exc:
                    err = f"{type(exc).__name__}: {exc}"
                    record("rates", inputs, {}, "error", err)
                    summary.append({"stage": "rates", "N": N, "h": h, "kappa": kappa,
                                    "status": "error", "error": err})
                    continue
                rates[(N, h, kappa)] = r
                row = {"N": N, "h": h, "kappa": kappa, **{k: v for k, v in r.items() if k != "fit"}}
                res.rates.append(row)
                record("rates", inputs, r, wall=time.perf_counter() - t0)
                summary.append({"stage": "rates", "N": N, "h": h, "kappa": kappa, "key": r["region"],
                                "quantity": "f", "value": r["f"], "sigma": r["sigma"], "status": "ok"})

    groups = sorted({(N, k) for (N, _, k) in rates})
    if "scaling" in do:
        lo, hi = cfg.scaling_window
        for N, kappa in groups:
            inputs = {"N": N, "kappa": kappa, "C0_mode": cfg.C0_mode, "window": [lo, hi]}
            try:
                C0 = _c0(cfg, rates, N, kappa)
                pts = [(_h_n(cfg, h), r["f"]) for (n, h, k), r in sorted(rates.items())
                       if n == N and k == kappa and h < cfg.h_c]
                win = [p for p in pts if lo * (1 - 1e-9) <= p[0] <= hi * (1 + 1e-9)]
                kept, pl = analysis.decay_rate_function(win, C0)
                payload = {"C0": C0, "beta": float(pl.params[1]), "beta_sigma": float(pl.sigma[1]),
                           "gamma": math.exp(pl.params[0]), "points": kept.tolist(),
                           "fit": pl.to_record()}
                near = [p for p in pts if p[0] <= 0.4]
                if len(near) >= 4:
                    try:
                        sf = analysis.fit_log_rate(near, C0, with_cutoff=True)
                        payload["log_rate"] = {"gamma": sf.gamma, "beta": sf.beta,
                                               "Lambda": sf.Lambda, "sigma": list(sf.sigma)}
                    except QuenchLabError as exc:
                        payload["log_rate_error"] = str(exc)
                res.scaling.append({"N": N, "kappa": kappa, **payload})
                record("scaling", inputs, payload)
                summary.append({"stage": "scaling", "N": N, "kappa": kappa, "quantity": "beta",
                                "value": payload["beta"], "sigma": payload["beta_sigma"],
                                "status": "ok"})
            except Exception as exc:
                err = f"{type(exc).__name__}: {exc}"
                record("scaling", inputs, {}, "error", err)
                summary.append({"stage": "scaling", "N": N, "kappa": kappa, "status": "error",
                                "error": err})

    if "op" in do:
        _op_stage(cfg, res, rates, groups, record, summary)

    if "crossover" in do:
        for N, kappa in groups:
            inputs = {"N": N, "kappa": kappa}
            pts = [(h, r["f"]) for (n, h, k), r in sorted(rates.items()) if n == N and k == kappa]
            try:
                c = analysis.locate_crossover(pts)
                payload = {"h_c": c.h_c, "uncertainty": c.uncertainty, "cusp": c.cusp,
                           "score": c.score}
                res.crossover.append({"N": N, "kappa": kappa, **payload})
                record("crossover", inputs, payload)
                summary.append({"stage": "crossover", "N": N, "kappa": kappa,
                                "key": "cusp" if c.cusp else "smooth", "quantity": "h_c",
                                "value": c.h_c, "sigma": c.uncertainty, "status": "ok"})
            except Exception as exc:
                # a grid that does not bracket a minimum is not an error of the sweep
                status = "skipped" if isinstance(exc, DomainError) else "error"
                err = f"{type(exc).__name__}: {exc}"
                record("crossover", inputs, {}, status, err)
                summary.append({"stage": "crossover", "N": N, "kappa": kappa, "status": status,
                                "error": err})

    if "binder" in do:
        _binder_stage(cfg, res, record, summary)
    if "otoc" in do:
        _otoc_stage(cfg, res, record, summary)

    if write:
        for stage, recs in sorted(records.items()):
            write_jsonl(recs, root / "fits" / f"{stage}.jsonl")
        write_table(sorted(summary, key=_summary_key), root / "summary.csv")
        (root / "config.txt").write_text(config_to_text(cfg))
        if cfg.plots:
            _emit_plots(res)
    return res


def _summary_key(r):
    return (r.get("stage", ""), r.get("N") or 0, r.get("h") if r.get("h") is not None else -1,
            r.get("kappa") or 0, str(r.get("key") or ""), str(r.get("quantity") or ""))


def _engine_version(cfg: SweepConfig) -> str:
    return freefermion.ENGINE_VERSION if cfg.engine == "freefermion" else edsim.ENGINE_VERSION


def op_floor(series_hc: TimeSeries, h_c: float, kind: str, c: float, kappa: float,
             J: float = 1.0, t_star: Optional[float] = None) -> float:
    """Measured C0 for the OP: the same cutoff ratio evaluated at h = h_c.

    The rate fit at h_c spans the whole lightcone window while the OP only
    sees [t*, t_L]; taking C0 from the same ratio makes C' vanish at h_c.
    """
    v = quasiparticle_velocity(h_c, J)
    t_L = c if kind == "fixed" else c / v
    ts = kappa / v if t_star is None else t_star
    return analysis.dynamical_op(series_hc, ts, t_L, 0.0)


def _op_c0(cfg, res, N, kappa, kind, c) -> float:
    if cfg.C0_mode == "analytic":
        return analysis.C0_ANALYTIC
    key = (N, round(cfg.h_c, 12))
    if key not in res.series:
        raise QuenchLabError(f"measured C0 needs the h = h_c = {cfg.h_c:g} series in the grid")
    return op_floor(res.series[key], cfg.h_c, kind, c, kappa, cfg.J)


def _op_stage(cfg, res, rates, groups, record, summary):
    cutoffs = [("fixed", t) for t in cfg.t_L] + [("parametric", a) for a in cfg.alpha]
    if not cutoffs:
        return
    for N, kappa in groups:
        for kind, c in cutoffs:
            try:
                C0 = _op_c0(cfg, res, N, kappa, kind, c)
            except Exception as exc:
                err = f"{type(exc).__name__}: {exc}"
                record("op", {"N": N, "kappa": kappa, "cutoff": kind, "c": c}, {}, "error", err)
                summary.append({"stage": "op", "N": N, "kappa": kappa, "key": f"{kind}:{fmt(c)}",
                                "status": "error", "error": err})
                continue
            rows = []
            for (n, h), s in sorted(res.series.items()):
                if n != N or not h < cfg.h_c or h == 0:
                    continue
                v = quasiparticle_velocity(h, cfg.J)
                t_star = kappa / v
                t_L = c if kind == "fixed" else c / v
                inputs = {"N": N, "h": h, "kappa": kappa, "cutoff": kind, "c": c}
                try:
                    d = analysis.dynamical_op_detail(s, t_star, t_L, C0)
                    err = analysis.propagate_error(d.C_L, d.C_star, d.t_L - d.t_star, abs(d.dt_L), 0.0)
                    row = {"N": N, "h": h, "h_n": _h_n(cfg, h), "kappa": kappa, "cutoff": kind,
                           "c": c, "op": d.value, "err": err, "t_star": d.t_star, "t_L": d.t_L,
                           "dt_L": d.dt_L}
                    rows.append(row)
                    record("op", inputs, row)
                    summary.append({"stage": "op", "N": N, "h": h, "kappa": kappa,
                                    "key": f"{kind}:{fmt(c)}", "quantity": "op", "value": d.value,
                                    "sigma": err, "status": "ok"})
                except Exception as exc:
                    e = f"{type(exc).__name__}: {exc}"
                    record("op", inputs, {}, "error", e)
                    summary.append({"stage": "op", "N": N, "h": h, "kappa": kappa,
                                    "key": f"{kind}:{fmt(c)}", "status": "error", "error": e})
            res.op.extend(rows)
            lo, hi = cfg.scaling_window
            pts = [(r["h_n"], r["op"]) for r in rows
                   if lo * (1 - 1e-9) <= r["h_n"] <= hi * (1 + 1e-9) and r["op"] > 0]
            if len(pts) >= 2:
                x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
                fit = analysis.numerics.linear_regression(x, y, model_id="power_law")
                summary.append({"stage": "op_scaling", "N": N, "kappa": kappa,
                                "key": f"{kind}:{fmt(c)}", "quantity": "beta",
                                "value": float(fit.params[1]), "sigma": float(fit.sigma[1]),
                                "status": "ok"})
                record("op_scaling", {"N": N, "kappa": kappa, "cutoff": kind, "c": c},
                       {"beta": float(fit.params[1]), "fit": fit.to_record()})


def binder_crossings(table: dict) -> list[dict]:
    """Pairwise crossings of U_N(h) for consecutive sizes, linear interpolation."""
    Ns = sorted(table)
    out = []
    for a, b in zip(Ns, Ns[1:]):
        ha, ua = table[a]
        hb, ub = table[b]
        hs = np.intersect1d(ha, hb)
        da = np.interp(hs, ha, ua) - np.interp(hs, hb, ub)
        for k in range(hs.size - 1):
            if da[k] == 0 or da[k] * da[k + 1] < 0:
                x = hs[k] if da[k] == 0 else hs[k] - da[k] * (hs[k + 1] - hs[k]) / (da[k + 1] - da[k])
                out.append({"N1": a, "N2": b, "h": float(x)})
    return out


def _binder_stage(cfg, res, record, summary):
    table = {}
    for N in sorted(cfg.N):
        hs, us = [], []
        for h in sorted(cfg.h):
            inputs = {"N": N, "h": h, "delta": cfg.delta, "boundary": cfg.boundary}
            t0 = time.perf_counter()
            try:
                e0, e1, gs = edsim.ground_state(cfg.chain(N, h))
                U = edsim.binder_cumulant(gs, N)
            except Exception as exc:
                err = f"{type(exc).__name__}: {exc}"
                record("binder", inputs, {}, "error", err)
                summary.append({"stage": "binder", "N": N, "h": h, "status": "error", "error": err})
                continue
            row = {"N": N, "h": h, "E0": e0, "E1": e1, "gap": e1 - e0, "U": U}
            res.binder.append(row)
            record("binder", inputs, row, wall=time.perf_counter() - t0)
            summary.append({"stage": "binder", "N": N, "h": h, "quantity": "U", "value": U,
                            "status": "ok"})
            summary.append({"stage": "binder", "N": N, "h": h, "quantity": "gap",
                            "value": e1 - e0, "status": "ok"})
            hs.append(h)
            us.append(U)
        table[N] = (np.array(hs), np.array(us))
    for c in binder_crossings(table):
        record("binder_crossing", {"N1": c["N1"], "N2": c["N2"]}, c)
        summary.append({"stage": "binder_crossing", "N": c["N2"], "key": f"N{c['N1']}-N{c['N2']}",
                        "quantity": "h", "value": c["h"], "status": "ok"})


def otoc_averages(spec: ChainSpec, dt: float = 0.05, site: Optional[int] = None) -> dict:
    """Means and standard deviations of C(t) and F(t) over t in [0, N]."""
    quench = QuenchSpec(spec, TimeGrid(0.0, float(spec.N), dt), site)
    F = edsim.otoc_site(quench)
    C = edsim.magnetization(quench)
    return {"C_mean": float(np.mean(C.values)), "C_std": float(np.std(C.values)),
            "F_mean": float(np.mean(F.values)), "F_std": float(np.std(F.values))}


def _otoc_stage(cfg, res, record, summary):
    for N in sorted(cfg.N):
        for h in sorted(cfg.h):
            inputs = {"N": N, "h": h, "delta": cfg.delta, "boundary": cfg.boundary}
            t0 = time.perf_counter()
            try:
                row = {"N": N, "h": h, **otoc_averages(cfg.chain(N, h), cfg.dt, cfg.site)}
            except Exception as exc:
                err = f"{type(exc).__name__}: {exc}"
                record("otoc", inputs, {}, "error", err)
                summary.append({"stage": "otoc", "N": N, "h": h, "status": "error", "error": err})
                continue
            res.otoc.append(row)
            record("otoc", inputs, row, wall=time.perf_counter() - t0)
            for q in ("C_mean", "F_mean"):
                summary.append({"stage": "otoc", "N": N, "h": h, "quantity": q, "value": row[q],
                                "sigma": row[q.replace("mean", "std")], "status": "ok"})


def config_to_text(cfg: SweepConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None or v == "" or v == ():
            continue
        if isinstance(v, tuple):
            for item in v:
                lines.append(f"{f.name} = {fmt(item)}")
        elif isinstance(v, bool):
            lines.append(f"{f.name} = {'true' if v else 'false'}")
        else:
            lines.append(f"{f.name} = {fmt(v)}")
    return "\n".join(lines) + "\n"


def _emit_plots(res: SweepResult):
    from .plotting import emit_plot

    plots = res.root / "plots"
    for N in sorted({n for n, _ in res.series}):
        items = [(h, s) for (n, h), s in sorted(res.series.items()) if n == N]
        if len(items) > 8:
            items = [items[int(round(i))] for i in np.linspace(0, len(items) - 1, 8)]
        data = {"t": [], "value": [], "group": []}
        for h, s in items:
            m = s.valid
            data["t"] += list(s.times[m])
            data["value"] += list(s.values[m])
            data["group"] += [f"h={h:g}"] * int(m.sum())
        if data["t"]:
            emit_plot(data, "timeseries", plots / f"timeseries_N{N}.svg", f"N = {N}")
    if res.rates:
        data = {"h": [r["h"] for r in res.rates], "f": [r["f"] for r in res.rates],
                "group": [f"N={r['N']} kappa={r['kappa']:g}" for r in res.rates]}
        emit_plot(data, "rate_vs_hn", plots / "rates.svg", "decay rates")
        nonint = [r for r in res.rates if r["model_id"] == "two_term"]
        if nonint:
            emit_plot({"h": [r["h"] for r in nonint],
                       "gamma1": [r["fit"]["gamma1"] for r in nonint],
                       "gamma2": [r["fit"]["gamma2"] for r in nonint]},
                      "region_map", plots / "regions.svg", "two-term amplitudes")
    if res.scaling:
        data = {"h_n": [], "y": [], "group": []}
        for s in res.scaling:
            for hn, y in s["points"]:
                data["h_n"].append(hn)
                data["y"].append(y)
                data["group"].append(f"N={s['N']} kappa={s['kappa']:g}")
        if data["h_n"]:
            emit_plot(data, "loglog_scaling", plots / "scaling.svg", "decay-rate function")
    if res.op:
        data = {"h_n": [r["h_n"] for r in res.op], "op": [r["op"] for r in res.op],
                "err": [r["err"] for r in res.op],
                "group": [f"{r['cutoff']} {r['c']:g}" for r in res.op]}
        emit_plot(data, "op_scaling", plots / "op.svg", "dynamical OP")
