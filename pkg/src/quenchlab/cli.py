"""Command-line front end: one subcommand per experiment.

Every flag maps onto a key of the flat config file (shown in each flag's
help text); flags given on the command line override the file.  Tables go
to stdout as comma-separated values, artifacts to the sweep directory.

Exit codes: 0 success, 1 some points failed (listed in summary.csv),
2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis, pipeline
from .errors import ConfigError, QuenchLabError
from .model import lightcone_window, quasiparticle_velocity

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
ENGINE_ALIASES = {"ff": "freefermion", "freefermion": "freefermion", "ed": "edsim", "edsim": "edsim"}
CLI_KEYS = ("rates_file", "series_dir", "t_star")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _flag(p, name, key, help, **kw):
    p.add_argument(name, dest=key, default=None, help=f"{help} [config key: {key}]", **kw)


def _common(p):
    p.add_argument("--config", default=None, help="flat key = value config file")
    _flag(p, "--out", "out", "output root (default $QUENCHLAB_OUT or ./quenchlab-out)")
    _flag(p, "--sweep-id", "sweep_id", "name of the sweep directory (default: config hash)")
    _flag(p, "--workers", "workers", "worker processes (default: logical cores)", type=int)
    p.add_argument("--no-plots", dest="plots", action="store_const", const="false", default=None,
                   help="skip SVG output [config key: plots]")


def _engine(p):
    _flag(p, "--engine", "engine", "freefermion|ff or edsim|ed", choices=sorted(ENGINE_ALIASES))


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="quenchlab", description="Quench dynamics of transverse-field Ising chains.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("quench", help="one time series")
    _engine(p)
    _flag(p, "--N", "N", "chain length", type=int)
    _flag(p, "--h", "h", "transverse field", type=float)
    _flag(p, "--delta", "delta", "next-nearest-neighbour coupling", type=float)
    _flag(p, "--boundary", "boundary", "periodic or open", choices=["periodic", "open"])
    _flag(p, "--t-max", "t_max", "final time (default: validity limit)", type=float)
    _flag(p, "--dt", "dt", "time step", type=float)
    _flag(p, "--site", "site", "observed site (default N/2)", type=int)
    _flag(p, "--kappa", "kappa", "UV cutoff coefficient for the printed landmarks", type=float)
    _common(p)

    p = sub.add_parser("rates", help="decay-rate table over an h grid")
    _engine(p)
    _flag(p, "--N", "N", "chain length(s)", type=int, nargs="+")
    _flag(p, "--h", "h", "explicit field values", type=float, nargs="+")
    _flag(p, "--h-grid", "h_grid", "'lin a b n', 'log a b n' or 'hn-log a b n'", nargs="+")
    _flag(p, "--kappa", "kappa", "UV cutoff coefficient(s)", type=float, nargs="+")
    _flag(p, "--dt", "dt", "time step", type=float)
    _flag(p, "--delta", "delta", "next-nearest-neighbour coupling", type=float)
    _flag(p, "--boundary", "boundary", "periodic or open", choices=["periodic", "open"])
    _common(p)

    p = sub.add_parser("scaling", help="decay-rate scaling fit from a rate table")
    _flag(p, "--rates-file", "rates_file", "summary.csv or rates.jsonl of an earlier sweep")
    _flag(p, "--C0-mode", "C0_mode", "measured or analytic", choices=list(pipeline.C0_MODES))
    _flag(p, "--window", "scaling_window", "h_n window lo hi", type=float, nargs=2)
    _flag(p, "--h-c", "h_c", "crossover field", type=float)
    _common(p)

    p = sub.add_parser("op", help="dynamical OP-like quantity from stored series")
    _flag(p, "--series-dir", "series_dir", "directory of N*_h*.csv files")
    _flag(p, "--t-star", "t_star", "fixed UV cutoff (default kappa / v_q)", type=float)
    _flag(p, "--kappa", "kappa", "UV cutoff coefficient", type=float)
    _flag(p, "--t-L", "t_L", "fixed cutoff time(s)", type=float, nargs="+")
    _flag(p, "--alpha", "alpha", "parametric cutoff(s) t_L = alpha / v_q", type=float, nargs="+")
    _flag(p, "--C0-mode", "C0_mode", "measured or analytic", choices=list(pipeline.C0_MODES))
    _flag(p, "--window", "scaling_window", "h_n window lo hi for the exponent", type=float, nargs=2)
    _flag(p, "--h-c", "h_c", "crossover field", type=float)
    _common(p)

    p = sub.add_parser("nonint", help="two-term fits for the nonintegrable chain")
    _flag(p, "--N", "N", "chain length", type=int)
    _flag(p, "--h", "h", "explicit field values", type=float, nargs="+")
    _flag(p, "--h-grid", "h_grid", "'lin a b n' or 'log a b n'", nargs="+")
    _flag(p, "--delta", "delta", "next-nearest-neighbour coupling (default -1)", type=float)
    _flag(p, "--boundary", "boundary", "open (default) or periodic", choices=["periodic", "open"])
    _flag(p, "--dt", "dt", "time step", type=float)
    _common(p)

    p = sub.add_parser("gsqpt", help="ground-state gap and Binder cumulant")
    _flag(p, "--N-list", "N", "chain lengths", type=int, nargs="+")
    _flag(p, "--h", "h", "explicit field values", type=float, nargs="+")
    _flag(p, "--h-grid", "h_grid", "'lin a b n'", nargs="+")
    _flag(p, "--delta", "delta", "next-nearest-neighbour coupling (default -1)", type=float)
    _flag(p, "--boundary", "boundary", "periodic (default) or open", choices=["periodic", "open"])
    _common(p)

    p = sub.add_parser("otoc", help="time-averaged OTOC against magnetization")
    _flag(p, "--N", "N", "chain length", type=int)
    _flag(p, "--h", "h", "explicit field values", type=float, nargs="+")
    _flag(p, "--h-grid", "h_grid", "'lin a b n'", nargs="+")
    _flag(p, "--delta", "delta", "next-nearest-neighbour coupling", type=float)
    _flag(p, "--boundary", "boundary", "open (default, middle site) or periodic",
          choices=["periodic", "open"])
    _flag(p, "--dt", "dt", "time step", type=float)
    _common(p)
    return ap


def _raw(args) -> dict:
    """Config-file mapping overlaid with the flags that were given."""
    raw: dict = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        raw = pipeline.parse_config_text(text, CLI_KEYS)
    skip = {"command", "config", "verbose"}
    given = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    if "h" in given or "h_grid" in given:
        # a field grid on the command line replaces the file's grid entirely
        raw.pop("h", None)
        raw.pop("h_grid", None)
    for key, value in given.items():
        if key == "engine":
            value = ENGINE_ALIASES[value]
        raw[key] = [str(v) for v in value] if isinstance(value, list) else [str(value)]
    return raw


def _config(raw: dict, **defaults) -> pipeline.SweepConfig:
    base = dict(defaults)
    if "h" in raw or "h_grid" in raw:
        base.pop("h", None)
        base.pop("h_grid", None)
    if "workers" not in raw and "workers" not in base:
        base["workers"] = os.cpu_count() or 1
    merged = {k: [str(x) for x in (v if isinstance(v, (list, tuple)) else [v])] for k, v in base.items()}
    merged.update(raw)
    return pipeline.config_from_mapping(merged)


def _print_table(rows, columns, out=None):
    w = csv.writer(out or sys.stdout, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([pipeline.fmt(r.get(c)) for c in columns])


def _finish(res: pipeline.SweepResult) -> int:
    print(f"# sweep directory: {res.root}", file=sys.stderr)
    if res.failures:
        for stage, inputs, err in res.failures:
            print(f"# failed {stage} {inputs}: {err}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_quench(args) -> int:
    raw = _raw(args)
    kappa = float(raw.pop("kappa", ["5"])[-1])
    cfg = _config(raw, N=48, h=0.5, engine="freefermion", analyses="", kappa=kappa)
    N, h = cfg.N[0], cfg.h[0]
    res = pipeline.run_sweep(cfg)
    spec = cfg.chain(N, h)
    rows = [{"quantity": "N", "value": N}, {"quantity": "h", "value": h}]
    s = res.series.get((N, round(h, 12)))
    if s is not None:
        rows.append({"quantity": "valid_to", "value": s.valid_to})
    if h > 0:
        site = cfg.site if cfg.site is not None else N // 2
        lc = lightcone_window(spec, 1e-9, site if spec.boundary == "open" else None)
        t_star = kappa / lc.v_q
        rows += [{"quantity": "v_q", "value": lc.v_q}, {"quantity": "t_star", "value": t_star},
                 {"quantity": "tau_s", "value": lc.tau_s}, {"quantity": "tau_r", "value": lc.tau_r}]
        if not t_star < lc.tau_s:
            print(f"# warning: t_star >= tau_s, no lightcone window at kappa = {kappa:g}",
                  file=sys.stderr)
    _print_table(rows, ("quantity", "value"))
    if s is not None:
        print(f"# series: {res.root / 'series' / f'N{N}_h{pipeline.h_label(h)}.csv'}", file=sys.stderr)
    return _finish(res)


def cmd_rates(args) -> int:
    cfg = _config(_raw(args), N=48, engine="freefermion", analyses="fits,crossover")
    res = pipeline.run_sweep(cfg)
    _print_table(res.rates, ("N", "h", "kappa", "model_id", "region", "f", "sigma", "omega"))
    for c in res.crossover:
        print(f"# crossover N={c['N']} kappa={c['kappa']:g}: h_c = {c['h_c']:.6g} "
              f"+- {c['uncertainty']:.2g} ({'cusp' if c['cusp'] else 'smooth'})", file=sys.stderr)
    return _finish(res)


def load_rates(path) -> list[dict]:
    """(N, h, kappa, f) rows from a summary.csv or a rates.jsonl file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"rates file {path} not found")
    rows = []
    if path.suffix == ".jsonl":
        for rec in pipeline.read_jsonl(path):
            if rec.stage == "rates" and rec.status == "ok":
                rows.append({**rec.inputs, "f": rec.payload["f"]})
    else:
        for r in pipeline.read_table(path):
            if r.get("stage") == "rates" and r.get("status") == "ok" and r.get("quantity") == "f":
                rows.append({"N": int(r["N"]), "h": float(r["h"]), "kappa": float(r["kappa"]),
                             "f": float(r["value"])})
    if not rows:
        raise ConfigError(f"no decay rates in {path}")
    return rows


def cmd_scaling(args) -> int:
    raw = _raw(args)
    if "rates_file" not in raw:
        raise ConfigError("scaling needs --rates-file (or rates_file in the config)")
    rows = load_rates(raw["rates_file"][-1])
    C0_mode = raw.get("C0_mode", ["measured"])[-1]
    lo, hi = (float(x) for x in raw.get("scaling_window", ["1e-4", "3e-2"]))
    h_c = float(raw.get("h_c", ["1.0"])[-1])
    out, failed = [], 0
    for N, kappa in sorted({(r["N"], r["kappa"]) for r in rows}):
        sel = {round(r["h"], 12): r["f"] for r in rows if r["N"] == N and r["kappa"] == kappa}
        try:
            if C0_mode == "analytic":
                C0 = analysis.C0_ANALYTIC
            elif round(h_c, 12) in sel:
                C0 = math.exp(sel[round(h_c, 12)])
            else:
                raise QuenchLabError(f"no rate at h_c = {h_c:g} for measured C0")
            pts = [((h_c - h) / h_c, f) for h, f in sorted(sel.items()) if h < h_c]
            win = [p for p in pts if lo * (1 - 1e-9) <= p[0] <= hi * (1 + 1e-9)]
            _, pl = analysis.decay_rate_function(win, C0)
            row = {"N": N, "kappa": kappa, "C0": C0, "beta": pl.params[1], "beta_sigma": pl.sigma[1],
                   "gamma": math.exp(pl.params[0]), "points": len(win)}
            near = [p for p in pts if p[0] <= 0.4]
            if len(near) >= 4:
                sf = analysis.fit_log_rate(near, C0)
                row.update(lr_gamma=sf.gamma, lr_beta=sf.beta, lr_Lambda=sf.Lambda)
            out.append(row)
        except QuenchLabError as exc:
            failed += 1
            print(f"# N={N} kappa={kappa:g}: {exc}", file=sys.stderr)
    _print_table(out, ("N", "kappa", "C0", "beta", "beta_sigma", "gamma", "points",
                       "lr_gamma", "lr_beta", "lr_Lambda"))
    return EXIT_PARTIAL if failed else EXIT_OK


def _parse_series_name(name: str):
    stem = name[:-4]
    if not stem.startswith("N") or "_h" not in stem:
        return None
    n, h = stem[1:].split("_h", 1)
    try:
        return int(n), float(h)
    except ValueError:
        return None


def cmd_op(args) -> int:
    raw = _raw(args)
    if "series_dir" not in raw:
        raise ConfigError("op needs --series-dir (or series_dir in the config)")
    d = Path(raw["series_dir"][-1])
    if not d.is_dir():
        raise ConfigError(f"series directory {d} not found")
    kappa = float(raw.get("kappa", ["5"])[-1])
    t_star_fixed = float(raw["t_star"][-1]) if "t_star" in raw else None
    t_Ls = [float(x) for x in raw.get("t_L", [])]
    alphas = [float(x) for x in raw.get("alpha", [])]
    if not t_Ls and not alphas:
        raise ConfigError("op needs --t-L and/or --alpha")
    C0_mode = raw.get("C0_mode", ["measured"])[-1]
    h_c = float(raw.get("h_c", ["1.0"])[-1])
    lo, hi = (float(x) for x in raw.get("scaling_window", ["1e-4", "3e-2"]))
    series = {}
    for f in sorted(d.glob("N*_h*.csv")):
        key = _parse_series_name(f.name)
        if key:
            series[key] = pipeline.read_series_csv(f)
    if not series:
        raise ConfigError(f"no series files in {d}")
    rows, failed = [], 0
    fits = []
    for N in sorted({n for n, _ in series}):
        sc = series.get((N, h_c))
        if C0_mode == "measured" and sc is None:
            print(f"# N={N}: no h = h_c series for measured C0", file=sys.stderr)
            failed += 1
            continue
        for kind, c in [("fixed", t) for t in t_Ls] + [("parametric", a) for a in alphas]:
            if C0_mode == "analytic":
                C0 = analysis.C0_ANALYTIC
            else:
                try:
                    C0 = pipeline.op_floor(sc, h_c, kind, c, kappa, t_star=t_star_fixed)
                except QuenchLabError as exc:
                    failed += 1
                    print(f"# N={N} {kind} {c:g}: C0 at h_c: {exc}", file=sys.stderr)
                    continue
            pts = []
            for (n, h), s in sorted(series.items()):
                if n != N or not 0 < h < h_c:
                    continue
                v = quasiparticle_velocity(h)
                t_star = t_star_fixed if t_star_fixed is not None else kappa / v
                t_L = c if kind == "fixed" else c / v
                try:
                    det = analysis.dynamical_op_detail(s, t_star, t_L, C0)
                    err = analysis.propagate_error(det.C_L, det.C_star, det.t_L - det.t_star,
                                                   abs(det.dt_L), 0.0)
                except QuenchLabError as exc:
                    failed += 1
                    print(f"# N={N} h={h:g} {kind} {c:g}: {exc}", file=sys.stderr)
                    continue
                hn = (h_c - h) / h_c
                rows.append({"N": N, "h": h, "h_n": hn, "cutoff": kind, "c": c, "t_star": det.t_star,
                             "t_L": det.t_L, "dt_L": det.dt_L, "op": det.value, "err": err})
                if lo * (1 - 1e-9) <= hn <= hi * (1 + 1e-9) and det.value > 0:
                    pts.append((hn, det.value))
            if len(pts) >= 2:
                fit = analysis.numerics.linear_regression(np.log([p[0] for p in pts]),
                                                          np.log([p[1] for p in pts]))
                fits.append((N, kind, c, fit.params[1], fit.sigma[1]))
    _print_table(rows, ("N", "h", "h_n", "cutoff", "c", "t_star", "t_L", "dt_L", "op", "err"))
    for N, kind, c, b, sb in fits:
        print(f"# N={N} {kind} {c:g}: beta = {b:.4f} +- {sb:.2g}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_nonint(args) -> int:
    cfg = _config(_raw(args), N=16, engine="edsim", delta=-1.0, boundary="open",
                  analyses="fits,crossover")
    res = pipeline.run_sweep(cfg)
    rows = [{**r, "f1": r["f"]} for r in res.rates]
    _print_table(rows, ("N", "h", "kappa", "region", "gamma1", "f1", "gamma2", "f2", "omega",
                        "residual_rms"))
    for c in res.crossover:
        print(f"# minimum of f1: h = {c['h_c']:.4g} +- {c['uncertainty']:.2g}", file=sys.stderr)
    return _finish(res)


def cmd_gsqpt(args) -> int:
    cfg = _config(_raw(args), N="8,10,12", engine="edsim", delta=-1.0, analyses="binder",
                  h_grid="lin 2.0 3.0 11")
    res = pipeline.run_sweep(cfg)
    _print_table(res.binder, ("N", "h", "E0", "E1", "gap", "U"))
    recs = [r for r in res.summary if r.get("stage") == "binder_crossing"]
    for r in recs:
        print(f"# Binder crossing {r['key']}: h = {r['value']:.4g}", file=sys.stderr)
    return _finish(res)


def cmd_otoc(args) -> int:
    cfg = _config(_raw(args), N=12, engine="edsim", analyses="otoc", h=0.5, boundary="open")
    res = pipeline.run_sweep(cfg)
    _print_table(res.otoc, ("N", "h", "C_mean", "C_std", "F_mean", "F_std"))
    return _finish(res)


COMMANDS = {"quench": cmd_quench, "rates": cmd_rates, "scaling": cmd_scaling, "op": cmd_op,
            "nonint": cmd_nonint, "gsqpt": cmd_gsqpt, "otoc": cmd_otoc}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"quenchlab {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QuenchLabError as exc:
        print(f"quenchlab {args.command}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
