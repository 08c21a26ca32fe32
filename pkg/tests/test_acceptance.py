"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected through ``record_property`` and printed in the
terminal summary by conftest.py, so they show up even without ``-s``.
The heavy data (N = 192 and N = 480 free-fermion sweeps, N = 16 exact
diagonalization) is built once per module.  Expect about 35 minutes on one
core.
"""

import math

import numpy as np
import pytest

from quenchlab.errors import DomainError
from quenchlab import analysis, edsim, freefermion, numerics, pipeline
from quenchlab.model import ChainSpec, QuenchSpec, TimeGrid, lightcone_window
from quenchlab.pipeline import SweepConfig, expand_grid, run_sweep

pytestmark = pytest.mark.acceptance

KAPPAS = (2.5, 5.0, 7.5, 10.0)


def report(record_property, n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    record_property("acceptance", line)
    print(line)
    assert ok, line


def _rates(res, kappa):
    return {r["h"]: r for r in res.rates if r["kappa"] == kappa}


def _scaling(res, N, kappa):
    for s in res.scaling:
        if s["N"] == N and s["kappa"] == kappa:
            return s
    raise AssertionError(f"no scaling result for N={N}, kappa={kappa}")


@pytest.fixture(scope="module")
def ordered_sweeps():
    """Ordered-side decay rates at N = 192 and 480 on an h_n log grid."""
    out = {}
    for N in (192, 480):
        cfg = SweepConfig(engine="freefermion", N=(N,), h=tuple(expand_grid("hn-log 1e-4 0.4 30")),
                          kappa=KAPPAS, analyses=("fits", "scaling"), plots=False)
        out[N] = run_sweep(cfg, write=False)
        assert out[N].ok, out[N].failures
    return out


@pytest.fixture(scope="module")
def criterion3_beta(ordered_sweeps):
    return {(N, k): _scaling(ordered_sweeps[N], N, k)["beta"]
            for N in (192, 480) for k in (2.5, 5.0)}


def test_criterion_01_oracle_equivalence(record_property):
    worst = 0.0
    for N in (8, 10, 12):
        for h in (0.3, 0.5, 1.0, 1.2, 2.0):
            spec = ChainSpec(N, "periodic", h=h)
            q = QuenchSpec(spec, TimeGrid(0.0, 5.0, 0.05))
            ed = edsim.zz_correlator(q, 0, N // 2)
            ff = freefermion.zz_correlator(spec, 0, N // 2, q.tgrid.times)
            worst = max(worst, float(np.max(np.abs(ed - ff))))
    report(record_property, 1, worst <= 1e-8, f"max |ff - ed| = {worst:.2e} (tol 1e-8)")


def test_criterion_02_analytic_rate(record_property):
    cfg = SweepConfig(engine="freefermion", N=(192,), h=(0.3, 0.5, 0.7), kappa=(5.0,),
                      plots=False)
    res = run_sweep(cfg, write=False)
    rel = {r["h"]: r["f"] / analysis.analytic_decay_rate(r["h"]) - 1 for r in res.rates}
    worst = max(abs(v) for v in rel.values())
    detail = ", ".join(f"h={h:g}: {v:+.4f}" for h, v in sorted(rel.items()))
    report(record_property, 2, res.ok and len(rel) == 3 and worst <= 0.02,
           f"relative error {detail} (tol 0.02)")


def test_criterion_03_short_time_beta(record_property, criterion3_beta):
    ok = all(abs(b - 1.0) <= 0.1 for b in criterion3_beta.values())
    detail = ", ".join(f"N={N} kappa={k:g}: {b:.3f}" for (N, k), b in sorted(criterion3_beta.items()))
    report(record_property, 3, ok, f"beta {detail} (target 1.0 +- 0.1)")


def test_criterion_04_exponent_crossover_shift(record_property, ordered_sweeps):
    res = ordered_sweeps[480]
    xs = []
    for k in KAPPAS:
        rates = _rates(res, k)
        C0 = math.exp(rates[1.0]["f"])
        pts = [(1.0 - h, r["f"]) for h, r in rates.items() if h < 1.0]
        xs.append(analysis.exponent_crossover(pts, C0))
    ok = all(b < a for a, b in zip(xs, xs[1:]))
    detail = ", ".join(f"kappa={k:g}: {x:.4g}" for k, x in zip(KAPPAS, xs))
    report(record_property, 4, ok, f"h_n where local exponent = 0.75: {detail} (must decrease)")


@pytest.fixture(scope="module")
def disordered_192():
    hs = tuple(float(1 + x) for x in np.concatenate(
        [np.logspace(-3, math.log10(5e-2), 14), [0.1, 0.2, 0.3, 0.4, 0.5]]))
    cfg = SweepConfig(engine="freefermion", N=(192,), h=hs, kappa=(5.0,), plots=False)
    res = run_sweep(cfg, write=False)
    assert res.ok, res.failures
    return res


def _delta_exponent(rows, lo, hi):
    pts = np.array([(r["h"] - 1.0, r["omega"]) for r in rows
                    if lo * (1 - 1e-9) <= r["h"] - 1.0 <= hi * (1 + 1e-9)])
    return float(numerics.linear_regression(np.log(pts[:, 0]), np.log(pts[:, 1])).params[1])


def test_criterion_05_disordered_regime(record_property, disordered_192):
    rows = disordered_192.rates
    band = [r for r in rows if 1.05 - 1e-9 <= r["h"] <= 1.5 + 1e-9]
    f_err = max(abs(r["f"] / (-4 / math.pi) - 1) for r in band)
    w_err = max(abs(r["omega"] / analysis.analytic_omega(r["h"]) - 1) for r in band)
    d192 = _delta_exponent(rows, 1e-3, 5e-2)

    hs48 = tuple(float(1 + x) for x in np.logspace(-2, math.log10(0.5), 12))
    cfg = SweepConfig(engine="freefermion", N=(48,), h=hs48, kappa=(5.0,), dt=0.02, plots=False)
    res48 = run_sweep(cfg, write=False)
    d48 = _delta_exponent(res48.rates, 1e-2, 0.5)

    parts = {"a": f_err <= 0.03, "b": w_err <= 0.02, "c192": abs(d192 - 0.5) <= 0.05,
             "c48": abs(d48 - 0.53) <= 0.03}
    detail = (f"(a) max |f/(-4/pi)-1| = {f_err:.4f}; (b) max |omega/omega_an-1| = {w_err:.4f}; "
              f"(c) delta N=192 {d192:.3f}, N=48 {d48:.3f}; parts {parts}")
    report(record_property, 5, len(band) >= 5 and all(parts.values()), detail)


def test_criterion_06_op_cutoff_robustness(record_property, criterion3_beta):
    hs = tuple(expand_grid("hn-log 1e-4 0.4 25"))
    cfg = SweepConfig(engine="freefermion", N=(48,), h=hs, kappa=(2.5,), t_L=(2.5, 4.0, 5.5),
                      alpha=(5.0, 8.0), analyses=("fits", "op"), plots=False)
    res = run_sweep(cfg, write=False)
    betas = {r["key"]: r["value"] for r in res.summary if r["stage"] == "op_scaling"}
    b3 = float(np.mean(list(criterion3_beta.values())))
    vals = np.array(list(betas.values()))
    spread = float(vals.max() - vals.min()) if vals.size else math.inf
    off3 = float(np.max(np.abs(vals - b3))) if vals.size else math.inf

    # fixed alpha/2 and parametric alpha share t_L = alpha / 2 at h_c
    lo, hi = cfg.scaling_window
    s_c = res.series[(48, 1.0)]
    violations = {}
    for a in cfg.alpha:
        c0p = pipeline.op_floor(s_c, 1.0, "parametric", a, 2.5)
        c0f = pipeline.op_floor(s_c, 1.0, "fixed", a / 2, 2.5)
        diffs = []
        for (N, h), s in sorted(res.series.items()):
            hn = 1.0 - h
            if not lo * (1 - 1e-9) <= hn <= hi * (1 + 1e-9):
                continue
            v = 2.0 * h
            p = analysis.dynamical_op(s, 2.5 / v, a / v, c0p)
            f = analysis.dynamical_op(s, 2.5 / v, a / 2, c0f)
            diffs.append((hn, abs(p - f)))
        d = np.array([x for _, x in sorted(diffs, reverse=True)])
        violations[a] = int(np.sum(np.diff(d) > 1e-12))
    parts = {"spread": spread <= 0.15, "vs_c3": off3 <= 0.15,
             "pairing": all(v <= 1 for v in violations.values())}
    detail = (f"beta per cutoff {', '.join(f'{k}: {v:.3f}' for k, v in sorted(betas.items()))}; "
              f"spread {spread:.3f}, max |beta - beta3({b3:.3f})| = {off3:.3f}; "
              f"fixed-vs-parametric increases toward h_c {violations}; parts {parts}")
    report(record_property, 6, len(betas) == 5 and all(parts.values()), detail)


def test_criterion_07_integrable_crossover(record_property):
    hs = tuple(expand_grid("lin 0.8 1.2 41"))
    cfg = SweepConfig(engine="freefermion", N=(192,), h=hs, kappa=(5.0,),
                      analyses=("fits", "crossover"), plots=False)
    res = run_sweep(cfg, write=False)
    c = res.crossover[0] if res.crossover else {"h_c": math.nan, "uncertainty": math.nan,
                                                 "cusp": False}
    ok = abs(c["h_c"] - 1.0) <= 0.01 and c["cusp"]
    report(record_property, 7, ok,
           f"h_c = {c['h_c']:.4f} +- {c['uncertainty']:.4f}, cusp = {c['cusp']} (target 1.00 +- 0.01)")


def test_criterion_08_c0_consistency(record_property, ordered_sweeps):
    f = _rates(ordered_sweeps[480], 2.5)[1.0]["f"]
    rel = math.exp(f) / analysis.C0_ANALYTIC - 1
    report(record_property, 8, abs(rel) <= 0.05,
           f"exp(f) = {math.exp(f):.4f} vs {analysis.C0_ANALYTIC:.4f}, relative {rel:+.4f} (tol 0.05)")


def test_criterion_09_nonintegrable(record_property):
    hs = (1.2, 1.5, 1.8, 1.95, 2.0, 2.1, 2.2, 2.3, 2.4, 2.5, 2.6, 2.8, 3.0)
    cfg = SweepConfig(engine="edsim", N=(16,), boundary="open", delta=-1.0, h=hs,
                      analyses=("fits", "crossover"), plots=False)
    res = run_sweep(cfg, write=False)
    assert not [f for f in res.failures if f[0] == "series"], res.failures
    series = {h: s for (_, h), s in res.series.items()}
    fits = {}
    for h, s in series.items():
        lc = lightcone_window(cfg.chain(16, h), 1e-9, 8)
        fits[h] = analysis.fit_two_term(s, (0.0, min(lc.tau_s, s.valid_to)))

    rms = {h: fits[h].residual_rms for h in (1.2, 1.95, 2.5)}
    part_a = all(v <= 1e-2 for v in rms.values())
    lab = {h: analysis.classify_region(fits[h]) for h in (1.5, 3.0)}
    part_b = (lab[1.5] is analysis.RegionLabel.ORDERED
              and lab[3.0] is analysis.RegionLabel.DISORDERED)
    pts = [(h, f.f1) for h, f in fits.items()]
    try:
        cr = analysis.locate_crossover(pts)
        h_c = cr.h_c
    except DomainError:
        h_c = math.nan
    part_c = 2.0 <= h_c <= 2.6

    beta = math.nan
    if part_c:
        C0 = math.exp(analysis.rate_at(pts, h_c))
        P = np.vstack([analysis.rescaled_op_points(series, fits, h_c, tL, C0) for tL in (0.3, 0.5)])
        P = P[P[:, 1] > 0]
        if len(P) >= 2:
            beta = float(numerics.linear_regression(np.log(P[:, 0]), np.log(P[:, 1])).params[1])
    part_d = 1.3 <= beta <= 2.7
    parts = {"a": part_a, "b": part_b, "c": part_c, "d": part_d}
    detail = (f"(a) rms {', '.join(f'h={h:g}: {v:.4f}' for h, v in rms.items())} (tol 0.01); "
              f"(b) h=1.5 {lab[1.5].value}, h=3.0 {lab[3.0].value}; (c) f1 minimum at {h_c:.3f}; "
              f"(d) beta {beta:.3f} in [1.3, 2.7]; parts {parts}")
    report(record_property, 9, all(parts.values()), detail)


def test_criterion_10_binder(record_property):
    hs = tuple(float(h) for h in np.round(np.arange(1.8, 3.21, 0.1), 2))
    cfg = SweepConfig(engine="edsim", N=(8, 10, 12, 14), delta=-1.0, h=hs,
                      analyses=("binder",), plots=False)
    res = run_sweep(cfg, write=False)
    table = {}
    for N in cfg.N:
        rows = sorted((r["h"], r["U"]) for r in res.binder if r["N"] == N)
        table[N] = (np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))
    crossings = pipeline.binder_crossings(table)
    pairs = {(c["N1"], c["N2"]) for c in crossings}
    inside = all(2.2 <= c["h"] <= 2.8 for c in crossings)
    all_pairs = pairs == {(8, 10), (10, 12), (12, 14)}
    h_x = float(np.mean([c["h"] for c in crossings])) if crossings else math.nan
    gaps = []
    if crossings:
        for N in cfg.N:
            e0, e1, _ = edsim.ground_state(ChainSpec(N, delta=-1.0, h=h_x))
            gaps.append(e1 - e0)
    closing = len(gaps) == 4 and all(b < a for a, b in zip(gaps, gaps[1:]))
    detail = ("crossings " + ", ".join(f"{c['N1']}/{c['N2']}: {c['h']:.3f}" for c in crossings) + "; "
              f"gap at h={h_x:.3f}: {', '.join(f'{g:.4f}' for g in gaps)}")
    report(record_property, 10, res.ok and inside and all_pairs and closing, detail)


def test_criterion_11_otoc(record_property):
    av = pipeline.otoc_averages(ChainSpec(12, "open", h=0.5), dt=0.05)
    F, C = av["F_mean"], av["C_mean"]
    parts = {"F>=0.5": F >= 0.5, "C<=F/2": C <= 0.5 * F}
    report(record_property, 11, all(parts.values()),
           f"mean F = {F:.4f}, mean C = {C:.4f}; parts {parts}")


def test_criterion_12_property_suites(record_property):
    rng = np.random.default_rng(12)
    checks = {}

    worst = 0.0
    for n in (2, 4, 6, 8, 10):
        for _ in range(5):
            A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            A = A - A.T
            pf = numerics.pfaffian(A)
            det = abs(np.linalg.det(A))
            worst = max(worst, abs(abs(pf) ** 2 - det) / max(det, 1e-300))
    checks["pf^2=|det|"] = worst <= 1e-9

    worst_gf, worst_t = 0.0, 0.0
    for N in (6, 10, 16):
        for h in rng.uniform(0.1, 3.0, 3):
            spec = ChainSpec(N, h=float(h))
            for sector in freefermion.SECTORS:
                sol = freefermion.solve_bdg(*freefermion.build_bdg(spec, sector))
                worst_gf = max(worst_gf, np.max(np.abs(sol.G @ sol.G.T + sol.F @ sol.F.T
                                                       - np.eye(N))))
                prop = freefermion.propagator_for(spec, sector)
                worst_t = max(worst_t, np.max(np.abs(prop.T1 @ prop.T1.T + prop.T2 @ prop.T2.T
                                                     - np.eye(N))))
    checks["GG+FF=1"] = worst_gf <= 1e-10
    checks["T1T1+T2T2=1"] = worst_t <= 1e-10

    drift_e, drift_p = 0.0, 0.0
    for N, bc, delta in ((8, "periodic", 0.0), (8, "open", -1.0), (10, "periodic", -0.5)):
        spec = ChainSpec(N, bc, delta=delta, h=float(rng.uniform(0.2, 2.5)))
        H = edsim.build_hamiltonian(spec)
        q = QuenchSpec(spec, TimeGrid(0.0, 3.0, 0.25))
        for method in ("full", "krylov"):
            states = edsim.evolve(q, method)
            e = [np.vdot(v, H.matvec(v)).real for v in states]
            p = [np.vdot(v, edsim.flip_all(v, N)).real for v in states]
            drift_e = max(drift_e, max(abs(x - e[0]) for x in e))
            drift_p = max(drift_p, max(abs(x - p[0]) for x in p))
    checks["energy"] = drift_e <= 1e-8
    checks["parity"] = drift_p <= 1e-8

    c0, frozen = [], []
    for N, h in ((8, 0.7), (12, 1.3), (32, 0.9), (64, 0.5)):
        s = freefermion.magnetization_cluster(QuenchSpec(ChainSpec(N, h=h), TimeGrid(0.0, 1.0, 0.5)))
        c0.append(abs(s.values[0] - 1.0))
    for N, bc, delta in ((8, "periodic", 0.0), (8, "open", -1.0)):
        s = edsim.magnetization(QuenchSpec(ChainSpec(N, bc, delta=delta, h=0.0),
                                           TimeGrid(0.0, 4.0, 0.5)))
        c0.append(abs(s.values[0] - 1.0))
        frozen.append(float(np.max(np.abs(s.values - 1.0))))
    s = freefermion.magnetization_cluster(QuenchSpec(ChainSpec(16, h=0.0), TimeGrid(0.0, 4.0, 0.5)))
    frozen.append(float(np.max(np.abs(s.values - 1.0))))
    checks["C(0)=1"] = max(c0) <= 1e-10
    checks["h=0 frozen"] = max(frozen) <= 1e-10

    worst_fd = 0.0
    for C, g, t in rng.uniform([0.05, 0.5, 0.5], [0.9, 1.5, 6.0], (10, 3)):
        d_t, d_g = analysis.op_partials(C, g, t)
        op = lambda tt, gg: (C / gg) ** (1.0 / tt)
        e = 1e-6
        fd_t = (op(t + e, g) - op(t - e, g)) / (2 * e)
        fd_g = (op(t, g + e) - op(t, g - e)) / (2 * e)
        worst_fd = max(worst_fd, abs(fd_t - d_t) / abs(d_t), abs(fd_g - d_g) / abs(d_g))
    checks["partials"] = worst_fd <= 1e-6

    failed = [k for k, v in checks.items() if not v]
    report(record_property, 12, not failed,
           f"{len(checks) - len(failed)}/{len(checks)} property checks hold"
           + (f"; failed {failed}" if failed else ""))
