"""From raw C(t) to rates, exponents and crossover locations."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import numerics
from .errors import DomainError
from .model import LightconeWindow, TimeSeries
from .numerics import FitResult

FOUR_OVER_PI = 4.0 / math.pi
C0_ANALYTIC = math.exp(-FOUR_OVER_PI)
DOMINANCE_RATIO = 3.0
CUSP_THRESHOLD = 10.0
TIE_FRACTION = 0.05

WindowLike = Union[LightconeWindow, Sequence[float]]


@dataclass(frozen=True)
class ScalingFit:
    gamma: float
    beta: float
    Lambda: float
    C0: float
    window: tuple
    vicinity: float
    sigma: tuple = ()
    fit: Optional[FitResult] = None

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")
        if not self.Lambda > 0:
            raise DomainError(f"Lambda must be positive, got {self.Lambda}")
        if not 0 < self.C0 < 1:
            raise DomainError(f"C0 must lie in (0, 1), got {self.C0}")

    def rate(self, h_n) -> np.ndarray:
        h_n = np.asarray(h_n, dtype=float)
        return np.log(self.gamma * h_n ** self.beta * np.exp(-h_n / self.Lambda) + self.C0)


@dataclass(frozen=True)
class TwoTermFit:
    gamma1: float
    f1: float
    gamma2: float
    f2: float
    omega: float
    window: tuple
    sigma: tuple
    residual_rms: float = 0.0
    converged: bool = True

    def __post_init__(self):
        if self.omega < 0:
            raise DomainError("omega must be nonnegative")

    def __call__(self, t) -> np.ndarray:
        return two_term_model(np.asarray(t, dtype=float),
                              (self.gamma1, self.f1, self.gamma2, self.f2, self.omega))

    def to_record(self) -> dict:
        return {"gamma1": self.gamma1, "f1": self.f1, "gamma2": self.gamma2, "f2": self.f2,
                "omega": self.omega, "window": list(self.window), "sigma": list(self.sigma),
                "residual_rms": self.residual_rms, "converged": self.converged}


class RegionLabel(str, enum.Enum):
    ORDERED = "dynamically_ordered"
    CROSSOVER = "crossover"
    DISORDERED = "dynamically_disordered"


# analytic references

def analytic_decay_rate(h: float) -> float:
    """Late-time decay rate of the single-site magnetization.

    Ordered side (h <= 1) closed form; the disordered side is the constant
    -4/pi.
    """
    if h < 0:
        raise DomainError("transverse field must be nonnegative")
    if h >= 1:
        return -FOUR_OVER_PI
    root = math.sqrt(1 - h * h)
    bracket = math.asin(math.sqrt((1 - h) / 2)) - math.asin(math.sqrt((1 + h) / 2))
    return -FOUR_OVER_PI * (h + root * bracket)


def analytic_prefactor(h: float) -> float:
    if not 0 <= h <= 1:
        raise DomainError("prefactor defined for 0 <= h <= 1")
    return math.sqrt(1 + math.sqrt(1 - h * h))


def analytic_omega(h: float) -> float:
    if h < 1:
        raise DomainError("oscillation frequency defined for h >= 1")
    return 2.0 * math.sqrt(h * h - 1)


# time-domain fits

def _window_bounds(series: TimeSeries, window: WindowLike) -> tuple[float, float]:
    if isinstance(window, LightconeWindow):
        lo, hi = window.t_star, min(window.tau_s, series.valid_to)
    else:
        lo, hi = float(window[0]), float(window[1])
        hi = min(hi, series.valid_to)
    if not hi > lo:
        raise DomainError(f"empty fit window [{lo:g}, {hi:g}]")
    return lo, hi


def _snap(series: TimeSeries, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Samples between the grid points nearest to lo and hi (inclusive)."""
    i0, _ = series.nearest(lo)
    i1, _ = series.nearest(hi)
    if series.times[i1] > series.valid_to + 1e-12:
        i1 -= 1
    if i1 - i0 < 2:
        raise DomainError(f"fewer than 3 samples in window [{lo:g}, {hi:g}]")
    return series.times[i0:i1 + 1], series.values[i0:i1 + 1]


def fit_exponential(series: TimeSeries, window: WindowLike) -> FitResult:
    """Fit C(t) = C(t*) exp(f (t - t*)) with C(t*) pinned to the data.

    The least-squares problem is solved on the linear scale, so the late,
    small-amplitude tail does not dominate as it would after taking logs.
    Window ends are snapped to the nearest samples.  Params are
    (log C(t*), f); only f is free.
    """
    lo, hi = _window_bounds(series, window)
    t, v = _snap(series, lo, hi)
    if np.any(v <= 0):
        raise DomainError("nonpositive values in the fit window; "
                          "the series looks disordered, use fit_osc_exponential")
    t0, c0 = t[0], v[0]
    slope = numerics.linear_regression(t - t0, np.log(v)).params[1]

    def model(x, p):
        return np.exp(p[0] + p[1] * (x - t0))

    res = numerics.levenberg_marquardt(model, t, v, [math.log(c0), slope],
                                       fixed_mask=[True, False], model_id="exp",
                                       window=(float(t[0]), float(t[-1])))
    res.extra["t_star"] = float(t0)
    return res


def _envelope_slope(t: np.ndarray, v: np.ndarray) -> float:
    a = np.abs(v)
    peaks = [k for k in range(1, a.size - 1) if a[k] >= a[k - 1] and a[k] >= a[k + 1] and a[k] > 0]
    if len(peaks) >= 2:
        idx = np.array(peaks)
    else:
        idx = np.flatnonzero(a > 0)
    if idx.size < 2:
        return -FOUR_OVER_PI
    return float(numerics.linear_regression(t[idx], np.log(a[idx])).params[1])


def fit_osc_exponential(series: TimeSeries, window: WindowLike,
                        fix_f: Optional[float] = None,
                        omega_hint: Optional[float] = None) -> FitResult:
    """Fit C(t) = gamma cos(omega t) exp(f t); params (gamma, omega, f).

    Series without sign changes (e.g. a magnetization reconstructed as a
    square root) are fitted with |gamma cos(omega t)| exp(f t).  Residuals
    are divided by the initial envelope exp(f0 t) so every oscillation
    period carries comparable weight.  omega starts from the dominant
    spectral peak (and ``omega_hint`` if given), several starts are tried
    and the lowest residual wins.
    """
    lo, hi = _window_bounds(series, window)
    t, v = _snap(series, lo, hi)
    rectified = not np.any(v < 0)
    f0 = float(fix_f) if fix_f is not None else _envelope_slope(t, v)
    env = np.exp(f0 * t)

    try:
        # spectrum of the envelope-free signal; |cos| peaks at twice omega
        w_fft = numerics.dominant_frequency(t, v / env)
    except DomainError:
        w_fft = 0.0
    if rectified:
        w_fft /= 2.0
    span = t[-1] - t[0]
    w_base = w_fft if w_fft > 0 else math.pi / span
    starts = [w_base * s for s in (0.5, 0.7, 1.0, 1.4, 2.0)]
    if omega_hint is not None and omega_hint > 0:
        starts += [omega_hint * s for s in (0.7, 1.0, 1.3)]

    def osc(x, p):
        c = p[0] * np.cos(p[1] * x) * np.exp(p[2] * x)
        return np.abs(c) if rectified else c

    def weighted(x, p):
        return osc(x, p) / env

    y = v / env
    fixed = [False, False, fix_f is not None]
    best = None
    for w in starts:
        amp = abs(v[0]) / max(abs(math.cos(w * t[0])) * math.exp(f0 * t[0]), 1e-3)
        res = numerics.levenberg_marquardt(weighted, t, y, [amp, w, f0], fixed_mask=fixed,
                                           model_id="osc_exp", window=(float(t[0]), float(t[-1])))
        if best is None or (res.converged, -res.residual_rms) > (best.converged, -best.residual_rms):
            best = res
    p = best.params.copy()
    p[0], p[1] = abs(p[0]), abs(p[1])
    best.params = p
    best.residual_rms = float(np.sqrt(np.mean((v - osc(t, p)) ** 2)))
    best.extra.update(rectified=rectified, weighting="envelope", f_init=f0)
    return best


def two_term_model(t, p) -> np.ndarray:
    g1, f1, g2, f2, w = p
    return g1 * np.exp(f1 * t) + g2 * np.exp(f2 * t) * np.cos(w * t)


def _two_term_profiles(t, v, rates, omegas, ratio=DOMINANCE_RATIO):
    """Residual profiles over omega, one per dominance class.

    For fixed rates and frequency the amplitudes enter linearly, so every
    (f1, f2, omega) grid point is scored by its 2x2 linear least-squares
    residual.  For each class (0 smooth-dominant, 1 oscillation-dominant,
    2 balanced) and each omega the best point is kept: returns
    {class: (ss[W], params[W, 5])}.
    """
    E = np.exp(np.outer(rates, t))                         # (F, n)
    B = E[:, None, :] * np.cos(np.outer(omegas, t))[None]  # (F, W, n)
    bb = np.einsum("fwn,fwn->fw", B, B)
    bv = B @ v
    vv = float(v @ v)
    W = omegas.size
    prof = {c: (np.full(W, np.inf), np.zeros((W, 5))) for c in (0, 1, 2)}
    for i, a in enumerate(E):
        aa, av = a @ a, a @ v
        ab = B @ a                                         # (F, W)
        det = aa * bb - ab * ab
        ok = det > 1e-12 * aa * np.maximum(bb, 1e-300)
        with np.errstate(divide="ignore", invalid="ignore"):
            g1 = np.where(ok, (bb * av - ab * bv) / det, 0.0)
            g2 = np.where(ok, (aa * bv - ab * av) / det, 0.0)
        ss = np.where(ok, vv - g1 * av - g2 * bv, np.inf)
        cls = np.where(np.abs(g1) >= ratio * np.abs(g2), 0,
                       np.where(np.abs(g2) >= ratio * np.abs(g1), 1, 2))
        for c in (0, 1, 2):
            masked = np.where(cls == c, ss, np.inf)
            k = np.argmin(masked, axis=0)                  # best f2 per omega
            cand = masked[k, np.arange(W)]
            best_ss, best_p = prof[c]
            better = cand < best_ss
            best_ss[better] = cand[better]
            idx = np.flatnonzero(better)
            best_p[idx] = np.column_stack([g1[k[idx], idx], np.full(idx.size, rates[i]),
                                           g2[k[idx], idx], rates[k[idx]], omegas[idx]])
    return prof


def _profile_minima(ss, count):
    """Indices of the ``count`` lowest local minima of a 1-d profile."""
    finite = np.isfinite(ss)
    loc = [j for j in range(ss.size) if finite[j]
           and (j == 0 or ss[j] <= ss[j - 1]) and (j == ss.size - 1 or ss[j] <= ss[j + 1])]
    return sorted(loc, key=lambda j: ss[j])[:count]


def fit_two_term(series: TimeSeries, window: WindowLike, polish: int = 4) -> TwoTermFit:
    """Smooth plus oscillating exponential, LM with three classes of starts.

    The starts are smooth-term dominant, oscillation dominant and balanced.
    Each class scans a (f1, f2, omega) grid with the amplitudes solved
    linearly, and the ``polish`` lowest minima of its residual profile over
    omega are refined by LM.  Converged fits with nonnegative amplitudes are
    preferred, then the lowest residual wins.
    """
    lo, hi = _window_bounds(series, window)
    t, v = _snap(series, lo, hi)
    span = max(t[-1] - t[0], 1e-9)
    dt = float(np.min(np.diff(t)))
    rates = np.linspace(-6.0, 0.5, 27)
    w_max = min(math.pi / dt, 12.0)
    omegas = np.linspace(math.pi / span, w_max, max(int(w_max / 0.1), 10))
    starts = []
    for ss, params in _two_term_profiles(t, v, rates, omegas).values():
        starts += [list(params[j]) for j in _profile_minima(ss, polish)]
    if not starts:
        amp = max(abs(v[0]), 1e-6)
        starts = [[0.9 * amp, -1.0, 0.1 * amp, -1.0, float(omegas[0])]]
    def rank(res):
        # cancelling pairs of large opposite amplitudes are degenerate fits
        physical = bool(res.params[0] >= 0 and res.params[2] >= 0)
        return (res.converged, physical, -res.residual_rms)

    best = None
    for init in starts:
        res = numerics.levenberg_marquardt(two_term_model, t, v, init, model_id="two_term",
                                           window=(float(t[0]), float(t[-1])))
        if best is None or rank(res) > rank(best):
            best = res
    g1, f1, g2, f2, w = best.params
    # cos is even: keep omega >= 0
    w = abs(w)
    return TwoTermFit(float(g1), float(f1), float(g2), float(f2), float(w),
                      best.window, tuple(float(s) for s in best.sigma),
                      best.residual_rms, best.converged)


def classify_region(fit: TwoTermFit, ratio: float = DOMINANCE_RATIO) -> RegionLabel:
    g1, g2 = abs(fit.gamma1), abs(fit.gamma2)
    if g1 >= ratio * g2:
        return RegionLabel.ORDERED
    if g2 >= ratio * g1:
        return RegionLabel.DISORDERED
    return RegionLabel.CROSSOVER


def rescale_subtract_oscillation(series: TimeSeries, fit: TwoTermFit) -> TimeSeries:
    t = series.times
    osc = fit.gamma2 * np.exp(fit.f2 * t) * np.cos(fit.omega * t)
    meta = dict(series.meta, rescaled="subtract_oscillation")
    return TimeSeries(t, series.values - osc, series.valid_to, series.label, meta)


def oscillation_nodes(fit: TwoTermFit, t_max: float) -> np.ndarray:
    """Zeros (pi + 2 pi n) / (2 omega) of the oscillating term up to t_max."""
    if fit.omega <= 0:
        return np.array([])
    n = np.arange(0, int(t_max * fit.omega / math.pi) + 2)
    nodes = (math.pi + 2 * math.pi * n) / (2 * fit.omega)
    return nodes[nodes <= t_max]


def averaged_window_factor(f: float, T: float) -> float:
    """sinh(f T / 2) / (f T / 2), the period-averaging correction."""
    if not T > 0:
        raise DomainError("period must be positive")
    x = 0.5 * f * T
    if abs(x) < 1e-8:
        return 1.0 + x * x / 6.0
    return math.sinh(x) / x


# decay-rate scaling

def _points(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("points must be a sequence of (x, y) pairs")
    return arr[:, 0], arr[:, 1]


def decay_rate_function(points, C0: float):
    """Transform (h_n, f) to (h_n, exp(f) - C0) and fit a power law.

    Returns the kept points as an (n, 2) array and a FitResult with params
    (log gamma, beta) from a log-log linear regression.
    """
    hn, f = _points(points)
    if np.any(hn <= 0):
        raise DomainError("decay-rate function needs h_n > 0")
    y = np.exp(f) - C0
    keep = y > 0
    if not np.all(keep):
        warnings.warn(f"{int((~keep).sum())} point(s) with exp(f) <= C0 excluded", RuntimeWarning)
    if keep.sum() < 2:
        raise DomainError("fewer than two points above the C0 floor")
    hn, y = hn[keep], y[keep]
    lin = numerics.linear_regression(np.log(hn), np.log(y), model_id="power_law")
    lin.window = (float(hn.min()), float(hn.max()))
    return np.column_stack([hn, y]), lin


def fit_log_rate(points, C0: float, with_cutoff: bool = True) -> ScalingFit:
    """Fit f = log(gamma h_n^beta exp(-h_n / Lambda) + C0) with C0 held fixed."""
    hn, f = _points(points)
    if hn.size < 4:
        raise DomainError("fit_log_rate needs at least 4 points")
    if np.any(hn <= 0):
        raise DomainError("fit_log_rate needs h_n > 0")
    if not 0 < C0 < 1:
        raise DomainError("C0 must lie in (0, 1)")
    if np.any(f <= math.log(C0) - 10):
        raise DomainError("decay rate below the C0 floor")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            _, pl = decay_rate_function(np.column_stack([hn, f]), C0)
            g0, b0 = math.exp(pl.params[0]), max(float(pl.params[1]), 0.1)
        except DomainError:
            g0, b0 = 1.0, 1.0

    def model(x, p):
        # Lambda enters through its inverse so the cutoff-free limit is p[2] = 0
        inner = p[0] * np.power(x, p[1]) * np.exp(-x * p[2]) + C0
        return np.log(np.clip(inner, 1e-300, None))

    init = [g0, b0, 1.0 / max(hn.max(), 1e-12) if with_cutoff else 0.0]
    fixed = [False, False, not with_cutoff]
    best = None
    for scale in (1.0, 0.3, 3.0):
        start = list(init)
        start[2] *= scale
        res = numerics.levenberg_marquardt(model, hn, f, start, fixed_mask=fixed,
                                           model_id="log_rate")
        if best is None or (res.converged, -res.residual_rms) > (best.converged, -best.residual_rms):
            best = res
        if not with_cutoff:
            break
    g, b, inv_lam = best.params
    Lam = math.inf if inv_lam <= 0 else 1.0 / inv_lam
    s_inv = best.sigma[2]
    s_lam = 0.0 if not math.isfinite(Lam) else s_inv * Lam * Lam
    return ScalingFit(float(g), float(b), Lam, float(C0), (float(hn.min()), float(hn.max())),
                      vicinity=Lam, sigma=(float(best.sigma[0]), float(best.sigma[1]), s_lam),
                      fit=best)


# dynamical order-parameter-like quantity

@dataclass(frozen=True)
class OPValue:
    value: float
    t_star: float
    t_L: float
    dt_star: float
    dt_L: float
    C_star: float
    C_L: float


def dynamical_op_detail(series: TimeSeries, t_star: float, t_L: float, C0: float) -> OPValue:
    """(C(t_L)/C(t*))^(1/(t_L - t*)) - C0 on the nearest grid samples.

    The exponent uses the actual sample times; their offsets from the
    requested cutoffs are kept for error propagation.
    """
    if not t_star < t_L:
        raise DomainError("need t_star < t_L")
    if t_L > series.valid_to + 1e-12:
        raise DomainError(f"t_L={t_L:g} beyond the validity limit {series.valid_to:g}")
    i, ds = series.nearest(t_star)
    k, dl = series.nearest(t_L)
    if series.times[k] > series.valid_to + 1e-12:
        k -= 1
        dl = float(series.times[k] - t_L)
    if k <= i:
        raise DomainError("cutoffs collapse onto the same sample")
    cs, cl = float(series.values[i]), float(series.values[k])
    if cs <= 0 or cl <= 0:
        raise DomainError("nonpositive C at a cutoff")
    span = series.times[k] - series.times[i]
    val = (cl / cs) ** (1.0 / span) - C0
    return OPValue(float(val), float(series.times[i]), float(series.times[k]), ds, dl, cs, cl)


def dynamical_op(series: TimeSeries, t_star: float, t_L: float, C0: float) -> float:
    return dynamical_op_detail(series, t_star, t_L, C0).value


def op_partials(C_tL: float, gamma1: float, t: float) -> tuple[float, float]:
    """(dOP/dt, dOP/dgamma1) of OP = (C / gamma1)^(1/t)."""
    r = (C_tL / gamma1) ** (1.0 / t)
    d_t = -r * math.log(C_tL / gamma1) / t ** 2
    d_g = -(C_tL ** (1.0 / t) / t) * gamma1 ** (-1.0 / t - 1.0)
    return d_t, d_g


def propagate_error(C_tL: float, gamma1: float, t: float, dt_uncertainty: float,
                    dgamma1: float) -> float:
    if not t > 0:
        raise DomainError("t must be positive")
    if not (C_tL > 0 and gamma1 > 0):
        raise DomainError("C(t_L) and gamma1 must be positive")
    d_t, d_g = op_partials(C_tL, gamma1, t)
    return math.sqrt((d_t * dt_uncertainty) ** 2 + (d_g * dgamma1) ** 2)


# crossover location

@dataclass(frozen=True)
class Crossover:
    h_c: float
    uncertainty: float
    cusp: bool
    score: float = 0.0

    def __iter__(self):
        return iter((self.h_c, self.uncertainty))


def _quad_rms(x, y) -> float:
    c = np.polyfit(x, y, 2)
    return float(np.sqrt(np.mean((np.polyval(c, x) - y) ** 2)))


def _slope_jumps(h, f) -> np.ndarray:
    """Right minus left one-sided slope at each sample (nan at the ends)."""
    out = np.full(h.size, np.nan)
    for j in range(1, h.size - 1):
        lo, hi = max(0, j - 2), min(h.size, j + 3)
        sl = np.polyfit(h[lo:j + 1], f[lo:j + 1], 1)[0]
        sr = np.polyfit(h[j:hi], f[j:hi], 1)[0]
        out[j] = sr - sl
    return out


def locate_crossover(points, threshold: float = CUSP_THRESHOLD,
                     tie_fraction: float = TIE_FRACTION) -> Crossover:
    """Minimum of a decay-rate curve f(h).

    Smooth minima: vertex of the parabola through the lowest sample and its
    neighbours, with a 1-sigma error from a 5-point least-squares parabola.
    Cusps are detected by local 5-point quadratic fits: when the worst local
    misfit exceeds ``threshold`` times the median misfit along the curve the
    data are treated as cusp-shaped.  The crossover is then the sample with
    the sharpest convex kink among those within ``tie_fraction`` of the
    curve's range above the minimum (on a plateau the lowest sample alone is
    decided by fit noise), with half the grid spacing as uncertainty.
    """
    h, f = _points(points)
    order = np.argsort(h)
    h, f = h[order], f[order]
    if h.size < 5:
        raise DomainError("locate_crossover needs at least 5 points")
    k = int(np.argmin(f))

    scores = np.array([_quad_rms(h[c - 2:c + 3], f[c - 2:c + 3]) for c in range(2, h.size - 2)])
    median = float(np.median(scores))
    worst = float(scores.max())
    score = worst / median if median > 0 else (math.inf if worst > 0 else 0.0)
    if score > threshold:
        band = f <= f[k] + tie_fraction * (f.max() - f.min())
        jumps = _slope_jumps(h, f)
        cand = np.flatnonzero(band & np.isfinite(jumps) & (jumps > 0))
        if cand.size:
            j = int(cand[np.argmax(jumps[cand])])
            spacing = 0.5 * min(h[j] - h[j - 1], h[j + 1] - h[j])
            return Crossover(float(h[j]), float(spacing), True, float(score))

    if k == 0 or k == h.size - 1:
        raise DomainError("no interior minimum")
    spacing = 0.5 * min(h[k] - h[k - 1], h[k + 1] - h[k])
    x, y = h[k - 1:k + 2], f[k - 1:k + 2]
    a, b, _ = np.polyfit(x, y, 2)
    if a <= 0:
        return Crossover(float(h[k]), float(spacing), False, float(score))
    vertex = -b / (2 * a)
    lo, hi = max(0, k - 2), min(h.size, k + 3)
    if hi - lo >= 4:
        coef, cov = np.polyfit(h[lo:hi], f[lo:hi], 2, cov="unscaled" if hi - lo == 4 else True)
        a5, b5, _ = coef
        grad = np.array([b5 / (2 * a5 * a5), -1 / (2 * a5), 0.0])
        sigma = float(np.sqrt(max(grad @ cov @ grad, 0.0)))
    else:
        sigma = float(spacing)
    return Crossover(float(vertex), sigma, False, float(score))


def rate_at(points, h: float) -> float:
    """f(h) from the parabola through the three samples nearest to ``h``."""
    hs, f = _points(points)
    if hs.size < 3:
        raise DomainError("rate_at needs at least 3 points")
    order = np.argsort(np.abs(hs - h))[:3]
    return float(np.polyval(np.polyfit(hs[order], f[order], 2), h))


def rescaled_op_points(series_by_h: Mapping[float, TimeSeries], fits: Mapping[float, TwoTermFit],
                       h_c: float, t_L: float, C0: float) -> np.ndarray:
    """(h_n, C') for the ordered-region fields below h_c.

    The oscillating term of each two-term fit is subtracted and the
    remaining single exponential is normalised by its own amplitude, so
    C' = (C~(t_L) / gamma1)^(1/t_L) - C0 with h_n = (h_c - h) / h_c.
    """
    rows = []
    for h in sorted(fits):
        fit = fits[h]
        if not h < h_c or classify_region(fit) is not RegionLabel.ORDERED or fit.gamma1 <= 0:
            continue
        r = rescale_subtract_oscillation(series_by_h[h], fit)
        k, _ = r.nearest(t_L)
        if r.times[k] <= 0 or r.values[k] <= 0:
            continue
        op = (r.values[k] / fit.gamma1) ** (1.0 / r.times[k]) - C0
        rows.append(((h_c - h) / h_c, op))
    if not rows:
        raise DomainError("no ordered-region fields below h_c")
    return np.array(rows, dtype=float)


def local_exponents(points, C0: float) -> np.ndarray:
    """(h_n, d log(exp(f) - C0) / d log h_n) at the midpoints of adjacent samples."""
    hn, f = _points(points)
    order = np.argsort(hn)
    hn, y = hn[order], np.exp(f[order]) - C0
    keep = (hn > 0) & (y > 0)
    x, y = np.log(hn[keep]), np.log(y[keep])
    if x.size < 2:
        raise DomainError("need two points above the C0 floor")
    return np.column_stack([np.exp(0.5 * (x[1:] + x[:-1])), np.diff(y) / np.diff(x)])


def exponent_crossover(points, C0: float, level: float = 0.75) -> float:
    """Smallest h_n at which the local exponent falls below ``level``.

    Used to track the short-time (beta = 1) to late-time (beta = 1/2)
    transition; log-interpolated between the bracketing midpoints.
    """
    le = local_exponents(points, C0)
    below = np.flatnonzero(le[:, 1] < level)
    if below.size == 0 or below[0] == 0:
        raise DomainError(f"local exponent does not cross {level:g} from above")
    j = int(below[0])
    (x0, s0), (x1, s1) = le[j - 1], le[j]
    w = (s0 - level) / (s0 - s1)
    return float(math.exp(math.log(x0) + w * (math.log(x1) - math.log(x0))))
