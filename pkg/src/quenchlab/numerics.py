"""Dense linear-algebra and optimization kernels.

Everything here is a pure function of its inputs.  The heavy lifting is
delegated to LAPACK through numpy/scipy where a mature routine exists
(SVD, LU); the signed Pfaffian and the Levenberg-Marquardt driver are
written out because their exact behaviour is part of the contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import DomainError, ShapeError

MODEL_IDS = ("exp", "osc_exp", "two_term", "log_rate", "power_law", "linear")


@dataclass(frozen=True)
class SVDResult:
    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    ``sigma`` holds 1-sigma half widths (zero for pinned parameters) and
    ``window`` the abscissa range the fit was restricted to.
    """

    model_id: str
    params: np.ndarray
    sigma: np.ndarray
    residual_rms: float
    window: tuple[float, float]
    converged: bool
    n_iter: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model_id not in MODEL_IDS:
            raise DomainError(f"unknown model id {self.model_id!r}")
        self.params = np.asarray(self.params, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)

    def to_record(self) -> dict:
        return {
            "model_id": self.model_id,
            "params": [float(p) for p in self.params],
            "sigma": [float(s) for s in self.sigma],
            "residual_rms": float(self.residual_rms),
            "window": [float(self.window[0]), float(self.window[1])],
            "converged": bool(self.converged),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "FitResult":
        return cls(
            model_id=rec["model_id"],
            params=np.array(rec["params"], dtype=float),
            sigma=np.array(rec["sigma"], dtype=float),
            residual_rms=float(rec["residual_rms"]),
            window=(float(rec["window"][0]), float(rec["window"][1])),
            converged=bool(rec.get("converged", True)),
        )


def _square(M, name="matrix") -> np.ndarray:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ShapeError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    return M


def svd(M) -> SVDResult:
    """Full SVD of a real square matrix with a reproducible sign gauge.

    For every singular triplet the left vector is flipped so that its
    largest-magnitude component (first one on ties) is positive; the right
    vector follows the same flip so that ``U S V^T`` is unchanged.
    """
    M = _square(M)
    if np.iscomplexobj(M):
        raise DomainError("svd expects a real matrix")
    if not np.all(np.isfinite(M)):
        raise DomainError("svd input contains non-finite entries")
    U, s, Vt = np.linalg.svd(M.astype(float))
    V = Vt.T
    pivot = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivot, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return SVDResult(s, U * signs, V * signs)


def lu_det(M) -> complex:
    """Determinant from a partially pivoted LU factorization."""
    M = _square(M)
    lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    diag = np.diag(lu)
    if np.any(diag == 0):
        return 0.0 + 0.0j
    swaps = np.count_nonzero(piv != np.arange(len(piv)))
    det = np.prod(diag) * (-1.0) ** swaps
    return complex(det)


def _antisymmetrized(T, tol: float) -> np.ndarray:
    T = _square(T)
    if T.shape[0] % 2:
        raise ShapeError(f"Pfaffian needs an even dimension, got {T.shape[0]}")
    scale = max(1.0, float(np.max(np.abs(T))))
    if np.max(np.abs(T + T.T)) > tol * scale:
        raise DomainError("matrix is not antisymmetric within tolerance")
    return 0.5 * (T - T.T)


def pfaffian_abs(T, tol: float = 1e-10) -> float:
    """|Pf(T)| computed as sqrt(|det T|) (log-determinant, no underflow)."""
    A = _antisymmetrized(T, tol)
    sign, logdet = np.linalg.slogdet(A)
    if sign == 0:
        return 0.0
    return float(np.exp(0.5 * logdet))


def pfaffian(T, tol: float = 1e-10) -> complex:
    """Signed Pfaffian by Parlett-Reid elimination with partial pivoting."""
    A = np.array(_antisymmetrized(T, tol), dtype=complex)
    n = A.shape[0]
    pf = 1.0 + 0.0j
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(A[k + 1:, k])))
        if kp != k + 1:
            A[[k + 1, kp], k:] = A[[kp, k + 1], k:]
            A[k:, [k + 1, kp]] = A[k:, [kp, k + 1]]
            pf = -pf
        pivot = A[k, k + 1]
        if pivot == 0:
            return 0.0 + 0.0j
        pf *= pivot
        if k + 2 < n:
            tau = A[k, k + 2:] / pivot
            col = A[k + 2:, k + 1]
            A[k + 2:, k + 2:] += np.outer(tau, col) - np.outer(col, tau)
    return complex(pf)


def finite_difference_jacobian(func: Callable[[np.ndarray], np.ndarray], p: np.ndarray,
                               free: Optional[np.ndarray] = None) -> np.ndarray:
    """Central differences with step 1e-6 * max(1, |p_k|) per free parameter."""
    p = np.asarray(p, dtype=float)
    idx = np.arange(p.size) if free is None else np.flatnonzero(free)
    cols = []
    for k in idx:
        step = 1e-6 * max(1.0, abs(p[k]))
        up, dn = p.copy(), p.copy()
        up[k] += step
        dn[k] -= step
        cols.append((func(up) - func(dn)) / (2.0 * step))
    return np.column_stack(cols) if cols else np.zeros((func(p).size, 0))


def levenberg_marquardt(model: Callable[[np.ndarray, np.ndarray], np.ndarray], x, y,
                        init: Sequence[float], fixed_mask: Optional[Sequence[bool]] = None,
                        model_id: str = "linear", max_iter: int = 500,
                        rtol: float = 1e-12, window: Optional[tuple] = None) -> FitResult:
    """Minimize sum((y - model(x, p))**2) over the free entries of ``p``.

    Damping starts at 1e-3 and is multiplied by 10 on a rejected step and
    divided by 10 on an accepted one.  Iteration stops once the relative cost
    change of an accepted step drops below ``rtol`` or after ``max_iter``
    iterations.  A singular normal matrix ends the run with
    ``converged=False`` and the best parameters found so far.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(init, dtype=float)
    if not np.all(np.isfinite(p)):
        raise DomainError("initial parameters must be finite")
    fixed = np.zeros(p.size, bool) if fixed_mask is None else np.asarray(fixed_mask, bool)
    free = ~fixed
    n_free = int(free.sum())
    if y.size < n_free:
        raise DomainError(f"{y.size} data points cannot determine {n_free} parameters")
    if window is None:
        window = (float(x.min()), float(x.max())) if x.size else (0.0, 0.0)

    def residual(q):
        with np.errstate(over="ignore", invalid="ignore"):
            r = y - np.asarray(model(x, q), dtype=float)
        if not np.all(np.isfinite(r)):
            raise DomainError("model produced non-finite values")
        return r

    def jac(q):
        # derivative of the residual is minus the model derivative
        with np.errstate(over="ignore", invalid="ignore"):
            return -finite_difference_jacobian(lambda v: np.asarray(model(x, v), float), q, free)

    r = residual(p)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    singular = False
    it = 0
    J = jac(p)
    while it < max_iter:
        it += 1
        A = J.T @ J
        g = -J.T @ r
        if cost == 0.0 or not np.any(g):
            converged = True
            break
        accepted = False
        while lam < 1e20:
            Ad = A + lam * np.diag(np.diag(A))
            try:
                delta = np.linalg.solve(Ad, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p.copy()
            trial[free] += delta
            try:
                r_new = residual(trial)
            except DomainError:
                lam *= 10.0
                continue
            with np.errstate(over="ignore"):
                cost_new = float(r_new @ r_new)
            if cost_new < cost:
                rel = (cost - cost_new) / max(cost, 1e-300)
                p, r, cost = trial, r_new, cost_new
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no descent direction left at any damping: local minimum
            converged = True
            break
        if rel < rtol:
            converged = True
            break
        J = jac(p)

    J = jac(p)
    A = J.T @ J
    dof = max(y.size - n_free, 1)
    s2 = cost / dof
    sigma = np.zeros(p.size)
    if n_free:
        if np.linalg.matrix_rank(A) < n_free:
            singular = True
        else:
            cov = s2 * np.linalg.inv(A)
            sigma[free] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    if singular:
        converged = False
    rms = float(np.sqrt(cost / max(y.size, 1)))
    return FitResult(model_id, p, sigma, rms, (float(window[0]), float(window[1])),
                     converged and bool(np.all(np.isfinite(p))), n_iter=it)


def linear_regression(x, y, model_id: str = "linear") -> FitResult:
    """Ordinary least squares for y = a + b x; params are (a, b)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise DomainError("linear regression needs at least two points")
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = y - X @ coef
    dof = max(x.size - 2, 1)
    s2 = float(res @ res) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    return FitResult(model_id, coef, np.sqrt(np.diag(cov)),
                     float(np.sqrt(np.mean(res ** 2))), (float(x.min()), float(x.max())), True)


def dominant_frequency(times, values, pad: int = 16) -> float:
    """Angular frequency of the strongest nonzero spectral peak.

    The signal is detrended (mean and linear trend removed), zero padded and
    the peak refined by parabolic interpolation of the power spectrum.
    Returns 0.0 when the detrended signal carries no power.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 8:
        raise DomainError("dominant_frequency needs at least 8 samples")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(dt[0])):
        raise DomainError("dominant_frequency needs a uniform time grid")
    dt = dt[0]
    coef = np.polyfit(t - t[0], v, 1)
    d = v - np.polyval(coef, t - t[0])
    if np.max(np.abs(d)) <= 1e-12 * max(1.0, np.max(np.abs(v))):
        return 0.0
    n = pad * t.size
    power = np.abs(np.fft.rfft(d, n)) ** 2
    power[0] = 0.0
    k = int(np.argmax(power))
    if k == 0:
        return 0.0
    shift = 0.0
    if 0 < k < power.size - 1:
        a, b, c = power[k - 1], power[k], power[k + 1]
        denom = a - 2 * b + c
        if denom != 0:
            shift = 0.5 * (a - c) / denom
    return float(2 * np.pi * (k + shift) / (n * dt))
