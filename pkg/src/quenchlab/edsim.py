"""Brute-force spin-basis simulator for chains of up to 20 sites.

Basis states are integers whose bit r is 0 for spin up and 1 for spin down
along z, so the polarized initial state is index 0.  The zz couplings are
diagonal; the transverse field flips one bit.

Chains of at most 12 sites are propagated by full diagonalization of the
two spin-flip parity blocks; larger
ones by a Lanczos (Krylov) short-time propagator with step-halving error
control.  Ground states come from Lanczos with full reorthogonalization
inside each sector of the spin-flip parity prod sigma^x.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
import scipy.sparse as sp

from .errors import AccuracyError, DomainError, ResourceError
from .model import ChainSpec, QuenchSpec, TimeSeries, lightcone_window

log = logging.getLogger(__name__)

N_CAP = 20
FULL_DIAG_MAX_N = 12
KRYLOV_DIM = 30
STEP_TOL = 1e-10
ENGINE_VERSION = "edsim-1"


def spins(N: int) -> np.ndarray:
    """(N, 2**N) array of sigma^z eigenvalues, row r for site r."""
    idx = np.arange(2 ** N, dtype=np.int64)
    return 1 - 2 * ((idx[None, :] >> np.arange(N)[:, None]) & 1).astype(np.int8)


@dataclass(frozen=True)
class SparseHamiltonian:
    spec: ChainSpec
    matrix: sp.csr_matrix
    diagonal: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(v):
            return self.matrix @ v.real + 1j * (self.matrix @ v.imag)
        return self.matrix @ v

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def _bonds(N: int, dist: int, periodic: bool) -> list[tuple[int, int]]:
    last = N if periodic else N - dist
    return [(r, (r + dist) % N) for r in range(last)]


def build_hamiltonian(spec: ChainSpec, n_cap: int = N_CAP) -> SparseHamiltonian:
    """Sparse matrix of -J sum zz(r,r+1) + Delta sum zz(r,r+2) + h sum x(r).

    Delta < 0 is a ferromagnetic next-nearest-neighbour coupling that
    stabilizes the ordered phase (see ChainSpec).
    """
    N = spec.N
    if N > n_cap:
        raise ResourceError(f"N={N} exceeds the exact-diagonalization cap of {n_cap}")
    periodic = spec.boundary == "periodic"
    s = spins(N).astype(float)
    diag = np.zeros(2 ** N)
    for a, b in _bonds(N, 1, periodic):
        diag -= spec.J * s[a] * s[b]
    if spec.delta != 0.0 and N > 2:
        for a, b in _bonds(N, 2, periodic):
            diag += spec.delta * s[a] * s[b]
    dim = 2 ** N
    idx = np.arange(dim, dtype=np.int64)
    rows = [idx]
    cols = [idx]
    data = [diag]
    if spec.h != 0.0:
        for r in range(N):
            rows.append(idx ^ (1 << r))
            cols.append(idx)
            data.append(np.full(dim, spec.h))
    H = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dim, dim))
    H.sum_duplicates()
    return SparseHamiltonian(spec, H, diag)


def polarized_state(N: int) -> np.ndarray:
    psi = np.zeros(2 ** N, dtype=complex)
    psi[0] = 1.0
    return psi


def flip_all(v: np.ndarray, N: int) -> np.ndarray:
    """Apply prod sigma^x (global spin flip) to a state vector."""
    return v[np.arange(2 ** N, dtype=np.int64) ^ (2 ** N - 1)]


def _lanczos_basis(H: SparseHamiltonian, v: np.ndarray, m: int):
    """Krylov basis Q and tridiagonal (alpha, beta), one reorthogonalization pass."""
    n = v.size
    m = min(m, n)
    Q = np.zeros((m, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    norm = np.linalg.norm(v)
    Q[0] = v / norm
    k = m
    for j in range(m):
        w = H.matvec(Q[j])
        alpha[j] = np.vdot(Q[j], w).real
        if j + 1 == m:
            break
        w -= alpha[j] * Q[j]
        if j:
            w -= beta[j - 1] * Q[j - 1]
        w -= (Q[: j + 1].conj() @ w) @ Q[: j + 1]
        b = np.linalg.norm(w)
        if b < 1e-13 * max(1.0, abs(alpha[j])):
            k = j + 1
            break
        beta[j] = b
        Q[j + 1] = w / b
    return Q[:k], alpha[:k], beta[: k - 1], norm


def _krylov_apply(basis, dt: float) -> np.ndarray:
    Q, a, b, norm = basis
    T = np.diag(a) + np.diag(b, 1) + np.diag(b, -1)
    w, U = np.linalg.eigh(T)
    coef = U @ (np.exp(-1j * w * dt) * U[0].conj())
    out = coef @ Q
    return out / np.linalg.norm(out) * norm


def krylov_step(H: SparseHamiltonian, v: np.ndarray, dt: float, m: int = KRYLOV_DIM) -> np.ndarray:
    """exp(-i H dt) v from a Lanczos subspace of dimension m."""
    return _krylov_apply(_lanczos_basis(H, v, m), dt)


def _krylov_interval(H, v, dt, m, tol, depth=0, label=""):
    # the full step and the first half step share one Krylov basis
    basis = _lanczos_basis(H, v, m)
    full = _krylov_apply(basis, dt)
    half = krylov_step(H, _krylov_apply(basis, dt / 2), dt / 2, m)
    if np.linalg.norm(full - half) <= tol:
        return half
    if depth >= 12:
        raise AccuracyError(f"Krylov step {label} did not reach tolerance {tol:g}")
    mid = _krylov_interval(H, v, dt / 2, m, tol, depth + 1, label)
    return _krylov_interval(H, mid, dt / 2, m, tol, depth + 1, label)


class _Propagator:
    """Evolves vectors under a fixed Hamiltonian, full-diag or Krylov."""

    def __init__(self, spec: ChainSpec, method: Optional[str] = None):
        self.H = build_hamiltonian(spec)
        if method is None:
            method = "full" if spec.N <= FULL_DIAG_MAX_N else "krylov"
        if method not in ("full", "krylov"):
            raise DomainError(f"unknown propagation method {method!r}")
        self.method = method
        if method == "full":
            self._diagonalize_blocks()

    def _diagonalize_blocks(self):
        # H commutes with the global flip x -> ~x; for x in the lower half
        # the partner ~x sits at half + (half - 1 - x) in the upper half
        Hd = self.H.toarray()
        half = Hd.shape[0] // 2
        A = Hd[:half, :half]
        B = Hd[:half, half:][:, ::-1]
        self.blocks = [np.linalg.eigh(A + B), np.linalg.eigh(A - B)]
        self.half = half

    def _split(self, v):
        lo, hi = v[: self.half], v[self.half:][::-1]
        return (lo + hi) / np.sqrt(2), (lo - hi) / np.sqrt(2)

    def _join(self, cp, cm):
        return np.concatenate([cp + cm, (cp - cm)[::-1]]) / np.sqrt(2)

    def _evolve_full(self, parts, t):
        out = []
        for (E, V), c in zip(self.blocks, parts):
            out.append(V @ (np.exp(-1j * E * t) * c))
        return self._join(*out)

    def apply(self, v: np.ndarray, t: float) -> np.ndarray:
        """exp(-i H t) v; negative t runs backwards."""
        if t == 0:
            return v.copy()
        if self.method == "full":
            parts = [V.T @ c for (_, V), c in zip(self.blocks, self._split(v))]
            return self._evolve_full(parts, t)
        n = max(1, int(np.ceil(abs(t) / 0.05 - 1e-9)))
        step = t / n
        for k in range(n):
            v = _krylov_interval(self.H, v, step, KRYLOV_DIM, STEP_TOL, label=f"{k}")
        return v

    def trajectory(self, v: np.ndarray, times: np.ndarray) -> Iterator[np.ndarray]:
        if self.method == "full":
            parts = [V.T @ c for (_, V), c in zip(self.blocks, self._split(v))]
            for t in times:
                yield self._evolve_full(parts, t)
            return
        current, t_cur = v.copy(), 0.0
        for k, t in enumerate(times):
            if t < t_cur - 1e-12:
                raise DomainError("times must be nondecreasing")
            if t > t_cur:
                current = _krylov_interval(self.H, current, t - t_cur, KRYLOV_DIM,
                                           STEP_TOL, label=f"{k} (t={t:g})")
                current /= np.linalg.norm(current)
                t_cur = t
            yield current


def iter_states(quench: QuenchSpec, method: Optional[str] = None) -> Iterator[np.ndarray]:
    """State vectors psi(t) on the quench grid, streamed."""
    prop = _Propagator(quench.chain, method)
    return prop.trajectory(polarized_state(quench.chain.N), quench.tgrid.times)


def evolve(quench: QuenchSpec, method: Optional[str] = None) -> list[np.ndarray]:
    return list(iter_states(quench, method))


def _valid_to(spec: ChainSpec, site: int) -> float:
    if spec.h == 0:
        return np.inf
    return lightcone_window(spec, 1e-9, site if spec.boundary == "open" else None).tau_s


def magnetization_site(states, site: int, quench: QuenchSpec) -> TimeSeries:
    N = quench.chain.N
    if not 0 <= site < N:
        raise DomainError(f"site {site} outside chain of {N} sites")
    sz = spins(N)[site]
    vals = [float(np.dot(sz, np.abs(psi) ** 2)) for psi in states]
    times = quench.tgrid.times
    return TimeSeries(times, vals, min(_valid_to(quench.chain, site), times[-1]),
                      "magnetization", {"engine": ENGINE_VERSION, **quench.to_dict(), "site": site})


def magnetization(quench: QuenchSpec, method: Optional[str] = None) -> TimeSeries:
    return magnetization_site(iter_states(quench, method), quench.site, quench)


def zz_correlator(quench: QuenchSpec, i: int, j: int, method: Optional[str] = None) -> np.ndarray:
    s = spins(quench.chain.N)
    zz = (s[i] * s[j]).astype(float)
    return np.array([float(np.dot(zz, np.abs(psi) ** 2)) for psi in iter_states(quench, method)])


def otoc_site(quench: QuenchSpec, method: Optional[str] = None) -> TimeSeries:
    """F(t) = <psi0| z_r(t) z_r z_r(t) z_r |psi0> with z_r = sigma^z at the site.

    Since z_r |psi0> = |psi0>, F(t) = <b|z_r|b> with |b> = U^+ z_r U |psi0>,
    which takes one forward state psi(t), one product z_r psi(t) and one
    backward evolution per sample.
    """
    N = quench.chain.N
    prop = _Propagator(quench.chain, method)
    sz = spins(N)[quench.site].astype(float)
    times = quench.tgrid.times
    vals = []
    for t, psi in zip(times, prop.trajectory(polarized_state(N), times)):
        b = prop.apply(sz * psi, -t)
        vals.append(float(np.vdot(b, sz * b).real))
    return TimeSeries(times, vals, times[-1], "otoc",
                      {"engine": ENGINE_VERSION, **quench.to_dict()})


def parity_project(v: np.ndarray, N: int, parity: int) -> np.ndarray:
    return 0.5 * (v + parity * flip_all(v, N))


def _lowest_in_sector(H: SparseHamiltonian, parity: int, k: int, max_iter: int,
                      tol: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    N = H.spec.N
    rng = np.random.default_rng(seed)
    v = parity_project(rng.standard_normal(H.dim), N, parity)
    dim_sector = 2 ** (N - 1)
    m_max = min(max_iter, dim_sector)
    Q = np.zeros((m_max, H.dim))
    alpha, beta = [], []
    Q[0] = v / np.linalg.norm(v)
    prev = None
    for j in range(m_max):
        w = H.matvec(Q[j])
        alpha.append(float(Q[j] @ w))
        w = parity_project(w, N, parity)
        w -= Q[: j + 1].T @ (Q[: j + 1] @ w)
        w -= Q[: j + 1].T @ (Q[: j + 1] @ w)
        T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        evals, evecs = np.linalg.eigh(T)
        b = np.linalg.norm(w)
        cur = evals[:k]
        done = b < 1e-12 or j + 1 == m_max
        if prev is not None and len(cur) == k and len(prev) == k:
            # residual norms of the Ritz pairs
            resid = b * np.abs(evecs[-1, :k])
            if np.all(resid < tol):
                done = True
        if done:
            vecs = Q[: j + 1].T @ evecs[:, :k]
            if len(cur) < k and b >= 1e-12:
                raise AccuracyError("Lanczos did not converge")
            return cur, vecs
        prev = cur
        beta.append(b)
        Q[j + 1] = w / b
    raise AccuracyError(f"Lanczos did not converge after {max_iter} iterations")


def ground_state(spec: ChainSpec, max_iter: int = 500, tol: float = 1e-10,
                 seed: int = 7) -> tuple[float, float, np.ndarray]:
    """(E0, E1, ground state): the two lowest levels over both parity sectors."""
    H = build_hamiltonian(spec)
    levels = []
    for parity in (1, -1):
        evals, vecs = _lowest_in_sector(H, parity, 2, max_iter, tol, seed)
        for e, vec in zip(evals, vecs.T):
            levels.append((float(e), vec))
    levels.sort(key=lambda x: x[0])
    gs = levels[0][1].astype(complex)
    return levels[0][0], levels[1][0], gs / np.linalg.norm(gs)


def binder_cumulant(gs: np.ndarray, N: Optional[int] = None) -> float:
    """U = 3/2 (1 - <S^4> / (3 <S^2>^2)) for S = sum_i sigma^z_i."""
    if N is None:
        N = int(round(np.log2(gs.size)))
    if 2 ** N != gs.size:
        raise DomainError("state size is not a power of two")
    p = np.abs(gs) ** 2
    p = p / p.sum()
    S = spins(N).sum(axis=0).astype(float)
    m2 = float(p @ S ** 2)
    m4 = float(p @ S ** 4)
    if m2 <= 0:
        raise DomainError("<S_z^2> vanishes: Binder cumulant undefined")
    return 1.5 * (1.0 - m4 / (3.0 * m2 * m2))
