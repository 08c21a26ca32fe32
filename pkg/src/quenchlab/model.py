"""Problem-definition types: chains, quench protocols, time series, lightcones."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DomainError, ShapeError

BOUNDARIES = ("open", "periodic")
LABELS = ("magnetization", "otoc", "sop", "zz")
DEFAULT_KAPPA = 5.0


@dataclass(frozen=True)
class ChainSpec:
    """Spin chain H = -J sum z z(r+1) + Delta sum z z(r+2) + h sum x.

    Negative Delta is a ferromagnetic next-nearest-neighbour coupling; the
    nonintegrable reference point Delta = -1 orders up to h of about 2.5.
    J = 1 sets the units.
    """

    N: int
    boundary: str = "periodic"
    J: float = 1.0
    delta: float = 0.0
    h: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4 or self.N % 2:
            raise DomainError(f"N must be an even integer >= 4, got {self.N}")
        if self.boundary not in BOUNDARIES:
            raise DomainError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if not self.J > 0:
            raise DomainError("J must be positive")
        for name in ("J", "delta", "h"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    @property
    def integrable(self) -> bool:
        return self.delta == 0.0

    def with_field(self, h: float) -> "ChainSpec":
        return replace(self, h=float(h))

    def to_dict(self) -> dict:
        return {"N": self.N, "boundary": self.boundary, "J": self.J,
                "delta": self.delta, "h": self.h}


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    dt: float

    def __post_init__(self):
        if self.t0 < 0 or not self.t1 > self.t0 or not self.dt > 0:
            raise DomainError(f"invalid time grid {self}")

    @property
    def times(self) -> np.ndarray:
        n = int(round((self.t1 - self.t0) / self.dt))
        return self.t0 + self.dt * np.arange(n + 1)


@dataclass(frozen=True)
class QuenchSpec:
    """Quench from the all-up state (ground state at h_i = 0) to ``chain``."""

    chain: ChainSpec
    tgrid: TimeGrid
    site: Optional[int] = None
    h_i: float = 0.0

    def __post_init__(self):
        if self.h_i != 0.0:
            raise DomainError("only quenches from the polarized state (h_i = 0) are supported")
        if self.site is None:
            object.__setattr__(self, "site", self.chain.N // 2)
        if not 0 <= self.site < self.chain.N:
            raise DomainError(f"site {self.site} outside chain of {self.chain.N} sites")

    def to_dict(self) -> dict:
        return {**self.chain.to_dict(), "site": self.site, "t0": self.tgrid.t0,
                "t1": self.tgrid.t1, "dt": self.tgrid.dt}


@dataclass
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    valid_to: float
    label: str = "magnetization"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ShapeError("times and values must be 1-d arrays of equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise DomainError("times must be strictly increasing")
        if self.label not in LABELS:
            raise DomainError(f"unknown label {self.label!r}")
        self.valid_to = float(min(self.valid_to, self.times[-1])) if self.times.size else 0.0

    @property
    def valid(self) -> np.ndarray:
        return self.times <= self.valid_to + 1e-12

    def window(self, lo: float, hi: float) -> "TimeSeries":
        mask = (self.times >= lo - 1e-12) & (self.times <= hi + 1e-12)
        return TimeSeries(self.times[mask], self.values[mask], min(hi, self.valid_to),
                          self.label, dict(self.meta))

    def nearest(self, t: float) -> tuple[int, float]:
        """Index of the sample closest to ``t`` and its time offset."""
        k = int(np.argmin(np.abs(self.times - t)))
        return k, float(self.times[k] - t)


@dataclass(frozen=True)
class LightconeWindow:
    t_star: float
    tau_s: float
    tau_r: float
    kappa: float
    v_q: float

    def __post_init__(self):
        if not 0 < self.t_star < self.tau_s:
            raise DomainError(
                f"empty lightcone window: need t_star ({self.t_star:g}) < tau_s ({self.tau_s:g})")
        if not self.tau_s < self.tau_r:
            raise DomainError("need tau_s < tau_r")


def quasiparticle_velocity(h: float, J: float = 1.0) -> float:
    """Maximal quasiparticle velocity 2 J min(h, 1) (field in units of J)."""
    if h < 0:
        raise DomainError("transverse field must be nonnegative")
    if not J > 0:
        raise DomainError("J must be positive")
    return 2.0 * J * min(h, 1.0)


def lightcone_window(spec: ChainSpec, kappa: float = DEFAULT_KAPPA,
                     site: Optional[int] = None) -> LightconeWindow:
    """UV cutoff t* = kappa / v_q, separation and revival times.

    Periodic chains and the central site of an open chain use
    tau_s = N / (2 v_q).  An off-centre site of an open chain uses the
    distance to its nearer edge instead of N / 2.
    """
    if not kappa > 0:
        raise DomainError("kappa must be positive")
    v = quasiparticle_velocity(spec.h, spec.J)
    if v == 0:
        raise DomainError("no propagation at h = 0: lightcone undefined")
    reach = spec.N / 2
    if spec.boundary == "open" and site is not None:
        reach = min(site, spec.N - 1 - site) + 1
    return LightconeWindow(kappa / v, reach / v, spec.N / v, kappa, v)


def cluster_valid_to(spec: ChainSpec) -> float:
    """Validity limit N / (4 v_q) of the cluster factorization."""
    v = quasiparticle_velocity(spec.h, spec.J)
    return np.inf if v == 0 else spec.N / (4.0 * v)
