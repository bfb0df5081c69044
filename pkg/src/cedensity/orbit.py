"""Critical orbits and the analytic sums read off them.

Indexing: ``points[j] = f_t^(j+1)(c)``, the j-th iterate of the critical
value, and ``D_j = Df_t^j(f_t(c))`` so that ``D_0 = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EvaluationEscaped, TailNotContracting, ZeroDerivativeOnOrbit
from .family import BOUNDARY_TOL, MapFamily
from .slog import SignedLogReal, cumulative_logsumexp, logsumexp


@dataclass(frozen=True)
class OrbitData:
    parameter: float
    critical_index: int
    critical_position: float
    points: np.ndarray      # points[j] = f^j(f(c)), j = 0..length
    signs: np.ndarray       # sign of D_j
    logs: np.ndarray        # log |D_j| (-inf once a zero derivative is met)
    crit_dist: np.ndarray
    escaped: int | None = None

    @property
    def length(self) -> int:
        """Index of the last computed point."""
        return len(self.points) - 1

    @property
    def cum_deriv(self) -> list[SignedLogReal]:
        return [SignedLogReal(int(s), float(l)) for s, l in zip(self.signs, self.logs)]

    def deriv(self, j: int) -> SignedLogReal:
        return SignedLogReal(int(self.signs[j]), float(self.logs[j]))

    def first_zero(self) -> int | None:
        z = np.flatnonzero(self.signs == 0)
        return int(z[0]) if z.size else None


def _crit_distance(x: float, positions: list[float]) -> float:
    if not positions:
        return math.inf
    return min(abs(x - c) for c in positions)


def critical_orbit(family: MapFamily, t: float, crit: int, n_max: int) -> OrbitData:
    """Iterate the critical value f_t(c) ``n_max`` times, tracking D_j in log space."""
    family.check_parameter(t)
    crits = family.critical_points(t)
    if not 0 <= crit < len(crits):
        raise IndexError(f"critical index {crit} out of range ({len(crits)} critical points)")
    positions = [c.position for c in crits]
    c = crits[crit].position
    step = family.stepper(t)

    points = np.empty(n_max + 1)
    signs = np.empty(n_max + 1, dtype=np.int8)
    logs = np.empty(n_max + 1)
    x, _ = step(c)
    if x < 0.0 or x > 1.0:
        if x < -BOUNDARY_TOL or x > 1 + BOUNDARY_TOL:
            raise EvaluationEscaped(f"critical value {x} leaves [0,1] at t={t}")
        x = min(max(x, 0.0), 1.0)
    sign, logmag = 1, 0.0
    escaped = None
    n = 0
    log = math.log
    while True:
        points[n] = x
        signs[n] = sign
        logs[n] = logmag
        if n == n_max:
            break
        fx, dfx = step(x)
        if dfx == 0.0:
            sign, logmag = 0, -math.inf
        elif sign != 0:
            if dfx < 0:
                sign = -sign
            logmag += log(abs(dfx))
        if fx < 0.0 or fx > 1.0:
            if fx < -BOUNDARY_TOL or fx > 1 + BOUNDARY_TOL:
                escaped = n + 1
                break
            fx = min(max(fx, 0.0), 1.0)
        x = fx
        n += 1
    m = n + 1
    pts = points[:m].copy()
    if positions:
        dist = np.min(np.abs(pts[:, None] - np.asarray(positions)[None, :]), axis=1)
    else:
        dist = np.full(m, math.inf)
    return OrbitData(float(t), crit, c, pts, signs[:m].copy(), logs[:m].copy(), dist, escaped)


def _require_nonzero(orbit: OrbitData, upto: int) -> None:
    z = np.flatnonzero(orbit.signs[: upto + 1] == 0)
    if z.size:
        raise ZeroDerivativeOnOrbit(
            f"D_{int(z[0])} = 0 at t={orbit.parameter}: the orbit hits a critical point")


class Summability(NamedTuple):
    partial: float
    tail_ratio: float


def summability_partial(orbit: OrbitData, N: int) -> Summability:
    """Partial sum of |D_n|^-1 for n = 0..N."""
    if N > orbit.length:
        raise ValueError(f"N={N} exceeds orbit length {orbit.length}")
    _require_nonzero(orbit, N)
    with np.errstate(over="ignore"):
        inv = np.exp(-orbit.logs[: N + 1])
    try:
        partial = math.fsum(inv.tolist())
    except OverflowError:
        partial = math.inf
    if not math.isfinite(partial):
        # |D_j| underflows: the series diverges within float range
        return Summability(math.inf, math.nan)
    return Summability(partial, float(inv[N]) / partial)


class Transversality(NamedTuple):
    M_n: float
    terms: np.ndarray


def _transversality_terms(family: MapFamily, orbit: OrbitData, n: int) -> np.ndarray:
    dt = family.dt_function(orbit.parameter)
    # numerator at f^j(c): c itself for j = 0, then points[j-1]
    xs = [orbit.critical_position] + orbit.points[:n].tolist()
    num = np.array([dt(x) for x in xs])
    den_sign = orbit.signs[: n + 1].astype(float)
    with np.errstate(over="ignore", under="ignore"):
        terms = np.where(num == 0.0, 0.0, num * den_sign * np.exp(-orbit.logs[: n + 1]))
    return terms


def transversality_sum(family: MapFamily, t: float, crit: int, n: int,
                       orbit: OrbitData | None = None) -> Transversality:
    """M_n = sum_{j=0}^n dF/dt(f^j(c), t) / D_j."""
    if orbit is None or orbit.length < n:
        orbit = critical_orbit(family, t, crit, n)
    if orbit.escaped is not None and orbit.length < n:
        raise EvaluationEscaped(f"orbit escaped at {orbit.escaped}")
    _require_nonzero(orbit, n)
    terms = _transversality_terms(family, orbit, n)
    if np.all(np.isfinite(terms)):
        return Transversality(math.fsum(terms.tolist()), terms)
    return Transversality(float(np.sum(terms)), terms)


class NVResult(NamedTuple):
    a_c: float
    tail_bound: float
    nonzero: bool


TAIL_WINDOW = 10
TAIL_SAFETY = 2.0


def nv_check(family: MapFamily, t: float, crit: int, N: int,
             orbit: OrbitData | None = None) -> NVResult:
    """Truncated transversality sum with a geometric tail bound.

    The decay rate of |D_j|^-1 is the mean ratio over the last ten terms;
    it must be below one or TailNotContracting is raised.
    """
    if orbit is None or orbit.length < N:
        orbit = critical_orbit(family, t, crit, N)
    if orbit.length < N:
        raise EvaluationEscaped(f"orbit escaped at {orbit.escaped}")
    summability_partial(orbit, N)
    if family.dt_sup == 0.0:
        # every numerator vanishes, so the sum and its tail are exactly zero
        return NVResult(transversality_sum(family, t, crit, N, orbit=orbit).M_n, 0.0, False)
    w = min(TAIL_WINDOW, N)
    if w < 1:
        raise TailNotContracting("need at least one ratio to estimate the tail")
    log_rate = -(orbit.logs[N] - orbit.logs[N - w]) / w
    if not log_rate < 0:
        raise TailNotContracting(
            f"|D_j|^-1 not decreasing over the last {w} terms at t={t}")
    a_c = transversality_sum(family, t, crit, N, orbit=orbit).M_n
    rho = math.exp(log_rate)
    log_tail = log_rate - float(orbit.logs[N])
    # a tiny |D_N| makes the bound useless rather than an error
    tail = (family.dt_sup * TAIL_SAFETY * math.exp(log_tail) / (1.0 - rho)
            if log_tail < 700.0 else math.inf)
    return NVResult(a_c, tail, abs(a_c) > tail)


def distortion_logs(family: MapFamily, t: float, x: float, n: int) -> np.ndarray:
    """log of |Df^j(x)| / dist(f^j(x), Crit) for j = 0..n-1 (+inf on a critical hit)."""
    positions = [c.position for c in family.critical_points(t)]
    step = family.stepper(t)
    out = np.empty(n)
    logd = 0.0
    for j in range(n):
        d = _crit_distance(x, positions)
        if d == 0.0:
            out[j:] = math.inf
            break
        out[j] = logd - math.log(d)
        fx, dfx = step(x)
        logd = logd + math.log(abs(dfx)) if dfx != 0.0 else -math.inf
        x = min(max(fx, 0.0), 1.0)
    return out


def log_distortion_sum(family: MapFamily, t: float, x: float, n: int) -> float:
    return logsumexp(distortion_logs(family, t, x, n))


def distortion_sum(family: MapFamily, t: float, x: float, n: int) -> float:
    """sum_{j<n} |Df^j(x)| / dist(f^j(x), Crit); +inf when the orbit meets Crit."""
    if n == 0:
        return 0.0
    lg = log_distortion_sum(family, t, x, n)
    if lg > 709.0:
        return math.inf
    return math.exp(lg)


def orbit_log_distortion(orbit: OrbitData) -> np.ndarray:
    """out[S] = log A(f_t(c), t, S) for S = 0..length, computed from the orbit."""
    with np.errstate(divide="ignore"):
        terms = orbit.logs - np.log(orbit.crit_dist)
    # a zero derivative term is 0 only if no earlier critical hit; a hit gives +inf
    hit = orbit.crit_dist == 0.0
    terms = np.where(hit, math.inf, terms)
    first_hit = np.flatnonzero(hit)
    if first_hit.size:
        terms[first_hit[0]:] = math.inf
    out = np.empty(orbit.length + 1)
    out[0] = -math.inf
    out[1:] = cumulative_logsumexp(terms[:-1])
    return out


class CERate(NamedTuple):
    inf_rate: float
    at_n: int


def ce_exponent(orbit: OrbitData, n_min: int = 50) -> CERate:
    """Window minimum of log|D_n| / n over n in [n_min, length]."""
    if n_min < 1:
        raise ValueError("n_min must be >= 1")
    if n_min > orbit.length:
        raise ValueError(f"n_min={n_min} exceeds orbit length {orbit.length}")
    _require_nonzero(orbit, orbit.length)
    ns = np.arange(n_min, orbit.length + 1)
    rates = orbit.logs[n_min:] / ns
    k = int(np.argmin(rates))
    return CERate(float(rates[k]), int(ns[k]))


class Recurrence(NamedTuple):
    best_C: float
    worst_n: int


def recurrence_profile(orbit: OrbitData, family: MapFamily | None = None,
                       beta: float = 2.0) -> Recurrence:
    """min over n >= 1 of dist(f^n(c), Crit) * n^beta."""
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    ns = np.arange(1, orbit.length + 2, dtype=float)
    vals = orbit.crit_dist * ns ** beta
    k = int(np.argmin(vals))
    return Recurrence(float(vals[k]), k + 1)
