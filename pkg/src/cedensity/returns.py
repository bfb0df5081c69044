"""Returns of the critical orbit into the distorted eps-neighbourhood of Crit."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InfiniteDistortion, OrbitTooShort
from .family import CriticalPointInfo, MapFamily
from .orbit import OrbitData, orbit_log_distortion

LOG3 = math.log(3.0)
INF = math.inf


@dataclass(frozen=True)
class EpsGeometry:
    """Radii eps^(1/l(c)) and scale factors D_c(eps) for one eps."""

    eps: float
    crits: tuple[CriticalPointInfo, ...]
    radius: tuple[float, ...] = field(init=False)
    scale: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        crits = tuple(self.crits)
        object.__setattr__(self, "crits", crits)
        radius = tuple(self.eps ** (1.0 / c.order) for c in crits)
        object.__setattr__(self, "radius", radius)
        object.__setattr__(self, "scale", tuple(self.eps / (2.0 * r) for r in radius))

    @classmethod
    def for_family(cls, family: MapFamily, t: float, eps: float) -> EpsGeometry:
        return cls(eps, tuple(family.critical_points(t)))

    @property
    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.crits])

    def scaled(self, factor: float) -> EpsGeometry:
        return EpsGeometry(self.eps * factor, self.crits)

    def inside(self, x) -> np.ndarray:
        """Membership in the union of the open balls B(c, eps^(1/l(c)))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.crits:
            return np.zeros(x.shape, dtype=bool)
        d = np.abs(x[:, None] - self.positions[None, :])
        return np.any(d < np.asarray(self.radius)[None, :], axis=1)

    def nearest(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.argmin(np.abs(x[:, None] - self.positions[None, :]), axis=1)


def _ball_depth(d: float, r: float) -> float:
    """Smallest k >= 0 with d >= e^-k r (inf when d == 0)."""
    if d == 0.0:
        return INF
    if d >= r:
        return 0
    k = max(0, math.ceil(math.log(r) - math.log(d)))
    while d < math.exp(-k) * r:
        k += 1
    while k > 0 and d >= math.exp(-(k - 1)) * r:
        k -= 1
    return k


def q_eps(x: float, geom: EpsGeometry, crits: Sequence[CriticalPointInfo] | None = None) -> float:
    """Depth of x: least k with x outside every ball B(c, e^-k eps^(1/l(c)))."""
    if crits is not None and tuple(crits) != geom.crits:
        geom = EpsGeometry(geom.eps, tuple(crits))
    k = 0
    for c, r in zip(geom.crits, geom.radius):
        k = max(k, _ball_depth(abs(x - c.position), r))
    return k


def q_eps_array(xs, geom: EpsGeometry) -> np.ndarray:
    """Vectorised q_eps; float array with inf at exact critical hits."""
    xs = np.asarray(xs, dtype=float)
    out = np.zeros(xs.shape)
    for c, r in zip(geom.crits, geom.radius):
        d = np.abs(xs - c.position)
        with np.errstate(divide="ignore"):
            k = np.maximum(0.0, np.ceil(np.log(r) - np.log(d)))
        k = np.where(d == 0.0, INF, k)
        finite = np.isfinite(k)
        # fix rounding at the ball boundaries so the result matches the definition
        kf = np.where(finite, k, 0.0)
        too_low = finite & (d < np.exp(-kf) * r)
        kf = kf + too_low
        too_high = finite & (kf > 0) & (d >= np.exp(-(kf - 1)) * r)
        kf = kf - too_high
        out = np.maximum(out, np.where(finite, kf, INF))
    return out


@dataclass
class ReturnRecord:
    j: int
    S: float                    # return time, inf under the convention
    nearest: int = -1
    d: float = 0.0
    log_P: float = math.nan
    p: float = math.nan
    p_tilde: float = math.nan
    essential: bool = False
    free: bool = False

    @property
    def finite(self) -> bool:
        return math.isfinite(self.S)


def return_times(orbit: OrbitData, geom: EpsGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All return times S >= 1 with points[S] in the eps-neighbourhood, their depths and nearest critical index."""
    pts = orbit.points
    idx = np.flatnonzero(geom.inside(pts))
    idx = idx[idx >= 1]
    if idx.size == 0:
        return idx, np.zeros(0), np.zeros(0, dtype=int)
    return idx, q_eps_array(pts[idx], geom), geom.nearest(pts[idx])


def _complete(orbit: OrbitData) -> bool:
    return orbit.escaped is None


def return_depths(orbit: OrbitData, geom: EpsGeometry, count: int) -> np.ndarray:
    """Depths d_1..d_count with the S = inf, d = 0 convention for missing returns."""
    S, d, _ = return_times(orbit, geom)
    if len(S) >= count:
        return d[:count]
    if not _complete(orbit):
        raise OrbitTooShort(f"orbit escaped at {orbit.escaped} after {len(S)} returns")
    return np.concatenate([d, np.zeros(count - len(S))])


def return_sequence(orbit: OrbitData, family: MapFamily, geom: EpsGeometry,
                    max_returns: int) -> list[ReturnRecord]:
    """First ``max_returns`` return records, with P_j, p_j and p~_j."""
    if max_returns <= 0:
        return []
    S, d, near = return_times(orbit, geom)
    n_found = min(len(S), max_returns)
    if n_found < max_returns and not _complete(orbit):
        raise OrbitTooShort(f"orbit escaped at {orbit.escaped} after {len(S)} returns")
    logA = orbit_log_distortion(orbit)
    records = []
    for i in range(n_found):
        s = int(S[i])
        if orbit.signs[s] == 0 or not math.isfinite(logA[s]):
            raise InfiniteDistortion(f"orbit meets Crit before return time {s} at t={orbit.parameter}")
        log_P = float(orbit.logs[s] - math.log(orbit.crit_dist[s]))
        p = log_P - float(logA[s]) if s > 0 else INF
        dj = float(d[i])
        records.append(ReturnRecord(i + 1, s, int(near[i]), dj, log_P, p, min(p, dj)))
    for i in range(n_found, max_returns):
        records.append(ReturnRecord(i + 1, INF, -1, 0.0))
    return records


def essential_returns(records: Sequence[ReturnRecord]) -> set[int]:
    """Ordinals n with P_n >= 3^(n-k) P_k for all earlier k; sets ``essential`` flags."""
    finite = [r for r in records if r.finite]
    out = set()
    for n, rn in enumerate(finite, start=1):
        ok = all(rn.log_P >= (n - k) * LOG3 + rk.log_P
                 for k, rk in enumerate(finite[: n - 1], start=1))
        if ok:
            out.add(rn.j)
    for r in records:
        r.essential = r.j in out
    return out


def essential_scan(log_P: Sequence[float]) -> set[int]:
    """Same set as ``essential_returns`` via a running maximum of log P_k - k log 3."""
    out = set()
    best = -INF
    for n, lp in enumerate(log_P, start=1):
        v = lp - n * LOG3
        if v >= best:
            out.add(n)
        best = max(best, v)
    return out


def free_returns(orbit: OrbitData, family: MapFamily, geom: EpsGeometry, theta0: float,
                 records: Sequence[ReturnRecord]) -> set[int]:
    """Ordinals on the free-return chain i_1 = 1, S_{i_(k+1)} = S~_{i_k}.

    The binding period after S_i ends at S^_i, the last S for which the
    distortion sum started at f^(S_i+2)(c) over S - S_i steps stays below
    theta0 e^((d_i - 1) l(c')) / eps. An empty sup is read as S^_i = S_i.
    """
    if not theta0 > 0:
        raise ValueError("theta0 must be positive")
    finite = [r for r in records if r.finite]
    for r in records:
        r.free = False
    if not finite:
        return set()
    by_time = {int(r.S): r for r in finite}
    all_S, _, _ = return_times(orbit, geom)
    n = orbit.length
    with np.errstate(divide="ignore"):
        log_dist = np.log(orbit.crit_dist)
    out = set()
    cur = finite[0]
    while True:
        out.add(cur.j)
        cur.free = True
        s = int(cur.S)
        if not math.isfinite(cur.d):
            break
        order = geom.crits[cur.nearest].order
        log_bound = math.log(theta0) + (cur.d - 1.0) * order - math.log(geom.eps)
        start = s + 1
        if start > n:
            break
        # log terms |Df^k(y)| / dist(f^k(y), Crit) for y = points[s+1]
        base = orbit.logs[start]
        if orbit.signs[start] == 0:
            break
        terms = orbit.logs[start:] - base - log_dist[start:]
        terms = np.where(orbit.crit_dist[start:] == 0.0, INF, terms)
        cum = np.logaddexp.accumulate(terms)
        # cum[k-1] = log A(y, t, k); S - S_i = k
        ok = cum <= log_bound
        if ok.all():
            if orbit.escaped is not None:
                raise OrbitTooShort("binding period runs past an escaped orbit")
            break
        k_fail = int(np.argmin(ok))
        s_hat = s + k_fail
        later = all_S[all_S > s_hat]
        if later.size == 0:
            if orbit.escaped is not None:
                raise OrbitTooShort("no return after the binding period before escape")
            break
        nxt = by_time.get(int(later[0]))
        if nxt is None:
            break
        cur = nxt
    return out


def essential_depth_sum(records: Sequence[ReturnRecord], C0: float, n: int) -> float:
    """Sum of p~_k over essential k <= n with p~_k > C0."""
    return math.fsum(r.p_tilde for r in records
                     if r.essential and r.finite and r.j <= n and r.p_tilde > C0)


def derivative_depth_check(orbit: OrbitData, family: MapFamily, geom: EpsGeometry,
                           records: Sequence[ReturnRecord]) -> list[tuple[int, float, float, bool]]:
    """Per return: log|Df(x)| against the lower bound -q l_max + log D_c(eps) for x in the neighbourhood.

    Diagnostic only; holds for all x in the ball when f is exactly
    |x - c|^l near c, and approximately otherwise.
    """
    ell_max = max(c.order for c in geom.crits)
    step = family.stepper(orbit.parameter)
    rows = []
    for r in records:
        if not r.finite:
            continue
        x = float(orbit.points[int(r.S)])
        _, dfx = step(x)
        lhs = math.log(abs(dfx)) if dfx != 0.0 else -INF
        rhs = -r.d * ell_max + math.log(geom.scale[r.nearest])
        rows.append((r.j, lhs, rhs, lhs > rhs))
    return rows
