"""Parameter verdicts: depth budgets, recurrence, CE/NV, density sweeps and constant estimates."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    EvaluationEscaped,
    InfiniteDistortion,
    NoSegmentsFound,
    NotInBoundaryClass,
    OrbitTooShort,
    ParameterOutOfDomain,
    TailNotContracting,
    ZeroDerivativeOnOrbit,
)
from .family import MapFamily
from .orbit import OrbitData, ce_exponent, critical_orbit, nv_check, recurrence_profile
from .returns import (
    EpsGeometry,
    essential_depth_sum,
    essential_returns,
    return_sequence,
    return_times,
)

INF = math.inf


@dataclass(frozen=True)
class Config:
    """Verdict heuristics. Defaults are working choices, not canonical values."""

    n_min: int = 50
    n_max: int = 10_000
    lambda_ce: float = 0.05
    beta: float = 2.0
    theta0: float = 0.1
    gamma: float = 0.5
    C0: float = 5.0
    constants_samples: int = 32
    constants_steps: int = 2000

    def __post_init__(self):
        if self.n_min < 1 or self.n_max < self.n_min:
            raise ValueError("need 1 <= n_min <= n_max")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0,1)")


# ---------------------------------------------------------------- X and Y sets

class DepthBudget(NamedTuple):
    passed: bool
    fail_k: int | None
    prefix_sums: np.ndarray


def depth_budget(depths: Sequence[float], C: float, n: int | None = None) -> DepthBudget:
    """Check sum_{j<=k} d_j <= C k for k < n (all k covered by ``depths`` when n is None)."""
    d = np.asarray(depths, dtype=float)
    if n is not None:
        d = d[: max(n - 1, 0)]
    sums = np.cumsum(d)
    ks = np.arange(1, len(d) + 1)
    bad = np.flatnonzero(sums > C * ks)
    if bad.size:
        return DepthBudget(False, int(bad[0]) + 1, sums)
    return DepthBudget(True, None, sums)


class XMembership(NamedTuple):
    passed: bool
    fail_k: int | None
    fail_crit: int | None
    depth_prefix_sums: list


def _x_from_orbits(orbits: Sequence[OrbitData], geom: EpsGeometry, C: float,
                   n: int | None) -> XMembership:
    if C <= 0:
        raise ValueError("C must be positive")
    first = None
    sums = []
    for o in orbits:
        S, d, _ = return_times(o, geom)
        if n is None:
            res = depth_budget(d, C)
            if res.passed and o.escaped is not None:
                raise OrbitTooShort(f"orbit escaped at {o.escaped}; depth budget undecided")
        else:
            need = max(n - 1, 0)
            if len(d) < need:
                if o.escaped is not None:
                    res = depth_budget(d, C)
                    if res.passed:
                        raise OrbitTooShort(f"orbit escaped at {o.escaped} before return {need}")
                else:
                    d = np.concatenate([d, np.zeros(need - len(d))])
            res = depth_budget(d, C, n)
        sums.append(res.prefix_sums)
        if not res.passed and (first is None or res.fail_k < first[0]):
            first = (res.fail_k, o.critical_index)
    if first is None:
        return XMembership(True, None, None, sums)
    return XMembership(False, first[0], first[1], sums)


def _orbits(family: MapFamily, t: float, n_max: int) -> list[OrbitData]:
    return [critical_orbit(family, t, i, n_max) for i in range(len(family.critical_points(t)))]


def x_membership(family: MapFamily, t: float, eps: float, C: float, n: int,
                 orbit_len: int = 10_000) -> XMembership:
    """Is t in X_{n,eps}(C)? Depth prefix sums over the first k returns stay below C k for k < n."""
    geom = EpsGeometry.for_family(family, t, eps)
    return _x_from_orbits(_orbits(family, t, orbit_len), geom, C, n)


class YMembership(NamedTuple):
    passed: bool
    fail_m: int | None
    in_X: bool


def _first_close_approach(orbits: Sequence[OrbitData], geom: EpsGeometry, tau: float,
                          m: int) -> int | None:
    """Smallest k < m with |f^(k+1)(c_src) - c_tgt| < eps^(1/l) (k+1)^-tau."""
    first = None
    for o in orbits:
        pts = o.points[:m]
        ks = np.arange(len(pts))
        for c, r in zip(geom.crits, geom.radius):
            bad = np.flatnonzero(np.abs(pts - c.position) < r * (ks + 1.0) ** (-tau))
            if bad.size and (first is None or bad[0] < first):
                first = int(bad[0])
    return first


def _y_from_orbits(orbits, geom, C, tau, m):
    x = _x_from_orbits(orbits, geom, C, None)
    if not x.passed:
        return YMembership(False, 0, False)
    k = _first_close_approach(orbits, geom, tau, m)
    if k is not None:
        return YMembership(False, k, True)
    if any(o.length + 1 < m for o in orbits):
        raise OrbitTooShort(f"orbit shorter than the horizon m={m}")
    return YMembership(True, None, True)


def y_membership(family: MapFamily, t: float, eps: float, C: float, tau: float, m: int,
                 orbit_len: int = 10_000) -> YMembership:
    """Is t in Y^m_eps(C, tau)? Requires membership in X_eps(C) over the computed horizon."""
    geom = EpsGeometry.for_family(family, t, eps)
    return _y_from_orbits(_orbits(family, t, max(orbit_len, m)), geom, C, tau, m)


# ---------------------------------------------------------------- CE / NV

class CEVerdict(NamedTuple):
    rate: float
    verdict: bool
    flags: tuple


def _ce_from_orbit(orbit: OrbitData, config: Config) -> CEVerdict:
    if orbit.escaped is not None:
        raise OrbitTooShort(f"orbit escaped at {orbit.escaped}")
    try:
        rate = ce_exponent(orbit, config.n_min).inf_rate
    except ZeroDerivativeOnOrbit:
        return CEVerdict(-INF, False, ("zero_derivative",))
    return CEVerdict(rate, rate >= config.lambda_ce, ())


def ce_verdict(family: MapFamily, t: float, crit: int, config: Config = Config()) -> CEVerdict:
    """Window-minimum growth rate of |D_n| against the threshold lambda_ce."""
    return _ce_from_orbit(critical_orbit(family, t, crit, config.n_max), config)


# ---------------------------------------------------------------- rows and sweeps

@dataclass
class VerdictRow:
    t: float
    x_pass_n: float = INF
    x_fail_k: int | None = None
    y_pass_m: float = INF
    ce_rate: float = math.nan
    ce_verdict: bool = False
    pr_best_C: float = math.nan
    nv_nonzero: bool = False
    undetermined: bool = False
    flags: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (not self.undetermined and self.x_pass_n == INF and self.y_pass_m == INF
                and self.ce_verdict and self.nv_nonzero)


def evaluate_row(family: MapFamily, t: float, eps: float, C: float, tau: float,
                 config: Config = Config(), orbits: Sequence[OrbitData] | None = None) -> VerdictRow:
    """All verdicts for one parameter. Errors become flags, never exceptions."""
    row = VerdictRow(float(t))
    if orbits is None:
        try:
            orbits = _orbits(family, t, config.n_max)
        except EvaluationEscaped:
            row.undetermined = True
            row.flags.append("critical_value_escaped")
            return row
    geom = EpsGeometry.for_family(family, t, eps)
    if any(o.escaped is not None for o in orbits):
        row.flags.append("escaped")
    try:
        x = _x_from_orbits(orbits, geom, C, None)
        if not x.passed:
            row.x_pass_n, row.x_fail_k = x.fail_k, x.fail_k
    except OrbitTooShort:
        row.undetermined = True
        row.flags.append("x_undetermined")
    try:
        y = _y_from_orbits(orbits, geom, C, tau, config.n_max)
        if not y.passed:
            row.y_pass_m = y.fail_m
    except OrbitTooShort:
        row.undetermined = True
        row.flags.append("y_undetermined")

    rates, ce_ok = [], True
    for o in orbits:
        try:
            v = _ce_from_orbit(o, config)
        except OrbitTooShort:
            row.undetermined = True
            row.flags.append("ce_undetermined")
            ce_ok = False
            continue
        rates.append(v.rate)
        ce_ok &= v.verdict
        row.flags.extend(v.flags)
    row.ce_rate = min(rates) if rates else math.nan
    row.ce_verdict = bool(ce_ok and rates)
    row.pr_best_C = min((recurrence_profile(o, family, config.beta).best_C for o in orbits),
                        default=math.nan)

    nv_ok, nv_undecided = bool(orbits), False
    for o in orbits:
        try:
            nv = nv_check(family, t, o.critical_index, o.length, orbit=o)
            nv_ok &= nv.nonzero
        except ZeroDerivativeOnOrbit:
            nv_ok = False
            row.flags.append("nv_zero_derivative")
        except (TailNotContracting, EvaluationEscaped):
            nv_ok = False
            nv_undecided = True
            row.flags.append("nv_tail_undetermined")
    row.nv_nonzero = nv_ok
    others_pass = row.x_pass_n == INF and row.y_pass_m == INF and row.ce_verdict
    if nv_undecided and others_pass:
        row.undetermined = True
    return row


@dataclass
class EpsWindow:
    eps: float
    lo: float
    hi: float
    one_sided: bool
    rows: list
    fraction_pass: float
    fraction_undetermined: float
    exit_counts: dict
    exit_measure: dict
    lambda_hat: float = math.nan
    lambda_bound: float = math.nan
    lambda_ok: bool | None = None


@dataclass
class SweepResult:
    family: dict
    center: float
    grid: int
    C: float
    tau: float
    seed: int | None
    windows: list


def sweep_window(family: MapFamily, center: float, eps: float) -> tuple[float, float, bool]:
    lo_d, hi_d = family.parameter_domain
    lo, hi = max(center - eps, lo_d), min(center + eps, hi_d)
    if not lo < hi:
        raise ParameterOutOfDomain(f"window [{center - eps}, {center + eps}] misses the domain")
    return lo, hi, (lo, hi) != (center - eps, center + eps)


def sweep_grid(lo: float, hi: float, grid: int, rng: np.random.Generator | None) -> np.ndarray:
    """One parameter per cell of a uniform partition: cell midpoints, or a seeded point per cell."""
    u = np.full(grid, 0.5) if rng is None else rng.uniform(0.0, 1.0, grid)
    return lo + (np.arange(grid) + u) * ((hi - lo) / grid)


def _row_task(args):
    family, t, eps, C, tau, config = args
    return evaluate_row(family, t, eps, C, tau, config)


def density_sweep(family: MapFamily, center: float, eps_list: Sequence[float], grid: int,
                  C: float, tau: float, config: Config = Config(), seed: int | None = None,
                  threads: int = 1, estimate_lambda: bool = True) -> SweepResult:
    """Fraction of good parameters in shrinking windows around ``center``.

    Rows are pure functions of (family, t, config); the output does not
    depend on ``threads``.
    """
    if grid < 2:
        raise ValueError("grid must be >= 2")
    windows = [sweep_window(family, center, e) for e in eps_list]
    rng = np.random.default_rng(seed) if seed is not None else None
    result = SweepResult(family.to_spec(), center, grid, C, tau, seed, [])
    pool = ProcessPoolExecutor(threads) if threads > 1 else None
    try:
        for eps, (lo, hi, one_sided) in zip(eps_list, windows):
            ts = sweep_grid(lo, hi, grid, rng)
            tasks = [(family, float(t), eps, C, tau, config) for t in ts]
            if pool is None:
                rows = [_row_task(a) for a in tasks]
            else:
                rows = list(pool.map(_row_task, tasks, chunksize=max(1, grid // (4 * threads))))
            n_pass = sum(r.passed for r in rows)
            n_und = sum(r.undetermined for r in rows)
            counts: dict[int, int] = {}
            for r in rows:
                if r.x_fail_k is not None and not r.undetermined:
                    counts[r.x_fail_k] = counts.get(r.x_fail_k, 0) + 1
            counts = dict(sorted(counts.items()))
            cell = (hi - lo) / grid
            win = EpsWindow(eps, lo, hi, one_sided, rows, n_pass / grid, n_und / grid, counts,
                            {k: v * cell for k, v in counts.items()})
            if estimate_lambda:
                ell = family.ell_max
                win.lambda_bound = math.exp(ell * C) if math.isfinite(ell) else math.nan
                try:
                    est = estimate_expansion_constants(
                        family, eps, config.constants_samples,
                        0 if seed is None else seed, config, t_window=(lo, hi))
                    win.lambda_hat = est.Lambda_hat
                    win.lambda_ok = bool(est.Lambda_hat >= win.lambda_bound)
                except NoSegmentsFound:
                    win.lambda_ok = None
            result.windows.append(win)
    finally:
        if pool is not None:
            pool.shutdown()
    return result


# ---------------------------------------------------------------- constants

@dataclass
class ExpansionEstimate:
    Lambda_hat: float
    log_Lambda_hat: float
    L_star_hat: float
    segments: int
    worst_witnesses: dict


def estimate_expansion_constants(family: MapFamily, eps: float, sample_count: int, seed: int,
                                 config: Config = Config(),
                                 t_values: Sequence[float] | None = None,
                                 t_window: tuple[float, float] | None = None) -> ExpansionEstimate:
    """Sampled stand-ins for the expansion constant and the uniform summability bound.

    Starting points lie within 4 eps of a critical value. Lambda_hat is the
    least |Df^s(x)| D_c(eps) over segments avoiding the eps-neighbourhood
    and landing in B~(c; 2 eps); L_star_hat is the largest partial sum of
    |Df^i(x)|^-1 up to the first entry into the eps-neighbourhood.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    if t_window is None:
        lo_d, hi_d = family.parameter_domain
        b = family.base_parameter
        t_window = (max(b - eps, lo_d), min(b + eps, hi_d))
    best_log_lam = INF
    best_L = -INF
    segments = 0
    wit = {"Lambda": None, "L_star": None}
    for i in range(sample_count):
        if t_values is not None:
            t = float(t_values[i % len(t_values)])
        else:
            t = float(rng.uniform(*t_window))
        crits = family.critical_points(t)
        if not crits:
            continue
        geom = EpsGeometry(eps, tuple(crits))
        geom2 = EpsGeometry(2 * eps, tuple(crits))
        step = family.stepper(t)
        c = crits[int(rng.integers(len(crits)))].position
        v, _ = step(c)
        x0 = float(min(max(v + rng.uniform(-4 * eps, 4 * eps), 0.0), 1.0))
        pos = geom.positions
        x, logd, inv_sum = x0, 0.0, 0.0
        for j in range(config.constants_steps + 1):
            inv_sum += math.exp(-logd) if logd > -700 else INF
            dist = np.abs(x - pos)
            in_eps = bool(np.any(dist < np.asarray(geom.radius)))
            if j >= 1:
                hit2 = np.flatnonzero(dist < np.asarray(geom2.radius))
                if hit2.size:
                    k = int(hit2[np.argmin(dist[hit2])])
                    cand = logd + math.log(geom.scale[k])
                    segments += 1
                    if cand < best_log_lam:
                        best_log_lam = cand
                        wit["Lambda"] = {"t": t, "x": x0, "s": j}
            if in_eps:
                if j >= 1:
                    if inv_sum > best_L:
                        best_L = inv_sum
                        wit["L_star"] = {"t": t, "x": x0, "n": j}
                break
            fx, dfx = step(x)
            if dfx == 0.0:
                break
            logd += math.log(abs(dfx))
            x = min(max(fx, 0.0), 1.0)
        else:
            if inv_sum > best_L:
                best_L = inv_sum
                wit["L_star"] = {"t": t, "x": x0, "n": config.constants_steps}
    if segments == 0 and best_L == -INF:
        raise NoSegmentsFound(f"no qualifying orbit segment for eps={eps}")
    lam = math.exp(best_log_lam) if best_log_lam < 709 else INF
    return ExpansionEstimate(lam, best_log_lam, best_L, segments, wit)


# ---------------------------------------------------------------- total depth

class TotalDepthCheck(NamedTuple):
    lhs: float
    rhs: float
    passed: bool


def totaldepth_check(records, C: float, C0: float, gamma: float, n: int) -> TotalDepthCheck:
    """Essential depth sum over k <= n against (gamma C - C0) n; records need essential flags."""
    lhs = essential_depth_sum(records, C0, n)
    rhs = (gamma * C - C0) * n
    return TotalDepthCheck(lhs, rhs, lhs >= rhs)


@dataclass
class TotalDepthReport:
    t: float
    x_exit_n: int | None = None
    depth_checks: dict = field(default_factory=dict)
    depth_pass: bool | None = None
    y_exit_m: int | None = None
    y_return_ordinal: int | None = None
    y_p: float | None = None
    y_bound: float | None = None
    y_essential: bool | None = None
    y_pass: bool | None = None


def totaldepth_diagnostic(family: MapFamily, t: float, eps: float, C: float,
                          C0: float = 5.0, gamma: float = 0.5, n: int | None = None,
                          tau: float = 2.0, config: Config = Config()) -> TotalDepthReport:
    """Compare a boundary-class parameter against the total essential depth estimates.

    Reports, never asserts: the estimates are only guaranteed for eps below
    unspecified thresholds.
    """
    orbits = _orbits(family, t, config.n_max)
    geom = EpsGeometry.for_family(family, t, eps)
    x = _x_from_orbits(orbits, geom, C, None)
    rep = TotalDepthReport(float(t))
    recs = {}
    for o in orbits:
        S, _, _ = return_times(o, geom)
        recs[o.critical_index] = return_sequence(o, family, geom, len(S))
        essential_returns(recs[o.critical_index])

    if not x.passed and (n is None or n == x.fail_k):
        k = x.fail_k
        rep.x_exit_n = k
        for ci, rs in recs.items():
            rep.depth_checks[ci] = totaldepth_check(rs, C, C0, gamma, k)
        rep.depth_pass = any(c.passed for c in rep.depth_checks.values())
    elif x.passed:
        m = _first_close_approach(orbits, geom, tau, config.n_max)
        if m is not None:
            rep.y_exit_m = m
            rep.y_bound = gamma * tau * math.log(m + 1)
            for ci, rs in recs.items():
                hit = [r for r in rs if r.finite and int(r.S) == m]
                if hit:
                    r = hit[0]
                    rep.y_return_ordinal = r.j
                    rep.y_p = r.p
                    rep.y_essential = r.essential and r.p_tilde > C0
                    rep.y_pass = bool(r.p >= rep.y_bound and rep.y_essential)
                    break
            else:
                rep.y_pass = False
    if rep.x_exit_n is None and rep.y_exit_m is None:
        raise NotInBoundaryClass(f"t={t} is in neither boundary difference set")
    return rep


def row_to_dict(row: VerdictRow) -> dict:
    return asdict(row)
