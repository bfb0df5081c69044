"""Parameter boxes: the curves t -> f_t^(m+1)(c), pre-critical parameters and box sizing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .balls import Ball, BallFamily
from .errors import (
    EvaluationEscaped,
    InfiniteDistortion,
    InvalidTheta,
    TailNotContracting,
    ZeroDerivativeOnOrbit,
)
from .family import BOUNDARY_TOL, MapFamily
from .orbit import critical_orbit, distortion_sum, nv_check, transversality_sum
from .returns import EpsGeometry

ROOT_TOL = 1e-14
AVOID_TOL = 1e-10
MAX_RADIUS = 0.05


def _iterate(family: MapFamily, t: float, x: float, n: int) -> list[float]:
    """x, f(x), ..., f^n(x), raising EvaluationEscaped outside [0,1]."""
    step = family.stepper(t)
    out = [x]
    for _ in range(n):
        x, _ = step(x)
        if x < 0.0 or x > 1.0:
            if x < -BOUNDARY_TOL or x > 1 + BOUNDARY_TOL:
                raise EvaluationEscaped(f"orbit leaves [0,1] at t={t}")
            x = min(max(x, 0.0), 1.0)
        out.append(x)
    return out


def xi(family: MapFamily, t: float, crit: int, m: int) -> float:
    """f_t^(m+1)(c(t))."""
    family.check_parameter(t)
    c = family.critical_points(t)[crit].position
    return _iterate(family, t, c, m + 1)[-1]


def find_precritical(family: MapFamily, t_lo: float, t_hi: float, crit_source: int, m: int,
                     grid: int = 1000) -> list[float]:
    """Parameters where f_t^(m+1)(c) hits a critical point and f_t^j(c) avoids Crit for 1 <= j <= m."""
    family.check_parameter(t_lo)
    family.check_parameter(t_hi)
    if not t_lo < t_hi:
        raise ValueError("need t_lo < t_hi")
    ts = np.linspace(t_lo, t_hi, grid + 1)
    n_targets = len(family.critical_points(t_lo))
    roots = []
    for target in range(n_targets):
        def g(t):
            return xi(family, t, crit_source, m) - family.critical_points(t)[target].position

        vals = []
        for t in ts:
            try:
                vals.append(g(float(t)))
            except EvaluationEscaped:
                vals.append(math.nan)
        for i in range(grid + 1):
            if vals[i] == 0.0:
                roots.append(float(ts[i]))
        for i in range(grid):
            a, b, fa, fb = float(ts[i]), float(ts[i + 1]), vals[i], vals[i + 1]
            if not (math.isfinite(fa) and math.isfinite(fb)) or fa == 0.0 or fb == 0.0:
                continue
            if (fa < 0) != (fb < 0):
                roots.append(_bisect(g, a, b, fa, fb))
    out = []
    for r in sorted(roots):
        if out and r - out[-1] < 1e-12:
            continue
        if _avoids(family, r, crit_source, m):
            out.append(r)
    return out


def _bisect(g, a, b, fa, fb):
    while b - a > ROOT_TOL:
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        fm = g(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (fa < 0):
            a, fa = mid, fm
        else:
            b, fb = mid, fm
    return a if abs(fa) <= abs(fb) else b


def _avoids(family, t, crit, m):
    crits = family.critical_points(t)
    pts = _iterate(family, t, crits[crit].position, m)[1:]
    return all(abs(x - c.position) >= AVOID_TOL for x in pts for c in crits)


class BoxRadius(NamedTuple):
    radius: float
    flags: tuple


def box_radius(family: MapFamily, t0: float, crit: int, m: int, theta: float,
               max_radius: float = MAX_RADIUS) -> BoxRadius:
    """theta / A(f_t0(c), t0, m); the configured maximum when the sum is empty (m = 0)."""
    if not theta > 0:
        raise InvalidTheta(f"theta must be positive, got {theta}")
    family.check_parameter(t0)
    flags = []
    if m == 0:
        r = max_radius
        flags.append("empty_distortion_sum")
    else:
        v = _iterate(family, t0, family.critical_points(t0)[crit].position, 1)[-1]
        A = distortion_sum(family, t0, v, m)
        if not math.isfinite(A):
            raise InfiniteDistortion(f"orbit meets Crit before step {m} at t={t0}")
        r = theta / A
    lo, hi = family.parameter_domain
    if t0 - r < lo or t0 + r > hi:
        flags.append("clipped")
    return BoxRadius(r, tuple(flags))


@dataclass
class BoxReport:
    worst_xi_ratio: float
    M_range: tuple
    worst_deriv_ratio: float
    monotone: bool
    passed: bool
    samples: int
    flags: list = field(default_factory=list)


@dataclass
class ParameterBox:
    center: float
    radius: float
    order: int
    crit: int
    lam: float
    target: int = -1
    clipped: bool = False
    verified: BoxReport | None = None

    def as_ball(self) -> Ball:
        return Ball(self.center, self.radius)

    def to_dict(self) -> dict:
        d = {"center": self.center, "radius": self.radius, "order": self.order,
             "crit": self.crit, "target": self.target, "lambda": self.lam,
             "clipped": self.clipped}
        if self.verified is not None:
            v = self.verified
            d["verified"] = {"worst_xi_ratio": v.worst_xi_ratio, "M_range": list(v.M_range),
                             "worst_deriv_ratio": v.worst_deriv_ratio, "monotone": v.monotone,
                             "pass": v.passed, "samples": v.samples, "flags": list(v.flags)}
        return d


def _box_samples(family, box, samples):
    lo, hi = family.parameter_domain
    a, b = max(box.center - box.radius, lo), min(box.center + box.radius, hi)
    if box.radius == 0.0 or samples < 2:
        return np.array([box.center])
    return np.linspace(a, b, samples)


def verify_box(family: MapFamily, box: ParameterBox, a_c_base: float | None,
               samples: int = 16) -> BoxReport:
    """Sampling check of the three box properties at level ``box.lam``.

    (xi_m)' is taken by central differences with step r / samples / 10.
    """
    if samples < 3:
        raise ValueError("samples must be >= 3")
    lam, m, crit = box.lam, box.order, box.crit
    flags = []
    if box.radius == 0.0:
        return BoxReport(1.0, (math.nan, math.nan), 1.0, True, True, 1, ["degenerate_radius"])
    ts = _box_samples(family, box, samples)
    lo_d, hi_d = family.parameter_domain
    # keep the difference step well above float resolution at t
    h = max(box.radius / samples / 10.0, 1e-9 * max(1.0, abs(box.center)))
    xis, dxi, Ms, logD = [], [], [], []
    for t in ts:
        t = float(t)
        xis.append(xi(family, t, crit, m))
        tp, tm = min(t + h, hi_d), max(t - h, lo_d)
        dxi.append((xi(family, tp, crit, m) - xi(family, tm, crit, m)) / (tp - tm))
        orbit = critical_orbit(family, t, crit, m)
        if orbit.escaped is not None:
            raise EvaluationEscaped(f"orbit escaped inside the box at t={t}")
        logD.append(orbit.logs[: m + 1].copy())
        try:
            Ms.append(transversality_sum(family, t, crit, m, orbit=orbit).M_n)
        except ZeroDerivativeOnOrbit:
            Ms.append(math.nan)
            flags.append("zero_derivative")
    xis, dxi, Ms = np.array(xis), np.array(dxi), np.array(Ms)
    diffs = np.diff(xis)
    monotone = bool(np.all(diffs > 0) or np.all(diffs < 0))
    same_sign = bool(np.all(dxi > 0) or np.all(dxi < 0))
    ad = np.abs(dxi)
    xi_ratio = float(ad.max() / ad.min()) if same_sign and ad.min() > 0 else math.inf
    L = np.array(logD)
    with np.errstate(invalid="ignore"):
        spread = L.max(axis=0) - L.min(axis=0)
    deriv_ratio = float(np.exp(np.nanmax(spread))) if np.all(np.isfinite(L)) else math.inf
    M_range = (float(np.nanmin(np.abs(Ms))), float(np.nanmax(np.abs(Ms))))
    ok_M = True
    if a_c_base is None or not math.isfinite(a_c_base):
        flags.append("no_reference_a_c")
    else:
        a = abs(a_c_base)
        ok_M = (not np.any(np.isnan(Ms))) and a / lam <= M_range[0] and M_range[1] <= lam * a
    passed = bool(monotone and same_sign and xi_ratio <= lam and deriv_ratio <= lam and ok_M)
    return BoxReport(xi_ratio, M_range, deriv_ratio, monotone, passed, len(ts), flags)


def _image_inside(family, t_star, r, crit, m, target, geom, samples):
    c = geom.crits[target]
    rad = geom.radius[target]
    for t in np.linspace(t_star - r, t_star + r, samples):
        t = float(t)
        if not family.in_domain(t):
            continue
        if abs(xi(family, t, crit, m) - c.position) >= rad:
            return False
    return True


def _return_count(family, t, crit, m, geom):
    pts = _iterate(family, t, family.critical_points(t)[crit].position, m + 1)[1:]
    return int(np.sum(geom.inside(pts)))


@dataclass
class BoxFamilyResult:
    boxes: list
    special: bool | None
    violation: tuple | None
    height: int | None
    height_ok: bool | None
    skipped: list = field(default_factory=list)


def box_family(family: MapFamily, t_lo: float, t_hi: float, crit: int, m_max: int, n_cap: int,
               eps: float, lam: float, theta: float = 0.01, grid: int = 1000,
               samples: int = 16, bisect_steps: int = 30) -> BoxFamilyResult:
    """Pre-critical boxes of orders 0..m_max with the largest admissible radius <= eps.

    A radius is admissible when the sampled image of the box stays in the
    eps-neighbourhood of the target critical point and ``verify_box`` passes.
    Non-clipped boxes are then checked for specialness and height <= n_cap.
    """
    if m_max > 12:
        raise ValueError("m_max above 12 is not supported; pre-critical roots grow exponentially")
    if not theta > 0:
        raise InvalidTheta(f"theta must be positive, got {theta}")
    base = family.base_parameter
    try:
        a_c_base = nv_check(family, base, crit, 200).a_c
    except (ZeroDerivativeOnOrbit, TailNotContracting, EvaluationEscaped):
        a_c_base = None
    boxes, skipped = [], []
    lo_d, hi_d = family.parameter_domain
    for m in range(m_max + 1):
        for t_star in find_precritical(family, t_lo, t_hi, crit, m, grid):
            geom = EpsGeometry.for_family(family, t_star, eps)
            xm = xi(family, t_star, crit, m)
            target = int(geom.nearest([xm])[0])

            def admissible(r):
                if not _image_inside(family, t_star, r, crit, m, target, geom, samples):
                    return None
                b = ParameterBox(t_star, r, m, crit, lam, target)
                try:
                    rep = verify_box(family, b, a_c_base, samples)
                except EvaluationEscaped:
                    return None
                return rep if rep.passed else None

            r_hi = min(eps, max(t_star - lo_d, hi_d - t_star))
            rep = admissible(r_hi)
            if rep is not None:
                r = r_hi
            else:
                lo_r, hi_r, rep = 0.0, r_hi, None
                for _ in range(bisect_steps):
                    if hi_r < 1e-12:
                        break
                    mid = 0.5 * (lo_r + hi_r) if lo_r > 0 else hi_r / 8.0
                    got = admissible(mid)
                    if got is not None:
                        lo_r, rep = mid, got
                    else:
                        hi_r = mid
                r = lo_r
            if r <= 0 or rep is None:
                skipped.append({"center": t_star, "order": m, "reason": "no admissible radius"})
                continue
            probes = [t_star] + list(np.linspace(t_star - r, t_star + r, 10)[1:-1])
            counts = [_return_count(family, float(t), crit, m, geom)
                      for t in probes if family.in_domain(float(t))]
            if not counts or min(counts) > n_cap:
                skipped.append({"center": t_star, "order": m, "reason": "return count above cap"})
                continue
            clipped = t_star - r < lo_d or t_star + r > hi_d
            boxes.append(ParameterBox(t_star, r, m, crit, lam, target, clipped, rep))
    boxes.sort(key=lambda b: (b.order, b.center))
    inner = [b for b in boxes if not b.clipped]
    if not inner:
        return BoxFamilyResult(boxes, None, None, None, None, skipped)
    fam = BallFamily([b.as_ball() for b in inner])
    try:
        chk = fam.special_check
    except ValueError:
        return BoxFamilyResult(boxes, False, None, None, None, skipped)
    if chk.special:
        h = fam.strata.height
        return BoxFamilyResult(boxes, True, None, h, h <= n_cap, skipped)
    return BoxFamilyResult(boxes, False, chk.violation, None, None, skipped)
