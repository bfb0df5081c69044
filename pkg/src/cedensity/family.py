"""One-parameter families of interval maps with exact jets and critical data."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (
    DegenerateCritical,
    EvaluationEscaped,
    NotIntervalMap,
    ParameterOutOfDomain,
)

BOUNDARY_TOL = 1e-12
ROOT_TOL = 1e-14
MULTIPLICITY_TOL = 1e-9
DT_SUP_SAFETY = 1.01


@dataclass(frozen=True)
class CriticalPointInfo:
    position: float
    order: float
    index: int

    def __post_init__(self):
        if not 0.0 < self.position < 1.0:
            raise ValueError(f"critical position {self.position} not in (0,1)")
        if not self.order > 1.0:
            raise ValueError(f"critical order {self.order} must exceed 1")


class Jet(NamedTuple):
    f: float
    dfx: float
    d2fx: float
    dft: float


class MapFamily:
    """Base class: F(x, t) on [0,1] x [t_min, t_max].

    Subclasses implement ``_evaluate`` (raw jet, no checks) and
    ``critical_points``. Instances are immutable and picklable.
    """

    kind = "abstract"

    def __init__(self, domain: tuple[float, float], base: float, dt_sup: float):
        t_min, t_max = float(domain[0]), float(domain[1])
        if not t_min <= base <= t_max:
            raise ParameterOutOfDomain(f"base {base} outside [{t_min}, {t_max}]")
        self._domain = (t_min, t_max)
        self._base = float(base)
        self._dt_sup = float(dt_sup)

    @property
    def parameter_domain(self) -> tuple[float, float]:
        return self._domain

    @property
    def base_parameter(self) -> float:
        return self._base

    @property
    def dt_sup(self) -> float:
        return self._dt_sup

    def in_domain(self, t: float) -> bool:
        return self._domain[0] <= t <= self._domain[1]

    def check_parameter(self, t: float) -> None:
        if not self.in_domain(t):
            raise ParameterOutOfDomain(f"t={t} outside {self._domain}")

    def _evaluate(self, x: float, t: float) -> Jet:
        raise NotImplementedError

    def critical_points(self, t: float) -> list[CriticalPointInfo]:
        raise NotImplementedError

    def stepper(self, t: float) -> Callable[[float], tuple[float, float]]:
        """Fast unchecked x -> (f(x), Df(x)) at a fixed parameter."""
        def step(x):
            j = self._evaluate(x, t)
            return j.f, j.dfx
        return step

    def dt_function(self, t: float) -> Callable[[float], float]:
        return lambda x: self._evaluate(x, t).dft

    @property
    def ell_max(self) -> float:
        orders = [c.order for c in self.critical_points(self._base)]
        return max(orders) if orders else math.nan

    @property
    def ell_min(self) -> float:
        orders = [c.order for c in self.critical_points(self._base)]
        return min(orders) if orders else math.nan

    def to_spec(self) -> dict:
        raise NotImplementedError

    def check_invariants(self, samples: int = 200, seed: int = 0) -> None:
        """Sampling check of the structural invariants; raises AssertionError."""
        rng = np.random.default_rng(seed)
        lo, hi = self._domain
        ts = np.concatenate([[lo, hi, self._base], rng.uniform(lo, hi, samples)])
        count = None
        for t in ts:
            crits = self.critical_points(float(t))
            if count is None:
                count = len(crits)
            assert len(crits) == count, "critical point count varies"
            pos = [c.position for c in crits]
            assert all(a < b for a, b in zip(pos, pos[1:])), "critical points unordered"
            for x in rng.uniform(0, 1, 8):
                assert abs(self._evaluate(float(x), float(t)).dft) <= self._dt_sup * (1 + 1e-12)


def jet(family: MapFamily, t: float, x: float) -> Jet:
    """Evaluate F, dF/dx, d2F/dx2 and dF/dt at (x, t) with domain checks."""
    family.check_parameter(t)
    if not -BOUNDARY_TOL <= x <= 1 + BOUNDARY_TOL:
        raise EvaluationEscaped(f"x={x} outside [0,1]")
    x = min(max(x, 0.0), 1.0)
    j = family._evaluate(x, t)
    f = j.f
    if f < 0.0 or f > 1.0:
        if f < -BOUNDARY_TOL or f > 1 + BOUNDARY_TOL:
            raise EvaluationEscaped(f"F({x}, {t}) = {f} leaves [0,1]")
        f = min(max(f, 0.0), 1.0)
    return Jet(f, j.dfx, j.d2fx, j.dft)


class LogisticFamily(MapFamily):
    """f_a(x) = a x (1 - x), a in [0, 4]."""

    kind = "logistic"

    def __init__(self):
        super().__init__((0.0, 4.0), 4.0, 0.25)
        self._crit = [CriticalPointInfo(0.5, 2.0, 0)]

    def _evaluate(self, x, t):
        return Jet(t * x * (1.0 - x), t * (1.0 - 2.0 * x), -2.0 * t, x * (1.0 - x))

    def stepper(self, t):
        def step(x):
            return t * x * (1.0 - x), t * (1.0 - 2.0 * x)
        return step

    def dt_function(self, t):
        return lambda x: x * (1.0 - x)

    def critical_points(self, t):
        return list(self._crit)

    def to_spec(self):
        return {"kind": "logistic"}

    def __eq__(self, other):
        return isinstance(other, LogisticFamily)

    def __hash__(self):
        return hash("logistic")

    def __repr__(self):
        return "LogisticFamily()"


def make_logistic() -> LogisticFamily:
    return LogisticFamily()


# ---------------------------------------------------------------- polynomials

def _poly_coeffs(a: Sequence[float]) -> np.ndarray:
    """Ascending coefficients of sum a_i x^i + (1 - sum a_i) x^(n+1)."""
    a = np.asarray(a, dtype=float)
    c = np.zeros(len(a) + 2)
    c[1:-1] = a
    c[-1] = 1.0 - math.fsum(a)
    return c


def _horner(c, x):
    acc = 0.0
    for k in range(len(c) - 1, -1, -1):
        acc = acc * x + c[k]
    return acc


def _deriv(c: np.ndarray) -> np.ndarray:
    if len(c) <= 1:
        return np.zeros(1)
    return c[1:] * np.arange(1, len(c))


def _bisect_root(c, lo, hi, flo):
    while hi - lo > ROOT_TOL:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = _horner(c, mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def real_roots(c: np.ndarray, lo: float, hi: float) -> list[float]:
    """Roots of the polynomial with ascending coefficients ``c`` in the open interval (lo, hi).

    Recursive isolation: the roots of the derivative split (lo, hi) into
    pieces where the polynomial is monotone; each piece holds at most one
    sign change, refined by bisection. Touching roots are picked up at the
    derivative's roots when the value there is negligible.
    """
    c = np.trim_zeros(np.asarray(c, dtype=float), "b")
    if len(c) <= 1:
        return []
    if len(c) == 2:
        r = -c[0] / c[1]
        return [float(r)] if lo < r < hi else []
    scale = float(np.max(np.abs(c)))
    knots = [lo] + real_roots(_deriv(c), lo, hi) + [hi]
    roots = []
    for k in knots[1:-1]:
        if abs(_horner(c, k)) <= 1e-13 * scale:
            roots.append(k)
    for a, b in zip(knots, knots[1:]):
        fa, fb = _horner(c, a), _horner(c, b)
        if fa == 0.0 or fb == 0.0:
            continue
        if (fa < 0) != (fb < 0):
            roots.append(_bisect_root(c, a, b, fa))
    roots.sort()
    out = []
    for r in roots:
        if not out or r - out[-1] > 1e-12:
            out.append(float(r))
    return out


class PolyFamily(MapFamily):
    """P_a(x) = sum a_i x^i + (1 - sum a_i) x^(n+1) with a = coeffs + (t - base) * direction."""

    kind = "poly"

    def __init__(self, coeffs, direction=None, base=0.0, domain=None, check_samples=11):
        coeffs = tuple(float(v) for v in coeffs)
        if len(coeffs) < 1:
            raise ValueError("need at least one coefficient")
        if direction is None:
            direction = (1.0,) + (0.0,) * (len(coeffs) - 1)
        direction = tuple(float(v) for v in direction)
        if len(direction) != len(coeffs):
            raise ValueError("direction and coeffs differ in length")
        if domain is None:
            domain = (base - 0.05, base + 0.05)
        self.coeffs = coeffs
        self.direction = direction
        xs = np.linspace(0.0, 1.0, 10_000)
        # dF/dt = sum u_i (x^i - x^(n+1)), independent of t
        dcoef = _poly_coeffs(direction)
        dcoef[-1] = -math.fsum(direction)
        dt_sup = float(np.max(np.abs(np.polynomial.polynomial.polyval(xs, dcoef)))) * DT_SUP_SAFETY
        super().__init__(domain, base, dt_sup)
        self._dcoef = dcoef
        lo, hi = self.parameter_domain
        ts = sorted({float(base), *np.linspace(lo, hi, max(check_samples, 2)).tolist()})
        count = None
        for t in ts:
            c = self.coefficients(t)
            vals = np.polynomial.polynomial.polyval(xs, c)
            if vals.min() < -BOUNDARY_TOL or vals.max() > 1 + BOUNDARY_TOL:
                raise NotIntervalMap(f"P([0,1]) not inside [0,1] at t={t}")
            n = len(self.critical_points(t))
            if count is None:
                count = n
            elif n != count:
                raise DegenerateCritical(f"critical point count changes inside the domain (t={t})")

    def coefficients(self, t: float) -> np.ndarray:
        a = np.asarray(self.coeffs) + (t - self._base) * np.asarray(self.direction)
        return _poly_coeffs(a)

    def _evaluate(self, x, t):
        c = _cached_coeffs(self.coeffs, self.direction, self._base, t)
        d1 = _deriv(c)
        d2 = _deriv(d1)
        return Jet(_horner(c, x), _horner(d1, x), _horner(d2, x), _horner(self._dcoef, x))

    def stepper(self, t):
        c = tuple(self.coefficients(t).tolist())
        d1 = tuple(_deriv(np.asarray(c)).tolist())
        n = len(c)

        def step(x):
            f = 0.0
            for k in range(n - 1, -1, -1):
                f = f * x + c[k]
            df = 0.0
            for k in range(n - 2, -1, -1):
                df = df * x + d1[k]
            return f, df
        return step

    def dt_function(self, t):
        dcoef = tuple(self._dcoef.tolist())
        return lambda x: _horner(dcoef, x)

    def critical_points(self, t):
        return list(_poly_critical_points(self.coeffs, self.direction, self._base, float(t)))

    def to_spec(self):
        return {"kind": "poly", "coeffs": list(self.coeffs), "direction": list(self.direction),
                "base": self._base, "domain": list(self.parameter_domain)}

    def __repr__(self):
        return f"PolyFamily(coeffs={self.coeffs}, direction={self.direction}, base={self._base})"


@lru_cache(maxsize=4096)
def _cached_coeffs(coeffs, direction, base, t):
    a = np.asarray(coeffs) + (t - base) * np.asarray(direction)
    return _poly_coeffs(a)


@lru_cache(maxsize=4096)
def _poly_critical_points(coeffs, direction, base, t):
    c = _cached_coeffs(coeffs, direction, base, t)
    d1 = _deriv(c)
    d2 = _deriv(d1)
    out = []
    for i, r in enumerate(real_roots(d1, 0.0, 1.0)):
        if abs(_horner(d2, r)) < MULTIPLICITY_TOL:
            raise DegenerateCritical(f"critical point {r} of multiplicity > 1 at t={t}")
        out.append(CriticalPointInfo(r, 2.0, i))
    return tuple(out)


def make_poly_family(coeffs, direction=None, base=0.0, domain=None) -> PolyFamily:
    return PolyFamily(coeffs, direction=direction, base=base, domain=domain)


def sylvester_discriminant(p: Sequence[float]) -> float:
    """Discriminant of a polynomial given by ascending coefficients, via the Sylvester resultant."""
    p = np.trim_zeros(np.asarray(p, dtype=float), "b")
    d = len(p) - 1
    if d < 1:
        raise ValueError("discriminant needs degree >= 1")
    if d == 1:
        return 1.0
    q = _deriv(p)
    # descending order for the Sylvester layout
    a, b = p[::-1], q[::-1]
    m, n = d, d - 1
    size = m + n
    S = np.zeros((size, size))
    for i in range(n):
        S[i, i:i + m + 1] = a
    for i in range(m):
        S[n + i, i:i + n + 1] = b
    res = np.linalg.det(S)
    return float((-1) ** (d * (d - 1) // 2) * res / a[0])


class Nondegeneracy(NamedTuple):
    nondegenerate: bool
    discriminant: float


def is_nondegenerate(coeffs: Sequence[float], rtol: float = 1e-10) -> Nondegeneracy:
    """True iff every critical point of P_a is simple (discriminant of P_a' nonzero)."""
    c = _poly_coeffs(coeffs)
    d1 = np.trim_zeros(_deriv(c), "b")
    if len(d1) - 1 < 1:
        return Nondegeneracy(True, 1.0)
    disc = sylvester_discriminant(d1)
    deg = len(d1) - 1
    scale = float(np.max(np.abs(d1))) ** (2 * deg - 2)
    return Nondegeneracy(abs(disc) > rtol * scale, disc)


# ---------------------------------------------------------------- rescaling

class RescaledFamily(MapFamily):
    """G(x, s) = F(x, t0 + kappa (s - t0))."""

    kind = "rescaled"

    def __init__(self, inner: MapFamily, kappa: float):
        if not kappa > 0:
            raise ValueError("kappa must be positive")
        t0 = inner.base_parameter
        lo, hi = inner.parameter_domain
        domain = (t0 + (lo - t0) / kappa, t0 + (hi - t0) / kappa)
        super().__init__(domain, t0, inner.dt_sup * kappa)
        self.inner = inner
        self.kappa = float(kappa)

    def _inner_t(self, s):
        t0 = self._base
        t = t0 + self.kappa * (s - t0)
        lo, hi = self.inner.parameter_domain
        return min(max(t, lo), hi)

    def _evaluate(self, x, s):
        j = self.inner._evaluate(x, self._inner_t(s))
        return Jet(j.f, j.dfx, j.d2fx, self.kappa * j.dft)

    def stepper(self, s):
        return self.inner.stepper(self._inner_t(s))

    def dt_function(self, s):
        g = self.inner.dt_function(self._inner_t(s))
        k = self.kappa
        return lambda x: k * g(x)

    def critical_points(self, s):
        return self.inner.critical_points(self._inner_t(s))

    def to_spec(self):
        spec = dict(self.inner.to_spec())
        spec["kappa"] = self.kappa * spec.get("kappa", 1.0)
        return spec

    def __repr__(self):
        return f"RescaledFamily({self.inner!r}, kappa={self.kappa})"


def rescale_parameter(family: MapFamily, kappa: float) -> MapFamily:
    return RescaledFamily(family, kappa)


# ---------------------------------------------------------------- spec files

def family_from_spec(spec: dict) -> MapFamily:
    kind = spec.get("kind")
    if kind == "logistic":
        fam = make_logistic()
    elif kind == "poly":
        fam = make_poly_family(spec["coeffs"], spec.get("direction"), spec.get("base", 0.0),
                               spec.get("domain"))
    else:
        raise ValueError(f"unknown family kind {kind!r}")
    if "kappa" in spec and spec["kappa"] != 1.0:
        fam = rescale_parameter(fam, spec["kappa"])
    return fam


def load_family(name_or_path: str) -> MapFamily:
    """``logistic`` or a path to a JSON family specification."""
    if name_or_path == "logistic":
        return make_logistic()
    with open(Path(name_or_path)) as fh:
        return family_from_spec(json.load(fh))
