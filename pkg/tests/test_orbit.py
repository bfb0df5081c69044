import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cedensity.errors import TailNotContracting, ZeroDerivativeOnOrbit
from cedensity.family import jet, make_logistic, make_poly_family
from cedensity.orbit import (
    ce_exponent,
    critical_orbit,
    distortion_logs,
    distortion_sum,
    nv_check,
    orbit_log_distortion,
    recurrence_profile,
    summability_partial,
    transversality_sum,
)
from cedensity.slog import SignedLogReal, cumulative_logsumexp, logsumexp

LOG4 = math.log(4.0)


@pytest.fixture(scope="module")
def logistic():
    return make_logistic()


def xi_direct(fam, t, n):
    x = 0.5
    for _ in range(n + 1):
        x = t * x * (1 - x)
    return x


# ---------------------------------------------------------------- signed logs

def test_slog_product_and_sign():
    a = SignedLogReal.from_float(-3.0) * SignedLogReal.from_float(2.0)
    assert a.sign == -1 and a.to_float() == pytest.approx(-6.0)
    assert (a / SignedLogReal.from_float(-2.0)).to_float() == pytest.approx(3.0)
    assert (a * 0.0).is_zero()


def test_slog_overflow_guard():
    big = SignedLogReal(1, 800.0)
    with pytest.raises(OverflowError):
        big.to_float()
    assert big.reciprocal().to_float() == 0.0 or big.reciprocal().to_float() < 1e-300


def test_logsumexp_edges():
    assert logsumexp([]) == -math.inf
    assert logsumexp([1000.0, 1000.0]) == pytest.approx(1000.0 + math.log(2.0))
    out = cumulative_logsumexp([0.0, 0.0, math.log(2.0)])
    assert np.exp(out) == pytest.approx([1.0, 2.0, 4.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-300), min_size=1, max_size=20))
def test_slog_product_matches_float(values):
    acc = SignedLogReal.one()
    for v in values:
        acc = acc * v
    sign = int(np.prod(np.sign(values)))
    assert acc.sign == sign
    assert acc.logmag == pytest.approx(math.fsum(math.log(abs(v)) for v in values), abs=1e-9)


# ---------------------------------------------------------------- orbits

def test_chebyshev_orbit(logistic):
    o = critical_orbit(logistic, 4.0, 0, 3)
    assert o.points.tolist() == [1.0, 0.0, 0.0, 0.0]
    assert np.exp(o.logs) == pytest.approx([1, 4, 16, 64])
    assert o.signs.tolist() == [1, -1, -1, -1]
    assert o.crit_dist.tolist() == [0.5] * 4
    assert o.escaped is None


def test_superstable_orbit(logistic):
    o = critical_orbit(logistic, 2.0, 0, 5)
    assert np.all(o.points == 0.5)
    assert o.signs[0] == 1 and np.all(o.signs[1:] == 0)
    assert o.first_zero() == 1


def test_zero_length_orbit(logistic):
    o = critical_orbit(logistic, 3.3, 0, 0)
    assert o.points.tolist() == [3.3 / 4] and o.deriv(0) == SignedLogReal.one()


def test_derivative_recursion(logistic):
    o = critical_orbit(logistic, 3.83, 0, 300)
    D = o.cum_deriv
    assert D[0] == SignedLogReal.one()
    for j in range(300):
        step = D[j] * jet(logistic, 3.83, float(o.points[j])).dfx
        assert step.sign == D[j + 1].sign
        assert step.logmag == D[j + 1].logmag


def test_deterministic(logistic):
    a = critical_orbit(logistic, 3.91, 0, 1000)
    b = critical_orbit(logistic, 3.91, 0, 1000)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.logs, b.logs)


def test_bimodal_orbits_use_both_critical_points():
    fam = make_poly_family((4.0, -9.0))
    o = critical_orbit(fam, 0.0, 1, 20)
    assert o.critical_position == pytest.approx(2 / 3)
    c = [p.position for p in fam.critical_points(0.0)]
    assert o.crit_dist == pytest.approx([min(abs(x - ci) for ci in c) for x in o.points])


# ---------------------------------------------------------------- sums

def test_summability_chebyshev(logistic):
    o = critical_orbit(logistic, 4.0, 0, 30)
    assert summability_partial(o, 30).partial == pytest.approx(4 / 3, abs=1e-10)
    assert summability_partial(o, 0).partial == 1.0


def test_summability_zero_derivative(logistic):
    o = critical_orbit(logistic, 2.0, 0, 3)
    with pytest.raises(ZeroDerivativeOnOrbit):
        summability_partial(o, 1)


def test_summability_monotone(logistic):
    o = critical_orbit(logistic, 3.97, 0, 200)
    sums = [summability_partial(o, n).partial for n in range(201)]
    assert all(b >= a for a, b in zip(sums, sums[1:]))


def test_transversality_chebyshev(logistic):
    for n in (0, 1, 2, 10):
        assert transversality_sum(logistic, 4.0, 0, n).M_n == 0.25


def test_transversality_first_term(logistic):
    assert transversality_sum(logistic, 3.7, 0, 0).M_n == 0.25


def test_transversality_fd_oracle(logistic):
    a, n, h = 3.9, 10, 1e-7
    o = critical_orbit(logistic, a, 0, n)
    fd = (xi_direct(logistic, a + h, n) - xi_direct(logistic, a - h, n)) / (2 * h)
    D = o.deriv(n).to_float()
    M = transversality_sum(logistic, a, 0, n, orbit=o).M_n
    assert fd / D == pytest.approx(M, rel=1e-5)


def test_nv_chebyshev(logistic):
    r = nv_check(logistic, 4.0, 0, 30)
    assert r.a_c == 0.25 and r.tail_bound < 1e-15 and r.nonzero


def test_nv_zero_derivative(logistic):
    with pytest.raises(ZeroDerivativeOnOrbit):
        nv_check(logistic, 2.0, 0, 30)


def test_nv_attracting_cycle(logistic):
    with pytest.raises(TailNotContracting):
        nv_check(logistic, 3.5, 0, 300)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nv_tiny_final_derivative(logistic):
    # |D_N| is far below 1 here, so the tail bound is infinite and NV undetermined
    r = nv_check(logistic, 3.9993970333977193, 0, 10_000)
    assert r.tail_bound == math.inf and not r.nonzero


def test_nv_constant_family():
    fam = make_poly_family((4.0, -9.0), direction=(0.0, 0.0))
    r = nv_check(fam, 0.0, 0, 50)
    assert fam.dt_sup == 0.0
    assert r.a_c == 0.0 and not r.nonzero


def test_distortion_examples(logistic):
    assert distortion_sum(logistic, 4.0, 1.0, 2) == pytest.approx(10.0, rel=1e-15)
    assert distortion_sum(logistic, 4.0, 1.0, 0) == 0.0
    assert distortion_sum(logistic, 2.0, 0.5, 1) == math.inf


def test_distortion_matches_linear_sum(logistic):
    t, x, n = 3.93, 0.8123, 60
    step = logistic.stepper(t)
    total, d, y = [], 1.0, x
    for _ in range(n):
        total.append(d / abs(y - 0.5))
        fy, dfy = step(y)
        d *= abs(dfy)
        y = fy
    assert distortion_sum(logistic, t, x, n) == pytest.approx(math.fsum(total), rel=1e-12)
    sums = [distortion_sum(logistic, t, x, k) for k in range(n + 1)]
    assert all(b >= a for a, b in zip(sums, sums[1:]))


def test_orbit_log_distortion_matches_direct(logistic):
    t = 3.87
    o = critical_orbit(logistic, t, 0, 40)
    out = orbit_log_distortion(o)
    for S in (1, 5, 17, 40):
        direct = math.log(distortion_sum(logistic, t, float(o.points[0]), S))
        assert out[S] == pytest.approx(direct, rel=1e-12)
    assert distortion_logs(logistic, t, 0.5, 3)[0] == math.inf


def test_ce_chebyshev(logistic):
    o = critical_orbit(logistic, 4.0, 0, 100)
    r = ce_exponent(o, 1)
    assert r.inf_rate == pytest.approx(LOG4, abs=1e-12)


def test_ce_attracting_cycle(logistic):
    o = critical_orbit(logistic, 3.5, 0, 400)
    assert ce_exponent(o, 50).inf_rate < 0


def test_ce_monotone_in_n_min(logistic):
    o = critical_orbit(logistic, 3.95, 0, 2000)
    rates = [ce_exponent(o, n).inf_rate for n in (1, 10, 50, 200, 1000)]
    assert all(b >= a for a, b in zip(rates, rates[1:]))


def test_recurrence_chebyshev(logistic):
    o = critical_orbit(logistic, 4.0, 0, 100)
    r = recurrence_profile(o, logistic, 2.0)
    assert r.best_C == 0.5 and r.worst_n == 1


def test_recurrence_critical_hit(logistic):
    o = critical_orbit(logistic, 2.0, 0, 10)
    assert recurrence_profile(o).best_C == 0.0


def test_recurrence_monotone_in_beta(logistic):
    o = critical_orbit(logistic, 3.77, 0, 500)
    assert recurrence_profile(o, beta=1.01).best_C <= recurrence_profile(o, beta=3.0).best_C


def xi_mp(a, n):
    x = mpmath.mpf("0.5")
    for _ in range(n + 1):
        x = a * x * (1 - x)
    return x


@settings(max_examples=40, deadline=None)
@given(st.floats(3.6, 4.0), st.integers(1, 20))
def test_gradient_identity(a, n):
    fam = make_logistic()
    o = critical_orbit(fam, a, 0, n)
    if o.crit_dist.min() <= 1e-3:
        return
    # central difference in 60-digit arithmetic, so |xi'| up to 4^20 is resolved
    with mpmath.workdps(60):
        am, h = mpmath.mpf(a), mpmath.mpf("1e-25")
        fd = float((xi_mp(am + h, n) - xi_mp(am - h, n)) / (2 * h))
    exact = transversality_sum(fam, a, 0, n, orbit=o).M_n * o.deriv(n).to_float()
    assert fd == pytest.approx(exact, rel=1e-4)
