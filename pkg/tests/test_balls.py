import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cedensity.balls import (
    Ball,
    BallFamily,
    IntervalSet,
    deep_set,
    depth,
    depth_array,
    depth_profile,
    is_special,
    lemma_bound_check,
    lemma_constant,
    random_special_family,
    strata,
    total_depth,
)
from cedensity.errors import DepthInfiniteWarning, DuplicateCenters, GenerationFailed, NotSpecial

pytestmark = pytest.mark.filterwarnings("ignore::cedensity.errors.DepthInfiniteWarning")


def brute_dep(x, B):
    d = abs(x - B.center)
    if d >= math.exp(-2) * B.radius:
        return 0
    if d == 0:
        return math.inf
    k = 0
    while d < math.exp(-k) * B.radius:
        k += 1
    return k


def test_depth_examples():
    B = Ball(0.5, 0.1)
    assert depth(0.7, B) == 0
    assert depth(0.5005, B) == 6
    assert depth(0.5, B) == math.inf


@settings(max_examples=300, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(1e-6, 1.0))
def test_depth_image(x, r):
    d = depth(x, Ball(0.0, r))
    assert d == 0 or d >= 3


def test_depth_closed_form_bulk():
    rng = np.random.default_rng(9)
    B = Ball(0.3, 0.02)
    xs = B.center + rng.uniform(-1, 1, 10_000) * math.exp(-2) * B.radius
    fast = depth_array(xs, B)
    for x, q in zip(xs, fast):
        assert q == brute_dep(x, B)
        assert q == math.ceil(math.log(B.radius / abs(x - B.center))) or \
            abs(abs(x - B.center) - math.exp(-q) * B.radius) < 1e-15


def test_ball_shrink():
    assert Ball(1.0, 2.0).shrink(1).radius == pytest.approx(2 * math.exp(-1))
    with pytest.raises(ValueError):
        Ball(0.0, 0.0)


def test_interval_set_merges_and_measures():
    s = IntervalSet([(0, 1), (1, 2), (3, 4), (3.5, 5)])
    assert s.intervals == [(0, 2), (3, 5)]
    assert s.total_measure == 4
    assert s.contains(1.5) and not s.contains(2.5)
    assert s.contains_array(np.array([0.5, 2.5, 4.9])).tolist() == [True, False, True]


def test_special_examples():
    assert is_special(BallFamily.from_pairs([(0, 1), (0.1, 0.04)])).special
    chk = is_special(BallFamily.from_pairs([(0, 1), (0.1, 0.09)]))
    assert not chk.special and chk.violation is not None
    assert is_special(BallFamily.from_pairs([(0.3, 0.2)])).special


def test_duplicate_centers():
    with pytest.raises(DuplicateCenters):
        is_special(BallFamily.from_pairs([(0, 1), (0, 0.1)]))


def test_strata_examples():
    s = strata(BallFamily.from_pairs([(0, 1), (0.05, 0.001)]))
    assert s.strata == [[0], [1]] and s.height == 2
    assert strata(BallFamily.from_pairs([(0, 0.1), (1, 0.1), (2, 0.1)])).height == 1
    assert strata(BallFamily([])).height == 0


def test_strata_requires_special():
    with pytest.raises(NotSpecial):
        strata(BallFamily.from_pairs([(0, 1), (0.1, 0.09)]))


def test_deep_set_single_ball():
    fam = BallFamily([Ball(0.0, 1.0)])
    s3 = deep_set(fam, 3)
    assert s3.intervals == [(-math.exp(-2), math.exp(-2))]
    assert s3.total_measure == pytest.approx(2 * math.exp(-2), rel=1e-15)
    assert deep_set(fam, 5).total_measure == pytest.approx(2 * math.exp(-4), rel=1e-15)
    assert deep_set(fam, 0).intervals == [(-1.0, 1.0)]


def test_deep_set_center_collision_warns():
    # the inner ball's centre sits on an outer breakpoint
    outer = Ball(0.0, 1.0)
    inner = Ball(math.exp(-2), 0.01)
    fam = BallFamily([outer, inner])
    with pytest.warns(DepthInfiniteWarning):
        depth_profile(fam, 5)


def test_lemma_constant():
    assert lemma_constant(0.5) == pytest.approx(math.exp(5) / (1 - math.exp(-0.5)), rel=1e-15)
    assert lemma_constant(0.5) == pytest.approx(377.188, abs=0.01)


def test_lemma_single_ball():
    fam = BallFamily([Ball(0.0, 1.0)])
    r = lemma_bound_check(fam, 5, 0.5)
    assert r.measure == pytest.approx(2 * math.exp(-4))
    assert r.bound == pytest.approx(lemma_constant(0.5) * math.exp(-2.5) * 2)
    assert r.passed and r.height == 1
    assert lemma_bound_check(fam, 0, 0.5).passed


def test_random_family_deterministic():
    a = random_special_family(17, 20)
    b = random_special_family(17, 20)
    assert a.to_json() == b.to_json()


def test_random_family_single():
    fam = random_special_family(1, 1)
    assert len(fam) == 1 and fam.height == 1


def test_random_family_thirty():
    fam = random_special_family(5, 30, height_cap=4)
    assert is_special(fam).special and fam.height <= 4


def test_generation_failure():
    with pytest.raises(GenerationFailed):
        random_special_family(0, 50, height_cap=1, scale=0.01, max_tries=30)


def test_json_roundtrip():
    fam = random_special_family(3, 8)
    assert BallFamily.from_json(fam.to_json()).to_json() == fam.to_json()


@pytest.mark.parametrize("seed", range(5))
def test_deep_set_matches_pointwise_depth(seed):
    fam = random_special_family(seed, 25)
    rng = np.random.default_rng(seed)
    xs = fam.support.sample(rng, 20_000)
    tot = total_depth(fam, xs)
    for N in (3, 4, 6, 9):
        inside = deep_set(fam, N).contains_array(xs)
        assert np.array_equal(inside, tot >= N)


@pytest.mark.parametrize("seed", range(10))
def test_strata_peeling_idempotent(seed):
    fam = random_special_family(100 + seed, 30)
    layers = fam.strata.strata
    rest = [i for layer in layers[1:] for i in layer]
    sub = fam.subfamily(rest).strata.strata
    relabel = [[rest[i] for i in layer] for layer in sub]
    assert [sorted(l) for l in relabel] == [sorted(l) for l in layers[1:]]


@pytest.mark.parametrize("seed", range(10))
def test_top_stratum_volume(seed):
    fam = random_special_family(200 + seed, 30)
    top = fam.strata.strata[0]
    supp = fam.support.total_measure
    for k in range(0, 15):
        vol = sum(2 * math.exp(-k) * fam.balls[i].radius for i in top)
        assert vol <= math.exp(-k + 2) * supp


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 15), st.integers(0, 20),
       st.sampled_from([0.25, 0.5, 0.75]))
def test_lemma_holds_on_generated_families(seed, count, N, kappa):
    fam = random_special_family(seed, count)
    assert lemma_bound_check(fam, N, kappa).passed
