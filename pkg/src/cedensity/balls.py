"""Special families of balls, their height strata and exact deep-set measure."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DepthInfiniteWarning, DuplicateCenters, GenerationFailed, NotSpecial

INF = math.inf


@dataclass(frozen=True)
class Ball:
    """Open interval (center - radius, center + radius)."""

    center: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")

    def shrink(self, k: int) -> Ball:
        """B^(k) = B(a, e^-k r)."""
        return Ball(self.center, shell_radius(self.radius, k))

    def contains(self, x: float) -> bool:
        return abs(x - self.center) < self.radius

    @property
    def length(self) -> float:
        return 2.0 * self.radius


def shell_radius(r: float, k: int) -> float:
    return math.exp(-k) * r


def depth(x: float, B: Ball) -> float:
    """dep(x|B): least k with |x - a| >= e^-k r when |x - a| < e^-2 r, else 0."""
    d = abs(x - B.center)
    r = B.radius
    if d >= shell_radius(r, 2):
        return 0
    if d == 0.0:
        return INF
    k = max(3, math.ceil(math.log(r) - math.log(d)))
    while d < shell_radius(r, k):
        k += 1
    while k > 3 and d >= shell_radius(r, k - 1):
        k -= 1
    return k


def depth_array(xs: np.ndarray, B: Ball, cap: int | None = None) -> np.ndarray:
    """Vectorised dep(.|B); ``cap`` truncates large depths (and the centre) to ``cap``."""
    xs = np.asarray(xs, dtype=float)
    d = np.abs(xs - B.center)
    r = B.radius
    deep = (d < shell_radius(r, 2)) & (d > 0.0)
    dd = np.where(deep, d, r)
    k = np.ceil(np.log(r) - np.log(dd))
    # boundary fix-ups against the defining inequalities
    k = k + (dd < np.exp(-k) * r)
    k = k - ((k > 3) & (dd >= np.exp(-(k - 1)) * r))
    out = np.where(deep, np.maximum(k, 3.0), 0.0)
    out[d == 0.0] = INF
    if cap is not None:
        out = np.minimum(out, cap)
    return out


# ---------------------------------------------------------------- interval sets

class IntervalSet:
    """Finite union of disjoint open intervals, sorted by left endpoint."""

    def __init__(self, intervals: Iterable[tuple[float, float]] = ()):
        merged: list[tuple[float, float]] = []
        for a, b in sorted((float(a), float(b)) for a, b in intervals if b > a):
            if merged and a <= merged[-1][1]:
                if b > merged[-1][1]:
                    merged[-1] = (merged[-1][0], b)
            else:
                merged.append((a, b))
        self.intervals = merged
        self.total_measure = math.fsum(b - a for a, b in merged)

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __repr__(self):
        return f"IntervalSet({self.intervals!r})"

    def contains(self, x: float) -> bool:
        return any(a < x < b for a, b in self.intervals)

    def contains_array(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if not self.intervals:
            return np.zeros(xs.shape, dtype=bool)
        lefts = np.array([a for a, _ in self.intervals])
        rights = np.array([b for _, b in self.intervals])
        i = np.searchsorted(lefts, xs, side="right") - 1
        ok = i >= 0
        ic = np.clip(i, 0, None)
        return ok & (xs > lefts[ic]) & (xs < rights[ic])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform points from the set."""
        lens = np.array([b - a for a, b in self.intervals])
        which = rng.choice(len(lens), size=size, p=lens / lens.sum())
        lefts = np.array([a for a, _ in self.intervals])
        return lefts[which] + rng.uniform(0.0, 1.0, size) * lens[which]


# ---------------------------------------------------------------- families

class SpecialCheck(NamedTuple):
    special: bool
    violation: tuple[int, int] | None


class Strata(NamedTuple):
    strata: list
    height: int


def _special_pair(bi: Ball, bj: Ball) -> bool:
    """Given a_i in B_j^(1): is B_i inside B_j^(k-1) minus B_j^(k+1) for some k >= 1?"""
    dist = abs(bi.center - bj.center)
    kmax = max(1, math.ceil(math.log(bj.radius / bi.radius))) + 3
    for k in range(1, kmax + 1):
        inside = dist + bi.radius <= shell_radius(bj.radius, k - 1)
        apart = dist - bi.radius >= shell_radius(bj.radius, k + 1)
        if inside and apart:
            return True
    return False


class BallFamily:
    def __init__(self, balls: Sequence[Ball]):
        self.balls = tuple(balls)

    def __len__(self):
        return len(self.balls)

    def __iter__(self):
        return iter(self.balls)

    @classmethod
    def from_pairs(cls, pairs) -> BallFamily:
        return cls([Ball(float(a), float(r)) for a, r in pairs])

    def to_json(self) -> str:
        return json.dumps([{"center": b.center, "radius": b.radius} for b in self.balls])

    @classmethod
    def from_json(cls, text: str) -> BallFamily:
        return cls([Ball(float(d["center"]), float(d["radius"])) for d in json.loads(text)])

    def _check_centers(self):
        centers = [b.center for b in self.balls]
        if len(set(centers)) != len(centers):
            raise DuplicateCenters("ball centers must be pairwise distinct")

    @cached_property
    def special_check(self) -> SpecialCheck:
        self._check_centers()
        for i, bi in enumerate(self.balls):
            for j, bj in enumerate(self.balls):
                if i == j:
                    continue
                if abs(bi.center - bj.center) < shell_radius(bj.radius, 1):
                    if not _special_pair(bi, bj):
                        return SpecialCheck(False, (i, j))
        return SpecialCheck(True, None)

    @cached_property
    def strata(self) -> Strata:
        if not self.special_check.special:
            raise NotSpecial(f"family is not special; violation {self.special_check.violation}")
        remaining = list(range(len(self.balls)))
        layers = []
        while remaining:
            layer = [i for i in remaining
                     if all(j == i or abs(self.balls[i].center - self.balls[j].center)
                            >= shell_radius(self.balls[j].radius, 1) for j in remaining)]
            if not layer:
                raise NotSpecial("strata peeling stalled")
            layers.append(layer)
            taken = set(layer)
            remaining = [i for i in remaining if i not in taken]
        return Strata(layers, len(layers))

    @property
    def height(self) -> int:
        return self.strata.height

    @cached_property
    def support(self) -> IntervalSet:
        return IntervalSet((b.center - b.radius, b.center + b.radius) for b in self.balls)

    def subfamily(self, indices: Iterable[int]) -> BallFamily:
        return BallFamily([self.balls[i] for i in indices])


def is_special(fam: BallFamily) -> SpecialCheck:
    return fam.special_check


def strata(fam: BallFamily) -> Strata:
    return fam.strata


def total_depth(fam: BallFamily, xs: np.ndarray, cap: int | None = None) -> np.ndarray:
    """Sum of dep(x|B_i) over the family at each x."""
    xs = np.asarray(xs, dtype=float)
    flat = xs.ravel()
    order = np.argsort(flat, kind="stable")
    srt = flat[order]
    acc = np.zeros(srt.shape)
    for b in fam.balls:
        # only points within e^-2 r of the center can have positive depth
        s = shell_radius(b.radius, 2)
        lo = np.searchsorted(srt, b.center - s, side="left")
        hi = np.searchsorted(srt, b.center + s, side="right")
        if hi > lo:
            acc[lo:hi] += depth_array(srt[lo:hi], b, cap)
    out = np.empty(srt.shape)
    out[order] = acc
    return out.reshape(xs.shape)


def _breakpoints(fam: BallFamily, N: int) -> tuple[np.ndarray, set]:
    cuts, centers, own = set(), set(), set()
    for b in fam.balls:
        centers.add(b.center)
        own.update((b.center - b.radius, b.center + b.radius))
        for k in range(2, max(N - 1, 2) + 1):
            s = shell_radius(b.radius, k)
            own.update((b.center - s, b.center + s))
    cuts = own | centers
    return np.array(sorted(cuts)), centers & own


class DepthProfile(NamedTuple):
    """Elementary intervals with the total depth (capped) on each, restricted to the support."""

    left: np.ndarray
    right: np.ndarray
    depth: np.ndarray
    cap: int


def depth_profile(fam: BallFamily, cap: int) -> DepthProfile:
    if not fam.special_check.special:
        raise NotSpecial(f"family is not special; violation {fam.special_check.violation}")
    cap = max(cap, 3)
    pts, clash = _breakpoints(fam, cap)
    if clash:
        warnings.warn("a depth breakpoint coincides with a ball center", DepthInfiniteWarning)
    mids = 0.5 * (pts[:-1] + pts[1:])
    in_supp = fam.support.contains_array(mids)
    tot = total_depth(fam, mids[in_supp], cap=cap)
    return DepthProfile(pts[:-1][in_supp], pts[1:][in_supp], tot, cap)


def deep_set(fam: BallFamily, N: int, profile: DepthProfile | None = None) -> IntervalSet:
    """{x in supp: sum_i dep(x|B_i) >= N} as an exact union of intervals.

    Each ball's depth is constant between its breakpoints a +- e^-k r, so
    the summed depth at the midpoint of an elementary interval holds on
    the whole interval.
    """
    if N <= 0:
        if not fam.special_check.special:
            raise NotSpecial(f"family is not special; violation {fam.special_check.violation}")
        return fam.support
    if profile is None or profile.cap < N:
        profile = depth_profile(fam, N)
    keep = profile.depth >= N
    return IntervalSet(zip(profile.left[keep], profile.right[keep]))


class LemmaCheck(NamedTuple):
    measure: float
    bound: float
    passed: bool
    K: float
    height: int


def lemma_constant(kappa: float) -> float:
    """K(kappa) = e^5 / (1 - e^-kappa)."""
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0,1)")
    return math.exp(5.0) / (1.0 - math.exp(-kappa))


def lemma_bound_check(fam: BallFamily, N: int, kappa: float,
                      profile: DepthProfile | None = None) -> LemmaCheck:
    """|X_M(N)| <= K^h e^-(1-kappa)N |supp M| for the family height h."""
    K = lemma_constant(kappa)
    h = fam.strata.height
    measure = deep_set(fam, N, profile).total_measure
    bound = K ** h * math.exp(-(1.0 - kappa) * N) * fam.support.total_measure
    return LemmaCheck(measure, bound, measure <= bound * (1 + 1e-12), K, h)


# ---------------------------------------------------------------- generator

def _fits(fam_balls: list[Ball], new: Ball) -> bool:
    for b in fam_balls:
        if b.center == new.center:
            return False
        if abs(new.center - b.center) < shell_radius(b.radius, 1) and not _special_pair(new, b):
            return False
        if abs(b.center - new.center) < shell_radius(new.radius, 1) and not _special_pair(b, new):
            return False
    return True


def random_special_family(seed: int, count: int, height_cap: int = 4, scale: float = 1.0,
                          max_tries: int = 10_000) -> BallFamily:
    """Random special family built by rejection: top-level balls and children in parent annuli."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if height_cap < 1:
        raise ValueError("height_cap must be >= 1")
    rng = np.random.default_rng(seed)
    balls: list[Ball] = []
    level: list[int] = []   # nesting level used to respect the height cap
    tries = 0
    while len(balls) < count:
        tries += 1
        if tries > max_tries:
            raise GenerationFailed(f"placed {len(balls)} of {count} balls in {max_tries} tries")
        parents = [i for i, lv in enumerate(level) if lv + 1 < height_cap]
        if balls and parents and rng.uniform() < 0.7:
            p = int(rng.choice(parents))
            pb = balls[p]
            k = int(rng.integers(1, 4))
            lo, hi = shell_radius(pb.radius, k + 1), shell_radius(pb.radius, k - 1)
            dist = lo + (hi - lo) * rng.uniform(0.25, 0.75)
            room = min(dist - lo, hi - dist)
            r = room * rng.uniform(0.1, 0.9)
            center = pb.center + (dist if rng.uniform() < 0.5 else -dist)
            lv = level[p] + 1
        else:
            center = rng.uniform(0.0, scale)
            r = scale * rng.uniform(0.005, 0.05)
            lv = 0
        new = Ball(float(center), float(r))
        if not _fits(balls, new):
            continue
        trial = BallFamily(balls + [new])
        if not trial.special_check.special or trial.strata.height > height_cap:
            continue
        balls.append(new)
        level.append(lv)
    return BallFamily(balls)
