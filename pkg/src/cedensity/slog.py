"""Sign plus log-magnitude reals for derivative products that overflow floats."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# exp() overflows just above 709.78
OVERFLOW_LOG = 709.0


@dataclass(frozen=True)
class SignedLogReal:
    sign: int
    logmag: float = 0.0

    @classmethod
    def from_float(cls, x: float) -> SignedLogReal:
        if x == 0:
            return cls(0, -math.inf)
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @classmethod
    def one(cls) -> SignedLogReal:
        return cls(1, 0.0)

    def __mul__(self, other: SignedLogReal | float) -> SignedLogReal:
        if not isinstance(other, SignedLogReal):
            other = SignedLogReal.from_float(float(other))
        sign = self.sign * other.sign
        if sign == 0:
            return SignedLogReal(0, -math.inf)
        return SignedLogReal(sign, self.logmag + other.logmag)

    __rmul__ = __mul__

    def __truediv__(self, other: SignedLogReal | float) -> SignedLogReal:
        if not isinstance(other, SignedLogReal):
            other = SignedLogReal.from_float(float(other))
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero SignedLogReal")
        if self.sign == 0:
            return self
        return SignedLogReal(self.sign * other.sign, self.logmag - other.logmag)

    def reciprocal(self) -> SignedLogReal:
        return SignedLogReal.one() / self

    def __abs__(self) -> SignedLogReal:
        return SignedLogReal(abs(self.sign), self.logmag)

    def is_zero(self) -> bool:
        return self.sign == 0

    def to_float(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.logmag >= OVERFLOW_LOG:
            raise OverflowError(f"logmag {self.logmag} too large for a float")
        return self.sign * math.exp(self.logmag)

    def __float__(self) -> float:
        return self.to_float()


def logsumexp(logs) -> float:
    """Log of sum(exp(logs)), factoring out the maximum. Empty input gives -inf."""
    a = np.asarray(logs, dtype=float)
    if a.size == 0:
        return -math.inf
    m = float(np.max(a))
    if not math.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(a - m))))


def cumulative_logsumexp(logs) -> np.ndarray:
    """Running log-sum-exp; out[i] = log sum_{j<=i} exp(logs[j])."""
    a = np.asarray(logs, dtype=float)
    if a.size == 0:
        return a.copy()
    return np.logaddexp.accumulate(a)
