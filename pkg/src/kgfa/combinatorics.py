"""Exact and log-domain combinatorial primitives.

Three layers live here:

* exact binomial coefficients under the out-of-range-is-zero convention,
  returned as ``Fraction`` so downstream probability sums stay exact;
* ``SignedLog``, a signed log-magnitude real for fast evaluation of
  products and alternating sums of huge binomial terms, with a
  cancellation-severity estimate attached to additions;
* a tiny finite probability space and both sides of the
  exactly-these-events identity

      sum over event subsets pi of size m of
          P(intersection of pi minus union of the complement)
    = sum_{k=m..S} (-1)^(k-m) C(k,m) sum_{|G|=k} P(intersection of G)

  which the analytical access-probability sums rely on.  The left side
  is evaluated by direct outcome enumeration, the right side by the
  alternating binomial sum, so the two functions cross-validate each
  other on arbitrary spaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

BigRational = Fraction

_LN10 = math.log(10.0)


def binomial_int(n: int, k: int) -> int:
    """C(n, k) as an integer, 0 whenever k < 0 or k > n or n < 0."""
    if k < 0 or n < 0 or k > n:
        return 0
    return math.comb(n, k)


def binomial(n: int, k: int) -> Fraction:
    """C(n, k) as an exact rational, 0 outside the triangle.

    ::

        binomial(6, 2)   -> Fraction(15, 1)
        binomial(4, 7)   -> Fraction(0, 1)
        binomial(5, -1)  -> Fraction(0, 1)
    """
    return Fraction(binomial_int(n, k))


def log_binomial(n: int, k: int) -> float:
    """ln C(n, k) via lgamma; -inf outside the triangle."""
    if k < 0 or n < 0 or k > n:
        return -math.inf
    if k == 0 or k == n:
        return 0.0
    return (
        math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    )


class SignedLog:
    """A real number carried as (sign, ln|x|).

    sign is -1, 0 or +1; ``logmag`` is ln|x| (ignored when sign is 0).
    Multiplication and division are exact in this representation up to
    float rounding of the logs.  Addition goes through the linear
    domain relative to the larger magnitude; when two nearly equal
    magnitudes of opposite sign meet, the result records how many
    decimal digits were lost in ``lost_digits``.  The counter
    propagates through chained arithmetic as a running maximum, so a
    final value knows the worst cancellation anywhere in its history.
    """

    __slots__ = ("sign", "logmag", "lost_digits")

    def __init__(self, sign: int, logmag: float, lost_digits: float = 0.0):
        if sign == 0:
            logmag = -math.inf
        self.sign = sign
        self.logmag = logmag
        self.lost_digits = lost_digits

    @classmethod
    def zero(cls) -> "SignedLog":
        return cls(0, -math.inf)

    @classmethod
    def one(cls) -> "SignedLog":
        return cls(1, 0.0)

    @classmethod
    def from_float(cls, x: float) -> "SignedLog":
        if x == 0.0:
            return cls.zero()
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @classmethod
    def from_int(cls, n: int) -> "SignedLog":
        if n == 0:
            return cls.zero()
        # math.log accepts arbitrary-precision ints losslessly enough
        return cls(1 if n > 0 else -1, math.log(abs(n)))

    @classmethod
    def from_fraction(cls, q: Fraction) -> "SignedLog":
        if q == 0:
            return cls.zero()
        sign = 1 if q > 0 else -1
        return cls(sign, math.log(abs(q.numerator)) - math.log(q.denominator))

    def __mul__(self, other: "SignedLog") -> "SignedLog":
        if self.sign == 0 or other.sign == 0:
            return SignedLog(0, -math.inf, max(self.lost_digits, other.lost_digits))
        return SignedLog(
            self.sign * other.sign,
            self.logmag + other.logmag,
            max(self.lost_digits, other.lost_digits),
        )

    def __truediv__(self, other: "SignedLog") -> "SignedLog":
        if other.sign == 0:
            raise ZeroDivisionError("SignedLog division by zero")
        if self.sign == 0:
            return SignedLog(0, -math.inf, max(self.lost_digits, other.lost_digits))
        return SignedLog(
            self.sign * other.sign,
            self.logmag - other.logmag,
            max(self.lost_digits, other.lost_digits),
        )

    def __neg__(self) -> "SignedLog":
        return SignedLog(-self.sign, self.logmag, self.lost_digits)

    def __add__(self, other: "SignedLog") -> "SignedLog":
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        hi, lo = (self, other) if self.logmag >= other.logmag else (other, self)
        # r in (0, 1]; exact cancellation gives zero
        r = math.exp(lo.logmag - hi.logmag)
        combined = 1.0 + r if hi.sign == lo.sign else 1.0 - r
        carried = max(self.lost_digits, other.lost_digits)
        if combined == 0.0:
            return SignedLog(0, -math.inf, carried)
        lost = max(0.0, -math.log(abs(combined)) / _LN10)
        return SignedLog(
            hi.sign if combined > 0 else -hi.sign,
            hi.logmag + math.log(abs(combined)),
            max(carried, lost),
        )

    def __sub__(self, other: "SignedLog") -> "SignedLog":
        return self + (-other)

    def pow_int(self, e: int) -> "SignedLog":
        if e == 0:
            return SignedLog(1, 0.0, self.lost_digits)
        if self.sign == 0:
            return SignedLog(0, -math.inf, self.lost_digits)
        sign = 1 if (self.sign > 0 or e % 2 == 0) else -1
        return SignedLog(sign, self.logmag * e, self.lost_digits)

    def to_float(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.logmag)

    def __repr__(self) -> str:
        return f"SignedLog(sign={self.sign}, logmag={self.logmag!r})"


def signed_log_sum(terms) -> SignedLog:
    """Sum an iterable of SignedLog terms with compensated accumulation.

    All terms are brought into the linear domain relative to the
    largest magnitude and added with Neumaier compensation, which keeps
    the result as accurate as float64 allows for alternating series.
    The returned value's ``lost_digits`` reflects the cancellation
    between the largest term and the final sum.
    """
    terms = [t for t in terms if t.sign != 0 and t.logmag != -math.inf]
    if not terms:
        return SignedLog.zero()
    peak = max(t.logmag for t in terms)
    carried = max(t.lost_digits for t in terms)
    total = 0.0
    comp = 0.0
    for t in terms:
        x = t.sign * math.exp(t.logmag - peak)
        s = total + x
        if abs(total) >= abs(x):
            comp += (total - s) + x
        else:
            comp += (x - s) + total
        total = s
    total += comp
    if total == 0.0:
        return SignedLog(0, -math.inf, carried)
    lost = max(0.0, -math.log(abs(total)) / _LN10)
    return SignedLog(
        1 if total > 0 else -1,
        peak + math.log(abs(total)),
        max(carried, lost),
    )


@dataclass(frozen=True)
class FiniteEventSpace:
    """A finite outcome set with probabilities and a list of events.

    ``probabilities[i]`` is the probability of outcome i; events are
    sets of outcome indices.  Probabilities must be non-negative and
    sum to 1 within 1e-12.
    """

    probabilities: tuple = field(default_factory=tuple)
    events: tuple = field(default_factory=tuple)

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probabilities)
        events = tuple(frozenset(e) for e in self.events)
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "events", events)
        if any(p < 0 for p in probs):
            raise ValueError("negative outcome probability")
        if probs and abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError("outcome probabilities must sum to 1")
        n = len(probs)
        for e in events:
            if any(not (0 <= i < n) for i in e):
                raise ValueError("event references unknown outcome")

    @property
    def event_count(self) -> int:
        return len(self.events)

    def event_probability(self, indices) -> float:
        """P(intersection of the events named by ``indices``)."""
        sel = [self.events[i] for i in indices]
        if not sel:
            return 1.0
        inter = frozenset.intersection(*sel)
        return math.fsum(self.probabilities[i] for i in inter)


def set_difference_probability_lhs(space: FiniteEventSpace, count: int) -> float:
    """Probability that exactly the events of some size-``count`` subset occur.

    Direct enumeration: an outcome contributes to subset pi when it
    lies in every event of pi and in none of the others; the subsets'
    contributions are disjoint and are summed.
    """
    s = space.event_count
    if not (1 <= count <= s):
        raise ValueError(f"count must be in 1..{s}, got {count}")
    total = 0.0
    for outcome, p in enumerate(space.probabilities):
        member = sum(1 for e in space.events if outcome in e)
        if member == count:
            total += p
    return total


def set_difference_probability_rhs(space: FiniteEventSpace, count: int) -> float:
    """Alternating-sum form of :func:`set_difference_probability_lhs`.

    sum_{k=count..S} (-1)^(k-count) C(k,count) sum_{|G|=k} P(inter G).
    """
    from itertools import combinations

    s = space.event_count
    if not (1 <= count <= s):
        raise ValueError(f"count must be in 1..{s}, got {count}")
    total = 0.0
    for k in range(count, s + 1):
        coeff = (-1) ** (k - count) * binomial_int(k, count)
        layer = 0.0
        for group in combinations(range(s), k):
            layer += space.event_probability(group)
        total += coeff * layer
    return total
