"""Closed-form access-probability models for coded K-repetition access.

A device spreads a (KQ, Q)-erasure-coded data unit over QK packet
replicas placed uniformly in a super frame of QR resource blocks shared
with N-1 interferers, and is recovered once at least Q of its packets
decode.  Two disjoint recovery events are modelled:

* first pass: at least Q of the device's blocks are collision-free;
* second pass: the device falls short on the first pass but reaches Q
  decoded packets after blocks it shares pairwise with first-pass
  recoverable devices are cleaned by interference cancellation.

Both probabilities have exact finite-sum expressions in binomial
coefficients.  This module evaluates them with three engines:

* ``exact``   - big-rational arithmetic over the common denominator
                C(QR, QK)^N; either direct nested sums over integer
                compositions or an accelerated evaluator that collapses
                the composition sums into polynomial convolutions keyed
                by the composition total;
* ``float``   - the same sums in signed log-domain floats with
                compensated accumulation and a cancellation-severity
                warning channel;
* ``approx``  - the large-R exponential limit, a function of the load
                gamma = N/R alone, evaluated in adaptive-precision
                arithmetic so alternating sums survive large QK.

The second-pass sum is indexed by the number C of distinct recoverable
partner devices, the tagged device's own collision-free count, and a
composition (k_1..k_C) giving each partner's collision-free count.
Every term depends on the composition only through its total and
through per-part factors, which is what the accelerated evaluator
exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from itertools import product

import mpmath

from .combinatorics import (
    SignedLog,
    binomial_int,
    log_binomial,
    signed_log_sum,
)
from .errors import ResourceBudgetError

ENGINE_EXACT = "exact"
ENGINE_FLOAT = "float"
ENGINE_APPROX = "approx"

DEFAULT_TERM_BUDGET = 50_000_000

# float-engine additions that lose more decimal digits than this get a
# degraded-precision warning attached to the result
CANCELLATION_WARN_DIGITS = 6.0


# ---------------------------------------------------------------------------
# shared alternating-sum prefactors


def alt_tail(t: int, q: int) -> int:
    """sum_{m=q}^{t} (-1)^(t-m) C(t, m); zero when t < q."""
    return sum((-1) ** (t - m) * binomial_int(t, m) for m in range(q, t + 1))


def _v_coeff(c: int, m: int, q: int) -> int:
    """sum_{cc=q-m}^{c} (-1)^(c-cc) C(c, cc) for 0 <= m < q."""
    lo = q - m
    if lo > c:
        return 0
    return sum((-1) ** (c - cc) * binomial_int(c, cc) for cc in range(lo, c + 1))


def _u_coeff(c: int, kn: int, q: int) -> int:
    """Folded alternating weight of the tagged device's own-count index.

    Collapses the sum over the tagged device's decoded-subset size m
    (0 <= m < q, m <= kn) and the partner-subset size cc
    (q - m <= cc <= c) into a single integer coefficient.
    """
    total = 0
    for m in range(0, min(kn, q - 1) + 1):
        v = _v_coeff(c, m, q)
        if v:
            total += (-1) ** (kn - m) * binomial_int(kn, m) * v
    return total


# ---------------------------------------------------------------------------
# result containers


@dataclass(frozen=True)
class ProbabilityValue:
    """A probability with provenance of the engine that produced it.

    ``value`` is a Fraction for the exact engine, a SignedLog for the
    float engine and a plain float for the approximation.
    """

    engine: str
    value: object
    warnings: tuple = ()

    def as_float(self) -> float:
        if isinstance(self.value, Fraction):
            return float(self.value)
        if isinstance(self.value, SignedLog):
            return self.value.to_float()
        return float(self.value)

    def as_fraction(self) -> Fraction:
        if not isinstance(self.value, Fraction):
            raise TypeError(f"engine {self.engine!r} result is not exact")
        return self.value

    def decimal_string(self, digits: int = 15) -> str:
        return format_probability(self.value, digits)


def format_probability(value, digits: int = 15) -> str:
    """Render a probability as a decimal string with ``digits`` significant digits."""
    if isinstance(value, SignedLog):
        value = value.to_float()
    if isinstance(value, Fraction):
        with localcontext() as ctx:
            ctx.prec = digits
            d = Decimal(value.numerator) / Decimal(value.denominator)
        return str(d)
    with localcontext() as ctx:
        ctx.prec = digits
        d = +Decimal(repr(float(value)))
    return str(d)


@dataclass(frozen=True)
class AccessProbability:
    """First-pass, second-pass and total access probability for one cell."""

    r: int
    n: int
    k: int
    q: int
    engine: str
    p_d1: ProbabilityValue
    p_d2: ProbabilityValue
    total: ProbabilityValue
    term_count: int
    metadata: dict = field(default_factory=dict)

    @property
    def gamma(self) -> float:
        return self.n / self.r

    # The two passes are combined additively; the second-pass model uses
    # an independence step, so at very light load the sum can exceed 1
    # by a sliver even in exact arithmetic.  Tolerate a small overshoot
    # and surface it as a warning instead of rejecting the result.
    _OVERSHOOT_LIMIT = 1e-4

    def __post_init__(self):
        t = self.total.as_float()
        if not (-1e-9 <= t <= 1.0 + self._OVERSHOOT_LIMIT):
            raise ValueError(f"total access probability {t} outside [0, 1]")
        if t > 1.0:
            total = self.total
            note = f"model total exceeds 1 by {t - 1.0:.3g} at this load"
            object.__setattr__(
                self, "total",
                ProbabilityValue(total.engine, total.value,
                                 total.warnings + (note,)))

    def to_json_dict(self) -> dict:
        return {
            "engine": self.engine,
            "R": self.r,
            "N": self.n,
            "K": self.k,
            "Q": self.q,
            "gamma": self.gamma,
            "p_d1": self.p_d1.decimal_string(),
            "p_d2": self.p_d2.decimal_string(),
            "total": self.total.decimal_string(),
            "term_count": self.term_count,
            "warnings": list(self.p_d1.warnings) + list(self.p_d2.warnings)
            + list(self.total.warnings),
            "metadata": dict(self.metadata),
        }


@dataclass(frozen=True)
class IndexTuple:
    """One fully expanded summand index of the second-pass sum.

    ``c`` partner devices of which a size-``c_hat`` subset is singled
    out; the tagged device owns ``k_n`` collision-free blocks with a
    size-``k_n_hat`` subset singled out; partner j owns ``ks[j]``
    collision-free blocks with a ``ks_hat[j]`` subset.  ``kappa`` and
    ``kappa_hat`` are the partner totals, ``g`` and ``g_hat`` the grand
    totals including the shared blocks.
    """

    c: int
    c_hat: int
    k_n: int
    k_n_hat: int
    ks: tuple
    ks_hat: tuple
    qk: int
    q: int

    def __post_init__(self):
        q, qk = self.q, self.qk
        if not (1 <= self.c_hat <= self.c <= qk):
            raise ValueError("partner counts out of range")
        if not (0 <= self.k_n_hat < q):
            raise ValueError("tagged subset index out of range")
        if self.k_n_hat + self.c_hat < q:
            raise ValueError("recovery threshold not met")
        if not (self.k_n_hat <= self.k_n <= qk - self.c):
            raise ValueError("tagged own-count out of range")
        if len(self.ks) != self.c or len(self.ks_hat) != self.c:
            raise ValueError("partner tuple length mismatch")
        for kj, kjh in zip(self.ks, self.ks_hat):
            if not (q <= kjh <= kj <= qk - 1):
                raise ValueError("partner count out of range")

    @property
    def kappa(self) -> int:
        return sum(self.ks)

    @property
    def kappa_hat(self) -> int:
        return sum(self.ks_hat)

    @property
    def g(self) -> int:
        return self.k_n + self.c + self.kappa

    @property
    def g_hat(self) -> int:
        return self.c_hat + self.kappa_hat + self.k_n_hat


def enumerate_index_tuples(qk: int, q: int):
    """Yield every valid IndexTuple for a (QK, Q) configuration.

    Exponential in QK; intended for reference evaluation and tests at
    QK <= 6.
    """
    part_pairs = [
        (kj, kjh) for kj in range(q, qk) for kjh in range(q, kj + 1)
    ]
    for c in range(1, qk + 1):
        for k_n in range(0, qk - c + 1):
            for k_n_hat in range(0, min(k_n, q - 1) + 1):
                for c_hat in range(max(1, q - k_n_hat), c + 1):
                    for combo in product(part_pairs, repeat=c):
                        ks = tuple(p[0] for p in combo)
                        ks_hat = tuple(p[1] for p in combo)
                        yield IndexTuple(
                            c=c, c_hat=c_hat, k_n=k_n, k_n_hat=k_n_hat,
                            ks=ks, ks_hat=ks_hat, qk=qk, q=q,
                        )


# ---------------------------------------------------------------------------
# first-pass probability


def _validate_cell(r: int, n: int, k: int, q: int):
    if r <= 0 or k <= 0 or q <= 0:
        raise ValueError("r, k, q must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    if k > r:
        raise ValueError(f"need k <= r to place replicas (k={k}, r={r})")


def p_d1(r: int, n: int, k: int, q: int, engine: str = ENGINE_EXACT) -> ProbabilityValue:
    """Probability that a tagged device is recovered on the first pass.

    Exact form: sum over t (the number of collision-free blocks among
    the device's QK placements) of the alternating tail weight times
    C(QK, t) times the probability that every interferer avoids a fixed
    set of t blocks, i.e. [C(QR-t, QK) / C(QR, QK)]^(N-1).
    """
    _validate_cell(r, n, k, q)
    qk, qr = q * k, q * r
    if engine == ENGINE_EXACT:
        numer = 0
        for t in range(q, qk + 1):
            numer += (
                alt_tail(t, q)
                * binomial_int(qk, t)
                * binomial_int(qr - t, qk) ** (n - 1)
            )
        return ProbabilityValue(
            ENGINE_EXACT, Fraction(numer, binomial_int(qr, qk) ** (n - 1))
        )
    if engine == ENGINE_FLOAT:
        # Term logs are seeded from exactly computed integer ratios, not
        # from lgamma: the avoidance ratio is raised to the (N-1)-th
        # power, so an absolute log error e becomes (N-1)e, and the
        # alternating sum amplifies whatever survives.  A correctly
        # rounded float of the exact ratio keeps e near 1 ulp.
        denom = binomial_int(qr, qk)
        terms = []
        for t in range(q, qk + 1):
            w = alt_tail(t, q)
            if w == 0:
                continue
            avoid = binomial_int(qr - t, qk)
            if n > 1 and avoid == 0:
                continue
            lg = math.log(abs(w) * binomial_int(qk, t))
            if n > 1:
                ratio = avoid / denom
                # ratio underflow: fall back to lgamma logs, the shape is
                # far outside float range anyway
                delta = (math.log(ratio) if ratio > 0.0
                         else log_binomial(qr - t, qk) - log_binomial(qr, qk))
                lg += delta * (n - 1)
            terms.append(SignedLog(1 if w > 0 else -1, lg))
        total = signed_log_sum(terms)
        warnings = ()
        if total.lost_digits > CANCELLATION_WARN_DIGITS:
            warnings = (
                f"cancellation lost about {total.lost_digits:.1f} decimal digits",
            )
        return ProbabilityValue(ENGINE_FLOAT, total, warnings)
    raise ValueError(f"unknown engine {engine!r}")


# ---------------------------------------------------------------------------
# second-pass probability, exact engines

# the per-(G, c) interferer-avoidance power C(QR-G, QK)^(N-c-1) dominates
# the cost and repeats heavily, so it is cached per evaluation


def estimate_p_d2_cost(qk: int, q: int, method: str) -> int:
    """Rough work-unit count for a second-pass evaluation."""
    if qk - 1 < q:
        return 0
    parts = qk - q  # composition part values per slot
    cost = 0
    if method == "naive":
        for c in range(1, qk + 1):
            cost += (qk - c + 1) * parts**c
            if cost > 10**18:
                break
    else:
        for c in range(1, qk + 1):
            deg = c * (qk - 1)
            # one polynomial power per distinct grand total G, each a
            # chain of c truncated convolutions
            g_values = (qk - c + 1) + c * (qk - 1 - q)
            cost += g_values * c * min(deg, parts * c) * parts
            if cost > 10**18:
                break
    return cost


def _p_d2_exact_naive(r, n, k, q, budget):
    qk, qr = q * k, q * r
    if qk - 1 < q:
        return Fraction(0), 0
    cost = estimate_p_d2_cost(qk, q, "naive")
    if cost > budget:
        raise ResourceBudgetError(
            f"direct second-pass sum needs ~{cost:.2e} work units "
            f"(budget {budget:.2e}); use the accelerated or approx engine",
            estimated=cost, allowed=budget,
        )
    pow_cache = {}

    def avoid_pow(g, c):
        key = (g, c)
        if key not in pow_cache:
            pow_cache[key] = binomial_int(qr - g, qk) ** (n - c - 1)
        return pow_cache[key]

    numer = 0
    term_count = 0
    for c in range(1, qk + 1):
        choose_partners = binomial_int(n - 1, c)
        if choose_partners == 0:
            continue
        for kn in range(0, qk - c + 1):
            u = _u_coeff(c, kn, q)
            if u == 0:
                continue
            outer = choose_partners * u * binomial_int(qk - c, kn)
            for comp in product(range(q, qk), repeat=c):
                kappa = sum(comp)
                g = kn + c + kappa
                if n - c - 1 > 0 and qr - g < qk:
                    continue
                # telescoping product over suffix sums = multinomial
                mult = 1
                suffix = kappa
                shared = 1
                weights = 1
                for kj in comp:
                    mult *= binomial_int(suffix, kj)
                    suffix -= kj
                    shared *= binomial_int(qr - g, qk - 1 - kj)
                    weights *= alt_tail(kj, q)
                rising = math.prod(range(kappa + 1, kappa + c + 1))
                term = (
                    outer
                    * weights
                    * mult
                    * rising
                    * binomial_int(qk + kappa, c + kappa)
                    * binomial_int(qr, qk + kappa)
                    * shared
                    * avoid_pow(g, c)
                )
                numer += term
                term_count += 1
    return Fraction(numer, binomial_int(qr, qk) ** n), term_count


def _p_d2_exact_dp(r, n, k, q, budget):
    """Accelerated second-pass sum.

    For fixed partner count c and grand total G the composition sum
    collapses to the degree-kappa coefficient of a univariate
    polynomial power: each part value t contributes the coefficient
    w(t) * C(QR-G, QK-1-t) * (QK-1)!/t!, and the telescoping
    suffix-binomial product equals kappa!/prod(t_j!), recovered by a
    final kappa!/(QK-1)!^c correction.  Coefficients stay integers
    throughout the convolution.
    """
    qk, qr = q * k, q * r
    if qk - 1 < q:
        return Fraction(0), 0
    cost = estimate_p_d2_cost(qk, q, "dp")
    if cost > budget:
        raise ResourceBudgetError(
            f"accelerated second-pass sum needs ~{cost:.2e} work units "
            f"(budget {budget:.2e}); use the approx engine",
            estimated=cost, allowed=budget,
        )
    scale = math.factorial(qk - 1)
    part_scale = {t: scale // math.factorial(t) for t in range(q, qk)}
    factorial = [math.factorial(i) for i in range(c_max_kappa(qk) + 1)]

    numer = 0
    term_count = 0
    for c in range(1, qk + 1):
        choose_partners = binomial_int(n - 1, c)
        if choose_partners == 0:
            continue
        kappa_lo, kappa_hi = c * q, c * (qk - 1)
        g_lo = c + kappa_lo
        g_hi = (qk - c) + c + kappa_hi
        for g in range(g_lo, g_hi + 1):
            if n - c - 1 > 0 and qr - g < qk:
                break
            # polynomial over part values for this (c, G)
            coeffs = {
                t: alt_tail(t, q) * binomial_int(qr - g, qk - 1 - t) * part_scale[t]
                for t in range(q, qk)
            }
            kmax = min(kappa_hi, g - c)
            if kmax < kappa_lo:
                continue
            powc = _poly_power(coeffs, c, kmax, q)
            avoid = binomial_int(qr - g, qk) ** (n - c - 1)
            for kappa in range(kappa_lo, kmax + 1):
                kn = g - c - kappa
                if kn < 0 or kn > qk - c:
                    continue
                coeff = powc.get(kappa, 0)
                if coeff == 0:
                    continue
                u = _u_coeff(c, kn, q)
                if u == 0:
                    continue
                comp_sum = Fraction(coeff * factorial[kappa], scale**c)
                assert comp_sum.denominator == 1
                rising = math.prod(range(kappa + 1, kappa + c + 1))
                term = (
                    choose_partners
                    * u
                    * binomial_int(qk - c, kn)
                    * int(comp_sum)
                    * rising
                    * binomial_int(qk + kappa, c + kappa)
                    * binomial_int(qr, qk + kappa)
                    * avoid
                )
                numer += term
                term_count += 1
    return Fraction(numer, binomial_int(qr, qk) ** n), term_count


def c_max_kappa(qk: int) -> int:
    return qk * (qk - 1)


def _poly_power(coeffs: dict, c: int, max_degree: int, min_part: int) -> dict:
    """Raise a sparse integer polynomial to the c-th power, truncated."""
    result = {0: 1}
    for step in range(c):
        # remaining steps still to multiply set a floor on useful degrees
        room = max_degree - (c - step - 1) * min_part
        nxt = {}
        for d1, v1 in result.items():
            for d2, v2 in coeffs.items():
                d = d1 + d2
                if d > room:
                    continue
                nxt[d] = nxt.get(d, 0) + v1 * v2
        result = nxt
    return result


# ---------------------------------------------------------------------------
# second-pass probability, float engine


def _p_d2_float_naive(r, n, k, q, budget):
    """Log-domain mirror of the direct sum.

    Every term magnitude is seeded from the exactly computed integer
    term over the common denominator (one correctly rounded float
    division each); only the alternating accumulation runs in the log
    domain.  Assembling term logs from lgamma values instead would put
    an absolute error of order 1e-10 into each exponent, which the
    (N-c-1)-th power and the cancellation between terms blow up past
    the engine-agreement bar at light load.
    """
    qk, qr = q * k, q * r
    if qk - 1 < q:
        return SignedLog.zero(), 0
    cost = estimate_p_d2_cost(qk, q, "naive")
    if cost > budget:
        raise ResourceBudgetError(
            f"direct second-pass sum needs ~{cost:.2e} work units "
            f"(budget {budget:.2e}); use the accelerated or approx engine",
            estimated=cost, allowed=budget,
        )
    denom = binomial_int(qr, qk) ** n
    pow_cache = {}

    def avoid_pow(g, c):
        key = (g, c)
        if key not in pow_cache:
            pow_cache[key] = binomial_int(qr - g, qk) ** (n - c - 1)
        return pow_cache[key]

    terms = []
    term_count = 0
    for c in range(1, qk + 1):
        choose_partners = binomial_int(n - 1, c)
        if choose_partners == 0:
            continue
        for kn in range(0, qk - c + 1):
            u = _u_coeff(c, kn, q)
            if u == 0:
                continue
            outer = choose_partners * u * binomial_int(qk - c, kn)
            for comp in product(range(q, qk), repeat=c):
                kappa = sum(comp)
                g = kn + c + kappa
                if n - c - 1 > 0 and qr - g < qk:
                    continue
                mult = 1
                suffix = kappa
                shared = 1
                weights = 1
                for kj in comp:
                    mult *= binomial_int(suffix, kj)
                    suffix -= kj
                    shared *= binomial_int(qr - g, qk - 1 - kj)
                    weights *= alt_tail(kj, q)
                rising = math.prod(range(kappa + 1, kappa + c + 1))
                term = (
                    outer
                    * weights
                    * mult
                    * rising
                    * binomial_int(qk + kappa, c + kappa)
                    * binomial_int(qr, qk + kappa)
                    * shared
                    * avoid_pow(g, c)
                )
                if term == 0:
                    continue
                terms.append(SignedLog.from_float(term / denom))
                term_count += 1
    return signed_log_sum(terms), term_count


def _p_d2_float_dp(r, n, k, q, budget):
    """Float mirror of the accelerated engine: scaled float64 convolutions."""
    import numpy as np

    qk, qr = q * k, q * r
    if qk - 1 < q:
        return SignedLog.zero(), 0
    cost = estimate_p_d2_cost(qk, q, "dp")
    if cost > budget:
        raise ResourceBudgetError(
            f"accelerated second-pass sum needs ~{cost:.2e} work units "
            f"(budget {budget:.2e}); use the approx engine",
            estimated=cost, allowed=budget,
        )
    log_denom = log_binomial(qr, qk) * n
    lgamma = math.lgamma
    terms = []
    term_count = 0
    for c in range(1, qk + 1):
        if binomial_int(n - 1, c) == 0:
            continue
        log_choose = log_binomial(n - 1, c)
        kappa_lo, kappa_hi = c * q, c * (qk - 1)
        for g in range(c + kappa_lo, (qk - c) + c + kappa_hi + 1):
            if n - c - 1 > 0 and qr - g < qk:
                break
            kmax = min(kappa_hi, g - c)
            if kmax < kappa_lo:
                continue
            # scaled coefficients: value = coeff * exp(offset)
            logs = {}
            for t in range(q, qk):
                w = alt_tail(t, q)
                lb = log_binomial(qr - g, qk - 1 - t)
                if lb == -math.inf:
                    continue
                logs[t] = (
                    (1 if w > 0 else -1),
                    math.log(abs(w)) + lb - lgamma(t + 1),
                )
            if not logs:
                continue
            offset = max(l for _, l in logs.values())
            base = np.zeros(qk, dtype=float)
            for t, (s, l) in logs.items():
                base[t] = s * math.exp(l - offset)
            poly = np.zeros(1, dtype=float)
            poly[0] = 1.0
            poly_off = 0.0
            for _ in range(c):
                poly = np.convolve(poly, base)[: kmax + 1]
                poly_off += offset
                peak = np.max(np.abs(poly))
                if peak > 0:
                    poly /= peak
                    poly_off += math.log(peak)
            avoid_lb = log_binomial(qr - g, qk)
            if n - c - 1 > 0 and avoid_lb == -math.inf:
                continue
            avoid = avoid_lb * (n - c - 1) if n - c - 1 > 0 else 0.0
            for kappa in range(kappa_lo, kmax + 1):
                kn = g - c - kappa
                if kn < 0 or kn > qk - c or kappa >= len(poly):
                    continue
                coeff = poly[kappa]
                if coeff == 0.0:
                    continue
                u = _u_coeff(c, kn, q)
                if u == 0:
                    continue
                sign = (1 if coeff > 0 else -1) * (1 if u > 0 else -1)
                lg = (
                    math.log(abs(coeff)) + poly_off
                    + lgamma(kappa + 1)
                    + log_choose
                    + math.log(abs(u))
                    + log_binomial(qk - c, kn)
                    + lgamma(kappa + c + 1) - lgamma(kappa + 1)
                    + log_binomial(qk + kappa, c + kappa)
                    + log_binomial(qr, qk + kappa)
                    + avoid
                    - log_denom
                )
                if lg == -math.inf or math.isnan(lg):
                    continue
                terms.append(SignedLog(sign, lg))
                term_count += 1
    return signed_log_sum(terms), term_count


# naive nested sums are the reference implementation; the accelerated
# evaluator takes over beyond this size
_NAIVE_QK_LIMIT = 6


def p_d2(
    r: int,
    n: int,
    k: int,
    q: int,
    engine: str = ENGINE_EXACT,
    method: str = "auto",
    budget: int = DEFAULT_TERM_BUDGET,
) -> ProbabilityValue:
    """Probability of recovery on the second pass but not the first.

    ``method`` selects the exact/float evaluator: "naive" for the
    nested composition sums, "dp" for the convolution-accelerated form,
    "auto" to pick by size.  Raises ResourceBudgetError when the
    estimated work exceeds ``budget``.
    """
    _validate_cell(r, n, k, q)
    qk = q * k
    if method == "auto":
        method = "naive" if qk <= _NAIVE_QK_LIMIT else "dp"
    if method not in ("naive", "dp"):
        raise ValueError(f"unknown method {method!r}")
    if engine == ENGINE_EXACT:
        fn = _p_d2_exact_naive if method == "naive" else _p_d2_exact_dp
        value, _count = fn(r, n, k, q, budget)
        return ProbabilityValue(ENGINE_EXACT, value)
    if engine == ENGINE_FLOAT:
        fn = _p_d2_float_naive if method == "naive" else _p_d2_float_dp
        value, _count = fn(r, n, k, q, budget)
        warnings = ()
        if value.lost_digits > CANCELLATION_WARN_DIGITS:
            warnings = (
                f"cancellation lost about {value.lost_digits:.1f} decimal digits",
            )
        return ProbabilityValue(ENGINE_FLOAT, value, warnings)
    raise ValueError(f"unknown engine {engine!r}")


def p_d2_term_count(r, n, k, q, method="auto", budget=DEFAULT_TERM_BUDGET) -> int:
    """Number of summands folded by the chosen evaluator (exact engine)."""
    qk = q * k
    if method == "auto":
        method = "naive" if qk <= _NAIVE_QK_LIMIT else "dp"
    fn = _p_d2_exact_naive if method == "naive" else _p_d2_exact_dp
    _, count = fn(r, n, k, q, budget)
    return count


# ---------------------------------------------------------------------------
# combined evaluation


def access_probability(
    r: int,
    n: int,
    k: int,
    q: int,
    engine: str = ENGINE_EXACT,
    method: str = "auto",
    budget: int = DEFAULT_TERM_BUDGET,
    metadata: dict | None = None,
) -> AccessProbability:
    """First-pass + second-pass access probability at one operating point."""
    _validate_cell(r, n, k, q)
    if engine == ENGINE_APPROX:
        return approx_access_probability(n / r, k, q, metadata=metadata)
    v1 = p_d1(r, n, k, q, engine)
    qk = q * k
    m = method if method != "auto" else ("naive" if qk <= _NAIVE_QK_LIMIT else "dp")
    if engine == ENGINE_EXACT:
        fn = _p_d2_exact_naive if m == "naive" else _p_d2_exact_dp
        value2, count = fn(r, n, k, q, budget)
        v2 = ProbabilityValue(ENGINE_EXACT, value2)
        total = ProbabilityValue(ENGINE_EXACT, v1.value + value2)
    else:
        fn = _p_d2_float_naive if m == "naive" else _p_d2_float_dp
        value2, count = fn(r, n, k, q, budget)
        warn2 = ()
        if value2.lost_digits > CANCELLATION_WARN_DIGITS:
            warn2 = (
                f"cancellation lost about {value2.lost_digits:.1f} decimal digits",
            )
        v2 = ProbabilityValue(ENGINE_FLOAT, value2, warn2)
        total = ProbabilityValue(ENGINE_FLOAT, v1.value + value2)
    count += (qk - q + 1)  # first-pass summands
    return AccessProbability(
        r=r, n=n, k=k, q=q, engine=engine,
        p_d1=v1, p_d2=v2, total=total,
        term_count=count, metadata=dict(metadata or {}),
    )


# ---------------------------------------------------------------------------
# exponential-limit approximation (function of gamma alone)


def _approx_terms_p_d1(gamma, k, q, mp):
    qk = q * k
    y = mp.e ** (-k * gamma)
    total = mp.mpf(0)
    for t in range(q, qk + 1):
        total += alt_tail(t, q) * binomial_int(qk, t) * y**t
    return total


def _approx_terms_p_d2(gamma, k, q, mp):
    """Closed evaluation of the second-pass exponential limit.

    In the limit every composition part t contributes a factor
    w(t) * (t+1) * C(QK, t+1) * y^t with y = exp(-K*gamma), and the
    composition sum over C parts collapses to the C-th power of the
    single-part generating value g(y).  The remaining sums over the
    partner count and the tagged device's own count are short.
    """
    qk = q * k
    if qk - 1 < q:
        return mp.mpf(0)
    y = mp.e ** (-k * gamma)
    gval = mp.mpf(0)
    for t in range(q, qk):
        gval += alt_tail(t, q) * (t + 1) * binomial_int(qk, t + 1) * y**t
    total = mp.mpf(0)
    base = mp.mpf(gamma) / q
    for c in range(1, qk + 1):
        falling = math.prod(range(qk - c + 1, qk + 1))
        a = mp.mpf(0)
        for kn in range(0, qk - c + 1):
            u = _u_coeff(c, kn, q)
            if u:
                a += u * binomial_int(qk - c, kn) * y**kn
        total += (
            base**c / mp.factorial(c) * falling * (y * gval) ** c * a
        )
    return total


def _adaptive_mp(fn, gamma, k, q, start_dps=40):
    """Evaluate fn at increasing precision until two runs agree to 16 digits."""
    dps = start_dps
    prev = None
    while dps <= 4000:
        with mpmath.workdps(dps):
            val = fn(gamma, k, q, mpmath.mp)
            out = float(val)
        if prev is not None:
            if out == prev or abs(out - prev) <= 1e-16 * max(abs(out), abs(prev), 1e-300):
                return out
        prev = out
        dps *= 2
    return prev


def approx_p_d1(gamma: float, k: int, q: int) -> float:
    """Exponential-limit first-pass probability; depends on gamma = N/R only."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if k <= 0 or q <= 0:
        raise ValueError("k and q must be positive")
    return _adaptive_mp(_approx_terms_p_d1, gamma, k, q)


def approx_p_d2(gamma: float, k: int, q: int) -> float:
    """Exponential-limit second-pass probability; depends on gamma = N/R only."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if k <= 0 or q <= 0:
        raise ValueError("k and q must be positive")
    return _adaptive_mp(_approx_terms_p_d2, gamma, k, q)


def _approx_p_d2_nested(gamma: float, k: int, q: int) -> float:
    """Reference nested-sum form of the exponential limit (small QK only)."""
    qk = q * k
    if qk - 1 < q:
        return 0.0
    with mpmath.workdps(60):
        mp = mpmath.mp
        y = mp.e ** (-k * gamma)
        total = mp.mpf(0)
        for c in range(1, qk + 1):
            for kn in range(0, qk - c + 1):
                u = _u_coeff(c, kn, q)
                if u == 0:
                    continue
                outer = u * binomial_int(qk - c, kn)
                for comp in product(range(q, qk), repeat=c):
                    kappa = sum(comp)
                    g = kn + c + kappa
                    prod_term = 1
                    suffix = kappa
                    for j, kj in enumerate(comp):
                        prod_term *= (
                            alt_tail(kj, q)
                            * (c - j + kappa)
                            * binomial_int(suffix, kj)
                            * math.prod(range(qk - kj, qk + 1))
                        )
                        suffix -= kj
                    term = (
                        (mp.mpf(gamma) / q) ** c
                        / mp.factorial(c)
                        * mp.e ** (-k * g * gamma)
                        * outer
                        * binomial_int(qk + kappa, c + kappa)
                        * mp.mpf(math.factorial(qk))
                        / math.factorial(qk + kappa)
                        * prod_term
                    )
                    total += term
        return float(total)


def approx_access_probability(
    gamma: float, k: int, q: int, metadata: dict | None = None
) -> AccessProbability:
    """Exponential-limit total access probability, packaged like the exact one.

    The nominal (r, n) stored on the result are a minimal realization
    of gamma for bookkeeping; the probabilities depend on gamma alone.
    """
    v1 = approx_p_d1(gamma, k, q)
    v2 = approx_p_d2(gamma, k, q)
    qk = q * k
    meta = dict(metadata or {})
    meta.setdefault("gamma", gamma)
    # representative integers for the record; not used in the math
    frac = Fraction(gamma).limit_denominator(10**9)
    n, r = frac.numerator, max(1, frac.denominator)
    return AccessProbability(
        r=r, n=n, k=k, q=q, engine=ENGINE_APPROX,
        p_d1=ProbabilityValue(ENGINE_APPROX, v1),
        p_d2=ProbabilityValue(ENGINE_APPROX, v2),
        total=ProbabilityValue(ENGINE_APPROX, v1 + v2),
        term_count=(qk - q + 1) + qk * (qk + 1),
        metadata=meta,
    )


# ---------------------------------------------------------------------------
# delay and helpers


def message_delay(m: int, p) -> float:
    """Expected frames to deliver an m-packet message at per-unit success p.

    The message is sent as m/Q data units of Q frames each; every unit
    is retransmitted until success, so the expected total is m / p
    frames.  p may be a float, ProbabilityValue or AccessProbability.
    Returns inf when p is 0.
    """
    if m <= 0:
        raise ValueError("message size must be positive")
    if isinstance(p, AccessProbability):
        p = p.total
    if isinstance(p, ProbabilityValue):
        p = p.as_float()
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"success probability {p} outside [0, 1]")
    if p == 0.0:
        return math.inf
    return m / p


def resolve_rb_count(n: int, gamma: float, mode: str = "nearest") -> tuple:
    """Blocks per frame realizing load gamma = N/R, with rounding metadata.

    mode "nearest" rounds N/gamma to the closest integer; mode "floor"
    truncates, which matches the operating points the reference tables were
    generated at (the realized load is then slightly above the requested one).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    exact = n / gamma
    if mode == "nearest":
        r = max(1, round(exact))
    elif mode == "floor":
        r = max(1, math.floor(exact + 1e-9))
    else:
        raise ValueError(f"unknown rounding mode {mode!r}")
    meta = {"requested_gamma": gamma, "realized_gamma": n / r, "r": r}
    if abs(exact - r) > 1e-9:
        meta["rounded_from"] = exact
        meta["rounding_mode"] = mode
    return r, meta
