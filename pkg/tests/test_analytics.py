"""Closed-form evaluators: frozen reference values, engine agreement,
oracle checks, and the small helpers around them."""

import math
from fractions import Fraction

import pytest

from oracles import p_d1_enumeration
from kgfa import (
    AccessProbability,
    ProbabilityValue,
    ResourceBudgetError,
    access_probability,
    approx_access_probability,
    approx_p_d1,
    approx_p_d2,
    message_delay,
    p_d1,
    p_d2,
    resolve_rb_count,
)
from kgfa.analytics import (
    _approx_p_d2_nested,
    alt_tail,
    estimate_p_d2_cost,
    p_d2_term_count,
)

# Values computed once with the exact rational engine and frozen; any
# regression in the evaluators, the decimal rendering, or the summation
# order shows up as a digit change here.
FROZEN_EXACT = {
    (142, 100, 2, 2): ("0.253861680120990", "0.0903359708473180",
                       "0.344197650968308"),
    (50, 25, 3, 2): ("0.410257964343562", "0.248746410604204",
                     "0.659004374947766"),
    (83, 25, 2, 3): ("0.757925352527370", "0.208705637434758",
                     "0.966630989962128"),
    (250, 25, 2, 2): ("0.981684310370474", "0.0182831298085924",
                      "0.999967440179067"),
}

FROZEN_APPROX_TOTAL = {
    (0.7, 2, 2): "0.346932040200308",
    (0.3, 3, 2): "0.978629348827890",
    (0.5, 2, 3): "0.588233813494157",
}


class TestFrozenValues:
    @pytest.mark.parametrize("cell,expected", sorted(FROZEN_EXACT.items()))
    def test_exact_engine(self, cell, expected):
        r, n, k, q = cell
        ap = access_probability(r, n, k, q)
        assert ap.p_d1.decimal_string() == expected[0]
        assert ap.p_d2.decimal_string() == expected[1]
        assert ap.total.decimal_string() == expected[2]

    @pytest.mark.parametrize("point,expected",
                             sorted(FROZEN_APPROX_TOTAL.items()))
    def test_approx_engine(self, point, expected):
        gamma, k, q = point
        ap = approx_access_probability(gamma, k, q)
        assert ap.total.decimal_string() == expected


class TestFirstPassAgainstEnumeration:
    # complete enumeration over all placements is exponential in N, so
    # keep the grid tiny; the acceptance suite runs the wider version
    @pytest.mark.parametrize("r,n,k,q", [
        (3, 2, 1, 1), (3, 2, 2, 1), (3, 3, 1, 1),
        (4, 2, 1, 2), (2, 2, 1, 2), (4, 3, 2, 1),
    ])
    def test_exact_match(self, r, n, k, q):
        expected = p_d1_enumeration(r, n, k, q)
        assert p_d1(r, n, k, q).as_fraction() == expected

    def test_single_device_always_succeeds(self):
        assert p_d1(5, 1, 2, 2).as_fraction() == 1


class TestEngineAgreement:
    # the last two cells are the worst conditioned: light load makes the
    # alternating second-pass sum cancel about five digits
    CELLS = [(142, 100, 2, 2), (50, 25, 3, 2), (83, 25, 2, 3),
             (1000, 100, 3, 2), (2500, 250, 3, 2)]

    @pytest.mark.parametrize("cell", CELLS)
    def test_float_tracks_exact_to_nine_digits(self, cell):
        r, n, k, q = cell
        exact = access_probability(r, n, k, q, engine="exact")
        fl = access_probability(r, n, k, q, engine="float")
        for attr in ("p_d1", "p_d2", "total"):
            a = getattr(exact, attr).as_float()
            b = getattr(fl, attr).as_float()
            assert abs(a - b) <= 5e-9 * abs(a), (cell, attr)

    @pytest.mark.parametrize("r,n,k,q", [
        (5, 3, 2, 2), (7, 4, 3, 2), (4, 3, 2, 3), (6, 5, 2, 1),
    ])
    def test_dp_equals_naive_exactly(self, r, n, k, q):
        naive = p_d2(r, n, k, q, method="naive").as_fraction()
        dp = p_d2(r, n, k, q, method="dp").as_fraction()
        assert naive == dp

    def test_method_name_checked(self):
        with pytest.raises(ValueError):
            p_d2(5, 3, 2, 2, method="magic")
        with pytest.raises(ValueError):
            p_d2(5, 3, 2, 2, engine="quantum")


class TestApproximation:
    @pytest.mark.parametrize("gamma,k,q", [(0.7, 2, 2), (0.3, 3, 2),
                                           (0.5, 2, 3)])
    def test_folded_form_equals_nested_reference(self, gamma, k, q):
        fast = approx_p_d2(gamma, k, q)
        slow = _approx_p_d2_nested(gamma, k, q)
        assert abs(fast - slow) <= 1e-12 * max(abs(slow), 1e-30)

    def test_vanishing_load_saturates(self):
        ap = approx_access_probability(1e-6, 2, 2)
        assert ap.total.as_float() >= 1.0 - 1e-4

    def test_heavy_load_collapses(self):
        assert approx_p_d1(50.0, 2, 2) < 1e-12

    def test_parameter_checks(self):
        with pytest.raises(ValueError):
            approx_p_d1(-0.1, 2, 2)
        with pytest.raises(ValueError):
            approx_p_d2(0.5, 0, 2)

    def test_gamma_recorded_not_mangled(self):
        ap = approx_access_probability(1e-6, 2, 2)
        assert ap.metadata["gamma"] == 1e-6
        assert math.isclose(ap.gamma, 1e-6, rel_tol=1e-6)


class TestDegenerateCells:
    @pytest.mark.parametrize("r,k,q", [(3, 1, 1), (5, 2, 2), (4, 3, 2)])
    def test_lone_device_is_certain(self, r, k, q):
        ap = access_probability(r, 1, k, q)
        assert ap.p_d1.as_fraction() == 1
        assert ap.p_d2.as_fraction() == 0
        assert ap.total.as_fraction() == 1

    def test_bad_cell_parameters(self):
        with pytest.raises(ValueError):
            access_probability(0, 5, 2, 2)
        with pytest.raises(ValueError):
            access_probability(2, 5, 3, 2)  # K > R


class TestBudget:
    def test_term_count_is_positive_and_reported(self):
        ap = access_probability(50, 25, 3, 2)
        assert ap.term_count == p_d2_term_count(50, 25, 3, 2) + (3 * 2 - 2 + 1)

    def test_estimate_grows_with_qk(self):
        assert estimate_p_d2_cost(8, 2, "dp") < estimate_p_d2_cost(12, 2, "dp")

    def test_refusal_before_work(self):
        with pytest.raises(ResourceBudgetError) as err:
            p_d2(50, 25, 3, 2, budget=10)
        assert err.value.estimated > err.value.allowed == 10

    def test_access_probability_propagates_refusal(self):
        with pytest.raises(ResourceBudgetError):
            access_probability(50, 25, 3, 2, budget=10)


class TestOvershootHandling:
    def test_light_load_overshoot_warns(self):
        # at this load the independence step pushes the sum a sliver
        # over certainty; that is tolerated and flagged, not rejected
        ap = access_probability(1000, 100, 3, 2)
        t = ap.total.as_float()
        assert 1.0 < t <= 1.0 + 1e-4
        assert any("exceeds 1" in w for w in ap.total.warnings)
        assert any("exceeds 1" in w for w in ap.to_json_dict()["warnings"])

    def test_gross_violation_still_rejected(self):
        with pytest.raises(ValueError):
            AccessProbability(
                r=1, n=1, k=1, q=1, engine="approx",
                p_d1=ProbabilityValue("approx", 0.9),
                p_d2=ProbabilityValue("approx", 0.9),
                total=ProbabilityValue("approx", 1.8),
                term_count=1,
            )


class TestResolveRbCount:
    def test_nearest(self):
        r, meta = resolve_rb_count(100, 0.7)
        assert r == 143
        assert meta["rounded_from"] == pytest.approx(142.857142857)
        assert meta["realized_gamma"] == pytest.approx(100 / 143)

    def test_floor(self):
        r, meta = resolve_rb_count(100, 0.7, "floor")
        assert r == 142
        assert meta["rounding_mode"] == "floor"

    def test_exact_load_has_no_rounding_note(self):
        r, meta = resolve_rb_count(100, 0.5)
        assert r == 200
        assert "rounded_from" not in meta

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            resolve_rb_count(100, 0.0)
        with pytest.raises(ValueError):
            resolve_rb_count(100, 0.5, "stochastic")


class TestMessageDelay:
    def test_plain_ratio(self):
        assert message_delay(32, 0.5) == 64.0

    def test_accepts_wrapped_probabilities(self):
        ap = access_probability(142, 100, 2, 2)
        expected = 32 / ap.total.as_float()
        assert message_delay(32, ap) == pytest.approx(expected, rel=1e-12)
        assert message_delay(32, ap.total) == pytest.approx(expected,
                                                            rel=1e-12)

    def test_zero_probability_never_finishes(self):
        assert message_delay(32, 0.0) == math.inf

    def test_input_checks(self):
        with pytest.raises(ValueError):
            message_delay(0, 0.5)
        with pytest.raises(ValueError):
            message_delay(32, 1.5)


class TestJsonShape:
    def test_keys_and_round_trip(self):
        ap = access_probability(50, 25, 3, 2)
        d = ap.to_json_dict()
        assert set(d) == {"engine", "R", "N", "K", "Q", "gamma", "p_d1",
                          "p_d2", "total", "term_count", "warnings",
                          "metadata"}
        assert d["engine"] == "exact"
        assert (d["R"], d["N"], d["K"], d["Q"]) == (50, 25, 3, 2)
        for key in ("p_d1", "p_d2", "total"):
            assert isinstance(d[key], str)
        assert float(d["total"]) == pytest.approx(ap.total.as_float(),
                                                  rel=1e-14)

    def test_decimal_strings_are_fifteen_digits(self):
        ap = access_probability(142, 100, 2, 2)
        digits = ap.total.decimal_string().replace("0.", "")
        assert len(digits) == 15


class TestAlternatingTail:
    def test_pinned_values(self):
        assert [alt_tail(t, 2) for t in range(6)] == [0, 0, 1, -2, 3, -4]
        assert [alt_tail(t, 1) for t in range(5)] == [0, 1, -1, 1, -1]

    def test_below_q_is_zero(self):
        for q in (1, 2, 3):
            for t in range(q):
                assert alt_tail(t, q) == 0
