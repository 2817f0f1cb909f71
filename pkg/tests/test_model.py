import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from imlca.model import (
    Allocation,
    AuctionTrace,
    Bundle,
    DegenerateInstanceError,
    DuplicateReportError,
    IntervalReport,
    LinearPrices,
    RefinementViolation,
    ReportSet,
    RoundRecord,
    UnsupportedBundleError,
    ValuationView,
    efficiency,
    is_feasible,
    relative_revenue,
    reporting_uncertainty,
    total_value,
)

from conftest import alloc, bundle


class TestBundle:
    def test_parse_and_str(self):
        b = bundle("AB")
        assert b.mask == 3 and b.items == (0, 1) and str(b) == "AB"
        assert bundle("∅").is_empty and str(bundle("∅")) == "∅"

    def test_indicator_roundtrip(self):
        b = Bundle.from_items([0, 2], 4)
        assert b.indicator == (1, 0, 1, 0)
        assert Bundle.from_indicator(b.indicator) == b

    def test_mask_outside_item_range_rejected(self):
        with pytest.raises(ValueError):
            Bundle(4, 2)


class TestReports:
    def test_invalid_interval(self):
        with pytest.raises(ValueError):
            IntervalReport(bundle("A"), 5, 4)
        with pytest.raises(ValueError):
            IntervalReport(bundle("A"), -1, 4)

    def test_empty_bundle_always_present(self):
        rs = ReportSet(0, 2)
        assert rs.lower(0) == 0 and rs.upper(0) == 0 and len(rs) == 1

    def test_duplicate_rejected(self, toy_reports):
        with pytest.raises(DuplicateReportError):
            toy_reports[0].add(IntervalReport(bundle("AB"), 16, 20))

    def test_tighten_counts_and_forbids_widening(self, toy_reports):
        rs = toy_reports[0]
        assert rs.tighten(bundle("AB"), lower=16, upper=25) == 1
        with pytest.raises(RefinementViolation):
            rs.tighten(bundle("AB"), upper=26)
        with pytest.raises(RefinementViolation):
            rs.tighten(bundle("AB"), lower=15)

    def test_unreported_bundle(self, toy_reports):
        with pytest.raises(UnsupportedBundleError):
            toy_reports[0][bundle("B")]


class TestTotalValue:
    def test_true_view(self, toy_truth):
        assert total_value(toy_truth, alloc("AB", "∅")) == 20

    def test_lower_view_single(self, toy_reports):
        assert total_value(ValuationView.lower(toy_reports), alloc("AB", "∅")) == 15

    def test_lower_view_split(self, toy_reports):
        assert total_value(ValuationView.lower(toy_reports), alloc("A", "B")) == 8 + 6

    def test_unreported_raises(self, toy_reports):
        with pytest.raises(UnsupportedBundleError):
            total_value(ValuationView.lower(toy_reports), alloc("B", "A"))

    def test_views(self, toy_reports):
        a = alloc("AB", "∅")
        assert ValuationView.upper(toy_reports).value(0, 3) == 25
        assert ValuationView.mixed(toy_reports, 0.5).value(1, 2) == 7.5
        pert = ValuationView.perturbed(toy_reports, a)
        assert pert.value(0, 3) == 15 and pert.value(0, 1) == 12 and pert.value(1, 3) == 14


class TestFeasibility:
    def test_disjoint(self):
        assert is_feasible(alloc("AB", "∅"))

    def test_overlap(self):
        assert not is_feasible(alloc("AB", "A"))

    def test_empty(self):
        assert is_feasible(alloc("∅", "∅"))


class TestMetrics:
    @pytest.mark.parametrize("a, expected", [(("AB", "∅"), 1.0), (("A", "B"), 0.9), (("∅", "∅"), 0.0)])
    def test_efficiency(self, toy_truth, a, expected):
        # oracle: the optimum of the two-item instance by enumerating its 9 allocations
        best = max(toy_truth.value(0, x) + toy_truth.value(1, y) for x in range(4) for y in range(4) if not x & y)
        assert best == 20
        assert efficiency(toy_truth, alloc(*a), best) == pytest.approx(expected, abs=1e-12)

    def test_efficiency_degenerate(self, toy_truth):
        with pytest.raises(DegenerateInstanceError):
            efficiency(toy_truth, alloc("AB", "∅"), 0.0)

    @pytest.mark.parametrize("p, expected", [((12, 0), 0.6), ((0, 0), 0.0), ((10, 0), 0.5)])
    def test_relative_revenue(self, p, expected):
        assert relative_revenue(p, 20) == pytest.approx(expected)

    def test_relative_revenue_degenerate(self):
        with pytest.raises(DegenerateInstanceError):
            relative_revenue((1.0,), 0)

    @pytest.mark.parametrize("lo, hi, expected", [(15, 25, 0.4), (7, 7, 0.0), (0, 8, 1.0), (0, 0, 0.0)])
    def test_uncertainty(self, lo, hi, expected):
        assert reporting_uncertainty(IntervalReport(bundle("AB"), lo, hi)) == pytest.approx(expected)


class TestPrices:
    def test_bundle_price(self):
        p = LinearPrices((10.0, 7.5))
        assert p(bundle("AB")) == 17.5 and p(0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            LinearPrices((-1.0, 0.0))


class TestTrace:
    def test_counters_sum_and_indices_increase(self):
        t = AuctionTrace()
        t.append(RoundRecord(0, "ml", 0.5, refinements={0: 2, 1: 3}, mrpar_refinements=1))
        t.append(RoundRecord(1, "convergence", 0.5, refinements={0: 1}, mrpar_refinements=2))
        assert t.total_refinements == 6 and t.mrpar_refinements == 3
        with pytest.raises(ValueError):
            t.append(RoundRecord(1, "convergence", 0.5))


values = st.floats(min_value=0, max_value=1e4, allow_nan=False)


@given(st.lists(st.tuples(values, values), min_size=1, max_size=6))
def test_uncertainty_in_unit_interval(pairs):
    for lo, w in pairs:
        u = reporting_uncertainty(IntervalReport(bundle("A"), lo, lo + w))
        assert 0.0 <= u <= 1.0


@given(st.integers(1, 4), st.integers(0, 10_000), st.floats(0.01, 100))
def test_efficiency_scale_invariant(n, seed, c):
    m = 3
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0, 10, size=(n, 1 << m))
    vals[:, 0] = 0
    masks = [int(x) for x in rng.integers(0, 1 << m, size=n)]
    used, picked = 0, []
    for mk in masks:
        picked.append(0 if mk & used else mk)
        used |= picked[-1]
    a = Allocation.from_masks(picked, m)
    opt = 1.0 + float(vals.sum())
    e1 = efficiency(ValuationView.true(vals), a, opt)
    e2 = efficiency(ValuationView.true(c * vals), a, c * opt)
    assert math.isclose(e1, e2, rel_tol=1e-12, abs_tol=1e-12)


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=8))
def test_total_value_is_exact_sum(vs):
    n = len(vs)
    vals = np.zeros((n, 2))
    vals[:, 1] = vs
    a = Allocation.from_masks([1] + [0] * (n - 1), 1)
    assert total_value(ValuationView.true(vals), a) == vs[0]


@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100), st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=5))
def test_tightening_is_monotone(steps):
    rs = ReportSet(0, 2)
    b = bundle("AB")
    rs.add(IntervalReport(b, 0.0, 1000.0))
    for lo_frac, hi_frac, s1, s2 in [(x[2], x[3], x[0], x[1]) for x in steps]:
        old = rs[b]
        lo = old.lower + lo_frac * old.width / 2
        hi = old.upper - hi_frac * old.width / 2
        rs.tighten(b, lower=lo, upper=hi)
        new = rs[b]
        assert new.lower >= old.lower and new.upper <= old.upper
