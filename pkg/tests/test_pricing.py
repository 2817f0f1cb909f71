import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imlca.allocation import perturbed_view, provisional_allocation
from imlca.domain import additive_instance, exact_reports, two_item_instance
from imlca.model import Allocation, Bundle, IntervalReport, LinearPrices, ReportSet, ValuationView
from imlca.pricing import (
    approx_clearing_prices,
    default_effort_constant,
    effort_reduction_prices,
    is_clearing,
    unique_prices,
)
from imlca.solver import LpProblem, solve_lp

from conftest import alloc, random_profile

TOL = 1e-6


def single(v=5.0, m=1):
    rs = ReportSet(0, m)
    rs.add(IntervalReport(Bundle((1 << m) - 1, m), v, v))
    return [rs]


class TestApproxClearing:
    def test_toy_alpha_half(self, toy_reports):
        a = alloc("AB", "∅")
        sol = approx_clearing_prices(ValuationView.mixed(toy_reports, 0.5), a, toy_reports)
        pA, pB = sol.prices.per_item
        assert sol.max_delta <= TOL and sol.positive_count == 0
        assert 7.5 - TOL <= pB <= 10 + TOL
        assert 12 - TOL <= pA + pB <= 20 + TOL
        # LP oracle for the same δ = 0 feasibility question
        lp = solve_lp(LpProblem([0, 0], A_ub=[[0, 1], [0, -1], [-1, -1], [1, 1]], b_ub=[10, -7.5, -12, 20]))
        assert lp.optimal

    def test_single_bidder(self):
        R = single(5.0)
        sol = approx_clearing_prices(ValuationView.lower(R), Allocation.from_masks([1], 1), R)
        assert sol.max_delta <= TOL and sol.prices(1) <= 5 + TOL

    def test_identical_bidders_price_full_bundle_at_value(self):
        R = [single(6.0, 2)[0], ReportSet(1, 2, [IntervalReport(Bundle(3, 2), 6.0, 6.0)])]
        sol = approx_clearing_prices(ValuationView.lower(R), Allocation.from_masks([3, 0], 2), R)
        assert sol.max_delta <= TOL
        assert sol.prices(3) == pytest.approx(6.0, abs=TOL)

    def test_unallocated_items_priced_exactly_zero(self, toy_reports):
        sol = approx_clearing_prices(ValuationView.lower(toy_reports), alloc("A", "∅"), toy_reports)
        assert sol.prices.per_item[1] == 0.0

    def test_delta_layout(self, toy_reports):
        sol = approx_clearing_prices(ValuationView.upper(toy_reports), alloc("AB", "∅"), toy_reports)
        assert [len(d) for d in sol.delta] == [3, 3]
        flat = [x for d in sol.delta for x in d]
        assert sol.max_delta == pytest.approx(max(flat))
        assert sol.positive_count == sum(x > TOL for x in flat)


class TestUniquePrices:
    def test_toy(self, toy_reports):
        sol = unique_prices(toy_reports, 0.5, alloc("AB", "∅"))
        assert np.allclose(sol.prices.per_item, (10, 10), atol=TOL)

    def test_single_exact_bidder_priced_at_value(self):
        R = single(5.0)
        sol = unique_prices(R, 0.5, Allocation.from_masks([1], 1))
        assert sol.prices(1) == pytest.approx(5.0, abs=TOL)

    def test_zero_delta_reduces_to_clearing(self, toy_reports):
        a = alloc("AB", "∅")
        sol = unique_prices(toy_reports, 0.5, a)
        assert sol.max_delta <= TOL
        assert is_clearing(sol.prices, a, ValuationView.mixed(toy_reports, 0.5), toy_reports, tol=TOL)


class TestEffortReduction:
    def test_toy_hand_solution(self, toy_reports):
        # independent check: test_effort_prices_match_grid_oracle
        sol = effort_reduction_prices(toy_reports, 0.5, alloc("AB", "∅"), C=250)
        assert sol.max_delta == pytest.approx(4.5, abs=TOL)
        assert np.allclose(sol.prices.per_item, (7.0, 7.5), atol=TOL)

    def test_ignorable_rows_on_toy(self, toy_reports):
        a = alloc("AB", "∅")
        sol = effort_reduction_prices(toy_reports, 0.5, a, C=250)
        check_ignorable_rows(toy_reports, a, sol)

    def test_exact_reports_collapse_to_clearing(self):
        # zero-width intervals: the perturbed and α-views coincide, so both procedures
        # return prices from the same clearing set (δ ≤ 0 everywhere, no positive rows);
        # the effort stage then picks a different point of that set than the ℓ2 tie-break
        inst = two_item_instance()
        R = exact_reports(inst, [[1, 2, 3], [1, 2, 3]])
        a = alloc("AB", "∅")
        mixed, pert = ValuationView.mixed(R, 0.5), perturbed_view(R, a)
        for i in range(2):
            for mk in R[i].masks:
                assert mixed.value(i, mk) == pert.value(i, mk)
        p5 = unique_prices(R, 0.5, a)
        p6 = effort_reduction_prices(R, 0.5, a)
        assert p5.max_delta <= TOL and p6.max_delta <= TOL
        assert p5.positive_count == p6.positive_count == 0
        truth = ValuationView.true(inst.values)
        assert is_clearing(p5.prices, a, truth, R, tol=TOL)
        assert is_clearing(p6.prices, a, truth, R, tol=TOL)
        pA, pB = p6.prices.per_item
        assert 6 - TOL <= pA <= 16 + TOL and 8 - TOL <= pB <= 10 + TOL and pA + pB <= 20 + TOL

    def test_effort_prices_match_grid_oracle(self, toy_reports):
        got = effort_reduction_prices(toy_reports, 0.5, alloc("AB", "∅"), C=250).prices.per_item
        assert np.allclose(got, toy_effort_grid_oracle(C=250), atol=0.02)

    def test_default_constant(self, toy_reports):
        assert default_effort_constant(toy_reports) == 250

    def test_rejects_nonpositive_constant(self, toy_reports):
        with pytest.raises(ValueError):
            effort_reduction_prices(toy_reports, 0.5, alloc("AB", "∅"), C=0)


def toy_effort_grid_oracle(C, step=0.01):
    """Brute-force the effort-reduction program on the two-item reports, a = (AB, ∅), α = 0.5 on a price grid.

    Gap rows (bidder 1 holds AB, bidder 2 holds ∅): ∅, A, AB for bidder 1 and ∅, B, AB for
    bidder 2, each value(x) - π(x) - (value(a_i) - π(a_i)).
    """
    g = np.arange(0, 25 + step / 2, step)
    pA, pB = np.meshgrid(g, g, indexing="ij")
    pAB = pA + pB

    def gaps(v1AB, v1A, v2B, v2AB):
        u1 = v1AB - pAB
        return np.stack([0 - u1, (v1A - pA) - u1, 0 * pA, 0 * pA, v2B - pB, v2AB - pAB])

    alpha = gaps(20, 10, 7.5, 12)
    pert = gaps(15, 12, 9, 14)
    feasible = alpha.max(axis=0) <= 1e-9  # step-i δ = 0 here, so every α-row is pinned
    worst = np.where(feasible, pert.max(axis=0), np.inf)
    dstar = worst.min()
    count = np.where(worst <= dstar + 1e-9, (pert > 1e-9).sum(axis=0), 99)
    ok = count == count.min()
    obj = np.where(ok, ((np.maximum(pert, -C) + C) ** 2).sum(axis=0), np.inf)
    k = np.unravel_index(np.argmin(obj), obj.shape)
    return float(pA[k]), float(pB[k])


def check_ignorable_rows(R, a, sol):
    for i, rs in enumerate(R):
        ai = a[i]
        for k, mk in enumerate(rs.masks):
            if mk != ai.mask and sol.delta[i][k] <= 0:
                lhs = rs.lower(ai) - sol.prices(ai)
                rhs = rs.upper(mk) - sol.prices(mk)
                assert lhs >= rhs - TOL


class TestIsClearing:
    def test_toy_truth(self, toy):
        R = exact_reports(toy, [[1, 2, 3], [1, 2, 3]])
        assert is_clearing(LinearPrices((10.0, 10.0)), alloc("AB", "∅"), ValuationView.true(toy.values), R)

    def test_zero_prices_violate_demand(self, toy):
        R = exact_reports(toy, [[1, 2, 3], [1, 2, 3]])
        assert not is_clearing(LinearPrices.zeros(2), alloc("A", "B"), ValuationView.true(toy.values), R)

    def test_single_bidder(self):
        R = single(5.0)
        assert is_clearing(LinearPrices((5.0,)), Allocation.from_masks([1], 1), ValuationView.lower(R), R)


seeds = st.integers(0, 100_000)


@settings(max_examples=40)
@given(seeds, st.floats(0, 1))
def test_stage_one_delta_nonnegative(seed, alpha):
    R = random_profile(seed)
    view, a = provisional_allocation(R, alpha)
    assert approx_clearing_prices(view, a, R).max_delta >= -TOL


@settings(max_examples=40)
@given(seeds, st.floats(0, 1))
def test_unique_prices_keep_retained_constraints(seed, alpha):
    R = random_profile(seed)
    view, a = provisional_allocation(R, alpha)
    first = approx_clearing_prices(view, a, R)
    sol = unique_prices(R, alpha, a)
    # the unique prices are among the worst-gap minimisers and keep non-positive rows non-positive
    assert sol.max_delta <= first.max_delta + TOL
    for d1, d2 in zip(first.delta, sol.delta):
        for x1, x2 in zip(d1, d2):
            if x1 <= 0:
                assert x2 <= TOL
    unused = [j for j in range(3) if not any(b.mask >> j & 1 for b in a)]
    assert all(sol.prices.per_item[j] == 0.0 for j in unused)


@settings(max_examples=40)
@given(seeds, st.floats(0, 1))
def test_ignorable_rows_effort_reduction(seed, alpha):
    R = random_profile(seed)
    _, a = provisional_allocation(R, alpha)
    sol = effort_reduction_prices(R, alpha, a)
    check_ignorable_rows(R, a, sol)
    unused = [j for j in range(3) if not any(b.mask >> j & 1 for b in a)]
    assert all(sol.prices.per_item[j] == 0.0 for j in unused)


@settings(max_examples=25)
@given(seeds)
def test_clearing_under_perturbed_view_gives_zero_count(seed):
    # additive exact values: item-wise highest bidder is efficient and clearing prices exist
    inst = additive_instance(3, 3, seed)
    R = exact_reports(inst, [list(range(1, 8))] * 3)
    view = ValuationView.lower(R)
    from imlca.allocation import wdp_reports

    a, _ = wdp_reports(view, R)
    sol = effort_reduction_prices(R, 0.5, a)
    assert sol.positive_count == 0


@settings(max_examples=25)
@given(seeds)
def test_clearing_existence_implies_zero_delta(seed):
    inst = additive_instance(3, 3, seed)
    R = exact_reports(inst, [[1, 2, 4, 3, 5, 6, 7]] * 3)
    from imlca.allocation import wdp_reports

    view = ValuationView.lower(R)
    a, _ = wdp_reports(view, R)
    sol = approx_clearing_prices(view, a, R)
    assert sol.max_delta <= TOL and sol.positive_count == 0
    assert is_clearing(sol.prices, a, view, R, tol=TOL)
