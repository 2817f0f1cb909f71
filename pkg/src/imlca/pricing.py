"""Linear item prices that approximately clear the reported market.

Every procedure works on *gap rows*: for bidder ``i`` and report ``k``,

    gap_ik(π) = v̂_i(x_ik) - π(x_ik) - (v̂_i(a_i) - π(a_i)),

the smallest ``δ_ik`` satisfying the clearing inequality.  Prices live only on
items allocated by ``a``; the others are fixed at exactly zero.

Whenever a stage's optimal value is turned into a constraint for the next
stage, the objective is strictly convex in the delta variables, so the optimal
delta vector ``d*`` is unique and the optimal price set is the polyhedron
``{π : gap(π) <= d*}``.  Later stages therefore only ever see linear
constraints on ``π``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .allocation import perturbed_view
from .model import TOL, Allocation, LinearPrices, Profile, ValuationView
from .solver import (
    InfeasibleError,
    LpProblem,
    QpProblem,
    SolverError,
    WdpProblem,
    solve_lp,
    solve_milp,
    solve_qp,
    solve_wdp,
)

# Deltas at or below this are treated as zero when deciding whether the count
# stage is needed; it also bounds how far pinned rows may drift.
ZERO_DELTA = 1e-7
RETAIN_TOL = 1e-7


@dataclass
class PriceSolution:
    prices: LinearPrices
    delta: list[list[float]]  # per bidder, per report in ReportSet order
    max_delta: float
    positive_count: int
    stage_log: list[str] = field(default_factory=list)
    alpha_delta: list[list[float]] | None = None
    optimal: bool = True


class _Rows:
    """Gap rows ``gap = const + A @ π_free`` for one valuation view."""

    def __init__(self, view: ValuationView, a: Allocation, profile: Profile, free: list[int]):
        const, rows, self.shape = [], [], []
        for i, reports in enumerate(profile):
            ai = a[i].mask
            va = view.value(i, ai)
            masks = reports.masks
            self.shape.append(len(masks))
            for mk in masks:
                const.append(view.value(i, mk) - va)
                rows.append([((ai >> j) & 1) - ((mk >> j) & 1) for j in free])
        self.const = np.asarray(const, dtype=float)
        self.A = np.asarray(rows, dtype=float).reshape(len(const), len(free))

    def gaps(self, pi_free: np.ndarray) -> np.ndarray:
        return self.const + self.A @ pi_free

    def split(self, flat: np.ndarray) -> list[list[float]]:
        out, pos = [], 0
        for size in self.shape:
            out.append([float(v) for v in flat[pos:pos + size]])
            pos += size
        return out


class _Program:
    """Accumulates linear constraints ``G π <= h`` across pricing stages."""

    def __init__(self, nfree: int, time_limit: float | None):
        self.f = nfree
        self.G = np.zeros((0, nfree))
        self.h = np.zeros(0)
        self.time_limit = time_limit
        self.optimal = True
        self.log: list[str] = []

    def retain(self, A: np.ndarray, rhs: np.ndarray) -> None:
        # Identical rows are merged (tightest bound kept): near-duplicate
        # constraints can make the LP presolve misreport infeasibility.
        G = np.vstack([self.G, A])
        h = np.concatenate([self.h, rhs])
        if G.shape[0]:
            rows, inverse = np.unique(G, axis=0, return_inverse=True)
            tight = np.full(rows.shape[0], np.inf)
            np.minimum.at(tight, inverse.ravel(), h)
            keep = np.any(rows != 0, axis=1) | (tight < 0)
            G, h = rows[keep], tight[keep]
        self.G, self.h = G, h

    def _note(self, sol) -> None:
        self.optimal &= sol.optimal

    def min_max_gap(self, rows: _Rows) -> tuple[float, np.ndarray]:
        """min δ s.t. gap_ik(π) <= δ for all rows."""
        f, K = self.f, rows.const.size
        c = np.zeros(f + 1)
        c[-1] = 1.0
        A_ub = np.vstack([np.hstack([rows.A, -np.ones((K, 1))]),
                          np.hstack([self.G, np.zeros((self.G.shape[0], 1))])])
        b_ub = np.concatenate([-rows.const, self.h])
        sol = solve_lp(LpProblem(c, A_ub, b_ub, bounds=[(0.0, None)] * f + [(None, None)]),
                       time_limit=self.time_limit)
        self._note(sol)
        pi = np.maximum(sol.x[:f], 0.0)
        delta = max(float(sol.x[-1]), float(rows.gaps(pi).max()))
        self.log.append(f"min-max delta = {delta:.6g}")
        return delta, pi

    def min_positive_count(self, rows: _Rows, delta: float, pi0: np.ndarray) -> np.ndarray:
        """Fewest strictly positive gaps among prices keeping every gap <= δ.

        Indicator ``z_ik`` switches on ``gap_ik <= δ z_ik``; only run for δ > 0.
        """
        if delta <= ZERO_DELTA:
            self.log.append("count stage skipped (delta <= 0)")
            return pi0
        f, K = self.f, rows.const.size
        c = np.concatenate([np.zeros(f), np.ones(K)])
        A_ub = np.vstack([np.hstack([rows.A, -delta * np.eye(K)]),
                          np.hstack([self.G, np.zeros((self.G.shape[0], K))])])
        b_ub = np.concatenate([-rows.const, self.h])
        integrality = np.concatenate([np.zeros(f), np.ones(K)])
        sol = solve_milp(LpProblem(c, A_ub, b_ub, bounds=[(0.0, None)] * f + [(0.0, 1.0)] * K,
                                   integrality=integrality), time_limit=self.time_limit)
        self._note(sol)
        pi = np.maximum(sol.x[:f], 0.0)
        self.log.append(f"positive deltas = {int(round(sol.objective))}")
        return pi

    def min_norm(self, rows: _Rows, delta: float, pinned: np.ndarray, shift: float = 0.0) -> np.ndarray:
        """min ||d + shift||² s.t. gap(π) <= d, d <= δ, d_k <= 0 on pinned rows.

        Returns the (unique) optimal ``d``.
        """
        f, K = self.f, rows.const.size
        P = np.zeros((f + K, f + K))
        P[f:, f:] = 2.0 * np.eye(K)
        q = np.concatenate([np.zeros(f), 2.0 * shift * np.ones(K)])
        A_ub = np.vstack([np.hstack([rows.A, -np.eye(K)]),
                          np.hstack([self.G, np.zeros((self.G.shape[0], K))])])
        b_ub = np.concatenate([-rows.const, self.h])
        ub = np.concatenate([np.full(f, np.inf), np.where(pinned, RETAIN_TOL, max(delta, 0.0) + RETAIN_TOL)])
        lb = np.concatenate([np.zeros(f), np.full(K, -np.inf)])
        sol = solve_qp(QpProblem(P, q, A_ub, b_ub, lb=lb, ub=ub), time_limit=self.time_limit)
        self._note(sol)
        # The optimal d is max(gap(π), -shift) row-wise; recompute it from π
        # rather than trusting the solver's d.
        d = np.maximum(rows.gaps(np.maximum(sol.x[:f], 0.0)), -shift)
        self.log.append(f"norm stage (shift={shift:g}) objective = {float(np.sum((d + shift) ** 2)):.6g}")
        return d

    def max_sum_then_min_norm(self) -> np.ndarray:
        """Maximise Σπ over the retained polyhedron; break ties by smallest ||π||."""
        f = self.f
        if f == 0:
            return np.zeros(0)
        sol = solve_lp(LpProblem(np.ones(f), self.G, self.h, sense="max"), time_limit=self.time_limit)
        self._note(sol)
        best = sol.objective
        self.log.append(f"max price sum = {best:.6g}")
        A_ub = np.vstack([self.G, -np.ones((1, f))])
        b_ub = np.concatenate([self.h, [-(best - RETAIN_TOL)]])
        try:
            qp = solve_qp(QpProblem(2.0 * np.eye(f), np.zeros(f), A_ub, b_ub, lb=np.zeros(f)),
                          time_limit=self.time_limit)
        except (InfeasibleError, SolverError) as exc:
            # The face {Σπ = best} can be too thin for the interior-point method;
            # the LP vertex already maximises the sum, only the tie-break is lost.
            self.log.append(f"norm tie-break skipped ({exc})")
            return np.maximum(sol.x, 0.0)
        self._note(qp)
        return np.maximum(qp.x, 0.0)


def _free_items(a: Allocation) -> list[int]:
    m = a[0].m if a.n else 0
    used = 0
    for b in a.bundles:
        used |= b.mask
    return [j for j in range(m) if used >> j & 1]


def _full_prices(pi_free: np.ndarray, free: list[int], m: int) -> LinearPrices:
    full = [0.0] * m
    for j, p in zip(free, pi_free):
        full[j] = max(float(p), 0.0)
    return LinearPrices(tuple(full))


def _solution(rows: _Rows, pi_free: np.ndarray, free: list[int], m: int, prog: _Program,
              alpha_rows: _Rows | None = None) -> PriceSolution:
    gaps = rows.gaps(pi_free)
    return PriceSolution(
        prices=_full_prices(pi_free, free, m),
        delta=rows.split(gaps),
        max_delta=float(gaps.max()),
        positive_count=int(np.sum(gaps > TOL)),
        stage_log=list(prog.log),
        alpha_delta=None if alpha_rows is None else alpha_rows.split(alpha_rows.gaps(pi_free)),
        optimal=prog.optimal,
    )


def _min_max_then_count(prog: _Program, rows: _Rows) -> tuple[float, np.ndarray]:
    delta, pi = prog.min_max_gap(rows)
    pi = prog.min_positive_count(rows, delta, pi)
    return delta, pi


def approx_clearing_prices(view: ValuationView, a: Allocation, profile: Profile,
                           time_limit: float | None = None) -> PriceSolution:
    """δ-approximate clearing prices: minimise the worst gap, then the number of positive gaps."""
    m = profile[0].m
    free = _free_items(a)
    rows = _Rows(view, a, profile, free)
    prog = _Program(len(free), time_limit)
    _, pi = _min_max_then_count(prog, rows)
    return _solution(rows, pi, free, m, prog)


def _unique_prefix(profile: Profile, alpha: float, a: Allocation, time_limit: float | None):
    """Shared first two steps of the unique and effort-reduction procedures."""
    m = profile[0].m
    free = _free_items(a)
    rows = _Rows(ValuationView.mixed(profile, alpha), a, profile, free)
    prog = _Program(len(free), time_limit)
    delta, pi = _min_max_then_count(prog, rows)
    pinned = rows.gaps(pi) <= ZERO_DELTA
    d = prog.min_norm(rows, delta, pinned)
    prog.retain(rows.A, d - rows.const + RETAIN_TOL)
    return m, free, rows, prog


def unique_prices(profile: Profile, alpha: float, a: Allocation,
                  time_limit: float | None = None) -> PriceSolution:
    """Approximate clearing prices under the α-view, made unique.

    Minimise the worst gap and the number of positive gaps, then the Euclidean
    norm of the gaps (keeping non-positive gaps non-positive), then maximise the
    price sum; the smallest-norm price vector breaks any remaining tie.
    """
    m, free, rows, prog = _unique_prefix(profile, alpha, a, time_limit)
    pi = prog.max_sum_then_min_norm()
    return _solution(rows, pi, free, m, prog)


def default_effort_constant(profile: Profile) -> float:
    top = max((r.upper for reports in profile for r in reports), default=0.0)
    return 10.0 * max(top, 1.0)


def effort_reduction_prices(profile: Profile, alpha: float, a: Allocation, C: float | None = None,
                            time_limit: float | None = None) -> PriceSolution:
    """Prices that make as many perturbed gaps as possible non-positive.

    Runs the first two unique-price steps, then the δ-approximate program under
    the perturbed view (lower bound on ``a``, upper elsewhere) with the earlier
    constraints retained, pushes every perturbed gap towards ``-C`` in the
    least-squares sense, and finally maximises the price sum.  ``delta`` of
    the result holds the perturbed gaps.
    """
    if C is None:
        C = default_effort_constant(profile)
    if C <= 0:
        raise ValueError("C must be positive")
    m, free, alpha_rows, prog = _unique_prefix(profile, alpha, a, time_limit)
    rows = _Rows(perturbed_view(profile, a), a, profile, free)
    delta, pi = _min_max_then_count(prog, rows)
    pinned = rows.gaps(pi) <= ZERO_DELTA
    e = prog.min_norm(rows, delta, pinned, shift=C)
    prog.retain(rows.A, e - rows.const + RETAIN_TOL)
    pi = prog.max_sum_then_min_norm()
    return _solution(rows, pi, free, m, prog, alpha_rows=alpha_rows)


def is_clearing(prices: LinearPrices, a: Allocation, view: ValuationView, profile: Profile,
                tol: float = TOL) -> bool:
    """Demand (over reported bundles) and supply (over report-feasible allocations) hold."""
    for i, reports in enumerate(profile):
        util_a = view.value(i, a[i]) - prices(a[i])
        for mk in reports.masks:
            if view.value(i, mk) - prices(mk) > util_a + tol:
                return False
    revenue = sum(prices(b) for b in a.bundles)
    best = solve_wdp(WdpProblem([[(mk, prices(mk)) for mk in reports.masks] for reports in profile]))
    return revenue >= best.value - tol
