"""Learned bidder values from interval reports, and the queries they suggest.

Each bidder's value function is fitted by a support-vector-style regression
whose insensitivity tube is the reported interval itself:

    min  1/2 ||f||² + C Σ_k (ξ̄_k + ξ_k)
    s.t. f(x_k) <= upper_k + ξ̄_k,   f(x_k) >= lower_k - ξ_k,   ξ >= 0,

with the quadratic kernel ``K(x, y) = (x·y + c)²``.  It is solved in the dual,
a box-constrained QP in ``2K`` variables.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .allocation import Economy
from .model import AuctionError, Bundle, Profile, ReportSet
from .solver import QpProblem, lex_rank, solve_bundle_assignment, solve_qp


class ExhaustedBundleSpaceError(AuctionError):
    pass


@lru_cache(maxsize=8)
def all_bundles(m: int) -> np.ndarray:
    """Indicator matrix of every bundle, row ``mask``."""
    masks = np.arange(1 << m)
    return ((masks[:, None] >> np.arange(m)) & 1).astype(float)


@dataclass
class KernelModel:
    m: int
    train: np.ndarray  # (K, m) indicators of the training bundles
    coef: np.ndarray  # dual coefficients, one per training bundle
    offset: float = 1.0
    C_reg: float = 100.0
    _table: np.ndarray | None = field(default=None, repr=False, compare=False)

    def raw(self, X: np.ndarray) -> np.ndarray:
        """Unclamped kernel expansion at the rows of ``X``."""
        if self.coef.size == 0:
            return np.zeros(len(X))
        return ((X @ self.train.T + self.offset) ** 2) @ self.coef

    def predict_all(self) -> np.ndarray:
        """Clamped predictions for every bundle, indexed by mask."""
        if self._table is None:
            table = np.maximum(self.raw(all_bundles(self.m)), 0.0)
            table[0] = 0.0
            self._table = table
        return self._table

    def predict(self, bundle: Bundle) -> float:
        if bundle.is_empty:
            return 0.0
        x = np.asarray(bundle.indicator, dtype=float)[None, :]
        return max(float(self.raw(x)[0]), 0.0)

    def training_slack(self, reports: ReportSet) -> float:
        """Total violation of the reported intervals by the raw expansion."""
        X = np.array([r.bundle.indicator for r in reports], dtype=float)
        f = self.raw(X)
        lo = np.array([r.lower for r in reports])
        hi = np.array([r.upper for r in reports])
        return float(np.sum(np.maximum(f - hi, 0.0) + np.maximum(lo - f, 0.0)))


def fit_interval_model(reports: ReportSet, C_reg: float = 100.0, offset: float = 1.0) -> KernelModel:
    m = reports.m
    items = list(reports)
    X = np.array([r.bundle.indicator for r in items], dtype=float).reshape(len(items), m)
    lo = np.array([r.lower for r in items])
    hi = np.array([r.upper for r in items])
    if not np.any(hi > 0):
        return KernelModel(m, X, np.zeros(len(items)), offset, C_reg)
    K = len(items)
    G = (X @ X.T + offset) ** 2
    P = np.block([[G, -G], [-G, G]])
    q = np.concatenate([-lo, hi])
    sol = solve_qp(QpProblem(P, q, lb=np.zeros(2 * K), ub=np.full(2 * K, C_reg)))
    coef = sol.x[:K] - sol.x[K:]
    return KernelModel(m, X, coef, offset, C_reg)


def predict(model: KernelModel, bundle: Bundle) -> float:
    return model.predict(bundle)


def next_query(models: Sequence[KernelModel], profile: Profile, economy: Economy = Economy(),
               query_bidders: Sequence[int] | None = None) -> dict[int, Bundle]:
    """Each economy member's bundle in the learned-welfare-maximising allocation.

    Bidders in ``query_bidders`` (default: every member) may not receive a
    non-empty bundle they already reported; ∅ means "nothing to ask".
    """
    n = len(profile)
    m = profile[0].m
    members = economy.members(n)
    querying = set(members if query_bidders is None else query_bidders) & set(members)
    size = 1 << m
    values = np.full((n, size), -np.inf)
    values[:, 0] = 0.0
    for i in members:
        row = models[i].predict_all().copy()
        if i in querying:
            reported = [mk for mk in profile[i].masks if mk]
            if len(reported) >= size - 1:
                raise ExhaustedBundleSpaceError(f"bidder {i} has reported every bundle")
            row[reported] = -np.inf
        values[i] = row
    masks, _ = solve_bundle_assignment(values, rank=lex_rank(m, True))
    return {i: Bundle(masks[i], m) for i in members}


@dataclass
class QueryPlan:
    per_bidder: dict[int, list[Bundle]]

    def count(self, i: int) -> int:
        return len(self.per_bidder.get(i, []))


def _fallback(model: KernelModel, exclude: set[int], need: int) -> list[int]:
    """Best-predicted unreported bundles of one bidder, for topping up a short plan."""
    m = model.m
    preds = model.predict_all()
    rank = lex_rank(m, True)
    pool = [mk for mk in range(1, 1 << m) if mk not in exclude]
    pool.sort(key=lambda mk: (-preds[mk], rank[mk]))
    return pool[:need]


def generate_round_queries(profile: Profile, models: Sequence[KernelModel],
                           quotas: dict[int, int], round_index: int = 0) -> QueryPlan:
    """One main-economy query plus one per marginal economy, per bidder.

    Duplicates and already-reported bundles are dropped, the list is capped at
    the bidder's quota (marginal economies rotate with ``round_index``), and a
    short list is topped up from the bidder's own best-predicted bundles.
    """
    n = len(profile)
    active = [i for i, q in quotas.items() if q > 0]
    plan: dict[int, list[Bundle]] = {i: [] for i in active}
    if not active:
        return QueryPlan(plan)
    main = next_query(models, profile, Economy.main(), active)
    marginal = {}
    if n > 1:
        for j in range(n):
            marginal[j] = next_query(models, profile, Economy.marginal(j), [i for i in active if i != j])
    for i in active:
        others = [j for j in range(n) if j != i]
        if others:
            shift = round_index % len(others)
            others = others[shift:] + others[:shift]
        seen = set(profile[i].masks)
        picks: list[int] = []
        for b in [main[i]] + [marginal[j][i] for j in others]:
            if b.mask not in seen:
                seen.add(b.mask)
                picks.append(b.mask)
        picks = picks[:quotas[i]]
        if len(picks) < quotas[i]:
            picks += _fallback(models[i], seen, quotas[i] - len(picks))
        plan[i] = [Bundle(mk, profile[i].m) for mk in picks]
    return QueryPlan(plan)
