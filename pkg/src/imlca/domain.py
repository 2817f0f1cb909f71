"""Synthetic auction instances and the exact efficient allocation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Allocation, AuctionError, ReportSet, IntervalReport, Bundle
from .ml import all_bundles
from .solver import MAX_DP_ITEMS, lex_rank, solve_bundle_assignment

# Largest n * 3**m the exact optimum will attempt.
MAX_OPTIMUM_WORK = 10**8


class InvalidSpecError(AuctionError):
    pass


class InstanceTooLargeError(AuctionError):
    pass


@dataclass(frozen=True)
class SyntheticDomainSpec:
    """Bidders interested in contiguous arcs of items on a ring, with within-arc synergy.

    Bidder ``i`` gets an arc ``S_i`` of ``interest_size`` items at a random
    start, per-item base values ``b_ij ~ U(base_range)`` and synergy
    ``γ_i ~ U(gamma_range)``; for ``k = |x ∩ S_i| >= 1``

        v_i(x) = Σ_{j ∈ x ∩ S_i} b_ij · (1 + γ_i (k - 1) / max(1, |S_i| - 1)).
    """

    n: int = 6
    m: int = 12
    interest_size: int = 11
    base_range: tuple[float, float] = (1.0, 10.0)
    gamma_range: tuple[float, float] = (0.5, 1.5)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise InvalidSpecError("need at least one bidder and one item")
        if not 1 <= self.interest_size <= self.m:
            raise InvalidSpecError("interest_size must lie in 1..m")
        lo, hi = self.base_range
        if not 0 <= lo <= hi:
            raise InvalidSpecError("base_range must satisfy 0 <= lo <= hi")
        glo, ghi = self.gamma_range
        if not 0 <= glo <= ghi:
            raise InvalidSpecError("gamma_range must satisfy 0 <= lo <= hi")


@dataclass
class Instance:
    m: int
    values: np.ndarray  # (n, 2**m), row i indexed by bundle mask
    interest: list[tuple[int, ...]] = field(default_factory=list)
    base: np.ndarray | None = None
    gamma: np.ndarray | None = None
    seed: int | None = None

    @property
    def n(self) -> int:
        return len(self.values)

    def value(self, i: int, bundle: Bundle | int) -> float:
        mask = bundle if isinstance(bundle, int) else bundle.mask
        return float(self.values[i, mask])


def synergy_values(m: int, interest: tuple[int, ...], base: np.ndarray, gamma: float) -> np.ndarray:
    """Value of every bundle (indexed by mask) for one bidder."""
    X = all_bundles(m)
    w = np.zeros(m)
    w[list(interest)] = base
    inside = np.zeros(m)
    inside[list(interest)] = 1.0
    k = X @ inside
    mult = 1.0 + gamma * np.maximum(k - 1, 0) / max(1, len(interest) - 1)
    return np.where(k >= 1, (X @ w) * mult, 0.0)


def generate_instance(spec: SyntheticDomainSpec) -> Instance:
    rng = np.random.default_rng(spec.seed)
    m, s = spec.m, spec.interest_size
    values = np.zeros((spec.n, 1 << m))
    interest, bases, gammas = [], np.zeros((spec.n, s)), np.zeros(spec.n)
    for i in range(spec.n):
        start = int(rng.integers(m))
        S = tuple(sorted((start + t) % m for t in range(s)))
        bases[i] = rng.uniform(*spec.base_range, size=s)
        gammas[i] = rng.uniform(*spec.gamma_range)
        interest.append(S)
        values[i] = synergy_values(m, S, bases[i], gammas[i])
    return Instance(m, values, interest, bases, gammas, spec.seed)


def additive_instance(n: int, m: int, seed: int, low: float = 1.0, high: float = 10.0) -> Instance:
    """Bidders with additive values over all items."""
    rng = np.random.default_rng(seed)
    per_item = rng.uniform(low, high, size=(n, m))
    values = per_item @ all_bundles(m).T
    return Instance(m, values, [tuple(range(m))] * n, per_item, np.zeros(n), seed)


def exact_reports(instance: Instance, bundles: list[list[int]]) -> list[ReportSet]:
    """Zero-width reports of the listed bundle masks for each bidder."""
    profile = []
    for i, masks in enumerate(bundles):
        rs = ReportSet(i, instance.m)
        for mk in masks:
            if mk and Bundle(mk, instance.m) not in rs:
                v = instance.value(i, mk)
                rs.add(IntervalReport(Bundle(mk, instance.m), v, v))
        profile.append(rs)
    return profile


def brute_force_optimum(instance: Instance) -> tuple[Allocation, float]:
    """Efficient allocation at true values over every feasible allocation.

    Exact dynamic programme over item subsets (``O(n 3**m)``), equivalent to
    enumerating every item-to-bidder assignment.  Ties go to the
    lexicographically first bundle, bidder by bidder.
    """
    n, m = instance.n, instance.m
    if m > MAX_DP_ITEMS or n * 3**m > MAX_OPTIMUM_WORK:
        raise InstanceTooLargeError(f"n={n}, m={m} exceeds the exact-optimum guard")
    masks, value = solve_bundle_assignment(instance.values, rank=lex_rank(m, True))
    return Allocation.from_masks(masks, m), value


def two_item_instance() -> Instance:
    """Two bidders, items A and B (masks A=1, B=2, AB=3)."""
    values = np.array([[0.0, 10.0, 4.0, 20.0], [0.0, 6.0, 8.0, 12.0]])
    return Instance(2, values)


def two_item_reports() -> list[ReportSet]:
    r1 = ReportSet(0, 2, [IntervalReport(Bundle(3, 2), 15, 25), IntervalReport(Bundle(1, 2), 8, 12)])
    r2 = ReportSet(1, 2, [IntervalReport(Bundle(3, 2), 10, 14), IntervalReport(Bundle(2, 2), 6, 9)])
    return [r1, r2]
