"""Winner determination over reported bundles."""
from __future__ import annotations

from dataclasses import dataclass

from .model import Allocation, Profile, ValuationView, is_feasible
from .solver import WdpProblem, solve_wdp


@dataclass(frozen=True)
class Economy:
    """The main economy, or the marginal economy without ``excluded``."""

    excluded: int | None = None

    @classmethod
    def main(cls) -> "Economy":
        return cls(None)

    @classmethod
    def marginal(cls, bidder: int) -> "Economy":
        return cls(bidder)

    @property
    def is_main(self) -> bool:
        return self.excluded is None

    def members(self, n: int) -> list[int]:
        if self.excluded is not None and not 0 <= self.excluded < n:
            raise ValueError(f"excluded bidder {self.excluded} not in 0..{n - 1}")
        return [i for i in range(n) if i != self.excluded]


def wdp_reports(view: ValuationView, profile: Profile, economy: Economy = Economy(),
                time_limit: float | None = None) -> tuple[Allocation, float]:
    """Best allocation over reported bundles under ``view``.

    Each bidder's candidates are its reports in insertion order (empty bundle
    first); the excluded bidder of a marginal economy only gets ∅.
    """
    n = len(profile)
    m = profile[0].m
    members = set(economy.members(n))
    candidates = []
    for i, reports in enumerate(profile):
        if i in members:
            candidates.append([(mk, view.value(i, mk)) for mk in reports.masks])
        else:
            candidates.append([(0, 0.0)])
    res = solve_wdp(WdpProblem(candidates), time_limit=time_limit)
    return Allocation.from_masks(res.masks, m), res.value


def provisional_allocation(profile: Profile, alpha: float,
                           time_limit: float | None = None) -> tuple[ValuationView, Allocation]:
    """α-mix of lower and upper bounds and its welfare-maximising allocation."""
    view = ValuationView.mixed(profile, alpha)
    a, _ = wdp_reports(view, profile, Economy.main(), time_limit=time_limit)
    return view, a


def perturbed_view(profile: Profile, a: Allocation) -> ValuationView:
    """Lower bound on each bidder's bundle in ``a``, upper bound everywhere else."""
    if not is_feasible(a):
        raise ValueError(f"reference allocation {a} is infeasible")
    for i, b in enumerate(a.bundles):
        profile[i][b]  # raises UnsupportedBundleError when unreported
    return ValuationView.perturbed(profile, a)
