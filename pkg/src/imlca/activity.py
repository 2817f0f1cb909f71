"""Activity rules for bound refinement and the convergence bound."""
from __future__ import annotations

from dataclasses import dataclass

from .allocation import Economy, perturbed_view, wdp_reports
from .model import (
    TOL,
    Allocation,
    Bundle,
    DegenerateInstanceError,
    LinearPrices,
    Profile,
    RefinementViolation,
    ReportSet,
    ValuationView,
    total_value,
)

# A width at or below this counts as an exact report.
EXACT_WIDTH = 1e-9


def mrpar_satisfied(reports: ReportSet, prices: LinearPrices, a_i: Bundle,
                    tol: float = TOL) -> tuple[bool, Bundle | None]:
    """Revealed-preference rule: one report must dominate every other at ``prices``.

    The witness's lower-bound utility must be at least the upper-bound utility
    of every other report, strictly (by more than ``tol``) against ``a_i``
    unless the witness is ``a_i`` itself.  Candidates are tried with ``a_i``
    first, then in report order.
    """
    masks = reports.masks
    low = {mk: reports.lower(mk) - prices(mk) for mk in masks}
    up = {mk: reports.upper(mk) - prices(mk) for mk in masks}
    a = a_i.mask
    if a not in low:
        raise ValueError(f"provisional bundle {a_i} is not among the reports")
    for cand in [a] + [mk for mk in masks if mk != a]:
        lu = low[cand]
        if any(up[x] > lu + tol for x in masks if x != cand):
            continue
        if cand != a and not lu > up[a] + tol:
            continue
        return True, Bundle(cand, reports.m)
    return False, None


@dataclass(frozen=True)
class DiarError:
    index: int  # position of the report in the ReportSet
    bundle: Bundle
    error: float


def diar_errors(reports: ReportSet, prices: LinearPrices, a_i: Bundle) -> list[DiarError]:
    """Pricing error of every report under the perturbed valuation w.r.t. ``a_i``.

    Sorted descending; equal errors keep report order.
    """
    a = a_i.mask
    base = reports.lower(a) - prices(a)
    out = []
    for k, mk in enumerate(reports.masks):
        own = reports.lower(mk) if mk == a else reports.upper(mk)
        err = 0.0 if mk == a else own - prices(mk) - base
        out.append(DiarError(k, Bundle(mk, reports.m), err))
    out.sort(key=lambda e: -e.error)
    return out


def diar_epsilon(errors: list[DiarError], fraction: float = 0.05, floor: float = 1e-4) -> float:
    top = max((e.error for e in errors), default=0.0)
    return max(floor, fraction * top)


def is_irreducible(reports: ReportSet, a_i: Bundle, bundle: Bundle) -> bool:
    """Both bounds entering the error of ``bundle`` are already exact."""
    return reports[a_i].width <= EXACT_WIDTH and reports[bundle].width <= EXACT_WIDTH


def check_tightening(before: ReportSet, after: ReportSet) -> None:
    for r in before:
        if r.bundle not in after:
            raise RefinementViolation(f"report for {r.bundle} disappeared")
        new = after[r.bundle]
        if new.lower < r.lower - 1e-9 or new.upper > r.upper + 1e-9:
            raise RefinementViolation(f"interval for {r.bundle} was widened")


def diar_satisfied(before: ReportSet, after: ReportSet, prices: LinearPrices, a_i: Bundle,
                   eps: float) -> bool:
    """Delta-improvement rule over the positive pricing errors of ``before``.

    Walking the errors from largest down, some error must drop by at least
    ``eps`` with every larger one proven irreducible, or all must be proven
    irreducible.  Non-positive errors need no improvement.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    check_tightening(before, after)
    after_err = {e.bundle.mask: e.error for e in diar_errors(after, prices, a_i)}
    for e in diar_errors(before, prices, a_i):
        if e.error <= TOL:
            break
        if e.error - after_err[e.bundle.mask] >= eps - 1e-9:
            return True
        if not is_irreducible(after, a_i, e.bundle):
            return False
    return True


def convergence_details(profile: Profile) -> tuple[float, Allocation, Allocation]:
    """``(ω, a_lower, a_perturbed)`` for the current reports."""
    lower = ValuationView.lower(profile)
    a_low, v_low = wdp_reports(lower, profile, Economy.main())
    view = perturbed_view(profile, a_low)
    a_pert, v_pert = wdp_reports(view, profile, Economy.main())
    if v_pert <= 0:
        raise DegenerateInstanceError("perturbed welfare is zero")
    return total_value(lower, a_low) / v_pert, a_low, a_pert


def convergence_bound(profile: Profile) -> float:
    """Lower-bound welfare over the best perturbed welfare; at most one."""
    return convergence_details(profile)[0]
