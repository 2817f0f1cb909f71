"""Truthful simulated bidders: interval answers and bound-refinement heuristics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activity import DiarError, diar_errors
from .model import TOL, Bundle, FrozenBidderError, IntervalReport, LinearPrices, ReportSet

# Margin added so that a non-provisional witness wins strictly.
ETA = 1e-5
# True-utility ties within this favour the provisional bundle.
TIE_TOL = 1e-9


@dataclass(frozen=True)
class BoundedBell:
    """Normal centred on the middle of ``[lo, hi]`` with sd (hi - lo)/4, resampled into range."""

    lo: float
    hi: float

    def sample(self, rng: np.random.Generator) -> float:
        lo, hi = min(self.lo, self.hi), max(self.lo, self.hi)
        if hi - lo <= 0:
            return lo
        mid, sd = 0.5 * (lo + hi), 0.25 * (hi - lo)
        while True:
            x = rng.normal(mid, sd)
            if lo <= x <= hi:
                return float(x)


class SimBidder:
    """A bidder answering consistently with its true values.

    ``draw="midpoint"`` replaces every bell-shaped draw by the support midpoint,
    which makes the heuristics deterministic.  ``compliant=False`` makes the
    bidder ignore refinement requests (used to exercise bid freezing).
    """

    def __init__(self, index: int, values: np.ndarray, m: int, mu: float,
                 rng: np.random.Generator | int | None = None, draw: str = "bell",
                 compliant: bool = True):
        if mu < 0:
            raise ValueError("mu must be nonnegative")
        if draw not in ("bell", "midpoint"):
            raise ValueError(f"unknown draw mode {draw!r}")
        self.index = index
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (1 << m,):
            raise ValueError("value table must have 2**m entries")
        self.m = m
        self.mu = float(mu)
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.draw = draw
        self.compliant = compliant
        self.reports = ReportSet(index, m)

    @property
    def frozen(self) -> bool:
        return self.reports.frozen

    def freeze(self) -> None:
        self.reports.frozen = True

    def value(self, bundle: Bundle | int) -> float:
        mask = bundle if isinstance(bundle, int) else bundle.mask
        return float(self.values[mask])

    def bell(self, lo: float, hi: float) -> float:
        if self.draw == "midpoint":
            return 0.5 * (lo + hi)
        return BoundedBell(lo, hi).sample(self.rng)


def answer_interval_query(b: SimBidder, x: Bundle) -> IntervalReport:
    """Report ``[max(0, v - |z1|), v + |z2|]`` with ``z ~ N(0, (μ v)²)`` and record it."""
    if x in b.reports:
        from .model import DuplicateReportError

        raise DuplicateReportError(f"bidder {b.index} already reported {x}")
    v = b.value(x)
    z1, z2 = np.abs(b.rng.normal(0.0, b.mu * v, size=2))
    report = IntervalReport(x, max(0.0, v - z1), v + z2)
    b.reports.add(report)
    return report


def _check_active(b: SimBidder) -> None:
    if b.frozen:
        raise FrozenBidderError(f"bidder {b.index} is frozen")


def mrpar_refine(b: SimBidder, prices: LinearPrices, a_i: Bundle) -> int:
    """Tighten just enough bounds for the truly best bundle to pass the revealed-preference rule.

    Mutates ``b.reports`` and returns the number of bounds moved.
    """
    _check_active(b)
    R = b.reports
    masks = R.masks
    if len(masks) < 2 or not b.compliant:
        return 0
    a = a_i.mask
    util = {mk: b.value(mk) - prices(mk) for mk in masks}
    top = max(util.values())
    x_hat = a if util[a] >= top - TIE_TOL else max(masks, key=lambda mk: util[mk])
    rest = [mk for mk in masks if mk != x_hat]
    x_2nd = max(rest, key=lambda mk: util[mk])

    u_hat = b.bell(util[x_2nd], util[x_hat])
    max_up = max(R.upper(mk) - prices(mk) for mk in rest)
    if max_up < u_hat:
        u_hat = max_up
    low_hat = R.lower(x_hat) - prices(x_hat)
    if u_hat < low_hat:
        u_hat = low_hat
    eta = ETA if x_hat != a and low_hat <= max_up + TOL else 0.0

    lo_hat = _snap(R.lower(x_hat), min(b.value(x_hat), u_hat + prices(x_hat) + eta))
    moved = R.tighten(Bundle(x_hat, b.m), lower=lo_hat)
    for mk in rest:
        new_up = _snap(R.upper(mk), max(b.value(mk), min(R.upper(mk), u_hat + prices(mk) - eta)))
        moved += R.tighten(Bundle(mk, b.m), upper=new_up)
    return moved


def _snap(old: float, new: float) -> float:
    """Keep ``old`` when ``new`` differs only by round-off from the utility round trip."""
    return old if abs(new - old) <= 1e-12 * (1.0 + abs(old)) else new


def _reveal(b: SimBidder, bundle: Bundle) -> int:
    v = b.value(bundle)
    return b.reports.tighten(bundle, lower=v, upper=v)


def diar_refine(b: SimBidder, prices: LinearPrices, a_i: Bundle, eps: float,
                errors: list[DiarError] | None = None) -> int:
    """Reduce the largest reducible pricing error by ``eps``; reveal the ones above it.

    ``errors`` are the errors at the start of the round (sorted descending);
    reductions already achieved since then count towards ``eps``.
    Mutates ``b.reports`` and returns the number of bounds moved.
    """
    _check_active(b)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not b.compliant:
        return 0
    R = b.reports
    if errors is None:
        errors = diar_errors(R, prices, a_i)
    a = a_i.mask
    v_a = b.value(a)
    moved = 0
    for e in errors:
        if e.error <= TOL:
            break
        mk = e.bundle.mask
        now = R.upper(mk) - prices(mk) - (R.lower(a) - prices(a))
        need = eps - (e.error - now)
        if need <= 1e-12:
            break
        s_up = R.upper(mk) - b.value(mk)
        s_lo = v_a - R.lower(a)
        if s_up + s_lo >= need:
            r_up = min(s_up, b.bell(0.0, 1.0) * need)
            r_lo = need - r_up
            if r_lo > s_lo:
                r_lo = s_lo
                r_up = need - r_lo
            moved += R.tighten(e.bundle, upper=max(b.value(mk), R.upper(mk) - r_up))
            moved += R.tighten(a_i, lower=min(v_a, R.lower(a) + r_lo))
            break
        moved += _reveal(b, e.bundle) + _reveal(b, a_i)
    return moved
