"""Domain types for interval-bid combinatorial auctions.

Bundles are stored as integer bitmasks (bit ``j`` set iff item ``j`` is in the
bundle).  Everything that talks about "reports" reads from :class:`ReportSet`,
which always carries the empty bundle with value exactly zero.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

# Absolute tolerance for currency comparisons.
TOL = 1e-6


class AuctionError(Exception):
    """Base class for errors raised by this package."""


class UnsupportedBundleError(AuctionError):
    """A reported-value view was asked about a bundle the bidder never reported."""


class DuplicateReportError(AuctionError):
    pass


class RefinementViolation(AuctionError):
    """A refinement tried to widen an interval."""


class FrozenBidderError(AuctionError):
    pass


class DegenerateInstanceError(AuctionError):
    """A ratio metric was requested against a zero denominator."""


def popcount(mask: int) -> int:
    return bin(mask).count("1")


@dataclass(frozen=True)
class Bundle:
    """A subset of the ``m`` items."""

    mask: int
    m: int

    def __post_init__(self) -> None:
        if self.m < 0 or not 0 <= self.mask < (1 << self.m):
            raise ValueError(f"mask {self.mask} out of range for m={self.m}")

    @classmethod
    def empty(cls, m: int) -> "Bundle":
        return cls(0, m)

    @classmethod
    def from_items(cls, items: Iterable[int], m: int) -> "Bundle":
        mask = 0
        for j in items:
            if not 0 <= j < m:
                raise ValueError(f"item {j} out of range for m={m}")
            mask |= 1 << j
        return cls(mask, m)

    @classmethod
    def from_indicator(cls, indicator: Sequence[int]) -> "Bundle":
        return cls.from_items((j for j, x in enumerate(indicator) if x), len(indicator))

    @classmethod
    def parse(cls, text: str, m: int) -> "Bundle":
        """Build a bundle from item letters, e.g. ``Bundle.parse("AB", 2)``."""
        if text in ("", "∅", "-"):
            return cls.empty(m)
        return cls.from_items((string.ascii_uppercase.index(c) for c in text), m)

    @property
    def items(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.m) if self.mask >> j & 1)

    @property
    def indicator(self) -> tuple[int, ...]:
        return tuple(self.mask >> j & 1 for j in range(self.m))

    @property
    def is_empty(self) -> bool:
        return self.mask == 0

    def __len__(self) -> int:
        return popcount(self.mask)

    def __contains__(self, item: int) -> bool:
        return bool(self.mask >> item & 1)

    def disjoint(self, other: "Bundle") -> bool:
        return not self.mask & other.mask

    def __str__(self) -> str:
        if self.is_empty:
            return "∅"
        if self.m <= 26:
            return "".join(string.ascii_uppercase[j] for j in self.items)
        return "{" + ",".join(map(str, self.items)) + "}"


def lex_key(mask: int, m: int) -> tuple[int, ...]:
    """Sort key ordering bundles lexicographically by indicator vector."""
    return tuple(mask >> j & 1 for j in range(m))


@dataclass(frozen=True)
class IntervalReport:
    bundle: Bundle
    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("report bounds must be finite")
        if self.lower < 0:
            raise ValueError(f"negative lower bound {self.lower}")
        if self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower


class ReportSet:
    """Interval reports of one bidder, keyed by bundle, in insertion order.

    The empty bundle is always present with ``lower == upper == 0``.
    Bounds can only be tightened; a frozen set rejects every change.
    """

    def __init__(self, bidder: int, m: int, reports: Iterable[IntervalReport] = ()):
        self.bidder = bidder
        self.m = m
        self.frozen = False
        empty = Bundle.empty(m)
        self._reports: dict[int, IntervalReport] = {0: IntervalReport(empty, 0.0, 0.0)}
        for r in reports:
            self.add(r)

    def add(self, report: IntervalReport) -> None:
        if self.frozen:
            raise FrozenBidderError(f"bidder {self.bidder} is frozen")
        if report.bundle.m != self.m:
            raise ValueError("bundle length does not match item count")
        if report.bundle.mask in self._reports:
            raise DuplicateReportError(f"bidder {self.bidder} already reported {report.bundle}")
        self._reports[report.bundle.mask] = report

    def tighten(self, bundle: Bundle, lower: float | None = None, upper: float | None = None) -> int:
        """Move bounds inward; returns how many bounds actually moved."""
        if self.frozen:
            raise FrozenBidderError(f"bidder {self.bidder} is frozen")
        old = self[bundle]
        lo = old.lower if lower is None else float(lower)
        hi = old.upper if upper is None else float(upper)
        if lo < old.lower - 1e-9 or hi > old.upper + 1e-9:
            raise RefinementViolation(
                f"bidder {self.bidder}, bundle {bundle}: [{old.lower}, {old.upper}] -> [{lo}, {hi}]"
            )
        lo, hi = max(lo, old.lower), min(hi, old.upper)
        if lo > hi:
            if lo - hi > 1e-9:
                raise RefinementViolation(f"bidder {self.bidder}, bundle {bundle}: crossed bounds")
            lo = hi
        moved = (lo > old.lower) + (hi < old.upper)
        if moved:
            self._reports[bundle.mask] = IntervalReport(bundle, lo, hi)
        return int(moved)

    def __getitem__(self, bundle: Bundle | int) -> IntervalReport:
        mask = bundle if isinstance(bundle, int) else bundle.mask
        try:
            return self._reports[mask]
        except KeyError:
            raise UnsupportedBundleError(f"bidder {self.bidder} has no report for mask {mask}") from None

    def lower(self, bundle: Bundle | int) -> float:
        return self[bundle].lower

    def upper(self, bundle: Bundle | int) -> float:
        return self[bundle].upper

    def __contains__(self, bundle: Bundle | int) -> bool:
        mask = bundle if isinstance(bundle, int) else bundle.mask
        return mask in self._reports

    def __iter__(self) -> Iterator[IntervalReport]:
        return iter(list(self._reports.values()))

    def __len__(self) -> int:
        return len(self._reports)

    @property
    def n_queried(self) -> int:
        """Number of reports excluding the implicit empty bundle."""
        return len(self._reports) - 1

    @property
    def masks(self) -> list[int]:
        return list(self._reports)

    def copy(self) -> "ReportSet":
        new = ReportSet.__new__(ReportSet)
        new.bidder, new.m, new.frozen = self.bidder, self.m, self.frozen
        new._reports = dict(self._reports)
        return new

    def snapshot(self) -> list[tuple[int, float, float]]:
        return [(r.bundle.mask, r.lower, r.upper) for r in self._reports.values()]

    def __repr__(self) -> str:
        body = ", ".join(f"({r.bundle}, {r.lower:g}, {r.upper:g})" for r in self._reports.values())
        return f"ReportSet(bidder={self.bidder}, [{body}])"


Profile = Sequence[ReportSet]


@dataclass(frozen=True)
class Allocation:
    bundles: tuple[Bundle, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "bundles", tuple(self.bundles))
        if len({b.m for b in self.bundles}) > 1:
            raise ValueError("bundles of an allocation must share the item count")

    @classmethod
    def from_masks(cls, masks: Iterable[int], m: int) -> "Allocation":
        return cls(tuple(Bundle(int(x), m) for x in masks))

    @classmethod
    def empty(cls, n: int, m: int) -> "Allocation":
        return cls(tuple(Bundle.empty(m) for _ in range(n)))

    @property
    def n(self) -> int:
        return len(self.bundles)

    @property
    def masks(self) -> tuple[int, ...]:
        return tuple(b.mask for b in self.bundles)

    def __getitem__(self, i: int) -> Bundle:
        return self.bundles[i]

    def __iter__(self) -> Iterator[Bundle]:
        return iter(self.bundles)

    def __str__(self) -> str:
        return "(" + ", ".join(map(str, self.bundles)) + ")"


def is_feasible(a: Allocation) -> bool:
    """True iff no item is assigned to two bidders."""
    used = 0
    for b in a.bundles:
        if used & b.mask:
            return False
        used |= b.mask
    return True


@dataclass(frozen=True)
class LinearPrices:
    per_item: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(p) for p in self.per_item)
        if any(p < 0 or not math.isfinite(p) for p in vals):
            raise ValueError(f"prices must be finite and nonnegative: {vals}")
        object.__setattr__(self, "per_item", vals)

    @classmethod
    def zeros(cls, m: int) -> "LinearPrices":
        return cls((0.0,) * m)

    def price(self, bundle: Bundle | int) -> float:
        mask = bundle if isinstance(bundle, int) else bundle.mask
        return sum(p for j, p in enumerate(self.per_item) if mask >> j & 1)

    def __call__(self, bundle: Bundle | int) -> float:
        return self.price(bundle)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.per_item, dtype=float)


@dataclass(frozen=True, eq=False)
class ValuationView:
    """Read-only valuation profile: reported bounds, their mixes, or true values.

    Report-backed kinds only answer for reported bundles (plus the empty bundle).
    """

    kind: str
    profile: tuple[ReportSet, ...] = ()
    alpha: float | None = None
    reference: Allocation | None = None
    values: np.ndarray | None = None  # true values, shape (n, 2**m), indexed by mask

    KINDS = ("lower", "upper", "alpha", "perturbed", "true")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown view kind {self.kind!r}")
        if self.kind == "alpha" and not (self.alpha is not None and 0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha view needs alpha in [0, 1]")
        if self.kind == "perturbed" and self.reference is None:
            raise ValueError("perturbed view needs a reference allocation")
        if self.kind == "true" and self.values is None:
            raise ValueError("true view needs a value table")

    @classmethod
    def lower(cls, profile: Profile) -> "ValuationView":
        return cls("lower", tuple(profile))

    @classmethod
    def upper(cls, profile: Profile) -> "ValuationView":
        return cls("upper", tuple(profile))

    @classmethod
    def mixed(cls, profile: Profile, alpha: float) -> "ValuationView":
        return cls("alpha", tuple(profile), alpha=float(alpha))

    @classmethod
    def perturbed(cls, profile: Profile, reference: Allocation) -> "ValuationView":
        return cls("perturbed", tuple(profile), reference=reference)

    @classmethod
    def true(cls, values: np.ndarray) -> "ValuationView":
        return cls("true", values=np.asarray(values, dtype=float))

    @property
    def n(self) -> int:
        return len(self.values) if self.kind == "true" else len(self.profile)

    def value(self, i: int, bundle: Bundle | int) -> float:
        mask = bundle if isinstance(bundle, int) else bundle.mask
        if self.kind == "true":
            return float(self.values[i, mask])
        rep = self.profile[i][mask]
        if self.kind == "lower":
            return rep.lower
        if self.kind == "upper":
            return rep.upper
        if self.kind == "alpha":
            return self.alpha * rep.lower + (1.0 - self.alpha) * rep.upper
        return rep.lower if mask == self.reference[i].mask else rep.upper

    def support(self, i: int) -> list[int]:
        """Masks the view is defined on for bidder ``i``."""
        if self.kind == "true":
            return list(range(self.values.shape[1]))
        return self.profile[i].masks


def total_value(view: ValuationView, a: Allocation) -> float:
    return math.fsum(view.value(i, b) for i, b in enumerate(a.bundles))


def efficiency(true_view: ValuationView, a: Allocation, optimum_value: float) -> float:
    if optimum_value <= 0:
        raise DegenerateInstanceError("optimal welfare is zero")
    return total_value(true_view, a) / optimum_value


def relative_revenue(payments: Sequence[float], optimum_value: float) -> float:
    if optimum_value <= 0:
        raise DegenerateInstanceError("optimal welfare is zero")
    return math.fsum(payments) / optimum_value


def reporting_uncertainty(r: IntervalReport) -> float:
    """(upper - lower) / upper; zero-valued reports count as exact."""
    if r.upper <= 0:
        return 0.0
    return (r.upper - r.lower) / r.upper


@dataclass(frozen=True)
class Outcome:
    allocation: Allocation
    payments: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "payments", tuple(float(p) for p in self.payments))


@dataclass
class RoundRecord:
    index: int
    phase: str  # "ml" or "convergence"
    alpha: float
    provisional: tuple[int, ...] = ()
    prices: tuple[float, ...] = ()
    queries: dict[int, list[int]] = field(default_factory=dict)
    refinements: dict[int, int] = field(default_factory=dict)
    mrpar_refinements: int = 0
    omega: float | None = None
    epsilon: dict[int, float] = field(default_factory=dict)
    frozen: list[int] = field(default_factory=list)
    # Reports the prices were computed from, plus the perturbed deltas.
    report_snapshot: list[list[tuple[int, float, float]]] = field(default_factory=list)
    perturbed_delta: list[list[float]] = field(default_factory=list)


@dataclass
class AuctionTrace:
    rounds: list[RoundRecord] = field(default_factory=list)
    mrpar_refinements: int = 0
    total_refinements: int = 0
    degenerate: bool = False
    stalled: bool = False
    suboptimal_solves: int = 0
    final_omega: float | None = None
    initial_uncertainty: float = 0.0
    final_uncertainty: float = 0.0

    def append(self, record: RoundRecord) -> None:
        if self.rounds and record.index <= self.rounds[-1].index:
            raise ValueError("round indices must increase")
        self.rounds.append(record)
        self.mrpar_refinements += record.mrpar_refinements
        self.total_refinements += sum(record.refinements.values())

    def rounds_in(self, phase: str) -> list[RoundRecord]:
        return [r for r in self.rounds if r.phase == phase]
