"""The interval-bidding auction loop and its exact-bidding baseline.

Phases: random initial queries, ML-guided queries with revealed-preference
refinement, refinement-only rounds until the convergence bound is high enough,
and finally allocation plus VCG-style payments on lower bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .activity import (
    check_tightening,
    convergence_bound,
    diar_epsilon,
    diar_errors,
    diar_satisfied,
    mrpar_satisfied,
)
from .allocation import Economy, provisional_allocation, wdp_reports
from .bidders import SimBidder, answer_interval_query, diar_refine, mrpar_refine
from .ml import fit_interval_model, generate_round_queries
from .model import (
    AuctionError,
    AuctionTrace,
    Bundle,
    DegenerateInstanceError,
    Outcome,
    RefinementViolation,
    ReportSet,
    RoundRecord,
    ValuationView,
    reporting_uncertainty,
)
from .pricing import PriceSolution, effort_reduction_prices, unique_prices

VARIANTS = ("imlca", "imlca-sp", "mlca-exact")
PRICE_PROCEDURES = ("effort-reduction", "simple")


class BundleSpaceTooSmallError(AuctionError):
    pass


@dataclass(frozen=True)
class MechanismConfig:
    q_init: int = 6
    q_max: int = 14
    q_round: int = 4
    omega_stop: float = 0.99
    max_refine_rounds: int = 30
    alpha: float = 0.5
    alpha_schedule: str = "constant"  # or "anneal": 0 -> 1 across rounds
    eps_fraction: float = 0.05  # ε = max(eps_floor, eps_fraction * largest error)
    eps_floor: float = 1e-4
    eps_fixed: float | None = None
    prices: str = "effort-reduction"
    effort_C: float | None = None
    mu: float = 0.5
    variant: str = "imlca"
    draw: str = "bell"
    time_limit: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.q_init < 1 or self.q_round < 1:
            raise ValueError("q_init and q_round must be positive")
        if self.q_init > self.q_max:
            raise ValueError("q_init must not exceed q_max")
        if not 0 < self.omega_stop <= 1:
            raise ValueError("omega_stop must lie in (0, 1]")
        if self.max_refine_rounds < 0:
            raise ValueError("max_refine_rounds must be nonnegative")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.alpha_schedule not in ("constant", "anneal"):
            raise ValueError(f"unknown alpha schedule {self.alpha_schedule!r}")
        if self.prices not in PRICE_PROCEDURES:
            raise ValueError(f"unknown price procedure {self.prices!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        if self.eps_fixed is not None and self.eps_fixed <= 0:
            raise ValueError("eps_fixed must be positive")

    @classmethod
    def for_variant(cls, variant: str, **kw) -> "MechanismConfig":
        """Config with the price procedure and μ implied by ``variant``."""
        if variant == "imlca-sp":
            kw.setdefault("prices", "simple")
        elif variant == "imlca":
            kw.setdefault("prices", "effort-reduction")
        elif variant == "mlca-exact":
            kw["mu"] = 0.0
        return cls(variant=variant, **kw)

    @property
    def exact(self) -> bool:
        return self.variant == "mlca-exact"

    @property
    def ml_rounds(self) -> int:
        return math.ceil((self.q_max - self.q_init) / self.q_round)


class HasValues(Protocol):
    values: np.ndarray
    m: int


@dataclass
class AuctionState:
    bidders: list[SimBidder]
    m: int
    cfg: MechanismConfig
    trace: AuctionTrace = field(default_factory=AuctionTrace)
    init_rng: np.random.Generator | None = None
    rounds_done: int = 0
    # uncertainty of every non-empty report when first made, keyed (bidder, mask)
    first_uncertainty: dict[tuple[int, int], float] = field(default_factory=dict)
    omega: float | None = None

    @property
    def profile(self) -> list[ReportSet]:
        return [b.reports for b in self.bidders]

    @property
    def n(self) -> int:
        return len(self.bidders)

    def alpha(self) -> float:
        if self.cfg.alpha_schedule == "constant":
            return self.cfg.alpha
        horizon = self.cfg.ml_rounds + self.cfg.max_refine_rounds
        return min(1.0, self.rounds_done / max(1, horizon - 1))

    def record_answer(self, i: int, bundle: Bundle) -> None:
        r = answer_interval_query(self.bidders[i], bundle)
        self.first_uncertainty[(i, bundle.mask)] = reporting_uncertainty(r)


def make_bidders(values: np.ndarray, m: int, cfg: MechanismConfig,
                 seeds: Sequence[np.random.SeedSequence]) -> list[SimBidder]:
    mu = 0.0 if cfg.exact else cfg.mu
    return [SimBidder(i, values[i], m, mu, np.random.default_rng(s), draw=cfg.draw)
            for i, s in enumerate(seeds)]


def _seed_streams(n: int, seed: int) -> list[np.random.SeedSequence]:
    """Stream 0 draws the initial bundles, stream ``i + 1`` belongs to bidder ``i``."""
    return np.random.SeedSequence(seed).spawn(n + 1)


def default_bidders(instance: HasValues, cfg: MechanismConfig) -> list[SimBidder]:
    """The truthful bidders ``run_auction`` builds when none are passed in."""
    seeds = _seed_streams(len(instance.values), cfg.seed)[1:]
    return make_bidders(np.asarray(instance.values), instance.m, cfg, seeds)


def new_state(instance: HasValues, cfg: MechanismConfig,
              bidders: list[SimBidder] | None = None) -> AuctionState:
    init_seed = _seed_streams(len(instance.values), cfg.seed)[0]
    if bidders is None:
        bidders = default_bidders(instance, cfg)
    return AuctionState(bidders, instance.m, cfg, init_rng=np.random.default_rng(init_seed))


def run_initialization(state: AuctionState) -> AuctionState:
    """Every bidder answers ``q_init`` distinct uniformly random non-empty bundles."""
    cfg, m = state.cfg, state.m
    if (1 << m) - 1 < cfg.q_init:
        raise BundleSpaceTooSmallError(f"only {(1 << m) - 1} non-empty bundles for q_init={cfg.q_init}")
    for i in range(state.n):
        picks = state.init_rng.choice(np.arange(1, 1 << m), size=cfg.q_init, replace=False)
        for mk in picks:
            state.record_answer(i, Bundle(int(mk), m))
    return state


def _prices(state: AuctionState, alpha: float, a) -> PriceSolution:
    cfg = state.cfg
    if cfg.prices == "simple":
        return unique_prices(state.profile, alpha, a, time_limit=cfg.time_limit)
    return effort_reduction_prices(state.profile, alpha, a, C=cfg.effort_C, time_limit=cfg.time_limit)


def _start_round(state: AuctionState, phase: str) -> tuple[RoundRecord, object, PriceSolution | None]:
    alpha = state.alpha()
    rec = RoundRecord(index=state.rounds_done, phase=phase, alpha=alpha)
    if state.cfg.exact:
        return rec, None, None
    snapshot = [r.snapshot() for r in state.profile]
    _, a = provisional_allocation(state.profile, alpha, time_limit=state.cfg.time_limit)
    sol = _prices(state, alpha, a)
    if not sol.optimal:
        state.trace.suboptimal_solves += 1
    rec.provisional = a.masks
    rec.prices = sol.prices.per_item
    rec.report_snapshot = snapshot
    if state.cfg.prices == "effort-reduction":
        rec.perturbed_delta = sol.delta
    return rec, a, sol


def _freeze(state: AuctionState, rec: RoundRecord, i: int) -> None:
    state.bidders[i].freeze()
    rec.frozen.append(i)


def _mrpar_step(state: AuctionState, rec: RoundRecord, i: int, a_i: Bundle, prices) -> None:
    b = state.bidders[i]
    ok, _ = mrpar_satisfied(b.reports, prices, a_i)
    if not ok:
        rec.mrpar_refinements += 1
    before = b.reports.copy()
    rec.refinements[i] = rec.refinements.get(i, 0) + mrpar_refine(b, prices, a_i)
    try:
        check_tightening(before, b.reports)
    except RefinementViolation:
        _freeze(state, rec, i)
        return
    if not mrpar_satisfied(b.reports, prices, a_i)[0]:
        _freeze(state, rec, i)


def _epsilon(state: AuctionState, errors) -> float:
    cfg = state.cfg
    if cfg.eps_fixed is not None:
        return cfg.eps_fixed
    return diar_epsilon(errors, cfg.eps_fraction, cfg.eps_floor)


def _finish_round(state: AuctionState, rec: RoundRecord) -> None:
    state.trace.append(rec)
    state.rounds_done += 1


def run_ml_refinement_phase(state: AuctionState) -> AuctionState:
    """Query rounds until every active bidder reaches ``q_max`` reports."""
    cfg = state.cfg
    space = (1 << state.m) - 1
    while True:
        quotas = {}
        for i, b in enumerate(state.bidders):
            if b.frozen:
                continue
            left = min(cfg.q_max, space) - b.reports.n_queried
            if left > 0:
                quotas[i] = min(cfg.q_round, left)
        if not quotas:
            return state
        rec, a, sol = _start_round(state, "ml")
        models = [fit_interval_model(r) for r in state.profile]
        plan = generate_round_queries(state.profile, models, quotas, round_index=state.rounds_done)
        for i, bundles in plan.per_bidder.items():
            rec.queries[i] = [x.mask for x in bundles]
            for x in bundles:
                state.record_answer(i, x)
        if sol is not None:
            for i, b in enumerate(state.bidders):
                if not b.frozen:
                    _mrpar_step(state, rec, i, a[i], sol.prices)
        _finish_round(state, rec)


def _omega(state: AuctionState) -> float:
    try:
        return convergence_bound(state.profile)
    except DegenerateInstanceError:
        # Every upper bound is zero: nothing left to learn.
        state.trace.degenerate = True
        return 1.0


def run_convergence_phase(state: AuctionState) -> AuctionState:
    """Refinement-only rounds while ω_R < ω^stop, at most ``max_refine_rounds``."""
    cfg = state.cfg
    state.omega = _omega(state)
    if cfg.exact:
        return state
    done = 0
    while state.omega < cfg.omega_stop and done < cfg.max_refine_rounds:
        if all(b.frozen for b in state.bidders):
            break
        rec, a, sol = _start_round(state, "convergence")
        prices = sol.prices
        for i, b in enumerate(state.bidders):
            if b.frozen:
                continue
            a_i = a[i]
            before = b.reports.copy()
            errors = diar_errors(b.reports, prices, a_i)
            eps = _epsilon(state, errors)
            rec.epsilon[i] = eps
            _mrpar_step(state, rec, i, a_i, prices)
            if b.frozen:
                continue
            rec.refinements[i] += diar_refine(b, prices, a_i, eps, errors)
            if not diar_satisfied(before, b.reports, prices, a_i, eps) \
                    or not mrpar_satisfied(b.reports, prices, a_i)[0]:
                _freeze(state, rec, i)
        state.omega = _omega(state)
        rec.omega = state.omega
        _finish_round(state, rec)
        done += 1
        if sum(rec.refinements.values()) == 0 and not rec.frozen:
            state.trace.stalled = True
            break
    return state


def _lower_outcome(profile: Sequence[ReportSet], time_limit: float | None = None) -> tuple[Outcome, bool]:
    view = ValuationView.lower(profile)
    n = len(profile)
    a, welfare = wdp_reports(view, profile, Economy.main(), time_limit=time_limit)
    own = [view.value(i, a[i]) for i in range(n)]
    payments = []
    for i in range(n):
        _, without_i = wdp_reports(view, profile, Economy.marginal(i), time_limit=time_limit)
        others = math.fsum(own[j] for j in range(n) if j != i)
        payments.append(without_i - others)
    return Outcome(a, tuple(payments)), welfare <= 0


def determine_outcome(profile: Sequence[ReportSet], time_limit: float | None = None) -> Outcome:
    """Lower-bound welfare maximiser with VCG-style payments on lower bounds."""
    return _lower_outcome(profile, time_limit)[0]


def _mean(xs: list[float]) -> float:
    return math.fsum(xs) / len(xs) if xs else 0.0


def run_auction(instance: HasValues, cfg: MechanismConfig,
                bidders: list[SimBidder] | None = None) -> tuple[Outcome, AuctionTrace]:
    state = new_state(instance, cfg, bidders)
    run_initialization(state)
    run_ml_refinement_phase(state)
    run_convergence_phase(state)
    outcome, degenerate = _lower_outcome(state.profile, cfg.time_limit)
    trace = state.trace
    trace.degenerate |= degenerate
    trace.final_omega = state.omega
    keys = sorted(state.first_uncertainty)
    trace.initial_uncertainty = _mean([state.first_uncertainty[k] for k in keys])
    trace.final_uncertainty = _mean([reporting_uncertainty(state.bidders[i].reports[mk]) for i, mk in keys])
    return outcome, trace


__all__ = [
    "AuctionState",
    "BundleSpaceTooSmallError",
    "MechanismConfig",
    "VARIANTS",
    "default_bidders",
    "determine_outcome",
    "make_bidders",
    "new_state",
    "run_auction",
    "run_convergence_phase",
    "run_initialization",
    "run_ml_refinement_phase",
]
