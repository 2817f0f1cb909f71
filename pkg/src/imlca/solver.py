"""Exact solvers behind a narrow interface.

* ``solve_lp`` / ``solve_milp``: HiGHS through :mod:`scipy.optimize`.
* ``solve_qp``: Clarabel interior point, for convex quadratic objectives.
* ``solve_wdp``: depth-first branch and bound over per-bidder candidate lists.
* ``solve_bundle_assignment``: dynamic program over item subsets, for
  objectives defined on every bundle (learned values, true values).
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from functools import lru_cache

import clarabel
import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import AuctionError, lex_key


class SolverError(AuctionError):
    pass


class InfeasibleError(SolverError):
    pass


class UnboundedError(SolverError):
    pass


def _as2d(a, ncols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, ncols))
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, ncols)


@dataclass
class LpProblem:
    """``min/max c·x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq`` and bounds.

    ``bounds`` is a list of ``(lo, hi)`` pairs, ``None`` meaning unbounded on
    that side; the default is ``x >= 0``.  ``integrality`` marks integer
    variables (1) and is only honoured by :func:`solve_milp`.
    """

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    bounds: list[tuple[float | None, float | None]] | None = None
    sense: str = "min"
    integrality: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub = _as2d(self.A_ub, n)
        self.A_eq = _as2d(self.A_eq, n)
        self.b_ub = np.asarray([] if self.b_ub is None else self.b_ub, dtype=float).ravel()
        self.b_eq = np.asarray([] if self.b_eq is None else self.b_eq, dtype=float).ravel()
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if self.A_ub.shape[0] != self.b_ub.size or self.A_eq.shape[0] != self.b_eq.size:
            raise ValueError("constraint matrix and right-hand side sizes differ")
        if not (np.all(np.isfinite(self.b_ub)) and np.all(np.isfinite(self.b_eq))):
            raise ValueError("right-hand sides must be finite")
        if self.bounds is None:
            self.bounds = [(0.0, None)] * n
        if len(self.bounds) != n:
            raise ValueError("one bound pair per variable required")

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class Solution:
    x: np.ndarray
    objective: float
    optimal: bool = True


def solve_lp(p: LpProblem, time_limit: float | None = None) -> Solution:
    """Solve an LP with the HiGHS dual simplex (basic, deterministic solutions)."""
    sign = -1.0 if p.sense == "max" else 1.0
    options = {"presolve": True}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    def run(opts):
        return linprog(
            sign * p.c,
            A_ub=p.A_ub if p.A_ub.size else None,
            b_ub=p.b_ub if p.b_ub.size else None,
            A_eq=p.A_eq if p.A_eq.size else None,
            b_eq=p.b_eq if p.b_eq.size else None,
            bounds=p.bounds,
            method="highs-ds",
            options=opts,
        )

    res = run(options)
    if res.status == 2:
        # Presolve occasionally declares nearly degenerate systems infeasible.
        res = run({**options, "presolve": False})
    if res.status == 2:
        raise InfeasibleError(res.message)
    if res.status == 3:
        raise UnboundedError(res.message)
    if res.status == 1 and res.x is not None:
        return Solution(np.asarray(res.x), float(p.c @ res.x), optimal=False)
    if res.status != 0:
        raise SolverError(res.message)
    return Solution(np.asarray(res.x), float(p.c @ res.x))


def solve_milp(p: LpProblem, time_limit: float | None = None) -> Solution:
    """Mixed-integer version of :func:`solve_lp` (HiGHS branch and bound).

    On a time limit the incumbent is returned with ``optimal=False``.
    """
    sign = -1.0 if p.sense == "max" else 1.0
    lo = np.array([-np.inf if b[0] is None else b[0] for b in p.bounds], dtype=float)
    hi = np.array([np.inf if b[1] is None else b[1] for b in p.bounds], dtype=float)
    constraints = []
    if p.A_ub.size:
        constraints.append(LinearConstraint(p.A_ub, -np.inf, p.b_ub))
    if p.A_eq.size:
        constraints.append(LinearConstraint(p.A_eq, p.b_eq, p.b_eq))
    integrality = np.zeros(p.n) if p.integrality is None else np.asarray(p.integrality)
    options = {"presolve": True, "mip_rel_gap": 0.0}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = milp(sign * p.c, constraints=constraints, integrality=integrality,
               bounds=Bounds(lo, hi), options=options)
    if res.status == 2:
        res = milp(sign * p.c, constraints=constraints, integrality=integrality,
                   bounds=Bounds(lo, hi), options={**options, "presolve": False})
    if res.status == 2:
        raise InfeasibleError(res.message)
    if res.status == 3:
        raise UnboundedError(res.message)
    if res.x is None:
        raise SolverError(res.message)
    return Solution(np.asarray(res.x), float(p.c @ res.x), optimal=res.status == 0)


@dataclass
class QpProblem:
    """``min 1/2 x'Px + q'x`` with linear constraints and bounds (``None`` = free)."""

    P: np.ndarray
    q: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.size
        self.P = np.asarray(self.P, dtype=float).reshape(n, n)
        if not np.allclose(self.P, self.P.T, atol=1e-10):
            raise ValueError("quadratic term must be symmetric")
        self.A_ub = _as2d(self.A_ub, n)
        self.A_eq = _as2d(self.A_eq, n)
        self.b_ub = np.asarray([] if self.b_ub is None else self.b_ub, dtype=float).ravel()
        self.b_eq = np.asarray([] if self.b_eq is None else self.b_eq, dtype=float).ravel()
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if self.A_ub.shape[0] != self.b_ub.size or self.A_eq.shape[0] != self.b_eq.size:
            raise ValueError("constraint matrix and right-hand side sizes differ")

    @property
    def n(self) -> int:
        return self.q.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x)


_ACCEPTED = {"Solved", "AlmostSolved"}
_INFEASIBLE = {"PrimalInfeasible", "AlmostPrimalInfeasible"}
_UNBOUNDED = {"DualInfeasible", "AlmostDualInfeasible"}


def _polish(p: QpProblem, A: np.ndarray, b: np.ndarray, neq: int, x: np.ndarray,
            z: np.ndarray) -> np.ndarray:
    """Re-solve the KKT system on the active set guessed from ``x``.

    Interior-point iterates are accurate in objective, not in ``x``: on flat
    objectives the minimiser can be off by ~sqrt(tol).  The polished point is
    kept only when it is feasible and no worse.
    """
    n = x.size
    slack = b - A @ x
    scale = 1.0 + np.abs(b)
    zmax = max(1.0, float(np.max(np.abs(z)))) if z.size else 1.0
    guesses = [z > t * zmax for t in (1e-8, 1e-6, 1e-4, 1e-2)] + [slack <= 1e-7 * scale]
    base = p.objective(x)
    for guess in guesses:
        act = guess.copy()
        act[:neq] = True
        Aa, ba = A[act], b[act]
        K = np.block([[p.P, Aa.T], [Aa, np.zeros((Aa.shape[0], Aa.shape[0]))]])
        rhs = np.concatenate([-p.q, ba])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        y = sol[:n]
        r = A @ y - b
        if np.any(np.abs(r[:neq]) > 1e-9 * scale[:neq]) or np.any(r[neq:] > 1e-9 * scale[neq:]):
            continue
        if p.objective(y) <= base + 1e-9 * (1.0 + abs(base)):
            return y
    return x


def solve_qp(p: QpProblem, time_limit: float | None = None) -> Solution:
    n = p.n
    eye = np.eye(n)
    finite_lb = np.isfinite(p.lb)
    finite_ub = np.isfinite(p.ub)
    # All-zero rows are either vacuous or make the problem infeasible.
    zero = ~np.any(p.A_ub, axis=1)
    if np.any(p.b_ub[zero] < 0):
        raise InfeasibleError("constraint 0 <= b with b < 0")
    A_in = np.vstack([p.A_ub[~zero], -eye[finite_lb], eye[finite_ub]])
    b_in = np.concatenate([p.b_ub[~zero], -p.lb[finite_lb], p.ub[finite_ub]])
    A = np.vstack([p.A_eq, A_in])
    b = np.concatenate([p.b_eq, b_in])
    cones = []
    if p.A_eq.shape[0]:
        cones.append(clarabel.ZeroConeT(p.A_eq.shape[0]))
    if A_in.shape[0]:
        cones.append(clarabel.NonnegativeConeT(A_in.shape[0]))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_threads = 1
    settings.tol_gap_abs = 1e-10
    settings.tol_gap_rel = 1e-10
    settings.tol_feas = 1e-10
    settings.tol_ktratio = 1e-8
    if time_limit is not None:
        settings.time_limit = float(time_limit)
    P = sp.csc_matrix(np.triu(p.P))
    solver = clarabel.DefaultSolver(P, p.q, sp.csc_matrix(A), b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    if status in _INFEASIBLE:
        raise InfeasibleError(status)
    if status in _UNBOUNDED:
        raise UnboundedError(status)
    x = np.asarray(sol.x)
    if status in _ACCEPTED and x.size == n:
        x = _polish(p, A, b, p.A_eq.shape[0], x, np.asarray(sol.z))
    if status not in _ACCEPTED:
        # Keep an unfinished iterate only if it is feasible; diverged ones are garbage.
        if x.size == n and np.all(np.isfinite(x)) and _feasible(A, b, p.A_eq.shape[0], x):
            return Solution(x, p.objective(x), optimal=False)
        raise SolverError(status)
    return Solution(x, p.objective(x), optimal=status == "Solved")


def _feasible(A: np.ndarray, b: np.ndarray, neq: int, x: np.ndarray, tol: float = 1e-6) -> bool:
    r = A @ x - b
    scale = 1.0 + np.abs(b)
    return bool(np.all(np.abs(r[:neq]) <= tol * scale[:neq]) and np.all(r[neq:] <= tol * scale[neq:]))


# -- winner determination -----------------------------------------------------


@dataclass
class WdpProblem:
    """Per-bidder candidate lists of ``(bundle mask, weight)``.

    Every bidder must list the empty bundle (mask 0) so that giving nothing to
    everybody is always feasible.  Candidate order is the tie-break order.
    """

    candidates: list[list[tuple[int, float]]]

    def __post_init__(self) -> None:
        self.candidates = [[(int(mk), float(w)) for mk, w in c] for c in self.candidates]
        for i, c in enumerate(self.candidates):
            if not any(mk == 0 for mk, _ in c):
                raise ValueError(f"bidder {i} has no empty-bundle candidate")


@dataclass
class WdpResult:
    selection: tuple[int, ...]
    masks: tuple[int, ...]
    value: float
    optimal: bool = True
    nodes: int = 0


def solve_wdp(p: WdpProblem, time_limit: float | None = None, tol: float = 1e-9) -> WdpResult:
    """Exact set packing by depth-first branch and bound.

    Bidders are branched in order and candidates in list order; an incumbent is
    only replaced on strict improvement, so the lexicographically first optimal
    selection wins ties.
    """
    cands = p.candidates
    n = len(cands)
    deadline = None if time_limit is None else time.monotonic() + time_limit
    best_val = -np.inf
    best_sel: list[int] | None = None
    sel = [0] * n
    nodes = 0
    timed_out = False

    def bound(d: int, used: int) -> float:
        total = 0.0
        for j in range(d, n):
            total += max(w for mk, w in cands[j] if not mk & used)
        return total

    def dfs(d: int, used: int, val: float) -> None:
        nonlocal best_val, best_sel, nodes, timed_out
        nodes += 1
        if d == n:
            if val > best_val + tol:
                best_val, best_sel = val, list(sel)
            return
        if deadline is not None and best_sel is not None and nodes % 256 == 0:
            if time.monotonic() > deadline:
                timed_out = True
        if timed_out:
            return
        for idx, (mk, w) in enumerate(cands[d]):
            if mk & used:
                continue
            nv, nu = val + w, used | mk
            if best_sel is not None and nv + bound(d + 1, nu) <= best_val + tol:
                continue
            sel[d] = idx
            dfs(d + 1, nu, nv)

    dfs(0, 0, 0.0)
    assert best_sel is not None
    masks = tuple(cands[i][k][0] for i, k in enumerate(best_sel))
    value = float(sum(cands[i][k][1] for i, k in enumerate(best_sel)))
    return WdpResult(tuple(best_sel), masks, value, optimal=not timed_out, nodes=nodes)


# -- assignment over the full bundle space -------------------------------------

MAX_DP_ITEMS = 16


@lru_cache(maxsize=8)
def _submask_pairs(m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All ``(S, x)`` with ``x ⊆ S``, sorted by ``S``; plus segment starts."""
    S = np.zeros(1, dtype=np.int64)
    X = np.zeros(1, dtype=np.int64)
    for j in range(m):
        b = 1 << j
        S = np.concatenate([S, S | b, S | b])
        X = np.concatenate([X, X, X | b])
    order = np.argsort(S, kind="stable")
    S, X = S[order], X[order]
    starts = np.searchsorted(S, np.arange(1 << m))
    return S, X, starts


@lru_cache(maxsize=8)
def lex_rank(m: int, empty_last: bool = True) -> np.ndarray:
    """Preference rank per mask: lexicographic by indicator, optionally ∅ last."""
    masks = sorted(range(1 << m), key=lambda x: lex_key(x, m))
    if empty_last:
        masks.remove(0)
        masks.append(0)
    rank = np.empty(1 << m, dtype=np.int64)
    rank[masks] = np.arange(1 << m)
    return rank


def solve_bundle_assignment(values: np.ndarray, rank: np.ndarray | None = None,
                            tol: float = 1e-9) -> tuple[tuple[int, ...], float]:
    """Maximise ``Σ_i values[i, a_i]`` over item-disjoint bundles.

    ``values`` has shape ``(n, 2**m)``; ``-inf`` marks bundles a bidder may
    not receive (the empty bundle must stay finite).  Ties go to the bundle
    with the smallest ``rank``, bidder by bidder.  Cost is ``O(n 3**m)``.
    """
    values = np.asarray(values, dtype=float)
    n, size = values.shape
    m = size.bit_length() - 1
    if size != 1 << m:
        raise ValueError("value table width must be a power of two")
    if m > MAX_DP_ITEMS:
        raise ValueError(f"subset DP limited to {MAX_DP_ITEMS} items")
    if np.any(~np.isfinite(values[:, 0])):
        raise ValueError("the empty bundle must be allowed for every bidder")
    if rank is None:
        rank = lex_rank(m)
    S, X, starts = _submask_pairs(m)
    W = np.zeros((n + 1, size))
    for i in range(n - 1, -1, -1):
        vals = values[i][X] + W[i + 1][S ^ X]
        W[i] = np.maximum.reduceat(vals, starts)
    free = size - 1
    chosen = []
    ends = np.append(starts[1:], S.size)
    for i in range(n):
        xs = X[starts[free]:ends[free]]
        vals = values[i][xs] + W[i + 1][free ^ xs]
        target = W[i, free]
        ok = xs[vals >= target - tol * max(1.0, abs(target))]
        x = int(ok[np.argmin(rank[ok])])
        chosen.append(x)
        free ^= x
    return tuple(chosen), float(sum(values[i, x] for i, x in enumerate(chosen)))
