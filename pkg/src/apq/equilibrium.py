"""Nash equilibria of the priority-bidding game.

Every customer of class i picks a slope a > 0 to minimize
C_i * W(a; profile) + a. Strict convexity of W in a makes the best
response unique, so equilibria are pure and symmetric within classes.

Homogeneous costs admit the closed form b* = C rho W0 / (1 - rho), with
the piecewise best-response map

    r(b) = sqrt(b* b)                          0 < b < b*
           (sqrt(b* b) - (1-rho) b) / rho      b* <= b < b*/(1-rho)^2
           0                                   b >= b*/(1-rho)^2,

increasing (follow-the-crowd) below b~ = b* max{1, 1/(4(1-rho)^2)} and
decreasing (avoid-the-crowd) between b~ and the cutoff.

With distinct costs C_1 < ... < C_N the equilibrium slopes are strictly
ordered the same way and solve W(b_i; b) = Wt(b_i; b) for every class,
where

    Wt(b_i; b) = ( 1 - sum_{k>=i} rho_k (1 - b_i/b_k)
                   - C_i / b_i^2 * sum_{k<i} rho_k b_k W(b_k; b) )
                 / ( C_i * sum_{k>=i} rho_k / b_k ).

W decreases and Wt increases in b_i on the order-preserving interval, so
g = W - Wt has at most one root there and plain bisection finds it; the
solver cycles coordinate best responses (Gauss-Seidel) until the largest
|W - Wt| falls below tolerance. Classes sharing a cost are pooled first:
their best responses coincide, forcing a common slope.

Uniqueness of the heterogeneous equilibrium is an open question; the
solver reports the spread across randomized restarts instead of claiming
it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .analytics import (
    level_waits,
    merge_levels,
    tagged_slope,
    waiting_times,
)
from .model import Model, NonPositiveBidError, validate_bids

__all__ = [
    "EquilibriumResult",
    "BestResponseReport",
    "HeterogeneousCostsError",
    "UnorderedProfileError",
    "InvalidBracketError",
    "NoConvergenceError",
    "homogeneous_equilibrium",
    "homogeneous_best_response",
    "w_tilde",
    "class_best_response",
    "individual_best_response",
    "solve_heterogeneous",
]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000
DEFAULT_RESTARTS = 5
_BISECT_STEPS = 200


class HeterogeneousCostsError(ValueError):
    pass


class UnorderedProfileError(ValueError):
    pass


class InvalidBracketError(ValueError):
    pass


class NoConvergenceError(RuntimeError):
    """Raised when no restart reaches the residual tolerance.

    Carries the best iterate (with diagnostics) as ``result`` so callers
    can inspect how close the solver got; it is never silently returned
    as an equilibrium.
    """

    def __init__(self, result: "EquilibriumResult"):
        super().__init__(
            f"no convergence after {result.iterations} cycles; "
            f"best residual {result.residual:.3e}"
        )
        self.result = result


@dataclass(frozen=True)
class EquilibriumResult:
    """Solved profile in the model's class order.

    ``total_costs`` are C_i W_i + b_i; ``residual`` is max_i |W - Wt| at
    the returned bids; ``multistart_agreement`` is the largest pairwise
    max-norm distance between converged restart solutions (0.0 when only
    one restart ran or converged).
    """

    bids: tuple[float, ...]
    waits: tuple[float, ...]
    total_costs: tuple[float, ...]
    residual: float
    iterations: int
    converged: bool
    multistart_agreement: float
    trace: tuple[float, ...] = field(repr=False, default=())


@dataclass(frozen=True)
class BestResponseReport:
    """Best response to a common bid b, with the shape thresholds."""

    response: float
    regime: str  # FTC | ATC | ZERO
    equilibrium_bid: float
    breakpoint: float
    cutoff: float


def homogeneous_equilibrium(model: Model) -> tuple[float, float]:
    """Closed-form equilibrium bid and per-customer cost with one cost rate.

    Service distributions may differ across classes; only the shared
    waiting cost matters. Returns (bid, total cost per customer); in
    equilibrium the queue behaves exactly like FCFS.
    """
    costs = model.waiting_costs
    if any(c != costs[0] for c in costs):
        raise HeterogeneousCostsError(
            "homogeneous solution needs one common waiting cost; "
            f"got {sorted(set(costs))}"
        )
    c = costs[0]
    base = model.w0 / (1.0 - model.rho)
    return c * model.rho * base, c * (1.0 + model.rho) * base


def homogeneous_best_response(model: Model, b: float) -> BestResponseReport:
    if not (b > 0 and math.isfinite(b)):
        raise NonPositiveBidError(f"common bid must be positive, got {b}")
    b_star, _ = homogeneous_equilibrium(model)
    rho = model.rho
    cutoff = b_star / (1.0 - rho) ** 2
    breakpoint = b_star * max(1.0, 1.0 / (4.0 * (1.0 - rho) ** 2))
    if b < b_star:
        r = math.sqrt(b_star * b)
    elif b < cutoff:
        r = (math.sqrt(b_star * b) - (1.0 - rho) * b) / rho
    else:
        r = 0.0
    if b < breakpoint:
        regime = "FTC"
    elif b < cutoff:
        regime = "ATC"
    else:
        regime = "ZERO"
    return BestResponseReport(r, regime, b_star, breakpoint, cutoff)


def w_tilde(model: Model, bids: Sequence[float], i: int) -> float:
    """Right side of the symmetric first-order condition for class i.

    Bids must ascend with the class index; the numerator's lower-class
    sum is empty for i = 0.
    """
    bids = validate_bids(model, bids)
    if any(bids[k] > bids[k + 1] for k in range(len(bids) - 1)):
        raise UnorderedProfileError(f"bids must be ascending, got {bids}")
    if not 0 <= i < model.n_classes:
        raise IndexError(f"class index {i} out of range")
    W = waiting_times(model, bids)
    rho_i = model.rho_i
    c = model.classes[i].waiting_cost
    bi = bids[i]
    num = 1.0
    den = 0.0
    for k in range(i, model.n_classes):
        num -= rho_i[k] * (1.0 - bi / bids[k])
        den += rho_i[k] / bids[k]
    num -= (c / (bi * bi)) * math.fsum(
        rho_i[k] * bids[k] * W[k] for k in range(i)
    )
    return num / (c * den)


# --- internal first-order-condition evaluation ------------------------------


def _foc_gap(
    others_b: list[float],
    others_load: list[float],
    others_bw: list[float],  # load_k * b_k, precomputed
    own_load: float,
    cost: float,
    w0: float,
    rho: float,
    x: float,
) -> float:
    """g(x) = W(x) - Wt(x) with the own class mass placed at slope x.

    ``others_*`` must be sorted ascending by slope; ties with x are
    counted on the upper side, where their numerator term vanishes.
    Decreasing in x on order-preserving ranges.
    """
    n = len(others_b)
    base = w0 / (1.0 - rho)
    # delays of the lower levels (strictly below x), forward substitution
    waits: list[float] = []
    j = 0
    while j < n and others_b[j] < x:
        bl = others_b[j]
        num = base
        for k in range(j):
            num -= others_load[k] * (1.0 - others_b[k] / bl) * waits[k]
        den = 1.0 - own_load * (1.0 - bl / x)
        for k in range(j + 1, n):
            den -= others_load[k] * (1.0 - bl / others_b[k])
        waits.append(num / den)
        j += 1
    # own delay at x
    num = base
    low_bw_w = 0.0
    for k in range(j):
        num -= others_load[k] * (1.0 - others_b[k] / x) * waits[k]
        low_bw_w += others_bw[k] * waits[k]
    den = 1.0
    up_inv = own_load / x
    wt_num = 1.0
    for k in range(j, n):
        bk = others_b[k]
        den -= others_load[k] * (1.0 - x / bk)
        up_inv += others_load[k] / bk
        wt_num -= others_load[k] * (1.0 - x / bk)
    w_own = num / den
    wt = (wt_num - cost * low_bw_w / (x * x)) / (cost * up_inv)
    return w_own - wt


def _bisect_response(gap, lo: float, hi: float, tol: float = 0.0) -> float:
    """Root of the decreasing gap function, or the endpoint its sign picks.

    With tol = 0 the bracket shrinks until no representable midpoint
    remains, so the root is resolved to machine precision.
    """
    glo = gap(lo)
    if glo <= 0.0:
        return lo
    ghi = gap(hi)
    if ghi >= 0.0:
        return hi
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if gap(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if tol > 0.0 and hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def class_best_response(
    model: Model,
    bids: Sequence[float],
    i: int,
    bracket: tuple[float, float],
    tol: float = 1e-12,
) -> float:
    """Symmetric best response of class i inside a bracket.

    Solves W(x; b_{-i} + x) = Wt(x; b_{-i} + x) by bisection; the root is
    unique on an order-preserving bracket. Without a sign change the
    bracket endpoint on the indicated side is returned: at an endpoint
    where W < Wt the cost is already increasing (respond low), where
    W > Wt it is still decreasing (respond high).
    """
    bids = validate_bids(model, bids)
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0.0 < lo < hi):
        raise InvalidBracketError(f"need 0 < lo < hi, got ({lo}, {hi})")
    if not 0 <= i < model.n_classes:
        raise IndexError(f"class index {i} out of range")
    order = sorted(
        (k for k in range(model.n_classes) if k != i), key=lambda k: bids[k]
    )
    ob = [bids[k] for k in order]
    ol = [model.rho_i[k] for k in order]
    obw = [b * l for b, l in zip(ob, ol)]
    cost = model.classes[i].waiting_cost
    gap = lambda x: _foc_gap(
        ob, ol, obw, model.rho_i[i], cost, model.w0, model.rho, x
    )
    return _bisect_response(gap, lo, hi, tol)


def individual_best_response(
    model: Model, bids: Sequence[float], cost: float, tol: float = 1e-12
) -> float:
    """Cost-minimizing slope of one zero-measure customer with rate ``cost``.

    Minimizes cost * W(a) + a over (0, b_upper]. The objective is strictly
    convex with a continuous derivative, so bisection on the sign of
    cost * W'(a) + 1 locates the unique minimizer.
    """
    if not (cost > 0 and math.isfinite(cost)):
        raise ValueError(f"waiting cost must be positive, got {cost}")
    bids = validate_bids(model, bids)
    lb, ll, _ = merge_levels(bids, model.rho_i)
    W = level_waits(model.w0, model.rho, lb, ll)
    hi = model.b_upper_for(cost)
    lo = 1e-12 * hi

    def slope_sign(a: float) -> float:
        return cost * tagged_slope(model.w0, model.rho, lb, ll, W, a) + 1.0

    if slope_sign(lo) >= 0.0:
        return lo
    if slope_sign(hi) <= 0.0:
        return hi
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if slope_sign(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


# --- heterogeneous solver ----------------------------------------------------


class _PooledGame:
    """Cost-sorted game with equal-cost classes pooled into groups.

    Costs within relative 1e-9 count as equal: mathematically tied costs
    (e.g. ratios that both round near 2/3) may differ by a few ulps, and
    leaving them unpooled would make two groups chase one common slope
    against their shared bracket boundary forever.
    """

    def __init__(self, model: Model):
        self.model = model
        order = sorted(range(model.n_classes), key=lambda k: model.classes[k].waiting_cost)
        groups: list[list[int]] = []
        costs: list[float] = []
        for k in order:
            c = model.classes[k].waiting_cost
            if costs and c - costs[-1] <= 1e-9 * c:
                groups[-1].append(k)
            else:
                groups.append([k])
                costs.append(c)
        self.groups = groups
        self.costs = costs
        self.loads = [math.fsum(model.rho_i[k] for k in g) for g in groups]
        cap_base = model.b_upper[0] / model.classes[0].waiting_cost
        self.caps = [c * cap_base for c in costs]
        self.n = len(groups)

    def default_init(self) -> list[float]:
        base = self.model.rho * self.model.w0 / (1.0 - self.model.rho)
        return [c * base + (i + 1) * 1e-9 for i, c in enumerate(self.costs)]

    def gap(self, bids: list[float], i: int, x: float) -> float:
        ob = bids[:i] + bids[i + 1 :]
        ol = self.loads[:i] + self.loads[i + 1 :]
        obw = [b * l for b, l in zip(ob, ol)]
        return _foc_gap(
            ob, ol, obw, self.loads[i], self.costs[i],
            self.model.w0, self.model.rho, x,
        )

    def residual(self, bids: list[float]) -> float:
        return max(abs(self.gap(bids, i, bids[i])) for i in range(self.n))

    def expand(self, group_bids: Sequence[float]) -> tuple[float, ...]:
        out = [0.0] * self.model.n_classes
        for g, b in zip(self.groups, group_bids):
            for k in g:
                out[k] = b
        return tuple(out)


def _gauss_seidel(
    game: _PooledGame, bids: list[float], tol: float, max_iter: int
) -> tuple[list[float], list[float], bool]:
    """Cycle coordinate best responses until the FOC residual drops."""
    n = game.n
    trace: list[float] = []
    for _ in range(max_iter):
        for i in range(n):
            if i > 0:
                lo = bids[i - 1] * (1.0 + 1e-12)
            else:
                lo = 1e-12 * min(1.0, game.caps[0])
            if i < n - 1:
                hi = bids[i + 1] * (1.0 - 1e-12)
            else:
                hi = game.caps[-1]
            bids[i] = _bisect_response(
                lambda x: game.gap(bids, i, x), lo, hi
            )
        res = game.residual(bids)
        trace.append(res)
        if res < tol:
            return bids, trace, True
    return bids, trace, False


def solve_heterogeneous(
    model: Model,
    init: Optional[Sequence[float]] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 20_24,
) -> EquilibriumResult:
    """Solve the bidding game by cyclic best response with restarts.

    Restart 0 starts from ``init`` when given, otherwise from the
    solo-equilibrium guess b_i = C_i rho W0/(1-rho); further restarts
    perturb that guess log-uniformly (deterministic per seed). The
    reported solution is the lexicographically smallest converged bid
    vector; raises :class:`NoConvergenceError` (best iterate attached)
    when no restart converges.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    game = _PooledGame(model)
    if init is None:
        base_init = game.default_init()
    else:
        per_class = validate_bids(model, init)
        base_init = sorted(
            math.fsum(per_class[k] for k in g) / len(g) for g in game.groups
        )
        for idx in range(1, game.n):  # strict ascent for valid brackets
            if base_init[idx] <= base_init[idx - 1]:
                base_init[idx] = base_init[idx - 1] * (1.0 + 1e-12)
    runs = []
    n_runs = max(1, int(restarts))
    for r in range(n_runs):
        if r == 0:
            start = list(base_init)
        else:
            rng = np.random.default_rng(seed + r)
            factors = np.exp(rng.uniform(-math.log(4.0), math.log(4.0), game.n))
            start = sorted(float(b * f) for b, f in zip(game.default_init(), factors))
        bids, trace, ok = _gauss_seidel(game, start, tol, max_iter)
        runs.append((bids, trace, ok))

    converged = [(bids, trace) for bids, trace, ok in runs if ok]
    if converged:
        agreement = 0.0
        for a, _ in converged:
            for b, _ in converged:
                agreement = max(
                    agreement, max(abs(x - y) for x, y in zip(a, b))
                )
        bids, trace = min(converged, key=lambda item: item[0])
        return _build_result(model, game, bids, trace, True, agreement)
    bids, trace, _ = min(runs, key=lambda item: item[1][-1])
    raise NoConvergenceError(
        _build_result(model, game, bids, trace, False, math.inf)
    )


def _build_result(
    model: Model,
    game: _PooledGame,
    group_bids: list[float],
    trace: list[float],
    converged: bool,
    agreement: float,
) -> EquilibriumResult:
    bids = tuple(float(b) for b in game.expand(group_bids))
    waits = waiting_times(model, bids)
    totals = tuple(
        c.waiting_cost * w + b
        for c, w, b in zip(model.classes, waits, bids)
    )
    return EquilibriumResult(
        bids=bids,
        waits=tuple(float(w) for w in waits),
        total_costs=totals,
        residual=trace[-1] if trace else math.inf,
        iterations=len(trace),
        converged=converged,
        multistart_agreement=agreement,
        trace=tuple(trace),
    )
