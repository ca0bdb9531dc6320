"""Social-cost accounting and the absolute-priority benchmark.

The planner's objective is the aggregate waiting cost rate
sum_i lambda_i C_i W_i. Its optimum over work-conserving regimes is the
c-mu rule: serve by absolute (non-preemptive) priority in decreasing
C_i / m1_i. With classes relabeled so class 1 has the highest priority,

    W_k = W0 / ((1 - s_{k-1}) (1 - s_k)),   s_k = rho_1 + ... + rho_k.

Inside the accumulating-priority family, absolute priority is the limit
of geometrically scaled slopes beta^(n * rank): the ratio of adjacent
slopes diverges with n, so overtaking across ranks dies out.

Charging each customer x * b after a service of length x turns the game
cost into C_i W + m1_i b, i.e. the original game with cost C_i / m1_i,
which realigns the equilibrium bid order with the c-mu order. Payments
are transfers to the operator, so they stay out of social cost; ratios
here compare waiting costs only.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .analytics import waiting_times
from .equilibrium import EquilibriumResult, solve_heterogeneous
from .model import ClassSpec, Model, build_model, validate_bids

__all__ = [
    "InvalidScaleError",
    "WelfareReport",
    "social_cost",
    "cmu_order",
    "absolute_priority_waits",
    "scaled_bids",
    "pricing_transform",
    "pricing_total_costs",
    "welfare_report",
]


class InvalidScaleError(ValueError):
    pass


@dataclass(frozen=True)
class WelfareReport:
    """Waiting-cost rates of three regimes and the efficiency ratios."""

    cost_equilibrium: float
    cost_pricing: float
    cost_optimal: float
    ratio_no_pricing: float
    ratio_pricing: float
    equilibrium: EquilibriumResult
    pricing_equilibrium: EquilibriumResult
    priority_order: tuple[int, ...]


def social_cost(model: Model, bids: Sequence[float]) -> float:
    """Aggregate waiting-cost rate sum_i lambda_i C_i W_i at given bids."""
    W = waiting_times(model, bids)
    return float(
        math.fsum(
            c.arrival_rate * c.waiting_cost * w
            for c, w in zip(model.classes, W)
        )
    )


def cmu_order(model: Model) -> tuple[int, ...]:
    """Class indices sorted by C_i / m1_i ascending (first = lowest
    priority). Ties keep class-index order; tied ratios give the same
    social cost either way. Compared by cross-multiplication so exact
    ties are not broken by rounding noise (relative tolerance 1e-12 on
    the cross products C_i m1_j vs C_j m1_i)."""
    costs = [c.waiting_cost for c in model.classes]
    means = [c.service.moment1() for c in model.classes]

    def compare(i: int, j: int) -> int:
        lhs, rhs = costs[i] * means[j], costs[j] * means[i]
        if abs(lhs - rhs) > 1e-12 * max(abs(lhs), abs(rhs)):
            return -1 if lhs < rhs else 1
        return -1 if i < j else 1

    return tuple(
        sorted(range(model.n_classes), key=functools.cmp_to_key(compare))
    )


def absolute_priority_waits(
    model: Model, order: Sequence[int]
) -> np.ndarray:
    """Non-preemptive fixed-priority delays, returned in class order.

    ``order`` lists classes from lowest to highest priority.
    """
    order = list(order)
    if sorted(order) != list(range(model.n_classes)):
        raise ValueError(f"not a permutation of 0..{model.n_classes - 1}: {order}")
    W = np.empty(model.n_classes)
    sigma = 0.0
    for cls in reversed(order):  # highest priority first
        prev = sigma
        sigma += model.rho_i[cls]
        W[cls] = model.w0 / ((1.0 - prev) * (1.0 - sigma))
    return W


def scaled_bids(
    order: Sequence[int], beta: float, n: int
) -> np.ndarray:
    """Slopes beta^(n * rank) with rank 1 for the lowest-priority class.

    For beta > 1 the adjacent-slope ratios grow like beta^n, so the
    induced delays approach :func:`absolute_priority_waits` as n grows.
    """
    if not beta > 1.0:
        raise InvalidScaleError(f"beta must exceed 1, got {beta}")
    if n < 1 or n != int(n):
        raise InvalidScaleError(f"n must be a positive integer, got {n}")
    order = list(order)
    bids = np.empty(len(order))
    try:
        for rank, cls in enumerate(order, start=1):
            bids[cls] = beta ** (n * rank)
    except OverflowError:
        bids[cls] = math.inf
    if not np.all(np.isfinite(bids)):
        raise InvalidScaleError(
            f"beta^(n*rank) overflows for beta={beta}, n={n}, N={len(order)}"
        )
    return bids


def pricing_transform(model: Model) -> Model:
    """The game induced by charging x*b after a service of length x:
    identical classes with waiting cost C_i / m1_i."""
    return build_model(
        ClassSpec(c.arrival_rate, c.service, c.waiting_cost / c.service.moment1())
        for c in model.classes
    )


def pricing_total_costs(model: Model, bids: Sequence[float]) -> np.ndarray:
    """Per-customer money outlay under service-time pricing:
    C_i W_i plus the expected payment m1_i b_i."""
    bids = validate_bids(model, bids)
    W = waiting_times(model, bids)
    return np.array(
        [
            c.waiting_cost * w + c.service.moment1() * b
            for c, w, b in zip(model.classes, W, bids)
        ]
    )


def welfare_report(model: Model, tol: float = 1e-8, restarts: int = 5) -> WelfareReport:
    """Equilibrium vs pricing-equilibrium vs absolute-priority benchmark.

    Both ratios are >= 1 up to numerical noise: the c-mu regime minimizes
    the aggregate waiting cost among the compared disciplines.
    """
    eq = solve_heterogeneous(model, tol=tol, restarts=restarts)
    cost_eq = social_cost(model, eq.bids)
    priced = solve_heterogeneous(pricing_transform(model), tol=tol, restarts=restarts)
    cost_priced = social_cost(model, priced.bids)
    order = cmu_order(model)
    W_opt = absolute_priority_waits(model, order)
    cost_opt = float(
        math.fsum(
            c.arrival_rate * c.waiting_cost * w
            for c, w in zip(model.classes, W_opt)
        )
    )
    return WelfareReport(
        cost_equilibrium=cost_eq,
        cost_pricing=cost_priced,
        cost_optimal=cost_opt,
        ratio_no_pricing=cost_eq / cost_opt,
        ratio_pricing=cost_priced / cost_opt,
        equilibrium=eq,
        pricing_equilibrium=priced,
        priority_order=order,
    )
