"""Closed-form waiting times under linear accumulating priorities.

With classes sorted so their priority slopes ascend, b_1 < ... < b_L, the
stationary queueing delays solve the triangular recursion

    W_l = ( W0/(1-rho) - sum_{k<l} rho_k (1 - b_k/b_l) W_k )
          / ( 1 - sum_{k>l} rho_k (1 - b_l/b_k) ),

and a zero-measure customer accumulating at slope a waits

    W(a) = ( W0/(1-rho) - sum_{b_k < a} rho_k (1 - b_k/a) W_k )
           / ( 1 - sum_{b_k >= a} rho_k (1 - a/b_k) ),

which is continuous, strictly decreasing and strictly convex in a. Its
derivative, obtained by differentiating W(a) directly, is

    W'(a) = - ( sum_{b_k < a} rho_k b_k W_k / a^2  +  W(a) sum_{b_k >= a} rho_k / b_k )
            / ( 1 - sum_{b_k >= a} rho_k (1 - a/b_k) ),

with the two one-sided limits agreeing at every atom (for b_k = a the atom
term takes the same value on either side of the split). Classes bidding
the same slope are merged into one priority level: their mutual
cross-terms vanish and they share a common delay.

Finite atom mixtures reduce to the same machinery: every atom becomes a
level carrying load rho_i * p_ij, levels with equal slopes merge, and the
recursion above yields the per-atom delays that the tagged-customer
formula is then evaluated against.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .model import (
    InvalidMixtureError,
    Model,
    NonPositiveBidError,
    validate_bids,
    validate_mixture,
)

__all__ = [
    "waiting_times",
    "tagged_waiting",
    "tagged_waiting_mixed",
    "tagged_waiting_derivative",
    "conservation_residual",
]


def merge_levels(
    bids: Sequence[float], loads: Sequence[float]
) -> tuple[list[float], list[float], list[int]]:
    """Distinct ascending slopes with summed loads.

    Returns (level_bids, level_loads, index_of_level_for_each_input).
    """
    order = sorted(range(len(bids)), key=lambda k: bids[k])
    level_bids: list[float] = []
    level_loads: list[float] = []
    level_of = [0] * len(bids)
    for k in order:
        if level_bids and bids[k] == level_bids[-1]:
            level_loads[-1] += loads[k]
        else:
            level_bids.append(bids[k])
            level_loads.append(loads[k])
        level_of[k] = len(level_bids) - 1
    return level_bids, level_loads, level_of


def level_waits(w0: float, rho: float, level_bids, level_loads) -> list[float]:
    """Forward-substitute the delay recursion over ascending levels."""
    L = len(level_bids)
    base = w0 / (1.0 - rho)
    W: list[float] = []
    for l in range(L):
        bl = level_bids[l]
        num = base
        for k in range(l):
            num -= level_loads[k] * (1.0 - level_bids[k] / bl) * W[k]
        den = 1.0
        for k in range(l + 1, L):
            den -= level_loads[k] * (1.0 - bl / level_bids[k])
        W.append(num / den)
    return W


def tagged_value(w0, rho, level_bids, level_loads, waits, a: float) -> float:
    """Delay of a zero-measure customer with slope a against fixed levels."""
    num = w0 / (1.0 - rho)
    den = 1.0
    for bk, lk, wk in zip(level_bids, level_loads, waits):
        if bk < a:
            num -= lk * (1.0 - bk / a) * wk
        else:
            den -= lk * (1.0 - a / bk)
    return num / den


def tagged_slope(w0, rho, level_bids, level_loads, waits, a: float) -> float:
    """d/da of :func:`tagged_value`; atoms at a use the common limit."""
    wa = tagged_value(w0, rho, level_bids, level_loads, waits, a)
    num = 0.0
    den = 1.0
    for bk, lk, wk in zip(level_bids, level_loads, waits):
        if bk < a:
            num += lk * bk * wk / (a * a)
        else:
            num += wa * lk / bk
            den -= lk * (1.0 - a / bk)
    return -num / den


def waiting_times(model: Model, bids: Sequence[float]) -> np.ndarray:
    """Per-class expected queueing delays (service excluded), user order.

    Classes need not arrive sorted; ties share one priority level. With
    all bids equal this reduces to the FCFS delay W0/(1-rho) everywhere.
    """
    bids = validate_bids(model, bids)
    lb, ll, level_of = merge_levels(bids, model.rho_i)
    W = level_waits(model.w0, model.rho, lb, ll)
    return np.array([W[level_of[i]] for i in range(model.n_classes)])


def tagged_waiting(model: Model, bids: Sequence[float], a: float) -> float:
    """Expected delay of one extra zero-measure customer with slope a."""
    if not (a > 0 and math.isfinite(a)):
        raise NonPositiveBidError(f"tagged bid must be positive, got {a}")
    bids = validate_bids(model, bids)
    lb, ll, _ = merge_levels(bids, model.rho_i)
    W = level_waits(model.w0, model.rho, lb, ll)
    return tagged_value(model.w0, model.rho, lb, ll, W, a)


def tagged_waiting_derivative(model: Model, bids: Sequence[float], a: float) -> float:
    """d/da of :func:`tagged_waiting`; strictly negative."""
    if not (a > 0 and math.isfinite(a)):
        raise NonPositiveBidError(f"tagged bid must be positive, got {a}")
    bids = validate_bids(model, bids)
    lb, ll, _ = merge_levels(bids, model.rho_i)
    W = level_waits(model.w0, model.rho, lb, ll)
    return tagged_slope(model.w0, model.rho, lb, ll, W, a)


def mixture_levels(model: Model, profile) -> tuple[list[float], list[float]]:
    """Flatten a finite atom profile into merged (slope, load) levels."""
    profile = validate_mixture(model, profile)
    bids: list[float] = []
    loads: list[float] = []
    for rho_i, atoms in zip(model.rho_i, profile):
        for b, p in atoms:
            if p == 0.0:
                continue
            bids.append(b)
            loads.append(rho_i * p)
    lb, ll, _ = merge_levels(bids, loads)
    return lb, ll


def tagged_waiting_mixed(model: Model, profile, a: float) -> float:
    """Tagged delay when each class draws its slope from a finite mixture.

    One-atom-per-class profiles reproduce :func:`tagged_waiting` exactly.
    """
    if not (a > 0 and math.isfinite(a)):
        raise InvalidMixtureError(f"tagged bid must be positive, got {a}")
    lb, ll = mixture_levels(model, profile)
    W = level_waits(model.w0, model.rho, lb, ll)
    return tagged_value(model.w0, model.rho, lb, ll, W, a)


def mixed_atom_waits(model: Model, profile) -> dict[float, float]:
    """Expected delay at every distinct atom slope of a mixture profile."""
    lb, ll = mixture_levels(model, profile)
    W = level_waits(model.w0, model.rho, lb, ll)
    return dict(zip(lb, W))


def conservation_residual(model: Model, waits: Sequence[float]) -> float:
    """Relative error of sum(rho_i W_i) against rho W0/(1-rho).

    The weighted delay sum is invariant across non-idling disciplines;
    every wait vector produced by this package satisfies it.
    """
    lhs = math.fsum(r * w for r, w in zip(model.rho_i, waits))
    rhs = model.rho * model.w0 / (1.0 - model.rho)
    return abs(lhs - rhs) / rhs
