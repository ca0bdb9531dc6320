"""Discrete-event oracle for the non-preemptive accumulating-priority queue.

Arrivals form a superposed Poisson stream; each customer's priority grows
linearly with waited time at their slope. Whenever the server frees (or an
arrival finds it idle), the waiting customer with the highest accumulated
slope * waited-time product starts service and is never preempted. Ties go
to the earlier arrival, then to the lower class index.

Runs are deterministic given the seed: an identical :class:`SimConfig`
produces bitwise-identical :class:`SimStats`, regardless of backend. The
compiled kernel is preferred at import; the pure-Python twin is selected
when the extension is unavailable (``python -m apq.benchmark`` compares
the two).

Confidence intervals use batch means over contiguous slices of the
post-warm-up serving horizon; waits within one run are autocorrelated, so
per-sample variance alone would understate the error.

A measure-zero probe ("tagged" stream) can be attached to estimate the
delay of a bid that no class uses: an independent thinned Poisson stream
(rate at most 1e-3 of the total) whose customers bid a fixed slope, are
excluded from the regular per-class statistics, and add at most 0.1% load.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats as _sps

from .model import (
    DETERMINISTIC,
    ERLANG,
    EXPONENTIAL,
    HYPEREXP2,
    Model,
    UnstableError,
    validate_bids,
    validate_mixture,
)

try:  # compiled kernel, falls back to the pure-Python twin
    from . import _simcore as _kernel_cython
except ImportError:  # pragma: no cover - build environment dependent
    _kernel_cython = None
from . import _simcore_py as _kernel_python

DEFAULT_BACKEND = "cython" if _kernel_cython is not None else "python"

__all__ = [
    "SimConfig",
    "SimStats",
    "ClassStats",
    "TaggedProbe",
    "WaitingCustomer",
    "EmptyQueueError",
    "InvalidConfigError",
    "simulate",
    "next_in_queue",
    "overtaking_demo",
    "backend_name",
]

MAX_THINNING = 1e-3


class InvalidConfigError(ValueError):
    pass


class EmptyQueueError(ValueError):
    pass


def backend_name() -> str:
    return DEFAULT_BACKEND


@dataclass(frozen=True)
class TaggedProbe:
    """Probe stream definition: fixed bid, arrival rate = thinning * lambda."""

    bid: float
    thinning: float = 1e-3


@dataclass(frozen=True)
class SimConfig:
    model: Model
    bids: Optional[tuple[float, ...]] = None
    mixture: Optional[tuple] = None
    customers: int = 1_000_000
    warmup: int = 100_000
    seed: int = 1
    tagged: Optional[TaggedProbe] = None
    batches: int = 32


@dataclass(frozen=True)
class ClassStats:
    count: int
    mean: float
    variance: float
    ci99: float
    batch_means: tuple[float, ...] = ()


@dataclass(frozen=True)
class SimStats:
    per_class: tuple[ClassStats, ...]
    tagged: Optional[ClassStats]
    utilization: float
    total_time: float
    arrivals: tuple[int, ...]
    backend: str


@dataclass(frozen=True)
class WaitingCustomer:
    bid: float
    arrival_time: float
    class_index: int

    def priority(self, now: float) -> float:
        return self.bid * (now - self.arrival_time)


def next_in_queue(queue: Sequence[WaitingCustomer], now: float) -> WaitingCustomer:
    """Customer the server admits at time ``now``: the largest accumulated
    priority, ties to the earlier arrival, then the lower class index."""
    if not queue:
        raise EmptyQueueError("no waiting customers")
    best = None
    best_key = None
    for c in queue:
        key = (-c.priority(now), c.arrival_time, c.class_index)
        if best is None or key < best_key:
            best, best_key = c, key
    return best


def overtaking_demo(times: Sequence[float] = (0.5, 1.5, 2.0, 2.5, 3.0)):
    """Two-customer priority race: slope 0.5 arriving at t=0 versus slope
    1.0 arriving at t=1. The lines cross at t=2; afterwards the late
    arrival leads. Returns rows (t, priority_1, priority_2, chosen)."""
    c1 = WaitingCustomer(0.5, 0.0, 0)
    c2 = WaitingCustomer(1.0, 1.0, 1)
    rows = []
    for t in times:
        queue = [c1, c2] if t >= 1.0 else [c1]
        chosen = next_in_queue(queue, t)
        p2 = c2.priority(t) if t >= 1.0 else float("nan")
        rows.append((t, c1.priority(t), p2, chosen.class_index))
    return rows


_SVC_CODE = {DETERMINISTIC: 0, EXPONENTIAL: 1, ERLANG: 2, HYPEREXP2: 3}


def _service_arrays(model: Model):
    kind = np.zeros(model.n_classes, dtype=np.int64)
    p1 = np.zeros(model.n_classes)
    p2 = np.zeros(model.n_classes)
    p3 = np.zeros(model.n_classes)
    for i, c in enumerate(model.classes):
        s = c.service
        if not s.samplable:
            raise InvalidConfigError(
                f"class {i}: service family {s.family!r} provides moments only "
                "and cannot be sampled"
            )
        kind[i] = _SVC_CODE[s.family]
        if s.family == ERLANG:
            p1[i] = s.mean / s.k
            p3[i] = float(s.k)
        elif s.family == HYPEREXP2:
            p, m1, m2 = s.hyperexp2_params()
            p1[i], p2[i], p3[i] = p, m1, m2
        else:
            p1[i] = s.mean
    return kind, p1, p2, p3


def _stats_from_batches(count, total, sumsq, bsum, bcnt, n_batches) -> ClassStats:
    if count == 0:
        return ClassStats(0, math.nan, math.nan, math.nan)
    mean = total / count
    variance = (sumsq - total * total / count) / (count - 1) if count > 1 else math.nan
    per_batch = tuple(
        bsum[j] / bcnt[j] if bcnt[j] > 0 else math.nan for j in range(n_batches)
    )
    means = [m for m in per_batch if not math.isnan(m)]
    if len(means) < 2:
        return ClassStats(int(count), mean, variance, math.nan, per_batch)
    nb = len(means)
    bv = float(np.var(means, ddof=1))
    tq = float(_sps.t.ppf(0.995, nb - 1))
    return ClassStats(int(count), mean, variance, tq * math.sqrt(bv / nb), per_batch)


def simulate(config: SimConfig, backend: Optional[str] = None) -> SimStats:
    """Run the event loop and return per-class sample statistics.

    Waits exclude service. The first ``warmup`` served regular customers
    are discarded; the run stops once ``customers`` more have entered
    service. Tagged probes never count toward either number.
    """
    model = config.model
    if model.rho >= 1.0:
        raise UnstableError(model.rho)
    if config.customers < 1:
        raise InvalidConfigError("customers must be >= 1")
    if config.warmup < 0:
        raise InvalidConfigError("warmup must be >= 0")
    if config.batches < 20:
        raise InvalidConfigError("need at least 20 batches for the CI")
    if (config.bids is None) == (config.mixture is None):
        raise InvalidConfigError("provide exactly one of bids or mixture")

    if config.bids is not None:
        bids = validate_bids(model, config.bids)
        profile = tuple(((b, 1.0),) for b in bids)
    else:
        profile = validate_mixture(model, config.mixture)

    lam = math.fsum(model.arrival_rates)
    tagged_bid = -1.0
    tagged_rate = 0.0
    if config.tagged is not None:
        if not (config.tagged.bid > 0 and math.isfinite(config.tagged.bid)):
            raise InvalidConfigError("tagged bid must be positive")
        if not (0.0 < config.tagged.thinning <= MAX_THINNING):
            raise InvalidConfigError(
                f"tagged thinning must be in (0, {MAX_THINNING}]"
            )
        tagged_bid = config.tagged.bid
        tagged_rate = config.tagged.thinning * lam

    lane_values = sorted(
        {b for atoms in profile for b, _ in atoms}
        | ({tagged_bid} if tagged_rate > 0 else set())
    )
    lane_index = {b: i for i, b in enumerate(lane_values)}

    offsets = [0]
    atom_cum = []
    atom_lane = []
    for atoms in profile:
        acc = 0.0
        for b, p in atoms:
            acc += p
            atom_cum.append(acc)
            atom_lane.append(lane_index[b])
        offsets.append(len(atom_cum))

    class_cum = np.cumsum([r / lam for r in model.arrival_rates])
    kind, p1, p2, p3 = _service_arrays(model)
    lam_total = lam + tagged_rate

    chosen = backend or DEFAULT_BACKEND
    if chosen == "cython":
        if _kernel_cython is None:
            raise InvalidConfigError("compiled kernel not available")
        kernel = _kernel_cython
    elif chosen == "python":
        kernel = _kernel_python
    else:
        raise InvalidConfigError(f"unknown backend {chosen!r}")

    raw = kernel.run_core(
        config.seed & 0xFFFFFFFFFFFFFFFF,
        config.customers,
        config.warmup,
        config.batches,
        lam_total,
        tagged_rate / lam_total if tagged_rate > 0 else 0.0,
        np.ascontiguousarray(class_cum),
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(atom_cum) if atom_cum else np.zeros(0),
        np.ascontiguousarray(atom_lane, dtype=np.int64),
        kind, p1, p2, p3,
        lane_index.get(tagged_bid, -1),
        np.ascontiguousarray(lane_values),
    )

    per_class = tuple(
        _stats_from_batches(
            raw["cls_count"][i],
            raw["cls_sum"][i],
            raw["cls_sumsq"][i],
            raw["batch_sum"][i],
            raw["batch_cnt"][i],
            config.batches,
        )
        for i in range(model.n_classes)
    )
    tagged_stats = None
    if tagged_rate > 0:
        tagged_stats = _stats_from_batches(
            raw["tag_count"],
            raw["tag_sum"],
            raw["tag_sumsq"],
            raw["tag_batch_sum"],
            raw["tag_batch_cnt"],
            config.batches,
        )
    return SimStats(
        per_class=per_class,
        tagged=tagged_stats,
        utilization=raw["busy_time"] / raw["end_time"],
        total_time=raw["end_time"],
        arrivals=tuple(int(x) for x in raw["arrivals"]),
        backend=chosen,
    )
