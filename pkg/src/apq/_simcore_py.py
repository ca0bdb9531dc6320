"""Pure-Python event-loop kernel; reference for the compiled twin.

The compiled module ``_simcore`` implements the exact same algorithm and
random-number stream, so both backends produce bitwise-identical results
for the same arguments. Keep the two in lock-step: every change to the
draw order or the floating-point expressions here must be mirrored there.

Random numbers come from xoshiro256++ seeded through splitmix64; uniform
doubles use the top 53 bits. Waiting customers sit in per-slope FCFS
lanes: two customers on the same slope never swap order, and the order
between two lanes can change over time, so the server selection scans
only the lane heads at each service start.
"""
from __future__ import annotations

import math
from collections import deque

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF

SVC_DET = 0
SVC_EXP = 1
SVC_ERLANG = 2
SVC_HYPER2 = 3


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, (z ^ (z >> 31)) & _MASK


class _Xoshiro256pp:
    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed: int):
        state = seed & _MASK
        state, self.s0 = _splitmix64(state)
        state, self.s1 = _splitmix64(state)
        state, self.s2 = _splitmix64(state)
        state, self.s3 = _splitmix64(state)

    def uniform(self) -> float:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        tmp = (s0 + s3) & _MASK
        result = (((tmp << 23) | (tmp >> 41)) + s0) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return (result >> 11) * 1.1102230246251565e-16  # 2**-53


def run_core(
    seed: int,
    n_serve: int,
    warmup: int,
    n_batches: int,
    lam_total: float,
    tagged_prob: float,
    class_cum,        # cumulative arrival probabilities, regular classes
    atom_offset,      # per class, start index into atom arrays
    atom_cum,         # within-class cumulative atom probabilities
    atom_lane,        # lane index per atom
    svc_kind,
    svc_p1,
    svc_p2,
    svc_p3,
    tagged_lane: int,
    lane_bids,
) -> dict:
    rng = _Xoshiro256pp(seed)
    # plain Python lists beat numpy scalar indexing in this loop
    class_cum = [float(x) for x in class_cum]
    atom_offset = [int(x) for x in atom_offset]
    atom_cum = [float(x) for x in atom_cum]
    atom_lane = [int(x) for x in atom_lane]
    svc_kind = [int(x) for x in svc_kind]
    svc_p1 = [float(x) for x in svc_p1]
    svc_p2 = [float(x) for x in svc_p2]
    svc_p3 = [float(x) for x in svc_p3]
    lane_bids = [float(x) for x in lane_bids]
    n_cls = len(class_cum)
    n_lanes = len(lane_bids)
    tagged_marker = n_cls

    def draw_service(cls: int) -> float:
        kind = svc_kind[cls]
        if kind == SVC_DET:
            return svc_p1[cls]
        if kind == SVC_EXP:
            return -svc_p1[cls] * math.log(1.0 - rng.uniform())
        if kind == SVC_ERLANG:
            total = 0.0
            for _ in range(int(svc_p3[cls])):
                total -= math.log(1.0 - rng.uniform())
            return svc_p1[cls] * total
        if rng.uniform() < svc_p1[cls]:
            return -svc_p2[cls] * math.log(1.0 - rng.uniform())
        return -svc_p3[cls] * math.log(1.0 - rng.uniform())

    def draw_class() -> int:
        u = rng.uniform()
        for c in range(n_cls - 1):
            if u < class_cum[c]:
                return c
        return n_cls - 1

    lanes = [deque() for _ in range(n_lanes)]
    waiting = 0

    cls_count = [0] * n_cls
    cls_sum = [0.0] * n_cls
    cls_sumsq = [0.0] * n_cls
    batch_sum = [[0.0] * n_batches for _ in range(n_cls)]
    batch_cnt = [[0] * n_batches for _ in range(n_cls)]
    tag_count = 0
    tag_sum = 0.0
    tag_sumsq = 0.0
    tag_batch_sum = [0.0] * n_batches
    tag_batch_cnt = [0] * n_batches
    arrivals = [0] * (n_cls + 1)

    t = 0.0
    inv_lam = 1.0 / lam_total
    next_arrival = -inv_lam * math.log(1.0 - rng.uniform())
    busy = False
    busy_until = 0.0
    busy_time = 0.0
    served = 0      # regular service starts, warmup included
    rec = 0         # regular records after warmup
    stop_at = warmup + n_serve

    def start_service(now: float):
        nonlocal waiting, busy, busy_until, busy_time, served, rec
        nonlocal tag_count, tag_sum, tag_sumsq
        best_lane = -1
        best_prio = -1.0
        best_arr = 0.0
        best_cls = 0
        for l in range(n_lanes):
            q = lanes[l]
            if not q:
                continue
            arr, cls = q[0]
            prio = lane_bids[l] * (now - arr)
            if (
                best_lane < 0
                or prio > best_prio
                or (prio == best_prio and (arr < best_arr
                    or (arr == best_arr and cls < best_cls)))
            ):
                best_lane, best_prio, best_arr, best_cls = l, prio, arr, cls
        arr, cls = lanes[best_lane].popleft()
        waiting -= 1
        wait = now - arr
        if cls == tagged_marker:
            if served >= warmup:
                b = rec * n_batches // n_serve
                if b >= n_batches:
                    b = n_batches - 1
                tag_count += 1
                tag_sum += wait
                tag_sumsq += wait * wait
                tag_batch_sum[b] += wait
                tag_batch_cnt[b] += 1
            svc_cls = draw_class()
        else:
            if served >= warmup:
                b = rec * n_batches // n_serve
                if b >= n_batches:
                    b = n_batches - 1
                cls_count[cls] += 1
                cls_sum[cls] += wait
                cls_sumsq[cls] += wait * wait
                batch_sum[cls][b] += wait
                batch_cnt[cls][b] += 1
                rec += 1
            served += 1
            svc_cls = cls
        svc = draw_service(svc_cls)
        busy = True
        busy_until = now + svc
        busy_time += svc

    while served < stop_at:
        if busy and busy_until <= next_arrival:
            t = busy_until
            busy = False
            if waiting:
                start_service(t)
        else:
            t = next_arrival
            next_arrival = t - inv_lam * math.log(1.0 - rng.uniform())
            if tagged_prob > 0.0 and rng.uniform() < tagged_prob:
                cls = tagged_marker
                lane = tagged_lane
            else:
                cls = draw_class()
                lo = atom_offset[cls]
                hi = atom_offset[cls + 1]
                if hi - lo == 1:
                    lane = atom_lane[lo]
                else:
                    u = rng.uniform()
                    lane = atom_lane[hi - 1]
                    for j in range(lo, hi - 1):
                        if u < atom_cum[j]:
                            lane = atom_lane[j]
                            break
            arrivals[cls] += 1
            lanes[lane].append((t, cls))
            waiting += 1
            if not busy:
                start_service(t)

    return {
        "cls_count": np.array(cls_count, dtype=np.int64),
        "cls_sum": np.array(cls_sum),
        "cls_sumsq": np.array(cls_sumsq),
        "batch_sum": np.array(batch_sum),
        "batch_cnt": np.array(batch_cnt, dtype=np.int64),
        "tag_count": tag_count,
        "tag_sum": tag_sum,
        "tag_sumsq": tag_sumsq,
        "tag_batch_sum": np.array(tag_batch_sum),
        "tag_batch_cnt": np.array(tag_batch_cnt, dtype=np.int64),
        "arrivals": np.array(arrivals, dtype=np.int64),
        "busy_time": busy_time,
        "end_time": t,
    }
