# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled event-loop kernel; twin of ``_simcore_py``.

Same algorithm, same xoshiro256++ stream, same floating-point expression
order, so results are bitwise identical to the pure-Python kernel. Any
change in the draw order there must be mirrored here.
"""
from libc.math cimport log
from libc.stdlib cimport free, malloc, realloc

import numpy as np


ctypedef unsigned long long u64

cdef enum:
    SVC_DET = 0
    SVC_EXP = 1
    SVC_ERLANG = 2
    SVC_HYPER2 = 3

cdef double INV53 = 1.1102230246251565e-16  # 2**-53


cdef inline u64 _splitmix64(u64* state) nogil:
    state[0] += <u64>0x9E3779B97F4A7C15
    cdef u64 z = state[0]
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef struct Rng:
    u64 s0, s1, s2, s3


cdef inline void _rng_seed(Rng* r, u64 seed) nogil:
    cdef u64 state = seed
    r.s0 = _splitmix64(&state)
    r.s1 = _splitmix64(&state)
    r.s2 = _splitmix64(&state)
    r.s3 = _splitmix64(&state)


cdef inline double _uniform(Rng* r) nogil:
    cdef u64 tmp = r.s0 + r.s3
    cdef u64 result = ((tmp << 23) | (tmp >> 41)) + r.s0
    cdef u64 t = r.s1 << 17
    r.s2 ^= r.s0
    r.s3 ^= r.s1
    r.s1 ^= r.s2
    r.s0 ^= r.s3
    r.s2 ^= t
    r.s3 = (r.s3 << 45) | (r.s3 >> 19)
    return <double>(result >> 11) * INV53


cdef struct Lane:
    double* arr
    long long* cls
    long head
    long count
    long cap


cdef inline int _lane_push(Lane* q, double arrival, long long cls) except -1 nogil:
    cdef long idx, i, src
    cdef double* narr
    cdef long long* ncls
    if q.count == q.cap:
        narr = <double*>malloc(2 * q.cap * sizeof(double))
        ncls = <long long*>malloc(2 * q.cap * sizeof(long long))
        if narr == NULL or ncls == NULL:
            with gil:
                raise MemoryError()
        for i in range(q.count):
            src = (q.head + i) % q.cap
            narr[i] = q.arr[src]
            ncls[i] = q.cls[src]
        free(q.arr)
        free(q.cls)
        q.arr = narr
        q.cls = ncls
        q.head = 0
        q.cap = 2 * q.cap
    idx = (q.head + q.count) % q.cap
    q.arr[idx] = arrival
    q.cls[idx] = cls
    q.count += 1
    return 0


def run_core(
    unsigned long long seed,
    long long n_serve,
    long long warmup,
    long n_batches,
    double lam_total,
    double tagged_prob,
    double[::1] class_cum,
    long long[::1] atom_offset,
    double[::1] atom_cum,
    long long[::1] atom_lane,
    long long[::1] svc_kind,
    double[::1] svc_p1,
    double[::1] svc_p2,
    double[::1] svc_p3,
    long tagged_lane,
    double[::1] lane_bids,
):
    cdef Rng rng
    _rng_seed(&rng, seed)
    cdef long n_cls = class_cum.shape[0]
    cdef long n_lanes = lane_bids.shape[0]
    cdef long long tagged_marker = n_cls

    cdef Lane* lanes = <Lane*>malloc(n_lanes * sizeof(Lane))
    if lanes == NULL:
        raise MemoryError()
    cdef long l
    for l in range(n_lanes):
        lanes[l].cap = 64
        lanes[l].head = 0
        lanes[l].count = 0
        lanes[l].arr = <double*>malloc(64 * sizeof(double))
        lanes[l].cls = <long long*>malloc(64 * sizeof(long long))
        if lanes[l].arr == NULL or lanes[l].cls == NULL:
            raise MemoryError()

    cls_count_np = np.zeros(n_cls, dtype=np.int64)
    cls_sum_np = np.zeros(n_cls)
    cls_sumsq_np = np.zeros(n_cls)
    batch_sum_np = np.zeros((n_cls, n_batches))
    batch_cnt_np = np.zeros((n_cls, n_batches), dtype=np.int64)
    tag_batch_sum_np = np.zeros(n_batches)
    tag_batch_cnt_np = np.zeros(n_batches, dtype=np.int64)
    arrivals_np = np.zeros(n_cls + 1, dtype=np.int64)
    cdef long long[::1] cls_count = cls_count_np
    cdef double[::1] cls_sum = cls_sum_np
    cdef double[::1] cls_sumsq = cls_sumsq_np
    cdef double[:, ::1] batch_sum = batch_sum_np
    cdef long long[:, ::1] batch_cnt = batch_cnt_np
    cdef double[::1] tag_batch_sum = tag_batch_sum_np
    cdef long long[::1] tag_batch_cnt = tag_batch_cnt_np
    cdef long long[::1] arrivals = arrivals_np

    cdef long long tag_count = 0
    cdef double tag_sum = 0.0
    cdef double tag_sumsq = 0.0

    cdef double t = 0.0
    cdef double inv_lam = 1.0 / lam_total
    cdef double next_arrival = -inv_lam * log(1.0 - _uniform(&rng))
    cdef bint busy = 0
    cdef double busy_until = 0.0
    cdef double busy_time = 0.0
    cdef long long served = 0
    cdef long long rec = 0
    cdef long long stop_at = warmup + n_serve
    cdef long waiting = 0

    cdef long long cls, svc_cls, b
    cdef long lane, best_lane, j, k
    cdef long lo_idx, hi_idx
    cdef double u, arr, prio, wait, svc, total
    cdef double best_prio, best_arr
    cdef long long best_cls
    cdef long long kind

    try:
        while served < stop_at:
            if busy and busy_until <= next_arrival:
                t = busy_until
                busy = 0
                if waiting == 0:
                    continue
            else:
                t = next_arrival
                next_arrival = t - inv_lam * log(1.0 - _uniform(&rng))
                if tagged_prob > 0.0 and _uniform(&rng) < tagged_prob:
                    cls = tagged_marker
                    lane = tagged_lane
                else:
                    u = _uniform(&rng)
                    cls = n_cls - 1
                    for k in range(n_cls - 1):
                        if u < class_cum[k]:
                            cls = k
                            break
                    lo_idx = <long>atom_offset[cls]
                    hi_idx = <long>atom_offset[cls + 1]
                    if hi_idx - lo_idx == 1:
                        lane = <long>atom_lane[lo_idx]
                    else:
                        u = _uniform(&rng)
                        lane = <long>atom_lane[hi_idx - 1]
                        for j in range(lo_idx, hi_idx - 1):
                            if u < atom_cum[j]:
                                lane = <long>atom_lane[j]
                                break
                arrivals[cls] += 1
                _lane_push(&lanes[lane], t, cls)
                waiting += 1
                if busy:
                    continue
            # start service at time t
            best_lane = -1
            best_prio = -1.0
            best_arr = 0.0
            best_cls = 0
            for l in range(n_lanes):
                if lanes[l].count == 0:
                    continue
                arr = lanes[l].arr[lanes[l].head]
                cls = lanes[l].cls[lanes[l].head]
                prio = lane_bids[l] * (t - arr)
                if (
                    best_lane < 0
                    or prio > best_prio
                    or (prio == best_prio and (arr < best_arr
                        or (arr == best_arr and cls < best_cls)))
                ):
                    best_lane = l
                    best_prio = prio
                    best_arr = arr
                    best_cls = cls
            arr = lanes[best_lane].arr[lanes[best_lane].head]
            cls = lanes[best_lane].cls[lanes[best_lane].head]
            lanes[best_lane].head = (lanes[best_lane].head + 1) % lanes[best_lane].cap
            lanes[best_lane].count -= 1
            waiting -= 1
            wait = t - arr
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
                u = _uniform(&rng)
                svc_cls = n_cls - 1
                for k in range(n_cls - 1):
                    if u < class_cum[k]:
                        svc_cls = k
                        break
            else:
                if served >= warmup:
                    b = rec * n_batches // n_serve
                    if b >= n_batches:
                        b = n_batches - 1
                    cls_count[cls] += 1
                    cls_sum[cls] += wait
                    cls_sumsq[cls] += wait * wait
                    batch_sum[cls, b] += wait
                    batch_cnt[cls, b] += 1
                    rec += 1
                served += 1
                svc_cls = cls
            kind = svc_kind[svc_cls]
            if kind == SVC_DET:
                svc = svc_p1[svc_cls]
            elif kind == SVC_EXP:
                svc = -svc_p1[svc_cls] * log(1.0 - _uniform(&rng))
            elif kind == SVC_ERLANG:
                total = 0.0
                for k in range(<long>svc_p3[svc_cls]):
                    total -= log(1.0 - _uniform(&rng))
                svc = svc_p1[svc_cls] * total
            else:
                if _uniform(&rng) < svc_p1[svc_cls]:
                    svc = -svc_p2[svc_cls] * log(1.0 - _uniform(&rng))
                else:
                    svc = -svc_p3[svc_cls] * log(1.0 - _uniform(&rng))
            busy = 1
            busy_until = t + svc
            busy_time += svc
    finally:
        for l in range(n_lanes):
            free(lanes[l].arr)
            free(lanes[l].cls)
        free(lanes)

    return {
        "cls_count": cls_count_np,
        "cls_sum": cls_sum_np,
        "cls_sumsq": cls_sumsq_np,
        "batch_sum": batch_sum_np,
        "batch_cnt": batch_cnt_np,
        "tag_count": tag_count,
        "tag_sum": tag_sum,
        "tag_sumsq": tag_sumsq,
        "tag_batch_sum": tag_batch_sum_np,
        "tag_batch_cnt": tag_batch_cnt_np,
        "arrivals": arrivals_np,
        "busy_time": busy_time,
        "end_time": t,
    }
