"""Compare the compiled and pure-Python simulation kernels.

Both kernels consume the same random stream and must produce bitwise
identical statistics; this script asserts that and reports the speedup.

    python -m apq.benchmark [--customers N] [--seed S]
"""
from __future__ import annotations

import argparse
import time

from .model import ClassSpec, ServiceSpec, build_model
from .simulator import DEFAULT_BACKEND, SimConfig, TaggedProbe, simulate


def _demo_model():
    lam = [0.1, 0.15, 0.075, 0.125, 0.05]
    costs = [0.2, 0.4, 0.6, 0.8, 1.0]
    return build_model(
        ClassSpec(l, ServiceSpec.exponential(1.0), c) for l, c in zip(lam, costs)
    )


def run(customers: int, seed: int) -> dict:
    config = SimConfig(
        model=_demo_model(),
        bids=(0.09, 0.17, 0.23, 0.27, 0.31),
        customers=customers,
        warmup=min(customers // 10, 100_000),
        seed=seed,
        tagged=TaggedProbe(bid=0.2, thinning=1e-3),
    )
    timings = {}
    results = {}
    backends = ["python"] + (["cython"] if DEFAULT_BACKEND == "cython" else [])
    for backend in backends:
        t0 = time.perf_counter()
        results[backend] = simulate(config, backend=backend)
        timings[backend] = time.perf_counter() - t0
    if "cython" in results:
        a, b = results["python"], results["cython"]
        for sa, sb in zip(a.per_class, b.per_class):
            assert sa == sb, f"backend mismatch: {sa} != {sb}"
        assert a.tagged == b.tagged and a.arrivals == b.arrivals
        assert a.utilization == b.utilization
    return timings


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--customers", type=int, default=200_000)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    timings = run(args.customers, args.seed)
    for backend, t in timings.items():
        rate = args.customers / t / 1e6
        print(f"{backend:>7}: {t:8.3f} s  ({rate:6.2f} M customers/s)")
    if "cython" in timings:
        print(f"speedup: {timings['python'] / timings['cython']:.1f}x "
              "(outputs bitwise identical)")
    else:
        print("compiled kernel unavailable; ran pure Python only")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
