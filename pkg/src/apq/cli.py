"""Batch command-line front end.

Subcommands: waiting, equilibrium, sweep, simulate, welfare,
check-conservation. Input is a JSON model config; output is UTF-8 CSV
with LF line endings, a mandatory header row, and numbers rendered to six
significant digits. When --output is given, a JSON run manifest is
written next to the file so the run can be reproduced exactly.

Exit codes: 0 success, 1 failed check, 2 configuration error,
3 unstable model, 4 solver non-convergence. The APQ_SEED environment
variable overrides --seed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .analytics import conservation_residual, waiting_times
from .equilibrium import (
    EquilibriumResult,
    NoConvergenceError,
    solve_heterogeneous,
)
from .model import (
    ConfigError,
    Model,
    ModelError,
    NonPositiveBidError,
    UnstableError,
    load_model,
    scale_to_rho,
)
from .simulator import (
    InvalidConfigError,
    SimConfig,
    TaggedProbe,
    overtaking_demo,
    simulate,
)
from .welfare import (
    absolute_priority_waits,
    cmu_order,
    scaled_bids,
    welfare_report,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_NO_CONVERGENCE = 4


def fmt(x) -> str:
    """Fixed-point, six significant digits."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if x == 0.0:
        return "0.00000"
    exponent = math.floor(math.log10(abs(x)))
    decimals = max(0, 5 - exponent)
    return f"{x:.{decimals}f}"


def _write_csv(args, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    text = buf.getvalue()
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        _write_manifest(args)
    else:
        sys.stdout.write(text)


def _write_manifest(args) -> None:
    skip = {"output", "config", "func", "command"}
    overrides = {
        k: v for k, v in vars(args).items()
        if k not in skip and v is not None
    }
    manifest = {
        "command": args.command,
        "config": getattr(args, "config", None),
        "overrides": overrides,
        "seed": getattr(args, "seed", None),
        "output": args.output,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    with open(args.output + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_bids(text: str, model: Model) -> tuple[float, ...]:
    try:
        bids = tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"cannot parse bids {text!r}: {exc}") from exc
    if len(bids) != model.n_classes:
        raise ConfigError(
            f"expected {model.n_classes} bids, got {len(bids)}"
        )
    return bids


def _effective_seed(args) -> int:
    env = os.environ.get("APQ_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"APQ_SEED must be an integer, got {env!r}") from exc
    return args.seed


# --- subcommands -------------------------------------------------------------


def cmd_waiting(args) -> int:
    model = load_model(args.config)
    bids = _parse_bids(args.bids, model)
    W = waiting_times(model, bids)
    rows = [
        (i + 1, bids[i], model.rho_i[i], W[i],
         model.classes[i].waiting_cost * W[i] + bids[i])
        for i in range(model.n_classes)
    ]
    _write_csv(args, ["class", "bid", "rho_i", "W", "cost"], rows)
    return EXIT_OK


def _solve(model, args) -> EquilibriumResult:
    return solve_heterogeneous(
        model, tol=args.tol, max_iter=args.max_iter, restarts=args.restarts
    )


def cmd_equilibrium(args) -> int:
    model = load_model(args.config)
    result = _solve(model, args)
    if args.json:
        doc = {
            "bids": list(result.bids),
            "waits": list(result.waits),
            "total_costs": list(result.total_costs),
            "residual": result.residual,
            "iterations": result.iterations,
            "converged": result.converged,
            "multistart_agreement": result.multistart_agreement,
        }
        text = json.dumps(doc, indent=2) + "\n"
        if args.output:
            with open(args.output, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            _write_manifest(args)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    rows = [
        (i + 1, result.bids[i], result.waits[i], result.total_costs[i])
        for i in range(model.n_classes)
    ]
    _write_csv(args, ["class", "bid", "W", "total_cost"], rows)
    return EXIT_OK


def _rho_grid(args):
    if args.rho_step <= 0:
        return [args.rho_from]
    n = int(round((args.rho_to - args.rho_from) / args.rho_step))
    return [args.rho_from + k * args.rho_step for k in range(n + 1)]


def cmd_sweep(args) -> int:
    model = load_model(args.config)
    header, rows = None, []
    warm = None
    for rho in _rho_grid(args):
        scaled = scale_to_rho(model, rho)
        if args.mode == "welfare":
            rep = welfare_report(scaled, tol=args.tol, restarts=args.restarts)
            header = ["rho", "ratio_no_pricing", "ratio_pricing"]
            rows.append((rho, rep.ratio_no_pricing, rep.ratio_pricing))
            continue
        init = warm if not args.no_warm_start else None
        result = solve_heterogeneous(
            scaled, init=init, tol=args.tol,
            max_iter=args.max_iter, restarts=args.restarts,
        )
        warm = result.bids
        if args.mode == "bids":
            header = ["rho", "class", "bid"]
            rows.extend((rho, i + 1, b) for i, b in enumerate(result.bids))
        elif args.mode == "waits":
            header = ["rho", "class", "W"]
            rows.extend((rho, i + 1, w) for i, w in enumerate(result.waits))
        else:  # ratios
            header = ["rho", "class", "bid_ratio", "wait_ratio"]
            rows.extend(
                (rho, i + 1, result.bids[i] / result.bids[0],
                 result.waits[i] / result.waits[0])
                for i in range(model.n_classes)
            )
    _write_csv(args, header, rows)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.scenario:
        if args.scenario != "overtake":
            raise ConfigError(f"unknown scenario {args.scenario!r}")
        rows = overtaking_demo()
        _write_csv(
            args,
            ["t", "priority_1", "priority_2", "served_next"],
            [(t, p1, p2, c + 1) for t, p1, p2, c in rows],
        )
        return EXIT_OK
    if not args.config or not args.bids:
        raise ConfigError("simulate needs --config and --bids (or --scenario)")
    model = load_model(args.config)
    bids = _parse_bids(args.bids, model)
    tagged = None
    if args.tagged:
        parts = args.tagged.split(":")
        try:
            bid = float(parts[0])
            thinning = float(parts[1]) if len(parts) > 1 else 1e-3
        except ValueError as exc:
            raise ConfigError(f"cannot parse --tagged {args.tagged!r}") from exc
        tagged = TaggedProbe(bid, thinning)
    stats = simulate(
        SimConfig(
            model=model,
            bids=bids,
            customers=args.customers,
            warmup=args.warmup,
            seed=_effective_seed(args),
            tagged=tagged,
        ),
        backend=args.backend,
    )
    rows = [
        (str(i + 1), fmt(bids[i]), s.count, fmt(s.mean), fmt(s.variance), fmt(s.ci99))
        for i, s in enumerate(stats.per_class)
    ]
    if stats.tagged is not None:
        s = stats.tagged
        rows.append(("tagged", fmt(tagged.bid), s.count, fmt(s.mean),
                     fmt(s.variance), fmt(s.ci99)))
    _write_csv(
        args, ["class", "bid", "count", "mean_wait", "variance", "ci99"], rows
    )
    return EXIT_OK


def cmd_welfare(args) -> int:
    model = load_model(args.config)
    rows = []
    for rho in _rho_grid(args):
        scaled = scale_to_rho(model, rho)
        rep = welfare_report(scaled, tol=args.tol, restarts=args.restarts)
        order = cmu_order(scaled)
        approx = waiting_times(scaled, scaled_bids(order, args.beta, args.n))
        exact = absolute_priority_waits(scaled, order)
        gap = float(np.max(np.abs(approx - exact) / exact))
        rows.append(
            (rho, rep.cost_equilibrium, rep.cost_pricing, rep.cost_optimal,
             rep.ratio_no_pricing, rep.ratio_pricing, gap)
        )
    _write_csv(
        args,
        ["rho", "cost_equilibrium", "cost_pricing", "cost_optimal",
         "ratio_no_pricing", "ratio_pricing", "scaled_bid_gap"],
        rows,
    )
    return EXIT_OK


def cmd_check_conservation(args) -> int:
    model = load_model(args.config)
    if args.input == "-":
        text = sys.stdin.read()
    else:
        with open(args.input, "r", encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or "class" not in reader.fieldnames \
            or "W" not in reader.fieldnames:
        raise ConfigError("input CSV needs 'class' and 'W' columns")
    waits = {}
    for row in reader:
        waits[int(row["class"])] = float(row["W"])
    if sorted(waits) != list(range(1, model.n_classes + 1)):
        raise ConfigError(
            f"input covers classes {sorted(waits)}, expected 1..{model.n_classes}"
        )
    residual = conservation_residual(
        model, [waits[i + 1] for i in range(model.n_classes)]
    )
    ok = residual <= args.tol
    print(f"{'PASS' if ok else 'FAIL'} conservation residual {residual:.3e} "
          f"(tolerance {args.tol:.1e})")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apq",
        description="Accumulating-priority queue game toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="JSON model configuration file")
        p.add_argument("--output", "-o", help="output CSV path (default stdout)")

    def add_solver(p):
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--max-iter", type=int, default=10_000)
        p.add_argument("--restarts", type=int, default=5)

    p = sub.add_parser("waiting", help="expected waits for a fixed bid profile")
    add_common(p)
    p.add_argument("--bids", required=True, help="comma-separated, one per class")
    p.set_defaults(func=cmd_waiting)

    p = sub.add_parser("equilibrium", help="solve the bidding game")
    add_common(p)
    add_solver(p)
    p.add_argument("--json", action="store_true", help="emit full result as JSON")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("sweep", help="equilibrium quantities over a rho range")
    add_common(p)
    add_solver(p)
    p.add_argument("--rho-from", type=float, required=True)
    p.add_argument("--rho-to", type=float, default=None)
    p.add_argument("--rho-step", type=float, default=0.0)
    p.add_argument("--mode", choices=["bids", "waits", "ratios", "welfare"],
                   default="bids")
    p.add_argument("--no-warm-start", action="store_true",
                   help="solve each rho from the default initialization")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="discrete-event simulation statistics")
    add_common(p, config_required=False)
    p.add_argument("--bids", help="comma-separated, one per class")
    p.add_argument("--customers", type=int, default=1_000_000)
    p.add_argument("--warmup", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--tagged", help="probe as BID or BID:THINNING")
    p.add_argument("--backend", choices=["cython", "python"], default=None)
    p.add_argument("--scenario", help="named deterministic replay: overtake")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("welfare", help="equilibrium vs priority-optimum cost ratios")
    add_common(p)
    add_solver(p)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--rho-from", type=float, required=True)
    p.add_argument("--rho-to", type=float, default=None)
    p.add_argument("--rho-step", type=float, default=0.0)
    p.set_defaults(func=cmd_welfare)

    p = sub.add_parser("check-conservation",
                       help="verify sum(rho_i W_i) = rho W0/(1-rho) on a CSV")
    add_common(p)
    p.add_argument("--input", required=True, help="waiting CSV path, or - for stdin")
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_check_conservation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "rho_to", None) is None and hasattr(args, "rho_from"):
        args.rho_to = args.rho_from
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnstableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except NoConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ConfigError, ModelError, NonPositiveBidError,
            InvalidConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
