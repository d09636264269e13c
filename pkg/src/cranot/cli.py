"""Command-line interface: run policies, benchmark solvers, sweep sizes.

Subcommands
-----------
gen     generate a scenario file from a seeded spec
run     evaluate association policies on a scenario file -> JSON document
bench   time the scaling solver against the exact oracle -> CSV
sweep   completion-time ratios vs maxSINR across device counts -> CSV

Exit codes: 0 on success, 2 on usage errors, 3 when every requested
evaluation came back infeasible.  Result documents are deterministic for
fixed inputs and seeds except for wall-time fields.  The number of worker
threads for sweep points is read from the CRANOT_THREADS environment
variable (default 1).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .cran_model import (
    RadioEnvironment,
    Scenario,
    avg_completion_time,
    load,
    rate_matrix,
)
from .exact_oracle import SizeCapError, exact_ot
from .ot_core import SinkhornConfig, SolveReport, sinkhorn
from .policies import (
    AdaptiveConfig,
    AdaptiveInfeasibleError,
    CostMode,
    MarginalMode,
    adaptive_sinkhorn,
    best_arc_cost_scale,
    max_sinr_association,
    ot_association,
    ot_cost_matrix,
    scale_demands_to_max_load,
)
from .scenario import (
    GeneratorSpec,
    HotspotSpec,
    ScenarioFormatError,
    generate,
    load_scenario,
    save_scenario,
    scenario_digest,
)

RESULT_SCHEMA_VERSION = 1

POLICY_NAMES = (
    "maxsinr",
    "ot:euclid:equal",
    "ot:euclid:maxsinr",
    "ot:invrate:equal",
    "ot:invrate:maxsinr",
    "adaptive",
)

# Regularisation scale (relative to the mean best-arc cost) per policy when
# --epsilon is not given.  Equal-share marginals want smoothing to converge
# quickly; maxSINR-traffic marginals want a near-vertex plan.
DEFAULT_EPSILON_SCALE = {
    "ot:euclid:equal": 0.3,
    "ot:euclid:maxsinr": 1e-3,
    "ot:invrate:equal": 0.3,
    "ot:invrate:maxsinr": 1e-3,
    "adaptive": 0.3,
}

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CRANOT_THREADS", "1")))
    except ValueError:
        return 1


def _write_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _report_dict(report: SolveReport) -> dict:
    return {
        "method": report.method,
        "iterations": int(report.iterations),
        "final_residual": float(report.final_residual),
        "cost": float(report.cost),
        "wall_time_ms": float(report.wall_time_ms),
        "converged": bool(report.converged),
    }


def _association_summary(assoc: np.ndarray) -> dict:
    nonzero = assoc > 1e-12
    fractional = np.logical_and(nonzero, assoc < 1.0 - 1e-9)
    return {
        "rows": int(assoc.shape[0]),
        "cols": int(assoc.shape[1]),
        "nonzeros": int(nonzero.sum()),
        "fractional_rows": int(fractional.any(axis=1).sum()),
    }


# --------------------------------------------------------------------------
# gen


def _env_from_args(args) -> RadioEnvironment:
    return RadioEnvironment(
        bandwidth=args.bandwidth,
        noise=args.noise,
        pathloss_exponent=args.alpha,
        min_distance=args.min_distance,
        mu=args.mu,
    )


def cmd_gen(args, parser: argparse.ArgumentParser) -> int:
    hotspot = None
    if args.kind == "hotspot":
        if args.hotspot_radius is None or args.hotspot_fraction is None:
            parser.error("hotspot scenarios need --hotspot-radius and --hotspot-fraction")
        cx = args.hotspot_x if args.hotspot_x is not None else args.area / 2
        cy = args.hotspot_y if args.hotspot_y is not None else args.area / 2
        hotspot = HotspotSpec(cx, cy, args.hotspot_radius, args.hotspot_fraction)
    try:
        spec = GeneratorSpec(
            kind=args.kind,
            num_devices=args.devices,
            num_rrhs=args.rrhs,
            area_side=args.area,
            seed=args.seed,
            demand_range=(args.demand_min, args.demand_max),
            hotspot=hotspot,
            rrh_power=args.power,
            env=_env_from_args(args),
        )
    except ValueError as exc:
        parser.error(str(exc))
    scenario = generate(spec)
    if args.target_max_load is not None:
        rates = rate_matrix(scenario)
        scenario = scale_demands_to_max_load(scenario, rates, args.target_max_load)
    save_scenario(scenario, args.out)
    print(f"wrote {args.out} ({scenario.num_devices} devices, "
          f"{scenario.num_rrhs} RRHs, {scenario_digest(scenario)})")
    return EXIT_OK


# --------------------------------------------------------------------------
# run


def _evaluate_policy(
    name: str,
    scenario: Scenario,
    rates: np.ndarray,
    args,
) -> dict:
    """Evaluate one policy; returns the JSON-ready per-policy record."""
    epsilon_scale = args.epsilon if args.epsilon is not None else DEFAULT_EPSILON_SCALE.get(name)
    entry: dict = {"report": None, "trace": None}
    if name == "maxsinr":
        assoc = max_sinr_association(rates)
    elif name.startswith("ot:"):
        _, cost_name, marg_name = name.split(":")
        result = ot_association(
            scenario,
            rates,
            CostMode(cost_name),
            MarginalMode(marg_name),
            epsilon_scale=epsilon_scale,
            residual_tol=args.tol,
            max_iters=args.max_iters,
            strict=False,
        )
        assoc = result.association
        entry["report"] = _report_dict(result.report)
    elif name == "adaptive":
        config = AdaptiveConfig.for_scenario(
            scenario,
            rates,
            delta_frac=args.delta,
            epsilon_scale=epsilon_scale,
            max_rounds=args.max_rounds,
            stop_spread=args.stop_spread,
            residual_tol=args.tol,
            max_iters=args.max_iters,
        )
        try:
            result = adaptive_sinkhorn(scenario, rates, config)
            assoc = result.association
            trace = result.trace
            entry["best_round"] = result.best_round
        except AdaptiveInfeasibleError as exc:
            assoc = None
            trace = exc.trace
        entry["trace"] = [
            {
                "round": r.round,
                "q": [float(x) for x in r.q],
                "loads": [float(x) for x in r.loads],
                "spread": float(r.spread),
                "objective": None if r.objective is None else float(r.objective),
                "feasible": bool(r.feasible),
            }
            for r in trace
        ]
        if assoc is None:
            entry.update(
                feasible=False, objective=None, loads=None, total_load=None,
                max_load=None, association=None,
            )
            return entry
    else:  # pragma: no cover - guarded by the parser
        raise ValueError(f"unknown policy {name!r}")

    lv = load(assoc, scenario, rates)
    objective = (
        avg_completion_time(assoc, scenario, rates) if lv.feasible else None
    )
    entry.update(
        feasible=bool(lv.feasible),
        objective=objective,
        loads=[float(x) for x in lv.loads],
        total_load=float(lv.loads.sum()),
        max_load=float(lv.loads.max()),
        association=_association_summary(assoc),
    )
    return entry


def cmd_run(args, parser: argparse.ArgumentParser) -> int:
    policies: list[str] = []
    for chunk in args.policy:
        policies.extend(x for x in chunk.split(",") if x)
    if not policies:
        parser.error("select at least one policy with --policy")
    for name in policies:
        if name not in POLICY_NAMES:
            parser.error(
                f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}"
            )

    try:
        scenario = load_scenario(args.scenario)
    except ScenarioFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rates = rate_matrix(scenario)

    evaluated = {"maxsinr": _evaluate_policy("maxsinr", scenario, rates, args)}
    for name in policies:
        if name not in evaluated:
            evaluated[name] = _evaluate_policy(name, scenario, rates, args)

    baseline = evaluated["maxsinr"]
    for name, entry in evaluated.items():
        if entry["feasible"] and baseline["feasible"]:
            entry["ratio_completion_time"] = entry["objective"] / baseline["objective"]
            entry["ratio_total_load"] = entry["total_load"] / baseline["total_load"]
        else:
            entry["ratio_completion_time"] = None
            entry["ratio_total_load"] = None

    doc = {
        "schema_version": RESULT_SCHEMA_VERSION,
        "kind": "run",
        "scenario_digest": scenario_digest(scenario),
        "num_devices": scenario.num_devices,
        "num_rrhs": scenario.num_rrhs,
        "baseline": "maxsinr",
        "flags": {
            "policies": sorted(set(policies)),
            "epsilon": args.epsilon,
            "tol": args.tol,
            "delta": args.delta,
            "stop_spread": args.stop_spread,
            "max_rounds": args.max_rounds,
            "max_iters": args.max_iters,
            "seed": args.seed,
        },
        "policies": {
            name: entry
            for name, entry in evaluated.items()
            if name in policies or name == "maxsinr"
        },
    }
    _write_json(doc, args.out)
    print(f"wrote {args.out}")
    requested = [evaluated[name] for name in set(policies)]
    if not any(e["feasible"] for e in requested):
        return EXIT_INFEASIBLE
    return EXIT_OK


# --------------------------------------------------------------------------
# bench


def _bench_instance(m: int, rrhs: int, seed: int, area: float):
    """Euclidean-cost transport instance: device demands to equal shares."""
    spec = GeneratorSpec(
        kind="uniform", num_devices=m, num_rrhs=rrhs, area_side=area, seed=seed
    )
    scenario = generate(spec)
    C = ot_cost_matrix(scenario, None, CostMode.EUCLIDEAN)
    p = scenario.demands()
    q = np.full(rrhs, p.sum() / rrhs)
    return C, p, q


def _median_time(fn, runs: int) -> tuple[float, object]:
    times = []
    out = None
    for _ in range(runs):
        t0 = time.perf_counter()
        out = fn()
        times.append((time.perf_counter() - t0) * 1e3)
    times.sort()
    return times[len(times) // 2], out


def cmd_bench(args, parser: argparse.ArgumentParser) -> int:
    sizes = _parse_int_list(args.sizes, parser, "--sizes")
    tols = _parse_float_list(args.tols, parser, "--tols")
    rows = []
    for idx, m in enumerate(sizes):
        C, p, q = _bench_instance(m, args.rrhs, args.seed + idx, args.area)
        scale = best_arc_cost_scale(C)
        row: dict = {"devices": m, "rrhs": args.rrhs}
        exact_cost = None
        if m * args.rrhs <= args.exact_cap:
            ms, sol = _median_time(lambda: exact_ot(C, p, q), args.runs)
            row["exact_ms"] = f"{ms:.3f}"
            exact_cost = sol.optimal_cost
        else:
            row["exact_ms"] = "skipped"
        for tol in tols:
            eps_scale = args.epsilon if args.epsilon is not None else max(10 * tol, 0.03)
            config = SinkhornConfig(
                epsilon=eps_scale * scale, residual_tol=tol, max_iters=args.max_iters
            )
            ms, res = _median_time(lambda: sinkhorn(C, p, q, config), args.runs)
            row[f"sinkhorn_ms_tol{tol:g}"] = f"{ms:.3f}"
            row[f"cost_ratio_tol{tol:g}"] = (
                "" if exact_cost is None else f"{res.report.cost / exact_cost:.6f}"
            )
        rows.append(row)
        print(
            f"bench m={m}: exact={row['exact_ms']} ms, "
            + ", ".join(f"tol={t:g}: {row[f'sinkhorn_ms_tol{t:g}']} ms" for t in tols)
        )
    fields = list(rows[0].keys())
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep

SWEEP_POLICIES = (
    ("ot_euclid_equal", CostMode.EUCLIDEAN, MarginalMode.EQUAL_SHARE),
    ("ot_invrate_equal", CostMode.INVERSE_RATE, MarginalMode.EQUAL_SHARE),
    ("ot_invrate_maxsinr", CostMode.INVERSE_RATE, MarginalMode.MAXSINR_TRAFFIC),
)


def _sweep_point(m: int, seed: int, args) -> dict:
    spec = GeneratorSpec(
        kind="uniform",
        num_devices=m,
        num_rrhs=args.rrhs,
        area_side=args.area,
        seed=seed,
        env=_env_from_args(args),
    )
    scenario = generate(spec)
    rates = rate_matrix(scenario)
    scenario = scale_demands_to_max_load(scenario, rates, args.target_max_load)
    baseline = max_sinr_association(rates)
    lv = load(baseline, scenario, rates)
    row: dict = {"devices": m, "rrhs": args.rrhs, "seed": seed}
    if not lv.feasible:
        row["objective_maxsinr"] = "infeasible"
        for name, _, _ in SWEEP_POLICIES:
            row[f"ratio_{name}"] = "infeasible"
        return row
    ct_base = avg_completion_time(baseline, scenario, rates)
    row["objective_maxsinr"] = f"{ct_base!r}"
    for name, cost_mode, marg_mode in SWEEP_POLICIES:
        eps_scale = (
            args.epsilon_sharp
            if marg_mode == MarginalMode.MAXSINR_TRAFFIC
            else args.epsilon
        )
        result = ot_association(
            scenario,
            rates,
            cost_mode,
            marg_mode,
            epsilon_scale=eps_scale,
            residual_tol=args.tol,
            max_iters=args.max_iters,
            strict=False,
        )
        lv_p = load(result.association, scenario, rates)
        if lv_p.feasible:
            ratio = avg_completion_time(result.association, scenario, rates) / ct_base
            row[f"ratio_{name}"] = f"{ratio!r}"
        else:
            row[f"ratio_{name}"] = "infeasible"
    return row


def cmd_sweep(args, parser: argparse.ArgumentParser) -> int:
    sizes = _parse_int_list(args.sizes, parser, "--sizes")
    points = [(m, args.seed + idx) for idx, m in enumerate(sizes)]
    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda t: _sweep_point(t[0], t[1], args), points))
    else:
        rows = [_sweep_point(m, seed, args) for m, seed in points]
    fields = list(rows[0].keys())
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        print(
            f"sweep m={row['devices']}: "
            + ", ".join(f"{name}={row[f'ratio_{name}']}" for name, _, _ in SWEEP_POLICIES)
        )
    print(f"wrote {args.out}")
    feasible_any = any(
        row[f"ratio_{name}"] != "infeasible"
        for row in rows
        for name, _, _ in SWEEP_POLICIES
    )
    return EXIT_OK if feasible_any else EXIT_INFEASIBLE


# --------------------------------------------------------------------------
# parser


def _parse_int_list(text: str, parser, flag: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x]
    except ValueError:
        parser.error(f"{flag} expects a comma-separated list of integers")
    if not values:
        parser.error(f"{flag} must not be empty")
    return values


def _parse_float_list(text: str, parser, flag: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x]
    except ValueError:
        parser.error(f"{flag} expects a comma-separated list of numbers")
    if not values:
        parser.error(f"{flag} must not be empty")
    return values


def _add_env_flags(sub, alpha=4.0, min_distance=1.0) -> None:
    sub.add_argument("--bandwidth", type=float, default=1e7, help="Hz")
    sub.add_argument("--noise", type=float, default=1e-13, help="W")
    sub.add_argument("--alpha", type=float, default=alpha, help="path-loss exponent")
    sub.add_argument("--min-distance", type=float, default=min_distance, help="m")
    sub.add_argument("--mu", type=float, default=1.0, help="jobs per traffic unit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cranot",
        description="Transport-based device association and load balancing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a scenario file")
    gen.add_argument("--kind", choices=("uniform", "hotspot"), default="uniform")
    gen.add_argument("--devices", type=int, required=True)
    gen.add_argument("--rrhs", type=int, required=True)
    gen.add_argument("--area", type=float, default=1000.0, help="square side, m")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--demand-min", type=float, default=0.5)
    gen.add_argument("--demand-max", type=float, default=1.5)
    gen.add_argument("--power", type=float, default=1.0, help="RRH transmit power, W")
    gen.add_argument("--hotspot-x", type=float, default=None)
    gen.add_argument("--hotspot-y", type=float, default=None)
    gen.add_argument("--hotspot-radius", type=float, default=None)
    gen.add_argument("--hotspot-fraction", type=float, default=None)
    gen.add_argument(
        "--target-max-load",
        type=float,
        default=None,
        help="rescale demands so the maxSINR peak load hits this value",
    )
    _add_env_flags(gen)
    gen.add_argument("--out", required=True)

    run = sub.add_parser("run", help="evaluate policies on a scenario file")
    run.add_argument("scenario")
    run.add_argument(
        "--policy",
        action="append",
        default=[],
        metavar="NAME",
        help=f"one of {', '.join(POLICY_NAMES)}; repeatable or comma-separated",
    )
    run.add_argument(
        "--epsilon",
        type=float,
        default=None,
        help="regularisation scale relative to the mean best-arc cost "
        "(default: 0.3 for equal-share and adaptive, 1e-3 for maxSINR-traffic)",
    )
    run.add_argument("--tol", type=float, default=1e-5, help="residual tolerance")
    run.add_argument("--delta", type=float, default=0.02, help="adaptive step, fraction of total demand")
    run.add_argument("--stop-spread", type=float, default=0.02)
    run.add_argument("--max-rounds", type=int, default=200)
    run.add_argument("--max-iters", type=int, default=50_000)
    run.add_argument("--seed", type=int, default=0, help="recorded in the result document")
    run.add_argument("--out", required=True)

    bench = sub.add_parser("bench", help="time the scaling solver vs the exact oracle")
    bench.add_argument("--sizes", default="10,50,100,500", help="device counts, comma-separated")
    bench.add_argument("--rrhs", type=int, default=25)
    bench.add_argument("--tols", default="1e-2,1e-3", help="residual tolerances, comma-separated")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--runs", type=int, default=7, help="timing repetitions (median reported)")
    bench.add_argument(
        "--exact-cap",
        type=int,
        default=15_000,
        help="skip the exact column when devices*rrhs exceeds this",
    )
    bench.add_argument("--area", type=float, default=1000.0)
    bench.add_argument(
        "--epsilon",
        type=float,
        default=None,
        help="regularisation scale (default: max(10*tol, 0.03) per tolerance)",
    )
    bench.add_argument("--max-iters", type=int, default=200_000)
    bench.add_argument("--out", required=True)

    sweep = sub.add_parser("sweep", help="completion-time ratios vs device count")
    sweep.add_argument("--sizes", default="100,500,2000")
    sweep.add_argument("--rrhs", type=int, default=25)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--tol", type=float, default=1e-6)
    sweep.add_argument(
        "--epsilon", type=float, default=0.3, help="scale for equal-share policies"
    )
    sweep.add_argument(
        "--epsilon-sharp",
        type=float,
        default=1e-6,
        help="scale for the maxSINR-traffic policy",
    )
    sweep.add_argument("--target-max-load", type=float, default=0.25)
    sweep.add_argument("--area", type=float, default=1000.0)
    sweep.add_argument("--max-iters", type=int, default=50_000)
    _add_env_flags(sweep, alpha=2.0, min_distance=60.0)
    sweep.add_argument("--out", required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen": cmd_gen, "run": cmd_run, "bench": cmd_bench, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args, parser)
    except (ScenarioFormatError, SizeCapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entrypoint() -> None:
    sys.exit(main())
