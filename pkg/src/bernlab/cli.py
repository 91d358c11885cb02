"""Command-line batch driver.

Subcommands select which experiments of a config file to run:
``report`` runs all of them, the named subcommands filter by kind.  The
sub-seed of an experiment depends only on the master seed and its position
in the file, so a filtered run reproduces exactly the numbers the full
report would contain.

Exit codes: 0 success, 2 config error, 3 resource cap, 4 invariant or
domain violation during a run.
"""

import argparse
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .config import BatchConfig, ExperimentConfig, build_family, load_config
from .configurations import CylinderSet
from .construction import build_phi, build_schedule, domain_scan, walk_stats, clt_check
from .errors import BallCapError, BernlabError, ConfigError
from .maharam import (
    ProductSystem,
    ReturnEvent,
    conservativity_return_check,
    essential_value_witness,
    maharam_preservation_check,
    ratio_hist,
    scan_returns,
)
from .reporting import ExperimentResult, Report, Table, emit
from .rng import derive_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_INVARIANT = 4

_SUBCOMMANDS = {
    "check-kakutani": "kakutani",
    "check-conservativity": "conservativity",
    "clt": "clt",
    "build-phi": "build-phi",
    "ratio-set": "ratio-set",
    "maharam-check": "maharam-check",
    "l2-tail": "l2-tail",
    "report": None,
}


def ordered_map(fn, items, threads: int):
    """Map with optional worker threads; results come back in input order,
    so parallel runs reduce deterministically."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _cylinder(spec: dict) -> CylinderSet:
    return CylinderSet.of({int(k): int(v) for k, v in spec.items()})


def _element(g):
    return tuple(g) if isinstance(g, list) else g


# ------------------------------------------------------------------ runners


def _run_kakutani(family, params, seed, threads):
    radii = sorted(params["radii"])
    g = _element(params.get("g", 1))
    side = params.get("side", "Plus")
    k_rows, prev = [], None
    for R in radii:
        val = family.kakutani_partial(g, R)
        k_rows.append((R, val, None if prev is None else val - prev))
        prev = val
    d_rows = [(R, family.divergence_partial(R, side)) for R in radii]
    tables = [
        Table("kakutani", ("radius", "partial_sum", "increment"), tuple(k_rows)),
        Table("divergence", ("radius", "partial_sum"), tuple(d_rows)),
    ]
    if "c_values" in params:
        r_inner = params.get("r_inner", radii[0])
        c_rows = tuple(
            (c, R, family.conservativity_partial(c, R, r_inner))
            for c in params["c_values"] for R in radii
        )
        tables.append(Table("conservativity_sum", ("c", "radius", "partial_sum"), c_rows))
    summary = {
        "g": str(g),
        "kakutani_final": k_rows[-1][1],
        "divergence_final": d_rows[-1][1],
    }
    warns = []
    if len(k_rows) > 1 and abs(k_rows[-1][2]) > 1e-4:
        warns.append("kakutani partial sums still moving at the largest radius")
    return tables, summary, warns


def _run_l2_tail(family, params, seed, threads):
    radii = sorted(params["radii"])
    rows, prev = [], None
    for R in radii:
        val = family.l2_tail_profile(R)
        rows.append((R, val, None if prev is None else val - prev))
        prev = val
    last_inc = rows[-1][2] if len(rows) > 1 else None
    converged = last_inc is not None and abs(last_inc) < params.get("eps", 1e-6)
    summary = {
        "final": rows[-1][1],
        "last_increment": last_inc,
        "converged": converged,
    }
    warns = [] if converged else [
        "square-deviation profile still growing at the largest radius"
    ]
    return ([Table("l2_tail", ("radius", "partial_sum", "increment"), tuple(rows))],
            summary, warns)


def _run_conservativity(family, params, seed, threads):
    r_group = params["r_group"]
    f_r = params.get("f_excl_radius", 0)
    rep = conservativity_return_check(
        ProductSystem(family), _cylinder(params["cylinder"]), params["eps"],
        range(-f_r, f_r + 1), r_group, params["seeds"],
        seed=derive_seed(seed, "return-scan"), R_trunc=params.get("r_trunc"),
    )
    checkpoints = sorted(set(params.get("radii", [r_group])))
    rows = tuple((r, rep.fraction_at(r)) for r in checkpoints)
    summary = {
        "samples": rep.samples,
        "in_set": rep.in_set,
        "returned": rep.returned,
        "fraction": rep.fraction,
    }
    warns = ["thin in-set sample"] if rep.in_set < 30 else []
    return [Table("returns", ("radius", "fraction"), rows)], summary, warns


def _run_clt(family, params, seed, threads):
    n_values = sorted(params["n_values"])
    budget = params.get("budget", n_values[-1])
    if budget < n_values[-1]:
        raise ConfigError(f"clt budget {budget} below the largest n {n_values[-1]}")
    schedule = build_schedule(
        family, tuple(params.get("window", ())), params.get("eps", 1.0), budget
    )

    def unit(item):
        i, n = item
        stats = walk_stats(schedule, n)
        ks = clt_check(schedule, n, params["sample_count"],
                       seed=derive_seed(seed, f"clt-{i}"))
        return (n, stats.a_n, stats.b_n, ks)

    rows = tuple(ordered_map(unit, enumerate(n_values), threads))
    summary = {"a_n_final": rows[-1][1], "b_n_final": rows[-1][2],
               "ks_final": rows[-1][3]}
    warns = [] if rows[-1][3] <= 0.05 else ["KS distance above 0.05 at the largest n"]
    return [Table("clt", ("n", "a_n", "b_n", "ks"), rows)], summary, warns


def _run_build_phi(family, params, seed, threads):
    sign = 1 if family.lambda0 >= 0.5 else -1
    window = tuple(params.get("window", ()))
    scan_seeds = params.get("scan_seeds", 20_000)

    def unit(item):
        i, t = item
        phi = build_phi(
            family, window, t, params["eps"], sign=sign,
            mode=params.get("mode", "auto"), budget=params.get("budget", 512),
            seed=derive_seed(seed, f"phi-{i}"),
        )
        row = [t, phi.horizon, phi.estimate_method,
               phi.domain_estimate, phi.domain_lcb99]
        if scan_seeds:
            scan = domain_scan(phi, scan_seeds, seed=derive_seed(seed, f"scan-{i}"))
            row += [scan.fraction, scan.lcb99, scan.violations]
        else:
            row += [None, None, None]
        return tuple(row)

    rows = tuple(ordered_map(unit, enumerate(params["t_values"]), threads))
    columns = ("t", "horizon", "method", "certified_mass", "certified_lcb99",
               "scan_fraction", "scan_lcb99", "violations")
    violations = sum(r[7] for r in rows if r[7] is not None)
    summary = {"targets": len(rows), "violations": violations}
    warns = ["stopped values escaped the target interval"] if violations else []
    return [Table("phi", columns, rows)], summary, warns


def _event_row(event):
    est = event.estimate if isinstance(event, ReturnEvent) else event.image_rn
    return (event.seed, event.g, event.value, est.radius,
            est.tail_mean_bound, est.tail_std_bound)


def _run_ratio_set(family, params, seed, threads):
    cyl = _cylinder(params["cylinder"])
    grid = params["grid"]
    eps = params["eps"]
    r_group = params["r_group"]
    r_trunc = params.get("r_trunc", max(8 * r_group, 100_000))
    seeds_n = params["seeds"]
    system = ProductSystem(family)

    if params.get("assisted", True):
        def unit(item):
            i, t = item
            rep = essential_value_witness(
                system, cyl, t, eps, r_group, r_trunc, seeds_n,
                seed=derive_seed(seed, f"target-{i}"),
                max_checks=params.get("max_checks", 32),
            )
            return rep.witnesses

        events = [w for ws in ordered_map(unit, enumerate(grid), threads)
                  for w in ws]
    else:
        events = scan_returns(system, cyl, r_group, r_trunc, seeds_n,
                              seed=derive_seed(seed, "returns"))

    hist = ratio_hist(events, grid, eps)
    cov_rows = tuple(zip(hist.grid, hist.counts, hist.covered))
    ev_rows = tuple(_event_row(e) for e in events)
    tables = [
        Table("coverage", ("t", "events", "covered"), cov_rows),
        Table("events", ("seed", "g", "value", "radius",
                         "tail_mean_bound", "tail_std_bound"), ev_rows),
    ]
    summary = {"events_total": hist.events_total, "coverage": hist.coverage,
               "label": hist.label}
    warns = []
    if hist.label == "insufficient data":
        warns.append("not enough certified events to classify the ratio set")
    return tables, summary, warns


def _run_maharam_check(family, params, seed, threads):
    cyl = _cylinder(params["cylinder"])
    items = [(_element(g), (float(lo), float(hi)))
             for g in params["g_values"] for lo, hi in params["intervals"]]

    def unit(item):
        g, (lo, hi) = item
        return (str(g), lo, hi, maharam_preservation_check(family, g, cyl, (lo, hi)))

    rows = tuple(ordered_map(unit, items, threads))
    worst = max(r[3] for r in rows)
    summary = {"checks": len(rows), "worst_defect": worst}
    warns = [] if worst < 1e-12 else [
        "preservation defect above the exact-arithmetic envelope"
    ]
    return [Table("preservation", ("g", "lo", "hi", "defect"), rows)], summary, warns


_RUNNERS = {
    "kakutani": _run_kakutani,
    "l2-tail": _run_l2_tail,
    "conservativity": _run_conservativity,
    "clt": _run_clt,
    "build-phi": _run_build_phi,
    "ratio-set": _run_ratio_set,
    "maharam-check": _run_maharam_check,
}


# ------------------------------------------------------------------- driver


def run_experiment(batch: BatchConfig, exp: ExperimentConfig,
                   threads: int = 1) -> ExperimentResult:
    sub_seed = derive_seed(batch.seed, f"experiment-{exp.index}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        family = build_family(exp)
        try:
            tables, summary, warns = _RUNNERS[exp.kind](
                family, exp.params, sub_seed, threads
            )
        except ValueError as exc:
            raise ConfigError(
                f"experiment {exp.index} ({exp.kind}): {exc}"
            ) from exc
    messages = tuple(sorted({str(w.message) for w in caught} | set(warns)))
    return ExperimentResult(exp.label, exp.kind, sub_seed, tuple(tables),
                            summary, messages)


def run_batch(batch: BatchConfig, kind: str = None, threads: int = 1) -> Report:
    """Run the batch (optionally restricted to one kind) into a Report."""
    selected = [e for e in batch.experiments if kind is None or e.kind == kind]
    if not selected:
        raise ConfigError(f"config contains no {kind!r} experiment")
    start = time.perf_counter()
    results = tuple(run_experiment(batch, exp, threads) for exp in selected)
    wall = time.perf_counter() - start
    global_warnings = tuple(
        f"{r.label}: {msg}" for r in results for msg in r.warnings
    )
    return Report(__version__, batch.raw, results, wall, global_warnings)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bernlab",
        description="Batch driver for non-singular Bernoulli shift experiments.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in _SUBCOMMANDS.items():
        help_text = ("run every experiment in the config" if kind is None
                     else f"run the {kind} experiments of the config")
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="path to a JSON config")
        sp.add_argument("--out", default="bernlab-out",
                        help="output directory (default: bernlab-out)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the master seed of the config")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for intra-experiment units")
        sp.add_argument("--format", choices=("json", "csv", "both"),
                        default="both", help="which files to emit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    formats = ("json", "csv") if args.format == "both" else (args.format,)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        batch = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be a non-negative integer")
            batch = batch.with_seed(args.seed)
        report = run_batch(batch, _SUBCOMMANDS[args.command], args.threads)
        paths = emit(report, Path(args.out), formats)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BallCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except BernlabError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"cannot write report: {exc}", file=sys.stderr)
        return 1
    for result in report.results:
        facts = ", ".join(f"{k}={v}" for k, v in result.summary.items())
        print(f"[{result.kind}] {result.label}: {facts}")
        for msg in result.warnings:
            print(f"  warning: {msg}")
    print(f"wrote {len(paths)} files to {Path(args.out)}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
