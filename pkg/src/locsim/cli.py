"""``locsim`` command line.

Exit codes: 0 success, 1 validation report has failures, 2 bad arguments
or configuration, 3 consistency abort during a run.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import random
import statistics
import sys
from collections import defaultdict
from typing import Optional, Sequence

from .engine import CSV_COLUMNS, SimulationAbort, ledger_row, run, sweep_cmr
from .fileio import atomic_write_text, csv_text
from .mobility import MODELS, ModelParams, emit_zone_crossings, generate_trace, write_trace
from .mobility.trace import write_zone_events
from .schemes import SCHEMES
from .scenario import Scenario, ScenarioError, load_scenario, model_value, scenario_problems
from .topology import TopologyError, load_topology

EXIT_OK, EXIT_REPORT, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

METRICS = [c for c in CSV_COLUMNS if c not in ("scheme", "cmr", "seed")]


class UsageError(Exception):
    """Bad argument value; reported with exit code 2."""


def _fail(msg: str, code: int) -> int:
    print(f"locsim: error: {msg}", file=sys.stderr)
    return code


def _model_flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _model_params(args) -> ModelParams:
    values = {}
    for f in dataclasses.fields(ModelParams):
        raw = getattr(args, f"mp_{f.name}")
        if raw is None:
            continue
        try:
            values[f.name] = model_value(f.name, raw)
        except ValueError:
            raise UsageError(f"{f.name.replace('_', '-')}: cannot parse {raw!r}") from None
    return ModelParams(**values)


def parse_floats(text: str, what: str) -> list[float]:
    try:
        out = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what}: cannot parse {text!r}") from None
    if not out:
        raise UsageError(f"{what}: empty list")
    return out


def parse_seeds(text: str) -> list[int]:
    """``"1-10"``, ``"1,4,9"`` or a mix of both."""
    seeds: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            lo, dash, hi = part.partition("-")
            if dash:
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise UsageError(f"seeds: cannot parse {text!r}") from None
    if not seeds:
        raise UsageError("seeds: empty list")
    return seeds


def structure_problems(sc: Scenario) -> list[str]:
    return sc.tree.problems() + sc.grid.problems(sc.tree.leaves)


def _load_checked(path: str) -> Scenario:
    sc = load_scenario(path)
    problems = structure_problems(sc)
    if problems:
        raise ScenarioError(f"topology: {problems[0]}")
    return sc


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


# -- commands --------------------------------------------------------------------------


def cmd_generate_mobility(args) -> int:
    params = _model_params(args)
    problems = params.problems()
    if args.nodes < 1:
        problems.insert(0, "nodes must be at least 1")
    if args.duration <= 0:
        problems.insert(0, "duration must be positive")
    if problems:
        return _fail("; ".join(problems), EXIT_CONFIG)
    try:
        _, grid = load_topology(args.topology)
    except (OSError, TopologyError) as exc:
        return _fail(f"topology: {exc}", EXIT_CONFIG)
    if (grid.width, grid.height) != (params.width, params.height):
        params = dataclasses.replace(params, width=grid.width, height=grid.height)
        problems = params.problems()
        if problems:
            return _fail("; ".join(problems), EXIT_CONFIG)
    rng = random.Random(f"locsim:{args.seed}:mobility")
    try:
        records = generate_trace(args.model, args.nodes, params, args.duration, rng, group_size=args.group_size)
    except ValueError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    moves = emit_zone_crossings(records, grid)
    out = args.out or f"{args.model}-{args.seed}.mobtrace"
    write_trace(out, records, params.width, params.height)
    if args.zone_events:
        write_zone_events(args.zone_events, moves)
    print(f"nodes={args.nodes} duration={args.duration:g} samples={len(records)} zone_crossings={len(moves)} -> {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _load_checked(args.scenario)
    if args.seed is not None:
        sc = sc.with_(seed=args.seed)
    scheme = args.scheme or sc.scheme
    if scheme not in SCHEMES:
        raise UsageError(f"scheme: unknown scheme {scheme!r}")
    cmr = float(args.cmr) if args.cmr is not None else sc.calls.cmr
    if cmr is not None and cmr <= 0:
        raise UsageError("cmr must be positive")
    ledger = run(sc, scheme=scheme, cmr=cmr, check=args.check)
    _emit(csv_text([ledger_row(ledger, scheme, cmr, sc.seed)], CSV_COLUMNS), args.out or sc.output)
    return EXIT_OK


def aggregate(rows: Sequence[dict]) -> list[dict]:
    """Mean and sample standard deviation of every metric per (scheme, cmr)."""
    cells: dict[tuple, list[dict]] = defaultdict(list)
    for r in rows:
        cells[(r["scheme"], r["cmr"])].append(r)
    out = []
    for (scheme, cmr), group in sorted(cells.items(), key=lambda kv: (kv[0][0], float(kv[0][1] or 0))):
        row = {"scheme": scheme, "cmr": cmr, "n": len(group)}
        for m in METRICS:
            vals = [float(g[m]) for g in group if g.get(m) not in (None, "")]
            row[f"{m}_mean"] = repr(statistics.fmean(vals)) if vals else ""
            row[f"{m}_std"] = repr(statistics.stdev(vals)) if len(vals) > 1 else ("0.0" if vals else "")
        out.append(row)
    return out


def aggregate_columns() -> list[str]:
    cols = ["scheme", "cmr", "n"]
    for m in METRICS:
        cols += [f"{m}_mean", f"{m}_std"]
    return cols


def cmd_sweep(args) -> int:
    sc = _load_checked(args.scenario)
    cmrs = parse_floats(args.cmr, "cmr")
    if any(c <= 0 or not math.isfinite(c) for c in cmrs):
        raise UsageError("cmr values must be positive")
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    if not schemes:
        raise UsageError("schemes: empty list")
    for s in schemes:
        if s not in SCHEMES:
            raise UsageError(f"schemes: unknown scheme {s!r}")
    seeds = parse_seeds(args.seeds) if args.seeds else [sc.seed]
    results = sweep_cmr(sc, cmrs, schemes, seeds)
    rows = [ledger_row(led, name, cmr, seed) for name, cmr, seed, led in results]
    out = args.out or sc.output or "sweep.csv"
    atomic_write_text(out, csv_text(rows, CSV_COLUMNS))

    digests: dict[str, dict[str, str]] = defaultdict(dict)
    for name, cmr, seed, led in results:
        digests[f"{cmr!r}/{seed}"][name] = led.stream_digest
    paired = all(len(set(d.values())) == 1 for d in digests.values())
    meta = {
        "schemes": schemes,
        "cmr": cmrs,
        "seeds": seeds,
        "paired": paired,
        "stream_digests": {k: next(iter(v.values())) if paired else v for k, v in digests.items()},
    }
    atomic_write_text(f"{out}.meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if args.plot_data:
        atomic_write_text(args.plot_data, csv_text(aggregate(rows), aggregate_columns()))
    print(f"{len(rows)} runs -> {out} (paired={'yes' if paired else 'no'})")
    return EXIT_OK if paired else _fail("event streams differ across schemes", EXIT_ABORT)


def validation_report(path: str) -> list[tuple[str, list[str]]]:
    """``(check name, failures)`` pairs; a check passes when its list is empty."""
    try:
        sc = load_scenario(path, check=False)
    except ScenarioError as exc:
        return [("scenario parses", [str(exc)])]
    tree_problems = sc.tree.problems()
    return [
        ("scenario parses", []),
        ("topology connectivity", [p for p in tree_problems if "min-children" not in p]),
        ("min-children rule", [p for p in tree_problems if "min-children" in p]),
        ("zone grid coverage", [p for p in sc.grid.problems(sc.tree.leaves) if "probability" not in p]),
        ("probability sums", [p for p in sc.grid.problems() if "probability" in p]),
        ("parameter ranges", scenario_problems(sc)),
    ]


def cmd_validate(args) -> int:
    report = validation_report(args.scenario)
    failed = 0
    for name, problems in report:
        print(f"{'PASS' if not problems else 'FAIL'} {name}")
        for p in problems:
            print(f"  {p}")
        failed += bool(problems)
    return EXIT_REPORT if failed else EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for path in args.csv:
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                missing = {"scheme", "cmr"} - set(reader.fieldnames or ())
                if missing:
                    raise UsageError(f"{path}: missing column(s) {', '.join(sorted(missing))}")
                rows.extend(reader)
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc}") from None
    agg = aggregate(rows)
    if args.out:
        atomic_write_text(args.out, csv_text(agg, aggregate_columns()))
    for r in agg:
        parts = [f"{r['scheme']:>8} cmr={r['cmr']:<6} n={r['n']}"]
        for m in ("hop_cost", "db_writes", "mean_lookup_hops", "local_ratio"):
            mean, std = r[f"{m}_mean"], r[f"{m}_std"]
            if mean:
                parts.append(f"{m}={float(mean):.4g}±{float(std):.2g}")
        print("  ".join(parts))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="locsim", description="Location-management simulator")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-mobility", help="sample a synthetic mobility trace")
    g.add_argument("--model", required=True, choices=MODELS)
    g.add_argument("--nodes", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--duration", type=float, default=3600.0)
    g.add_argument("--group-size", type=int, default=5)
    g.add_argument("--topology", default="canonical", help="topology file used to count zone crossings")
    g.add_argument("--out")
    g.add_argument("--zone-events", metavar="PATH", help="also write the zone-crossing events")
    mp = g.add_argument_group("model parameters")
    for f in dataclasses.fields(ModelParams):
        mp.add_argument(_model_flag(f.name), dest=f"mp_{f.name}", metavar="V")
    g.set_defaults(func=cmd_generate_mobility)

    s = sub.add_parser("simulate", help="run one scheme on a scenario")
    s.add_argument("scenario")
    s.add_argument("--scheme", choices=SCHEMES)
    s.add_argument("--cmr", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--check", choices=("off", "touched", "full"), default="off")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="run schemes over a list of call-to-mobility ratios")
    w.add_argument("scenario")
    w.add_argument("--cmr", required=True, help="comma-separated list")
    w.add_argument("--schemes", default=",".join(SCHEMES))
    w.add_argument("--seeds", help="e.g. 1-10 or 1,3,5 (default: the scenario seed)")
    w.add_argument("--out")
    w.add_argument("--plot-data", metavar="PATH", help="per-cell mean/stddev table")
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="check a scenario and print a pass/fail report")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("report", help="aggregate result CSVs into mean±stddev per cell")
    r.add_argument("csv", nargs="+")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ScenarioError) as exc:
        return _fail(str(exc), EXIT_CONFIG)
    except SimulationAbort as exc:
        return _fail(f"aborted at event {exc.index}: {exc.reason}", EXIT_ABORT)
    except OSError as exc:
        return _fail(str(exc), EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
