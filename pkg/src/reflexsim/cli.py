"""Command-line harness: ``run``, ``compare`` and ``sweep``.

Exit codes: 0 success, 1 scenario parse/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from . import metrics
from .core import ScenarioError, Scheme, SchemeKind
from .engine import RunResult, run
from .scenario import ScenarioFile, ScenarioFileError, load_scenario, parse_scheme

OUTPUT_ENV = "REFLEXSIM_OUTPUT_DIR"
SWEEP_PARAMS = ("alpha", "r", "D_exploit", "T_int")

logger = logging.getLogger("reflexsim")


class UsageError(Exception):
    pass


def _load(args) -> ScenarioFile:
    sf = load_scenario(args.scenario)
    if args.efficiency is not None:
        sf = sf.with_efficiency(args.efficiency)
    sim_changes = {}
    if args.conv_tau is not None:
        sim_changes["conv_tau"] = args.conv_tau
    if args.tick is not None:
        sim_changes["tick_dt"] = args.tick
    if args.seed is not None:
        sim_changes["seed"] = args.seed
    return sf.with_sim(**sim_changes) if sim_changes else sf


def _outdir(args) -> Path:
    out = args.output or os.environ.get(OUTPUT_ENV)
    if not out:
        raise UsageError(f"no output directory: pass -o or set {OUTPUT_ENV}")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _attach_log(outdir: Path) -> logging.Handler:
    handler = logging.FileHandler(outdir / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.INFO)
    return handler


def _window(sf: ScenarioFile) -> tuple[float, float]:
    sim = sf.sim
    return sim.warmup_window, sim.duration - sim.cooldown_window


def _run_one(sf: ScenarioFile, seed: int, series_every: int = 0) -> RunResult:
    return run(sf.build(seed), series_every=series_every)


def _summary_text(sf: ScenarioFile, seed: int, result: RunResult, baseline: RunResult | None = None) -> str:
    scenario_window = _window(sf)
    summary = metrics.summarize(result.records, scenario_window,
                                baseline.records if baseline else None)
    lines = [
        "[run]",
        f"scheme = {sf.scheme.label}",
        f"seed = {seed}",
        f"flows = {len(result.records)}",
        f"finished = {sum(r.finished for r in result.records)}",
        f"end_time_s = {result.end_time:.9g}",
        f"window_s = {scenario_window[0]:.9g}..{scenario_window[1]:.9g}",
        f"nonconvergence_events = {sum(1 for e in result.events if e[1] == 'NonConvergence')}",
    ]
    text = "\n".join(lines) + "\n" + summary.to_text()
    if len(result.records) <= 50:
        rows = ["[flows]"]
        for rec in result.records:
            fct = "" if rec.fct is None else f"{rec.fct:.9g}"
            rows.append(
                f"flow.{rec.flow_id} = kind={rec.kind} fct_s={fct} mean_rate_gbps={rec.mean_rate / 1e9:.6g} "
                f"fraction_delivered={rec.fraction_delivered:.6g} switches={rec.priority_switch_count}"
            )
        text += "\n".join(rows) + "\n"
    return text


def cmd_run(args) -> int:
    sf = _load(args)
    outdir = _outdir(args)
    handler = _attach_log(outdir)
    try:
        seed = sf.sim.seed
        series_every = int(sf.outputs.get("series_every", 0))
        if args.series_every is not None:
            series_every = args.series_every
        logger.info("run %s seed=%d scheme=%s", args.scenario, seed, sf.scheme.label)
        start = time.time()
        result = _run_one(sf, seed, series_every)
        logger.info("finished in %.2f s wall-clock", time.time() - start)
        (outdir / "flows.csv").write_text(metrics.records_to_csv(result.records))
        (outdir / "timeseries.csv").write_text(metrics.rows_to_csv(metrics.SERIES_COLUMNS, result.series))
        (outdir / "links.csv").write_text(metrics.rows_to_csv(metrics.LINK_COLUMNS, result.link_series))
        (outdir / "summary.txt").write_text(_summary_text(sf, seed, result))
        print((outdir / "summary.txt").read_text(), end="")
    finally:
        logger.removeHandler(handler)
        handler.close()
    return 0


def _parse_schemes(names: Sequence[str]) -> list[Scheme]:
    try:
        return [parse_scheme(n) for n in names]
    except ScenarioFileError as exc:
        raise UsageError(str(exc)) from None


def _job(payload):
    sf, seed = payload
    return _run_one(sf, seed).records


def _map(jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_job, jobs))


def _seeds(args, sf: ScenarioFile) -> list[int]:
    base = sf.sim.seed
    return [base + k for k in range(max(1, args.seeds))]


def _metric_rows(label: str, seed: int, base, treated, window) -> list[tuple]:
    summary = metrics.summarize(treated, window, base)
    rows = []
    for kind in ("regular", "flexible"):
        st = summary.groups[kind]
        for key in ("mean", "median", "p90", "p99"):
            value = getattr(st, key)
            if value is not None:
                rows.append((label, seed, f"{kind}.fct_{key}_s", value))
    for key, value in (summary.speedup or {}).items():
        rows.append((label, seed, f"speedup.{key}", value))
    for key, value in (summary.violation or {}).items():
        rows.append((label, seed, f"violation.{key}", value))
    for key, value in summary.fraction_delivered.items():
        rows.append((label, seed, f"fraction_delivered.{key}", value))
    return rows


def _spread(rows: list[tuple], key_cols: int) -> list[str]:
    """min/mean/max of each metric across seeds."""
    grouped: dict[tuple, list[float]] = {}
    for row in rows:
        key = row[:key_cols] + (row[key_cols + 1],)
        grouped.setdefault(key, []).append(row[-1])
    out = []
    for key in sorted(grouped, key=lambda k: tuple(str(x) for x in k)):
        values = grouped[key]
        out.append(" ".join(str(k) for k in key)
                   + f" = min={min(values):.6g} mean={statistics.fmean(values):.6g} max={max(values):.6g}")
    return out


def cmd_compare(args) -> int:
    sf = _load(args)
    schemes = _parse_schemes(args.schemes)
    outdir = _outdir(args)
    handler = _attach_log(outdir)
    try:
        window = _window(sf)
        seeds = _seeds(args, sf)
        labels = ["baseline"] + [s.label for s in schemes if s.kind is not SchemeKind.BASELINE]
        variants = {"baseline": sf.with_scheme(Scheme.baseline())}
        for s in schemes:
            if s.kind is not SchemeKind.BASELINE:
                variants[s.label] = sf.with_scheme(s)
        jobs = [(variants[label], seed) for seed in seeds for label in labels]
        logger.info("compare %s schemes=%s seeds=%s", args.scenario, labels, seeds)
        results = _map(jobs, args.jobs)
        by_key = {(seed, label): recs for (seed, label), recs in
                  zip([(seed, label) for seed in seeds for label in labels], results)}

        rows: list[tuple] = []
        speed_rows = []
        requested = [s.label for s in schemes]
        for seed in seeds:
            base = by_key[(seed, "baseline")]
            (outdir / f"flows_baseline_seed{seed}.csv").write_text(metrics.records_to_csv(base))
            for label in requested:
                treated = by_key[(seed, label)]
                if label != "baseline":
                    (outdir / f"flows_{label}_seed{seed}.csv").write_text(metrics.records_to_csv(treated))
                measured = [r for r in treated if metrics.in_window(r, *window)]
                speedups, _ = metrics.speedup_join([r for r in base if metrics.in_window(r, *window)], measured)
                info = {r.flow_id: r for r in measured}
                base_info = {r.flow_id: r for r in base}
                for fid, s in speedups.items():
                    speed_rows.append((label, seed, fid, info[fid].kind, info[fid].size_F,
                                       base_info[fid].fct, info[fid].fct, s))
                rows.extend(_metric_rows(label, seed, base, treated, window))
        (outdir / "speedups.csv").write_text(metrics.rows_to_csv(
            ["scheme", "seed", "flow_id", "kind", "size_F", "fct_baseline", "fct_treated", "speedup"], speed_rows))
        (outdir / "compare.csv").write_text(metrics.rows_to_csv(["scheme", "seed", "metric", "value"], rows))
        text = "[compare]\n" + f"seeds = {seeds}\n" + "\n".join(_spread(rows, 1)) + "\n"
        (outdir / "compare_summary.txt").write_text(text)
        print(text, end="")
    finally:
        logger.removeHandler(handler)
        handler.close()
    return 0


def _apply_param(sf: ScenarioFile, param: str, value: float) -> ScenarioFile:
    if param in ("alpha", "r"):
        return sf.with_flexible(**{param: value})
    if param == "D_exploit":
        return sf.with_phases(D_exploit=int(value))
    return sf.with_phases(T_int=value)


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_PARAMS:
        raise UsageError(f"--param must be one of {SWEEP_PARAMS}")
    if not args.values:
        raise UsageError("--values needs at least one value")
    sf = _load(args)
    outdir = _outdir(args)
    handler = _attach_log(outdir)
    try:
        window = _window(sf)
        seeds = _seeds(args, sf)
        values = [float(v) for v in args.values]
        variants = [_apply_param(sf, args.param, v) for v in values]
        for v in variants:
            v.build(seeds[0])  # fail fast on invalid combinations
        baseline = sf.with_scheme(Scheme.baseline())
        jobs = [(baseline, seed) for seed in seeds]
        jobs += [(variant, seed) for variant in variants for seed in seeds]
        logger.info("sweep %s %s=%s seeds=%s", args.scenario, args.param, values, seeds)
        results = _map(jobs, args.jobs)
        bases = dict(zip(seeds, results[: len(seeds)]))
        rows = []
        rest = iter(results[len(seeds):])
        for value in values:
            for seed in seeds:
                treated = next(rest)
                for _, s, metric, v in _metric_rows("x", seed, bases[seed], treated, window):
                    rows.append((args.param, value, s, metric, v))
        (outdir / "results.csv").write_text(
            metrics.rows_to_csv(["param", "param_value", "seed", "metric", "value"], rows))
        text = "[sweep]\n" + f"param = {args.param}\nseeds = {seeds}\n" + "\n".join(
            _spread([(p, v, s, m, x) for p, v, s, m, x in rows], 2)) + "\n"
        (outdir / "sweep_summary.txt").write_text(text)
        print(text, end="")
    finally:
        logger.removeHandler(handler)
        handler.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", help="scenario file, or the name of a bundled scenario")
    common.add_argument("-o", "--output", help=f"output directory (default: ${OUTPUT_ENV})")
    common.add_argument("--seed", type=int, help="override sim.seed")
    common.add_argument("--efficiency", type=float, help="override every link's efficiency factor")
    common.add_argument("--conv-tau", type=float, help="override transport convergence time constant (s)")
    common.add_argument("--tick", type=float, help="override tick length (s)")

    parser = argparse.ArgumentParser(prog="reflexsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one scenario")
    p.add_argument("--series-every", type=int, help="record time series every N ticks (0 = off)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", parents=[common], help="run schemes against the baseline on one workload")
    p.add_argument("--schemes", nargs="+", required=True,
                   help="e.g. reflex weighted-9-1 absolute")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", parents=[common], help="sweep one parameter of the flexible class")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", nargs="*", default=[])
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    logging.getLogger().addHandler(console)
    try:
        return args.func(args)
    except (ScenarioFileError, ScenarioError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        logger.exception("run failed")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    finally:
        logging.getLogger().removeHandler(console)


if __name__ == "__main__":
    sys.exit(main())
