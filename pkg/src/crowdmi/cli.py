"""Command-line interface.

Subcommands mirror the experimental workflow: validate scenarios, run single
simulations or seed sweeps, analyze dumped trajectories offline, correlate
force against MI, and compare two runs. Exit codes: 0 success, 1 validation
failure, 2 runtime halt (trapped population / non-finite force). Diagnostics
go to stderr; data goes to files and stdout.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import analysis, pipeline, stats
from .analysis import MIConfig, MetricsSeries
from .engine import SimulationHalt, load_params
from .scenario import (
    ScenarioFormatError,
    ScenarioValidationError,
    load_scenario,
    validate_scenario,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME_HALT = 2


def _mi_config_from_args(args) -> MIConfig:
    return MIConfig(
        x_bins=args.bins_x,
        y_bins=args.bins_y,
        theta_bins=args.bins_theta,
    )


def _add_mi_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bins-x", type=int, default=8, help="spatial x bins (default 8)")
    p.add_argument("--bins-y", type=int, default=8, help="spatial y bins (default 8)")
    p.add_argument("--bins-theta", type=int, default=8, help="heading bins (default 8)")


def _add_alarm_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--mi-threshold", type=float, default=analysis.DEFAULT_MI_THRESHOLD_BITS,
        help="alarm MI threshold in bits (default 0.1)",
    )
    p.add_argument(
        "--sustain", type=float, default=analysis.DEFAULT_SUSTAIN_S,
        help="alarm sustain duration in seconds (default 10)",
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_validate(args) -> int:
    code = EXIT_OK
    for path in args.scenario:
        try:
            load_scenario(path)
        except ScenarioValidationError as err:
            print(f"{path}: INVALID", file=sys.stderr)
            for v in err.violations:
                print(f"  - {v}", file=sys.stderr)
            code = EXIT_VALIDATION
        except ScenarioFormatError as err:
            print(f"{path}: PARSE ERROR: {err}", file=sys.stderr)
            code = EXIT_VALIDATION
        else:
            print(f"{path}: OK")
    return code


def _run_one(scenario_path, seed, params_path, mi_cfg, out_dir, dump_trajectory,
             mi_threshold, sustain):
    scenario = load_scenario(scenario_path)
    params = load_params(params_path)
    stem = f"{scenario.name}_seed{seed if seed is not None else scenario.rng_seed}"
    traj = out_dir / f"{stem}.traj.csv" if dump_trajectory else None
    result = pipeline.run(
        scenario,
        params=params,
        mi_cfg=mi_cfg,
        seed=seed,
        trajectory_path=traj,
        mi_threshold_bits=mi_threshold,
        sustain_s=sustain,
    )
    result.write(out_dir / f"{stem}.run.json")
    result.series.to_csv(out_dir / f"{stem}.series.csv")
    return result, stem


def _cmd_run(args) -> int:
    out = _out_dir(args)
    try:
        result, stem = _run_one(
            args.scenario, args.seed, args.params, _mi_config_from_args(args),
            out, args.dump_trajectory, args.mi_threshold, args.sustain,
        )
    except (ScenarioValidationError, ScenarioFormatError) as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except SimulationHalt as err:
        print(f"simulation halted: {err}", file=sys.stderr)
        if err.partial_result is not None:
            err.partial_result.write(out / "partial.run.json")
            err.partial_result.series.to_csv(out / "partial.series.csv")
            print(f"partial results written to {out}", file=sys.stderr)
        return EXIT_RUNTIME_HALT
    evac = result.total_evac_time_s
    print(
        f"{stem}: evac_time={'incomplete' if evac is None else f'{evac:.2f} s'} "
        f"peak_force={result.peak_force_N:.1f} N @ {result.peak_force_time_s:.0f} s "
        f"alarms={result.alarms}"
    )
    return EXIT_OK


def _cmd_analyze(args) -> int:
    out = _out_dir(args)
    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioValidationError, ScenarioFormatError) as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    series = analysis.series_from_trajectory(
        args.trajectory, scenario, _mi_config_from_args(args)
    )
    dest = out / (Path(args.trajectory).stem + ".series.csv")
    series.to_csv(dest)
    alarms = analysis.detect_crush(series, args.mi_threshold, args.sustain)
    print(f"{args.trajectory}: {len(series)} records, alarms={alarms}")
    print(f"series written to {dest}")
    return EXIT_OK


def _cmd_correlate(args) -> int:
    out = _out_dir(args)
    series = [MetricsSeries.from_csv(p) for p in args.series]
    try:
        pooled = stats.correlate_series(series)
    except (ValueError, stats.UndefinedCorrelationError) as err:
        print(f"correlation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"pooled: {pooled.summary()}")
    lines = [f"pooled: {pooled.summary()}"]
    for path, s in zip(args.series, series):
        try:
            rep = stats.correlate_series(s)
            line = f"{path}: {rep.summary()}"
        except (ValueError, stats.UndefinedCorrelationError) as err:
            line = f"{path}: undefined ({err})"
        print(line)
        lines.append(line)
    stats.write_scatter_csv(pooled, out / "scatter.csv")
    (out / "correlation.txt").write_text("\n".join(lines) + "\n")
    print(f"scatter written to {out / 'scatter.csv'}")
    return EXIT_OK


def _load_run_series(path: str) -> MetricsSeries:
    raw = json.loads(Path(path).read_text())
    exit_ids = tuple(raw["exit_ids"])
    records = [
        analysis.MetricsRecord(
            t_s=row[0],
            mi_bits=row[1],
            avg_force_N=row[2],
            agents_remaining=row[3],
            exits=dict(zip(exit_ids, row[4])) if row[4] is not None else None,
        )
        for row in raw["series"]
    ]
    return MetricsSeries(exit_ids=exit_ids, records=records)


def _cmd_compare(args) -> int:
    reports = []
    for path in (args.run_a, args.run_b):
        raw = json.loads(Path(path).read_text())
        reports.append(raw)
    a_series = _load_run_series(args.run_a)
    b_series = _load_run_series(args.run_b)
    window = (args.window[0], args.window[1])
    mean_a = pipeline.window_mean_mi(a_series, window)
    mean_b = pipeline.window_mean_mi(b_series, window)
    print(f"window {window[0]:.0f}-{window[1]:.0f} s")
    for label, raw, mean in (("a", reports[0], mean_a), ("b", reports[1], mean_b)):
        evac = raw["total_evac_time_s"]
        print(
            f"  {label} ({raw['scenario_name']} seed {raw['seed']}): "
            f"mean MI={'n/a' if mean is None else f'{mean:.3f}'} bits, "
            f"peak force={raw['peak_force_N']:.1f} N @ {raw['peak_force_time_s']:.0f} s, "
            f"evac={'incomplete' if evac is None else f'{evac:.1f} s'}"
        )
    if mean_a is not None and mean_b is not None:
        print(f"  mean MI ordering: {'a > b' if mean_a > mean_b else 'b >= a'}")
    return EXIT_OK


def _sweep_worker(job):
    scenario_path, seed, params_path, cfg_kwargs, out_dir, mi_threshold, sustain = job
    return _run_one(
        scenario_path, seed, params_path, MIConfig(**cfg_kwargs),
        Path(out_dir), False, mi_threshold, sustain,
    )[1]


def _cmd_sweep(args) -> int:
    out = _out_dir(args)
    try:
        load_scenario(args.scenario)
    except (ScenarioValidationError, ScenarioFormatError) as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    cfg = _mi_config_from_args(args)
    jobs = [
        (args.scenario, seed, args.params, cfg.to_dict(), str(out), args.mi_threshold, args.sustain)
        for seed in args.seeds
    ]
    try:
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                for stem in pool.map(_sweep_worker, jobs):
                    print(f"done: {stem}")
        else:
            for job in jobs:
                print(f"done: {_sweep_worker(job)}")
    except SimulationHalt as err:
        print(f"simulation halted: {err}", file=sys.stderr)
        return EXIT_RUNTIME_HALT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdmi",
        description="Crowd evacuation simulator with a mutual-information crush indicator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate scenario files")
    p.add_argument("scenario", nargs="+", help="scenario file path or bundled name")
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("run", help="run one simulation")
    p.add_argument("scenario", help="scenario file path or bundled name")
    p.add_argument("--seed", type=int, default=None, help="override scenario rng_seed")
    p.add_argument("--params", default=None, help="params JSON (default: bundled sfm_default)")
    p.add_argument("--dump-trajectory", action="store_true", help="write per-step t,id,x,y,theta CSV")
    p.add_argument("--out", "-o", default="out", help="output directory")
    _add_mi_flags(p)
    _add_alarm_flags(p)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("analyze", help="recompute MI series from a trajectory CSV")
    p.add_argument("trajectory", help="trajectory CSV (t,id,x,y,theta)")
    p.add_argument("--scenario", required=True, help="scenario the trajectory came from")
    p.add_argument("--out", "-o", default="out", help="output directory")
    _add_mi_flags(p)
    _add_alarm_flags(p)
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("correlate", help="correlate force against MI across series CSVs")
    p.add_argument("series", nargs="+", help="metrics series CSV files")
    p.add_argument("--out", "-o", default="out", help="output directory")
    p.set_defaults(fn=_cmd_correlate)

    p = sub.add_parser("compare", help="compare two run result JSON files")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.add_argument("--window", type=float, nargs=2, default=(40.0, 110.0),
                   metavar=("START", "END"), help="comparison window in seconds")
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("sweep", help="run one scenario over several seeds")
    p.add_argument("scenario")
    p.add_argument("--seeds", type=int, nargs="+", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--params", default=None)
    p.add_argument("--out", "-o", default="out", help="output directory")
    _add_mi_flags(p)
    _add_alarm_flags(p)
    p.set_defaults(fn=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
