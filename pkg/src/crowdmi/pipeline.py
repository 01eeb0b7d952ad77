"""Run orchestration: step the engine, fold per-step metrics into per-second
series, log leaving profiles, detect alarms and serialize results.

A run is deterministic for fixed (scenario, seed, params, MI config): the
serialized RunResult is byte-identical across replays.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis
from .analysis import MetricsRecord, MetricsSeries, MIConfig, TrajectoryWriter, detect_crush
from .engine import SFMParams, Simulation, SimulationHalt, load_params
from .scenario import Scenario, spawn_population


@dataclass
class RunResult:
    scenario_name: str
    seed: int
    params_id: str
    mi_config: MIConfig
    population: int
    series: MetricsSeries
    total_evac_time_s: float | None          # None = incomplete at max_time
    peak_force_N: float | None
    peak_force_time_s: float | None
    alarms: list[tuple[float, float]]
    final_exit_counts: dict[str, int]
    max_wall_overlap_m: float
    wall_crossings: int
    extra_series: dict[str, MetricsSeries] = field(default_factory=dict)

    @property
    def leaving_profile(self) -> dict[str, list[int | None]]:
        """Per-exit cumulative exit counts at 1 s resolution."""
        out: dict[str, list[int | None]] = {e: [] for e in self.series.exit_ids}
        for rec in self.series.records:
            for e in self.series.exit_ids:
                out[e].append(None if rec.exits is None else rec.exits.get(e))
        return out

    @property
    def agents_remaining_final(self) -> int:
        if not self.series.records:
            return self.population - sum(self.final_exit_counts.values())
        return self.series.records[-1].agents_remaining

    def to_dict(self) -> dict:
        return {
            "schema": "crowdmi-run-v1",
            "scenario_name": self.scenario_name,
            "seed": self.seed,
            "params_id": self.params_id,
            "mi_config": self.mi_config.to_dict(),
            "population": self.population,
            "exit_ids": list(self.series.exit_ids),
            "total_evac_time_s": self.total_evac_time_s,
            "peak_force_N": self.peak_force_N,
            "peak_force_time_s": self.peak_force_time_s,
            "peak_force_exceeds_fatal": (
                None
                if self.peak_force_N is None
                else self.peak_force_N >= analysis.FATAL_COMPRESSION_N
            ),
            "alarms": [list(a) for a in self.alarms],
            "final_exit_counts": self.final_exit_counts,
            "max_wall_overlap_m": self.max_wall_overlap_m,
            "wall_crossings": self.wall_crossings,
            "series": self.series.to_rows(),
            "extra_series": {k: v.to_rows() for k, v in self.extra_series.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


def _series_from_parts(
    exit_ids: Sequence[str],
    dt: float,
    window_steps: int,
    mi_windows: list[float | None],
    force_windows: list[float | None],
    snapshots: list[tuple[int, dict[str, int]]],
) -> MetricsSeries:
    records = []
    for w, (mi, force) in enumerate(zip(mi_windows, force_windows)):
        remaining, exits = snapshots[w]
        records.append(
            MetricsRecord(
                t_s=(w + 1) * window_steps * dt,
                mi_bits=mi,
                avg_force_N=force,
                agents_remaining=remaining,
                exits=exits,
            )
        )
    return MetricsSeries(exit_ids=tuple(exit_ids), records=records)


def run(
    scenario: Scenario,
    params: SFMParams | None = None,
    mi_cfg: MIConfig | None = None,
    seed: int | None = None,
    extra_mi_cfgs: dict[str, MIConfig] | None = None,
    trajectory_path: str | Path | None = None,
    mi_threshold_bits: float = analysis.DEFAULT_MI_THRESHOLD_BITS,
    sustain_s: float = analysis.DEFAULT_SUSTAIN_S,
) -> RunResult:
    """Run one evacuation and assemble its RunResult.

    Terminates when the building empties or t reaches max_time_s. Engine halt
    states (trapped population, non-finite force) propagate as exceptions with
    the partial RunResult attached on ``exc.partial_result``. ``extra_mi_cfgs``
    adds MI probes at alternative discretisations in the same run (the engine
    is stepped once; only the binning differs).
    """
    params = params or load_params()
    mi_cfg = mi_cfg or MIConfig()
    mi_cfg.validate()
    probes: dict[str, MIConfig] = {"primary": mi_cfg}
    for label, cfg in (extra_mi_cfgs or {}).items():
        cfg.validate()
        probes[label] = cfg

    agents = spawn_population(
        scenario,
        radius_range=params.radius_range_m,
        speed_range=params.desired_speed_range_ms,
        mass=params.mass_kg,
        seed=seed,
    )
    used_seed = scenario.rng_seed if seed is None else seed
    sim = Simulation(scenario, params, agents, seed=used_seed)
    bounds = scenario.floorplan.bounds
    window = mi_cfg.window_steps
    max_steps = int(round(scenario.max_time_s / scenario.dt_s))

    per_step_mi: dict[str, list[float | None]] = {label: [] for label in probes}
    per_step_force: list[float] = []
    snapshots: list[tuple[int, dict[str, int]]] = []
    total_evac_time: float | None = 0.0 if not agents else None

    writer = TrajectoryWriter(trajectory_path) if trajectory_path else None
    halt: SimulationHalt | None = None
    try:
        while sim.step_index < max_steps and sim.crowd.count > 0:
            try:
                frame = sim.step()
            except SimulationHalt as err:
                halt = err
                break
            crowd = frame.crowd
            for label, cfg in probes.items():
                per_step_mi[label].append(
                    analysis.crowd_order_parameter(
                        crowd.pos[:, 0], crowd.pos[:, 1], crowd.heading, cfg, bounds
                    )
                )
            per_step_force.append(
                frame.per_step_contact_force_sum / max(1, crowd.count)
            )
            if writer:
                writer.write_step(frame.t, crowd.ids, crowd.pos, crowd.heading)
            if sim.step_index % window == 0:
                snapshots.append((crowd.count, dict(frame.exits_log)))
            if crowd.count == 0 and total_evac_time is None:
                total_evac_time = frame.t
    finally:
        if writer:
            writer.close()

    exit_ids = scenario.floorplan.exit_ids
    mi_windows = {
        label: analysis.windowed_series(vals, window) for label, vals in per_step_mi.items()
    }
    force_windows = analysis.windowed_series(per_step_force, window)
    n_records = len(force_windows)
    series = _series_from_parts(
        exit_ids, scenario.dt_s, window, mi_windows["primary"][:n_records],
        force_windows, snapshots[:n_records],
    )
    extra = {
        label: _series_from_parts(
            exit_ids, scenario.dt_s, window, mi_windows[label][:n_records],
            force_windows, snapshots[:n_records],
        )
        for label in probes
        if label != "primary"
    }

    defined_force = [
        (r.avg_force_N, r.t_s) for r in series.records if r.avg_force_N is not None
    ]
    peak_force, peak_time = max(defined_force, default=(None, None))

    result = RunResult(
        scenario_name=scenario.name,
        seed=used_seed,
        params_id=params.params_id,
        mi_config=mi_cfg,
        population=scenario.population,
        series=series,
        total_evac_time_s=total_evac_time,
        peak_force_N=peak_force,
        peak_force_time_s=peak_time,
        alarms=detect_crush(
            series, mi_threshold_bits, sustain_s, min_agents=mi_cfg.min_agents_for_mi
        ),
        final_exit_counts=dict(sim.exits_log),
        max_wall_overlap_m=sim.max_wall_overlap,
        wall_crossings=sim.wall_crossings,
        extra_series=extra,
    )
    if halt is not None:
        halt.partial_result = result
        raise halt
    return result


@dataclass(frozen=True)
class CompareReport:
    """Side-by-side verdicts for two runs of the same scenario family."""

    window_s: tuple[float, float]
    mean_mi_a: float | None
    mean_mi_b: float | None
    peak_force_a: float | None
    peak_force_b: float | None
    peak_force_time_a: float | None
    peak_force_time_b: float | None
    evac_time_a: float | None
    evac_time_b: float | None
    deltas: tuple[tuple[float, float | None, float | None], ...]

    @property
    def mi_higher_in_a(self) -> bool | None:
        if self.mean_mi_a is None or self.mean_mi_b is None:
            return None
        return self.mean_mi_a > self.mean_mi_b

    @property
    def peak_force_higher_in_b(self) -> bool | None:
        if self.peak_force_a is None or self.peak_force_b is None:
            return None
        return self.peak_force_b > self.peak_force_a

    def summary(self) -> str:
        lines = [
            f"window {self.window_s[0]:.0f}-{self.window_s[1]:.0f} s:",
            f"  mean MI: a={_fmt(self.mean_mi_a)} bits, b={_fmt(self.mean_mi_b)} bits",
            f"  peak avg force: a={_fmt(self.peak_force_a)} N @ {_fmt(self.peak_force_time_a)} s, "
            f"b={_fmt(self.peak_force_b)} N @ {_fmt(self.peak_force_time_b)} s",
            f"  evac time: a={_fmt(self.evac_time_a)} s, b={_fmt(self.evac_time_b)} s",
        ]
        return "\n".join(lines)


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.3g}"


def window_mean_mi(series: MetricsSeries, window_s: tuple[float, float]) -> float | None:
    vals = [
        r.mi_bits
        for r in series.records
        if window_s[0] <= r.t_s <= window_s[1] and r.mi_bits is not None
    ]
    return sum(vals) / len(vals) if vals else None


def compare_runs(
    a: RunResult,
    b: RunResult,
    window_s: tuple[float, float] = (40.0, 110.0),
) -> CompareReport:
    """Aligned deltas plus the ordering verdicts used by the acceptance tests."""
    b_by_t = {r.t_s: r for r in b.series.records}
    deltas = []
    for ra in a.series.records:
        rb = b_by_t.get(ra.t_s)
        if rb is None:
            continue
        dmi = (
            None
            if ra.mi_bits is None or rb.mi_bits is None
            else rb.mi_bits - ra.mi_bits
        )
        dforce = (
            None
            if ra.avg_force_N is None or rb.avg_force_N is None
            else rb.avg_force_N - ra.avg_force_N
        )
        deltas.append((ra.t_s, dmi, dforce))
    return CompareReport(
        window_s=window_s,
        mean_mi_a=window_mean_mi(a.series, window_s),
        mean_mi_b=window_mean_mi(b.series, window_s),
        peak_force_a=a.peak_force_N,
        peak_force_b=b.peak_force_N,
        peak_force_time_a=a.peak_force_time_s,
        peak_force_time_b=b.peak_force_time_s,
        evac_time_a=a.total_evac_time_s,
        evac_time_b=b.total_evac_time_s,
        deltas=tuple(deltas),
    )
