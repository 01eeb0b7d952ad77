"""Mutual-information order parameter, per-second series and crush detection.

The crowd order parameter discretises agent x, y and heading into coarse bins
and averages the two plug-in mutual informations

    I = ( I(X, Theta) + I(Y, Theta) ) / 2        [bits]

High values mean laminar, spatially organised flow; values near zero mean the
heading field has decoupled from position, the disordered regime associated
with crush. Per-step readings are averaged over a fixed window (100 steps =
1 s at the default dt) before being recorded; an undefined reading (too few
agents) is a gap, never a zero, because conflating "no data" with "perfect
disorder" would fabricate alarms.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Sustained compressive force around this level is potentially fatal
# (compressive asphyxia); reports annotate force peaks against it.
FATAL_COMPRESSION_N = 1500.0

DEFAULT_MI_THRESHOLD_BITS = 0.1
DEFAULT_SUSTAIN_S = 10.0


@dataclass(frozen=True)
class MIConfig:
    """Discretisation and sampling settings for the order parameter.

    Logarithms are base 2 (bits) throughout.
    """

    x_bins: int = 8
    y_bins: int = 8
    theta_bins: int = 8
    window_steps: int = 100
    min_agents_for_mi: int = 10

    def validate(self) -> None:
        if min(self.x_bins, self.y_bins, self.theta_bins) < 2:
            raise ValueError("all bin counts must be >= 2")
        if self.window_steps < 1:
            raise ValueError("window_steps must be >= 1")

    def to_dict(self) -> dict:
        return {
            "x_bins": self.x_bins,
            "y_bins": self.y_bins,
            "theta_bins": self.theta_bins,
            "window_steps": self.window_steps,
            "min_agents_for_mi": self.min_agents_for_mi,
        }


@dataclass(frozen=True)
class JointHistogram:
    """Binned joint counts for two discrete channels."""

    joint: np.ndarray

    def __post_init__(self):
        j = np.asarray(self.joint, dtype=float)
        if j.ndim != 2:
            raise ValueError("joint must be 2-D")
        if (j < 0).any():
            raise ValueError("joint counts must be non-negative")
        object.__setattr__(self, "joint", j)

    @property
    def a_bins(self) -> int:
        return self.joint.shape[0]

    @property
    def b_bins(self) -> int:
        return self.joint.shape[1]

    @property
    def n(self) -> float:
        return float(self.joint.sum())

    def marginal_a(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    def marginal_b(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    def transpose(self) -> "JointHistogram":
        return JointHistogram(self.joint.T.copy())

    @classmethod
    def from_indices(cls, ai: np.ndarray, bi: np.ndarray, a_bins: int, b_bins: int) -> "JointHistogram":
        flat = np.bincount(ai * b_bins + bi, minlength=a_bins * b_bins)
        return cls(flat.reshape(a_bins, b_bins).astype(float))


def mutual_information(h: JointHistogram, log_base: float = 2.0) -> float | None:
    """Plug-in mutual information of a joint histogram.

    Zero-count cells contribute nothing; tiny negative rounding residue is
    clamped to 0. Returns None (undefined) for an empty histogram — never NaN.
    """
    n = h.n
    if n <= 0:
        return None
    p = h.joint / n
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    mask = p > 0
    ratio = p[mask] / (pa[:, None] * pb[None, :])[mask]
    if log_base == 2.0:
        val = float(np.sum(p[mask] * np.log2(ratio)))
    else:
        val = float(np.sum(p[mask] * np.log(ratio))) / float(np.log(log_base))
    return max(0.0, val)


def spatial_bin_indices(values: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    """Uniform bin index over [lo, hi]; out-of-range values clip to edge bins."""
    span = hi - lo
    idx = np.floor((np.asarray(values, dtype=float) - lo) / span * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def heading_bin_indices(theta: np.ndarray, bins: int) -> np.ndarray:
    """Uniform bin index over [-pi, pi)."""
    idx = np.floor((np.asarray(theta, dtype=float) + np.pi) / (2.0 * np.pi) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def crowd_order_parameter(
    x: np.ndarray,
    y: np.ndarray,
    theta: np.ndarray,
    cfg: MIConfig,
    bounds,
) -> float | None:
    """Mean of I(X, Theta) and I(Y, Theta) over the instantaneous population, in bits.

    Returns None when fewer than cfg.min_agents_for_mi agents are present
    (the estimate is meaningless for a handful of people).
    """
    n = len(np.atleast_1d(x))
    if n < cfg.min_agents_for_mi:
        return None
    (x0, y0), (x1, y1) = bounds
    xi = spatial_bin_indices(x, x0, x1, cfg.x_bins)
    yi = spatial_bin_indices(y, y0, y1, cfg.y_bins)
    ti = heading_bin_indices(theta, cfg.theta_bins)
    mi_x = mutual_information(JointHistogram.from_indices(xi, ti, cfg.x_bins, cfg.theta_bins))
    mi_y = mutual_information(JointHistogram.from_indices(yi, ti, cfg.y_bins, cfg.theta_bins))
    return (mi_x + mi_y) / 2.0


def windowed_series(per_step: Sequence[float | None], window_steps: int) -> list[float | None]:
    """Mean of each full consecutive window; undefined entries are excluded.

    A window whose entries are all undefined yields a gap (None). A trailing
    partial window is dropped.
    """
    out: list[float | None] = []
    n_full = len(per_step) // window_steps
    for w in range(n_full):
        chunk = [v for v in per_step[w * window_steps : (w + 1) * window_steps] if v is not None]
        out.append(sum(chunk) / len(chunk) if chunk else None)
    return out


# ---------------------------------------------------------------------------
# Metrics series

@dataclass(frozen=True)
class MetricsRecord:
    t_s: float
    mi_bits: float | None
    avg_force_N: float | None
    agents_remaining: int | None
    exits: dict[str, int] | None = None


@dataclass
class MetricsSeries:
    """Per-second records of (time, MI, average contact force, occupancy, exits)."""

    exit_ids: tuple[str, ...]
    records: list[MetricsRecord] = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def validate(self) -> None:
        prev = None
        for r in self.records:
            if prev is not None and not np.isclose(r.t_s - prev, 1.0):
                raise ValueError(f"records not at 1 s spacing near t={r.t_s}")
            prev = r.t_s
            if r.mi_bits is not None and r.mi_bits < 0:
                raise ValueError(f"negative MI at t={r.t_s}")
            if r.avg_force_N is not None and r.avg_force_N < 0:
                raise ValueError(f"negative force at t={r.t_s}")

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    # -- CSV round trip ------------------------------------------------------

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "mi_bits", "avg_force_N", "agents_remaining", *self.exit_ids])
            for r in self.records:
                exits = r.exits or {}
                w.writerow(
                    [
                        repr(r.t_s),
                        "" if r.mi_bits is None else repr(r.mi_bits),
                        "" if r.avg_force_N is None else repr(r.avg_force_N),
                        "" if r.agents_remaining is None else r.agents_remaining,
                        *["" if e not in exits else exits[e] for e in self.exit_ids],
                    ]
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> "MetricsSeries":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty series file")
        header = rows[0]
        exit_ids = tuple(header[4:])
        records = []
        for row in rows[1:]:
            exits = {e: int(v) for e, v in zip(exit_ids, row[4:]) if v != ""}
            records.append(
                MetricsRecord(
                    t_s=float(row[0]),
                    mi_bits=None if row[1] == "" else float(row[1]),
                    avg_force_N=None if row[2] == "" else float(row[2]),
                    agents_remaining=None if row[3] == "" else int(row[3]),
                    exits=exits or None,
                )
            )
        return cls(exit_ids=exit_ids, records=records)

    def to_rows(self) -> list[list]:
        """Plain-list form used for JSON embedding (deterministic)."""
        out = []
        for r in self.records:
            exits = r.exits or {}
            out.append(
                [
                    r.t_s,
                    r.mi_bits,
                    r.avg_force_N,
                    r.agents_remaining,
                    [exits.get(e) for e in self.exit_ids],
                ]
            )
        return out


def detect_crush(
    series: MetricsSeries,
    mi_threshold_bits: float = DEFAULT_MI_THRESHOLD_BITS,
    sustain_s: float = DEFAULT_SUSTAIN_S,
    min_agents: int = 10,
) -> list[tuple[float, float]]:
    """Maximal intervals of sustained low MI: the crush-alarm condition.

    A record participates only if its MI is defined and the population is at
    least ``min_agents`` (gaps and the thin end-of-run tail carry no signal).
    Intervals shorter than ``sustain_s`` are discarded. Thresholds are
    tunable; the defaults are the shipped alarm settings.
    """
    if mi_threshold_bits <= 0 or sustain_s <= 0:
        raise ValueError("thresholds must be positive")
    records = series.records
    spacing = 1.0
    if len(records) >= 2:
        spacing = records[1].t_s - records[0].t_s
    alarms: list[tuple[float, float]] = []
    run_start: float | None = None
    run_end: float | None = None

    def flush():
        nonlocal run_start, run_end
        if run_start is not None:
            duration = run_end - run_start + spacing
            if duration >= sustain_s:
                alarms.append((run_start, run_end))
        run_start = run_end = None

    for r in records:
        usable = (
            r.mi_bits is not None
            and (r.agents_remaining is None or r.agents_remaining >= min_agents)
        )
        if usable and r.mi_bits < mi_threshold_bits:
            if run_start is None:
                run_start = r.t_s
            run_end = r.t_s
        else:
            flush()
    flush()
    return alarms


# ---------------------------------------------------------------------------
# Trajectory files (t,id,x,y,theta) and offline analysis

TRAJECTORY_HEADER = ["t", "id", "x", "y", "theta"]


class TrajectoryWriter:
    """Streams per-step agent rows to the documented trajectory CSV."""

    def __init__(self, path: str | Path):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(TRAJECTORY_HEADER)

    def write_step(self, t: float, ids: np.ndarray, pos: np.ndarray, heading: np.ndarray) -> None:
        t_repr = repr(float(t))
        for k in range(len(ids)):
            self._w.writerow(
                [t_repr, int(ids[k]), repr(float(pos[k, 0])), repr(float(pos[k, 1])), repr(float(heading[k]))]
            )

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def iter_trajectory_steps(path: str | Path):
    """Yield (t, x, y, theta) arrays per time step, in file order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRAJECTORY_HEADER:
            raise ValueError(f"{path}: expected header {TRAJECTORY_HEADER}, got {header}")
        cur_t: str | None = None
        xs: list[float] = []
        ys: list[float] = []
        ths: list[float] = []
        for row in reader:
            if cur_t is not None and row[0] != cur_t:
                yield float(cur_t), np.array(xs), np.array(ys), np.array(ths)
                xs, ys, ths = [], [], []
            cur_t = row[0]
            xs.append(float(row[2]))
            ys.append(float(row[3]))
            ths.append(float(row[4]))
        if cur_t is not None:
            yield float(cur_t), np.array(xs), np.array(ys), np.array(ths)


def series_from_trajectory(path: str | Path, scenario, cfg: MIConfig) -> MetricsSeries:
    """Recompute the MI channel of a MetricsSeries from a dumped trajectory.

    Produces the identical mi_bits and agents_remaining values as the
    in-process pipeline (bit-exact: the CSV stores full-precision floats).
    Force and per-exit counts are not recoverable from positions alone, so
    those columns stay empty.
    """
    cfg.validate()
    bounds = scenario.floorplan.bounds
    per_step_mi: list[float | None] = []
    per_step_count: list[int] = []
    for _t, xs, ys, ths in iter_trajectory_steps(path):
        per_step_mi.append(crowd_order_parameter(xs, ys, ths, cfg, bounds))
        per_step_count.append(len(xs))

    mi = windowed_series(per_step_mi, cfg.window_steps)
    dt = scenario.dt_s
    records = []
    for w, mi_val in enumerate(mi):
        end_step = (w + 1) * cfg.window_steps
        records.append(
            MetricsRecord(
                t_s=end_step * dt,
                mi_bits=mi_val,
                avg_force_N=None,
                agents_remaining=per_step_count[end_step - 1],
                exits=None,
            )
        )
    return MetricsSeries(exit_ids=tuple(scenario.floorplan.exit_ids), records=records)
