"""Evacuation scenario definition, file loading, validation and population spawning.

A scenario bundles the floorplan (walls, exits, bounds), spawn regions with
per-region head counts, timed door events, and exit-knowledge rules. Scenario
files are JSON; the two bundled Station-style files live in ``crowdmi/data``.

Spawning is a pure function of (scenario, seed): the PCG64 generator from
``numpy.random.default_rng`` gives byte-identical populations across runs and
platforms for a fixed draw order (documented in ``spawn_population``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from . import geometry as geo

BUNDLED_SCENARIOS = ("station_idealised", "station_realistic")

# Spawn density guard: count * pi * r_max^2 must not exceed this fraction of the
# polygon area, otherwise rejection placement is not guaranteed to terminate.
MAX_SPAWN_COVERAGE = 0.7

EXIT_PLACEMENT_TOL = 1e-6


class ScenarioFormatError(ValueError):
    """Raised when a scenario file cannot be parsed into the documented schema."""


class ScenarioValidationError(ValueError):
    """Raised by load_scenario when the parsed scenario violates an invariant."""

    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


class SpawnPlacementError(RuntimeError):
    """Raised when rejection placement cannot fit an agent (overdense region)."""


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


@dataclass(frozen=True)
class Exit:
    id: str
    segment: tuple[tuple[float, float], tuple[float, float]]
    open: bool = True
    capacity_width: float | None = None

    @property
    def width(self) -> float:
        a, b = np.asarray(self.segment[0]), np.asarray(self.segment[1])
        return float(np.hypot(*(b - a)))

    @property
    def midpoint(self) -> tuple[float, float]:
        a, b = self.segment
        return ((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)


@dataclass(frozen=True)
class Floorplan:
    walls: tuple[tuple[tuple[float, float], tuple[float, float]], ...]
    exits: tuple[Exit, ...]
    bounds: tuple[tuple[float, float], tuple[float, float]]

    @property
    def exit_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.exits)

    def exit_by_id(self, exit_id: str) -> Exit:
        for e in self.exits:
            if e.id == exit_id:
                return e
        raise KeyError(exit_id)

    def wall_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return geo.as_segments(self.walls)


@dataclass(frozen=True)
class SpawnRegion:
    polygon: tuple[tuple[float, float], ...]
    agent_count: int
    name: str = ""

    @property
    def area(self) -> float:
        return geo.polygon_area(self.polygon)


@dataclass(frozen=True)
class TimedEvent:
    time_s: float
    action: str  # "close_exit" | "open_exit"
    exit_id: str


@dataclass(frozen=True)
class KnowledgeRule:
    exit_id: str
    mode: str  # "fraction" | "exact_count"
    p: float | None = None
    count: int | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    floorplan: Floorplan
    spawn_regions: tuple[SpawnRegion, ...]
    events: tuple[TimedEvent, ...]
    knowledge_rules: tuple[KnowledgeRule, ...]
    population: int
    dt_s: float
    max_time_s: float
    rng_seed: int

    @property
    def steps_per_second(self) -> int:
        return int(round(1.0 / self.dt_s))

    def initial_doors(self) -> dict[str, bool]:
        return {e.id: e.open for e in self.floorplan.exits}


@dataclass(frozen=True)
class AgentState:
    """One pedestrian: a disc with a goal speed and a set of known exits."""

    id: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    heading: float
    desired_speed: float
    radius: float
    mass: float
    knowledge: frozenset[str]
    last_heading: float = 0.0


# ---------------------------------------------------------------------------
# File loading

def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise ScenarioFormatError(f"{where}: missing required key '{key}'")
    val = obj[key]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        raise ScenarioFormatError(
            f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}"
        )
    return val


def _parse_point(raw, where: str) -> tuple[float, float]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise ScenarioFormatError(f"{where}: expected [x, y] pair, got {raw!r}")
    return (float(raw[0]), float(raw[1]))


def _parse_segment(raw, where: str):
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise ScenarioFormatError(f"{where}: expected [[x1,y1],[x2,y2]], got {raw!r}")
    return (_parse_point(raw[0], where), _parse_point(raw[1], where))


def scenario_from_dict(raw: dict, name: str = "") -> Scenario:
    """Build a Scenario from the documented JSON schema (no validation yet)."""
    fp_raw = _require(raw, "floorplan", dict, "scenario")
    bounds = _parse_segment(_require(fp_raw, "bounds", list, "floorplan"), "floorplan.bounds")
    walls = tuple(
        _parse_segment(w, f"floorplan.walls[{i}]")
        for i, w in enumerate(_require(fp_raw, "walls", list, "floorplan"))
    )
    exits = []
    for i, e in enumerate(_require(fp_raw, "exits", list, "floorplan")):
        where = f"floorplan.exits[{i}]"
        seg = _parse_segment(_require(e, "segment", list, where), where + ".segment")
        exits.append(
            Exit(
                id=_require(e, "id", str, where),
                segment=seg,
                open=bool(e.get("open", True)),
                capacity_width=float(e["capacity_width"]) if "capacity_width" in e else None,
            )
        )

    regions = []
    for i, r in enumerate(_require(raw, "spawn_regions", list, "scenario")):
        where = f"spawn_regions[{i}]"
        poly = tuple(
            _parse_point(p, where + ".polygon") for p in _require(r, "polygon", list, where)
        )
        regions.append(
            SpawnRegion(
                polygon=poly,
                agent_count=_require(r, "agent_count", int, where),
                name=str(r.get("name", f"region_{i}")),
            )
        )

    events = []
    for i, ev in enumerate(raw.get("events", [])):
        where = f"events[{i}]"
        action = _require(ev, "action", str, where)
        if action not in ("close_exit", "open_exit"):
            raise ScenarioFormatError(f"{where}.action: unknown action {action!r}")
        events.append(
            TimedEvent(
                time_s=float(_require(ev, "time_s", (int, float), where)),
                action=action,
                exit_id=_require(ev, "exit_id", str, where),
            )
        )

    rules = []
    for i, kr in enumerate(raw.get("knowledge_rules", [])):
        where = f"knowledge_rules[{i}]"
        mode = _require(kr, "mode", str, where)
        if mode == "fraction":
            rules.append(
                KnowledgeRule(
                    exit_id=_require(kr, "exit_id", str, where),
                    mode=mode,
                    p=float(_require(kr, "p", (int, float), where)),
                )
            )
        elif mode == "exact_count":
            rules.append(
                KnowledgeRule(
                    exit_id=_require(kr, "exit_id", str, where),
                    mode=mode,
                    count=_require(kr, "count", int, where),
                )
            )
        else:
            raise ScenarioFormatError(f"{where}.mode: unknown mode {mode!r}")

    return Scenario(
        name=str(raw.get("name", name)),
        floorplan=Floorplan(walls=walls, exits=tuple(exits), bounds=bounds),
        spawn_regions=tuple(regions),
        events=tuple(events),
        knowledge_rules=tuple(rules),
        population=_require(raw, "population", int, "scenario"),
        dt_s=float(_require(raw, "dt_s", (int, float), "scenario")),
        max_time_s=float(_require(raw, "max_time_s", (int, float), "scenario")),
        rng_seed=int(_require(raw, "rng_seed", int, "scenario")),
    )


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario file shipped with the package."""
    with resources.as_file(resources.files("crowdmi.data") / f"{name}.json") as p:
        return Path(p)


def load_scenario(path: str | Path, r_max: float = 0.30) -> Scenario:
    """Load and validate a scenario file.

    ``path`` may also be the bare name of a bundled scenario
    (``station_idealised`` or ``station_realistic``). Raises
    ScenarioFormatError on malformed files and ScenarioValidationError if any
    invariant is violated; ``r_max`` is the largest body radius used for the
    spawn-density check.
    """
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED_SCENARIOS:
        p = bundled_scenario_path(str(path))
    if not p.exists():
        raise ScenarioFormatError(f"scenario file not found: {path}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise ScenarioFormatError(f"{p}: line {err.lineno}, col {err.colno}: {err.msg}") from err
    scenario = scenario_from_dict(raw, name=p.stem)
    violations = validate_scenario(scenario, r_max=r_max)
    if violations:
        raise ScenarioValidationError(violations)
    return scenario


# ---------------------------------------------------------------------------
# Validation

def _on_bounds_perimeter(pt, bounds, tol) -> bool:
    (x0, y0), (x1, y1) = bounds
    x, y = pt
    on_x = (abs(x - x0) <= tol or abs(x - x1) <= tol) and (y0 - tol <= y <= y1 + tol)
    on_y = (abs(y - y0) <= tol or abs(y - y1) <= tol) and (x0 - tol <= x <= x1 + tol)
    return on_x or on_y


def validate_scenario(s: Scenario, r_max: float = 0.30) -> list[Violation]:
    """Check every scenario invariant; returns an empty list when all hold."""
    out: list[Violation] = []
    (bx0, by0), (bx1, by1) = s.floorplan.bounds
    if not (bx1 > bx0 and by1 > by0):
        out.append(Violation("floorplan.bounds", "bounds rectangle is empty"))
        return out

    wall_a, wall_b = s.floorplan.wall_arrays()
    for i, (a, b) in enumerate(s.floorplan.walls):
        if np.hypot(b[0] - a[0], b[1] - a[1]) <= 0.0:
            out.append(Violation(f"floorplan.walls[{i}]", "wall has zero length"))
        for pt in (a, b):
            if not (bx0 <= pt[0] <= bx1 and by0 <= pt[1] <= by1):
                out.append(
                    Violation(f"floorplan.walls[{i}]", f"endpoint {pt} outside bounds")
                )

    seen_ids: set[str] = set()
    for i, e in enumerate(s.floorplan.exits):
        where = f"floorplan.exits[{i}] ({e.id})"
        if e.id in seen_ids:
            out.append(Violation(where, "duplicate exit id"))
        seen_ids.add(e.id)
        if e.width <= 0.0:
            out.append(Violation(where, "exit segment has zero length"))
        if e.capacity_width is not None and abs(e.capacity_width - e.width) > EXIT_PLACEMENT_TOL:
            out.append(
                Violation(
                    where,
                    f"capacity_width {e.capacity_width} != segment length {e.width:.6f}",
                )
            )
        # Exits must sit on the boundary of walkable space: on the outer bounds
        # rectangle or on the line of some wall.
        pts = np.array([e.segment[0], e.segment[1], e.midpoint])
        ok = np.ones(3, dtype=bool)
        if len(wall_a):
            ok = geo.point_segment_distances(pts, wall_a, wall_b).min(axis=1) <= EXIT_PLACEMENT_TOL
        for j, pt in enumerate(pts):
            if not ok[j] and not _on_bounds_perimeter(pt, s.floorplan.bounds, EXIT_PLACEMENT_TOL):
                out.append(Violation(where, f"segment point {tuple(pt)} not on any wall or bound"))
                break

    total = 0
    for i, r in enumerate(s.spawn_regions):
        where = f"spawn_regions[{i}] ({r.name})"
        total += r.agent_count
        if r.agent_count < 0:
            out.append(Violation(where, "agent_count is negative"))
        if len(r.polygon) < 3:
            out.append(Violation(where, "polygon needs at least 3 vertices"))
            continue
        if not geo.polygon_is_convex(r.polygon):
            out.append(Violation(where, "polygon is not convex"))
        poly = np.asarray(r.polygon)
        if not (
            (poly[:, 0] >= bx0 - EXIT_PLACEMENT_TOL).all()
            and (poly[:, 0] <= bx1 + EXIT_PLACEMENT_TOL).all()
            and (poly[:, 1] >= by0 - EXIT_PLACEMENT_TOL).all()
            and (poly[:, 1] <= by1 + EXIT_PLACEMENT_TOL).all()
        ):
            out.append(Violation(where, "polygon extends outside bounds"))
        for j, (a, b) in enumerate(s.floorplan.walls):
            if geo.segment_intersects_polygon(a, b, r.polygon):
                out.append(Violation(where, f"wall {j} crosses the spawn polygon"))
        area = r.area
        if r.agent_count * np.pi * r_max**2 > MAX_SPAWN_COVERAGE * area:
            out.append(
                Violation(
                    where,
                    f"agent_count {r.agent_count} too dense for area {area:.2f} m^2 "
                    f"(needs count*pi*r_max^2 <= {MAX_SPAWN_COVERAGE}*area)",
                )
            )
    if total != s.population:
        out.append(
            Violation(
                "population",
                f"sum of spawn_region.agent_count ({total}) != population ({s.population})",
            )
        )

    exit_ids = set(s.floorplan.exit_ids)
    for i, ev in enumerate(s.events):
        where = f"events[{i}]"
        if ev.exit_id not in exit_ids:
            out.append(Violation(where, f"references unknown exit '{ev.exit_id}'"))
        if ev.time_s < 0:
            out.append(Violation(where, "time_s is negative"))

    ruled: set[str] = set()
    for i, kr in enumerate(s.knowledge_rules):
        where = f"knowledge_rules[{i}] ({kr.exit_id})"
        if kr.exit_id not in exit_ids:
            out.append(Violation(where, f"references unknown exit '{kr.exit_id}'"))
        if kr.exit_id in ruled:
            out.append(Violation(where, "exit has more than one knowledge rule"))
        ruled.add(kr.exit_id)
        if kr.mode == "fraction" and not (kr.p is not None and 0.0 <= kr.p <= 1.0):
            out.append(Violation(where, f"fraction p={kr.p} outside [0, 1]"))
        if kr.mode == "exact_count":
            if kr.count is None or kr.count < 0:
                out.append(Violation(where, "exact_count needs count >= 0"))
            elif kr.count > s.population:
                out.append(Violation(where, f"count {kr.count} exceeds population"))

    if s.dt_s <= 0:
        out.append(Violation("dt_s", "must be positive"))
    else:
        sps = 1.0 / s.dt_s
        if abs(sps - round(sps)) > 1e-9:
            out.append(Violation("dt_s", f"1/dt_s = {sps} is not a whole number"))
    if s.max_time_s < 1.0:
        out.append(Violation("max_time_s", "must be at least 1 s"))
    return out


# ---------------------------------------------------------------------------
# Events

def apply_events(s: Scenario, t: float, doors: dict[str, bool] | None = None) -> dict[str, bool]:
    """Door states at time t: all events with time_s <= t applied in time order.

    Pure and idempotent for fixed t; ``doors`` optionally overrides the
    floorplan's initial open flags.
    """
    state = dict(doors) if doors is not None else s.initial_doors()
    for ev in sorted(s.events, key=lambda e: (e.time_s, e.exit_id)):
        if ev.time_s <= t:
            state[ev.exit_id] = ev.action == "open_exit"
    return state


# ---------------------------------------------------------------------------
# Spawning

MAX_PLACEMENT_ATTEMPTS = 10_000


def spawn_population(
    s: Scenario,
    radius_range: tuple[float, float] = (0.25, 0.30),
    speed_range: tuple[float, float] = (1.0, 1.4),
    mass: float = 80.0,
    seed: int | None = None,
) -> list[AgentState]:
    """Place the population and assign exit knowledge, deterministically.

    Draw order (fixed; changing it changes every seeded population):
    per region in file order, per agent: body radius, then position rejection
    samples, then desired speed. After placement: exact_count rules in file
    order (choice without replacement over all agents), then fraction rules in
    file order (per-agent Bernoulli), then re-draws for agents left with empty
    knowledge.

    Raises SpawnPlacementError when an agent cannot be placed within
    MAX_PLACEMENT_ATTEMPTS rejection draws (overdense region).
    """
    rng = np.random.default_rng(s.rng_seed if seed is None else seed)
    wall_a, wall_b = s.floorplan.wall_arrays()

    positions: list[np.ndarray] = []
    radii: list[float] = []
    speeds: list[float] = []
    placed = np.zeros((0, 2))
    placed_r = np.zeros(0)

    for region in s.spawn_regions:
        poly = np.asarray(region.polygon, dtype=float)
        lo = poly.min(axis=0)
        hi = poly.max(axis=0)
        for _ in range(region.agent_count):
            r = float(rng.uniform(*radius_range))
            for attempt in range(MAX_PLACEMENT_ATTEMPTS):
                pos = rng.uniform(lo, hi)
                if not geo.points_in_polygon(pos[None, :], poly)[0]:
                    continue
                if len(wall_a) and geo.point_segment_distances(pos[None, :], wall_a, wall_b).min() < r:
                    continue
                if len(placed) and (np.hypot(*(placed - pos).T) < placed_r + r).any():
                    continue
                break
            else:
                raise SpawnPlacementError(
                    f"could not place agent {len(positions)} in region "
                    f"'{region.name}' after {MAX_PLACEMENT_ATTEMPTS} attempts"
                )
            positions.append(pos)
            radii.append(r)
            speeds.append(float(rng.uniform(*speed_range)))
            placed = np.vstack([placed, pos[None, :]])
            placed_r = np.append(placed_r, r)

    n = len(positions)
    knowledge: list[set[str]] = [set() for _ in range(n)]
    fraction_rules = [kr for kr in s.knowledge_rules if kr.mode == "fraction"]
    for kr in s.knowledge_rules:
        if kr.mode == "exact_count" and kr.count:
            chosen = rng.choice(n, size=kr.count, replace=False)
            for idx in chosen:
                knowledge[idx].add(kr.exit_id)
    for kr in fraction_rules:
        draws = rng.random(n)
        for idx in np.flatnonzero(draws < kr.p):
            knowledge[idx].add(kr.exit_id)

    # Everyone must know at least one exit; re-draw the fraction rules for
    # offenders (unreachable when some exit has p = 1.0, as in the bundled
    # scenarios, but it guards custom files).
    for idx in range(n):
        redraws = 0
        while not knowledge[idx]:
            if not fraction_rules or redraws > 1000:
                raise SpawnPlacementError(
                    f"agent {idx} cannot acquire any exit knowledge from the rules"
                )
            for kr in fraction_rules:
                if rng.random() < kr.p:
                    knowledge[idx].add(kr.exit_id)
            redraws += 1

    return [
        AgentState(
            id=i,
            position=(float(positions[i][0]), float(positions[i][1])),
            velocity=(0.0, 0.0),
            heading=0.0,
            desired_speed=speeds[i],
            radius=radii[i],
            mass=mass,
            knowledge=frozenset(knowledge[i]),
            last_heading=0.0,
        )
        for i in range(n)
    ]
