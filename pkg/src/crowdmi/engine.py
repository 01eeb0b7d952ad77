"""Social-force crowd engine: forces, integration, exit removal, force tracking.

Each pedestrian is a disc driven toward its routing waypoint and repelled by
other discs and walls:

    f_i = m (v0 e - v) / tau
        + sum_j [ A exp((r_ij - d_ij)/B) + k g(r_ij - d_ij) ] n_ij
        + sum_j kappa g(r_ij - d_ij) ((v_j - v_i) . t_ij) t_ij
        + analogous wall terms

with g(x) = x for x > 0 else 0. The crush-relevant "contact force" channel is
the compressive body term k g(...) alone, summed over touching agents and
walls; the psychological repulsion and sliding friction are excluded from it.

Integration is semi-implicit Euler (velocity then position) with a hard speed
cap. Neighbour candidate pairs come from a scipy cKDTree within the
interaction cutoff; tests hold this equal to an all-pairs evaluation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from .navigation import NavMesh, NoOpenExitError
from .scenario import AgentState, Scenario, apply_events

DEFAULT_PARAMS_ID = "sfm_default"


class SimulationHalt(RuntimeError):
    """Base for engine halt states; pipeline attaches partial results."""

    def __init__(self, message: str):
        super().__init__(message)
        self.partial_result = None


class TrappedPopulationError(SimulationHalt):
    """All exits closed with agents still inside."""


class NonFiniteForceError(SimulationHalt):
    """A force evaluation produced NaN/inf (dt too large or overlap blow-up)."""


@dataclass(frozen=True)
class SFMParams:
    """Model constants; the bundled defaults live in data/sfm_default.json."""

    social_strength_N: float = 2000.0        # A, agent-agent
    social_range_m: float = 0.08             # B, agent-agent
    wall_social_strength_N: float = 2000.0   # walls repel like bodies do
    wall_social_range_m: float = 0.08
    body_stiffness: float = 1.2e5            # k, N/m of overlap
    sliding_friction: float = 2.4e5          # kappa, kg/(m s)
    relax_time_s: float = 0.5                # tau
    mass_kg: float = 80.0
    radius_range_m: tuple[float, float] = (0.25, 0.30)
    desired_speed_range_ms: tuple[float, float] = (1.0, 1.4)
    v_max_ms: float = 2.0
    interaction_cutoff_m: float = 3.0
    v_heading_min_ms: float = 0.05           # below this speed the heading holds
    waypoint_reach_m: float = 0.15
    # Fluctuation term and impatience: both break the symmetric door arches a
    # purely deterministic force balance would freeze into. Noise is seeded
    # per run, so runs stay reproducible.
    noise_accel_ms2: float = 0.6
    impatience_time_s: float = 2.0           # 0 disables
    params_id: str = DEFAULT_PARAMS_ID

    def to_dict(self) -> dict:
        d = asdict(self)
        d["radius_range_m"] = list(self.radius_range_m)
        d["desired_speed_range_ms"] = list(self.desired_speed_range_ms)
        return d


def load_params(path: str | Path | None = None) -> SFMParams:
    """Load model constants from a JSON params file; None gives the defaults."""
    if path is None:
        with resources.as_file(
            resources.files("crowdmi.data") / f"{DEFAULT_PARAMS_ID}.json"
        ) as p:
            path = Path(p)
    raw = json.loads(Path(path).read_text())
    raw.setdefault("params_id", Path(path).stem)
    raw["radius_range_m"] = tuple(raw["radius_range_m"])
    raw["desired_speed_range_ms"] = tuple(raw["desired_speed_range_ms"])
    return SFMParams(**raw)


# ---------------------------------------------------------------------------
# Force kernels

def pair_forces(
    pos: np.ndarray,
    vel: np.ndarray,
    radius: np.ndarray,
    i: np.ndarray,
    j: np.ndarray,
    params: SFMParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Forces on agents i from agents j for the given candidate pairs.

    Returns (f, body) where f is the (P, 2) force on each i (minus that on j)
    and body the (P,) compressive contact magnitude shared by both. Pairs
    beyond the interaction cutoff contribute exactly zero, so a candidate
    list with a safety margin gives the same result as an exact one.
    """
    dx = pos[i, 0] - pos[j, 0]
    dy = pos[i, 1] - pos[j, 1]
    dist = np.hypot(dx, dy)
    np.maximum(dist, 1e-9, out=dist)
    inv = 1.0 / dist
    nx = dx * inv
    ny = dy * inv
    gap = (radius[i] + radius[j]) - dist
    g = np.maximum(gap, 0.0)
    social = params.social_strength_N * np.exp(gap / params.social_range_m)
    social[dist >= params.interaction_cutoff_m] = 0.0
    body = params.body_stiffness * g
    # tangent t = (-ny, nx); relative tangential speed of j past i
    dv_t = (vel[j, 0] - vel[i, 0]) * (-ny) + (vel[j, 1] - vel[i, 1]) * nx
    friction = params.sliding_friction * g * dv_t
    normal = social + body
    f = np.empty((len(dist), 2))
    f[:, 0] = normal * nx - friction * ny
    f[:, 1] = normal * ny + friction * nx
    return f, body


def wall_forces(
    pos: np.ndarray,
    vel: np.ndarray,
    radius: np.ndarray,
    wall_a: np.ndarray,
    wall_b: np.ndarray,
    params: SFMParams,
    social_suppress: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-agent wall force, compressive wall contact sum, and nearest wall distance.

    ``social_suppress`` is an optional (n_agents, n_walls) bool mask zeroing
    the psychological term for specific agent/wall pairs (used for the jambs
    of an agent's own target door, which would otherwise repel a slow lone
    agent out of the doorway); contact and friction always apply.
    """
    n_agents = len(pos)
    if len(wall_a) == 0 or n_agents == 0:
        return np.zeros((n_agents, 2)), np.zeros(n_agents), np.full(n_agents, np.inf)
    closest = geo.closest_point_on_segments(pos, wall_a, wall_b)   # (n, m, 2)
    dx = pos[:, 0, None] - closest[..., 0]
    dy = pos[:, 1, None] - closest[..., 1]
    dist = np.hypot(dx, dy)
    nearest = dist.min(axis=1)

    # Full force math only for (agent, wall) pairs within the cutoff.
    rows, cols = np.nonzero(dist < params.interaction_cutoff_m)
    forces = np.zeros((n_agents, 2))
    contact = np.zeros(n_agents)
    if len(rows) == 0:
        return forces, contact, nearest
    d = np.maximum(dist[rows, cols], 1e-9)
    inv = 1.0 / d
    nx = dx[rows, cols] * inv
    ny = dy[rows, cols] * inv
    gap = radius[rows] - d
    g = np.maximum(gap, 0.0)
    social = params.wall_social_strength_N * np.exp(gap / params.wall_social_range_m)
    if social_suppress is not None:
        social[social_suppress[rows, cols]] = 0.0
    body = params.body_stiffness * g
    v_t = vel[rows, 0] * (-ny) + vel[rows, 1] * nx
    friction = params.sliding_friction * g * v_t
    normal = social + body
    fx = normal * nx + friction * ny
    fy = normal * ny - friction * nx
    forces[:, 0] = np.bincount(rows, weights=fx, minlength=n_agents)
    forces[:, 1] = np.bincount(rows, weights=fy, minlength=n_agents)
    contact = np.bincount(rows, weights=body, minlength=n_agents)
    return forces, contact, nearest


def drive_forces(
    vel: np.ndarray,
    desired_speed: np.ndarray,
    e_hat: np.ndarray,
    mass: np.ndarray,
    params: SFMParams,
) -> np.ndarray:
    return mass[:, None] * (desired_speed[:, None] * e_hat - vel) / params.relax_time_s


def social_and_contact_forces(
    agent: AgentState,
    neighbors: Sequence[AgentState],
    walls,
    params: SFMParams,
    desired_dir: Sequence[float] = (0.0, 0.0),
) -> tuple[np.ndarray, float]:
    """Total force on one agent and its compressive contact magnitude.

    ``neighbors`` must contain every agent within the interaction cutoff
    (the spatial index contract); ``walls`` is a sequence of segments and
    ``desired_dir`` the unit routing direction (zero vector = no goal).
    Raises NonFiniteForceError if the result is not finite.
    """
    states = [agent, *neighbors]
    pos = np.array([a.position for a in states], dtype=float)
    vel = np.array([a.velocity for a in states], dtype=float)
    rad = np.array([a.radius for a in states], dtype=float)
    e = np.asarray(desired_dir, dtype=float)

    total = agent.mass * (agent.desired_speed * e - vel[0]) / params.relax_time_s
    contact = 0.0
    if neighbors:
        i = np.zeros(len(neighbors), dtype=int)
        j = np.arange(1, len(states))
        f, body = pair_forces(pos, vel, rad, i, j, params)
        total = total + f.sum(axis=0)
        contact += float(body.sum())
    if len(walls):
        wall_a, wall_b = geo.as_segments(list(walls))
        fw, bw, _ = wall_forces(pos[:1], vel[:1], rad[:1], wall_a, wall_b, params)
        total = total + fw[0]
        contact += float(bw[0])
    if not np.all(np.isfinite(total)):
        raise NonFiniteForceError(f"non-finite force on agent {agent.id}")
    return total, contact


# ---------------------------------------------------------------------------
# Simulation state

@dataclass
class Crowd:
    """Struct-of-arrays agent container; rows stay ordered by spawn id."""

    ids: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    radius: np.ndarray
    mass: np.ndarray
    desired_speed: np.ndarray
    heading: np.ndarray
    knowledge: np.ndarray        # (n, n_exits) bool, column order = floorplan exits

    @classmethod
    def from_agent_states(cls, agents: Sequence[AgentState], exit_ids: Sequence[str]) -> "Crowd":
        n = len(agents)
        know = np.zeros((n, len(exit_ids)), dtype=bool)
        for row, a in enumerate(agents):
            for col, e in enumerate(exit_ids):
                know[row, col] = e in a.knowledge
        return cls(
            ids=np.array([a.id for a in agents], dtype=np.int64),
            pos=np.array([a.position for a in agents], dtype=float).reshape(n, 2),
            vel=np.array([a.velocity for a in agents], dtype=float).reshape(n, 2),
            radius=np.array([a.radius for a in agents], dtype=float),
            mass=np.array([a.mass for a in agents], dtype=float),
            desired_speed=np.array([a.desired_speed for a in agents], dtype=float),
            heading=np.array([a.heading for a in agents], dtype=float),
            knowledge=know,
        )

    @property
    def count(self) -> int:
        return len(self.ids)

    def keep(self, mask: np.ndarray) -> None:
        for name in ("ids", "pos", "vel", "radius", "mass", "desired_speed", "heading", "knowledge"):
            setattr(self, name, getattr(self, name)[mask])

    def agent_states(self, exit_ids: Sequence[str]) -> list[AgentState]:
        out = []
        for row in range(self.count):
            out.append(
                AgentState(
                    id=int(self.ids[row]),
                    position=(float(self.pos[row, 0]), float(self.pos[row, 1])),
                    velocity=(float(self.vel[row, 0]), float(self.vel[row, 1])),
                    heading=float(self.heading[row]),
                    desired_speed=float(self.desired_speed[row]),
                    radius=float(self.radius[row]),
                    mass=float(self.mass[row]),
                    knowledge=frozenset(
                        e for col, e in enumerate(exit_ids) if self.knowledge[row, col]
                    ),
                    last_heading=float(self.heading[row]),
                )
            )
        return out


@dataclass
class SimFrame:
    """Snapshot of one time step: agents, door states and step metrics."""

    t: float
    crowd: Crowd
    doors: dict[str, bool]
    per_step_contact_force_sum: float
    exits_log: dict[str, int]

    @property
    def agent_count(self) -> int:
        return self.crowd.count


def average_contact_force(frame: SimFrame) -> float:
    """Mean compressive contact force per agent in the frame; 0 when empty."""
    return frame.per_step_contact_force_sum / max(1, frame.agent_count)


def _wrap_angle(theta: np.ndarray) -> np.ndarray:
    """Map angles to [-pi, pi)."""
    return np.mod(theta + np.pi, 2.0 * np.pi) - np.pi


def neighbor_pairs(pos: np.ndarray, cutoff: float) -> tuple[np.ndarray, np.ndarray]:
    """Candidate interaction pairs (i < j) within the cutoff radius."""
    if len(pos) < 2:
        e = np.zeros(0, dtype=np.int64)
        return e, e
    pairs = cKDTree(pos).query_pairs(r=cutoff, output_type="ndarray")
    return pairs[:, 0], pairs[:, 1]


# Safety margin added to the neighbour query so the candidate list stays
# complete while it is reused across a few steps (two agents close at most
# 2 * v_max * dt per step).
VERLET_SKIN_M = 0.3

# Every agent re-evaluates its waypoint at least this often (steps).
REROUTE_INTERVAL_STEPS = 25


def scatter_pair_forces(
    n: int, i: np.ndarray, j: np.ndarray, f: np.ndarray, body: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate equal-and-opposite pair forces onto agents."""
    forces = np.empty((n, 2))
    forces[:, 0] = np.bincount(i, weights=f[:, 0], minlength=n) - np.bincount(
        j, weights=f[:, 0], minlength=n
    )
    forces[:, 1] = np.bincount(i, weights=f[:, 1], minlength=n) - np.bincount(
        j, weights=f[:, 1], minlength=n
    )
    contact = np.bincount(i, weights=body, minlength=n) + np.bincount(
        j, weights=body, minlength=n
    )
    return forces, contact


class Simulation:
    """Steps one spawned population through a scenario.

    Deterministic for fixed inputs; all randomness lives in the spawn. Raises
    TrappedPopulationError / NonFiniteForceError as halt states.
    """

    def __init__(
        self,
        scenario: Scenario,
        params: SFMParams,
        agents: Sequence[AgentState],
        seed: int | None = None,
    ):
        self.scenario = scenario
        self.params = params
        self.dt = scenario.dt_s
        self.exit_ids = list(scenario.floorplan.exit_ids)
        self.crowd = Crowd.from_agent_states(agents, self.exit_ids)
        self.step_index = 0
        self.t = 0.0
        self.doors = apply_events(scenario, 0.0)
        self.exits_log = {e: 0 for e in self.exit_ids}
        self.per_step_contact_force_sum = 0.0
        self.max_wall_overlap = 0.0
        self.wall_crossings = 0

        # Fluctuation-force stream; one fixed draw of (count, 2) normals per
        # step keeps replays byte-identical.
        self._rng = np.random.default_rng(scenario.rng_seed if seed is None else seed)
        # Impatience state: baseline goal speeds and a running speed average.
        self._v0_base = self.crowd.desired_speed.copy()
        self._v_avg = self.crowd.desired_speed.copy()

        # Neighbour-list cache (skin lifetime: pairs cannot outrun the margin).
        self._pairs: tuple[np.ndarray, np.ndarray] = (
            np.zeros(0, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
        )
        self._pairs_age = 10**9
        self._pairs_lifetime = max(
            1, int(VERLET_SKIN_M / (2.0 * params.v_max_ms * self.dt))
        )

        self._rebuild_nav()
        n = self.crowd.count
        self.wp_vertex = np.full(n, -1, dtype=np.int64)
        self.wp_xy = self.crowd.pos.copy()
        self._recompute_waypoints(np.arange(n))
        # Agents start at rest facing their first waypoint.
        e0 = geo.normalize_rows(self.wp_xy - self.crowd.pos)
        nonzero = np.hypot(e0[:, 0], e0[:, 1]) > 0.0
        self.crowd.heading[nonzero] = _wrap_angle(np.arctan2(e0[nonzero, 1], e0[nonzero, 0]))

    # -- navigation upkeep --------------------------------------------------

    def _rebuild_nav(self) -> None:
        try:
            self.nav = NavMesh(self.scenario.floorplan, self.doors)
        except NoOpenExitError as err:
            halt = TrappedPopulationError(
                f"trapped population: {self.crowd.count} agents and no open exits at t={self.t:.2f}"
            )
            raise halt from err
        self._open_cols = np.array(
            [self.doors.get(e, True) for e in self.exit_ids], dtype=bool
        )

    def _knowledge_set(self, row: int) -> frozenset[str]:
        return frozenset(
            e for col, e in enumerate(self.exit_ids) if self.crowd.knowledge[row, col]
        )

    def _recompute_waypoints(self, rows: np.ndarray) -> None:
        """Re-target the given agents to their best visible waypoint.

        Vectorised over agents sharing a knowledge signature. An agent with no
        visible vertex (wedged outside the mesh) keeps its old waypoint; wall
        forces push it back into open space.
        """
        if len(rows) == 0:
            return
        nav = self.nav
        n_vertices = len(nav.vertices)
        if n_vertices == 0:
            return
        know = self.crowd.knowledge[rows]
        signatures, group_of = np.unique(know, axis=0, return_inverse=True)
        for s_idx in range(len(signatures)):
            group_rows = rows[group_of == s_idx]
            pos = self.crowd.pos[group_rows]
            usable = nav.usable_exits(
                {e for col, e in enumerate(self.exit_ids) if signatures[s_idx][col]}
            )
            remaining = nav.remaining_dist(usable)                       # (V,)
            n_g = len(group_rows)
            p = np.repeat(pos, n_vertices, axis=0)
            q = np.tile(nav.vertices, (n_g, 1))
            blocked = nav.line_blocked(p, q).reshape(n_g, n_vertices)
            hop = np.hypot(
                pos[:, 0, None] - nav.vertices[None, :, 0],
                pos[:, 1, None] - nav.vertices[None, :, 1],
            )
            cost = hop + remaining[None, :]
            cost[blocked] = np.inf
            # Standing on a node is not progress: skip near non-exit vertices.
            cost[(hop < self.params.waypoint_reach_m) & ~nav.is_exit_vertex[None, :]] = np.inf
            best = np.argmin(cost, axis=1)
            ok = np.isfinite(cost[np.arange(n_g), best])
            target_rows = group_rows[ok]
            self.wp_vertex[target_rows] = best[ok]
            self.wp_xy[target_rows] = nav.vertices[best[ok]]

    def _maintain_waypoints(self) -> None:
        if self.crowd.count == 0:
            return
        to_wp = self.wp_xy - self.crowd.pos
        dist = np.hypot(to_wp[:, 0], to_wp[:, 1])
        heads_to_exit = self.nav.is_exit_vertex[np.maximum(self.wp_vertex, 0)]
        at_node = (dist < self.params.waypoint_reach_m) & ~heads_to_exit
        blocked = self.nav.line_blocked(self.crowd.pos, self.wp_xy)
        stale = np.flatnonzero(at_node | blocked)
        if len(stale):
            self._recompute_waypoints(stale)

    # -- stepping ------------------------------------------------------------

    def _candidate_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached neighbour pairs, refreshed before the skin margin can be outrun."""
        if self._pairs_age >= self._pairs_lifetime:
            self._pairs = neighbor_pairs(
                self.crowd.pos, self.params.interaction_cutoff_m + VERLET_SKIN_M
            )
            self._pairs_age = 0
        self._pairs_age += 1
        return self._pairs

    def compute_forces(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(total force, per-agent contact magnitude, nearest wall distance)."""
        crowd = self.crowd
        n = crowd.count
        e_hat = geo.normalize_rows(self.wp_xy - crowd.pos)
        forces = drive_forces(crowd.vel, crowd.desired_speed, e_hat, crowd.mass, self.params)
        contact = np.zeros(n)

        i, j = self._candidate_pairs()
        if len(i):
            f, body = pair_forces(crowd.pos, crowd.vel, crowd.radius, i, j, self.params)
            fp, cp = scatter_pair_forces(n, i, j, f, body)
            forces += fp
            contact += cp

        fw, bw, wall_dist = wall_forces(
            crowd.pos, crowd.vel, crowd.radius, self.nav.wall_a, self.nav.wall_b,
            self.params, social_suppress=self._jamb_suppression(),
        )
        forces += fw
        contact += bw
        return forces, contact, wall_dist

    def _update_impatience(self) -> None:
        """Blend goal speed toward v_max as an agent's progress stalls."""
        if self.params.impatience_time_s <= 0.0:
            return
        stall = 1.0 - np.clip(self._v_avg / self._v0_base, 0.0, 1.0)
        self.crowd.desired_speed = (
            (1.0 - stall) * self._v0_base + stall * self.params.v_max_ms
        )

    def _jamb_suppression(self) -> np.ndarray | None:
        """Mask out jamb repulsion for agents heading straight at that door."""
        nav = self.nav
        n = self.crowd.count
        if not len(nav.wall_a):
            return None
        suppress = np.zeros((n, len(nav.wall_a)), dtype=bool)
        for exit_id, vertex in nav.exit_vertex.items():
            jambs = nav.jamb_walls.get(exit_id)
            if not jambs:
                continue
            heading_there = self.wp_vertex == vertex
            if heading_there.any():
                suppress[np.ix_(heading_there, jambs)] = True
        return suppress

    def step(self) -> SimFrame:
        """Advance one dt; returns the post-step frame view."""
        crowd = self.crowd
        dt = self.dt
        old_pos = None

        if crowd.count:
            self._update_impatience()
            forces, contact, wall_dist = self.compute_forces()
            if self.params.noise_accel_ms2 > 0.0:
                xi = self._rng.standard_normal((crowd.count, 2))
                forces += (self.params.noise_accel_ms2 * crowd.mass)[:, None] * xi
            if not np.all(np.isfinite(forces)):
                bad = int(crowd.ids[np.flatnonzero(~np.isfinite(forces).all(axis=1))[0]])
                halt = NonFiniteForceError(
                    f"non-finite force on agent {bad} at t={self.t:.3f} "
                    "(dt too large or overlap blow-up)"
                )
                raise halt
            self.per_step_contact_force_sum = float(contact.sum())
            overlap = float(np.max(np.maximum(crowd.radius - wall_dist, 0.0), initial=0.0))
            self.max_wall_overlap = max(self.max_wall_overlap, overlap)

            old_pos = crowd.pos.copy()
            crowd.vel += dt * forces / crowd.mass[:, None]
            speed = np.hypot(crowd.vel[:, 0], crowd.vel[:, 1])
            over = speed > self.params.v_max_ms
            if over.any():
                crowd.vel[over] *= (self.params.v_max_ms / speed[over])[:, None]
            crowd.pos += dt * crowd.vel

            if len(self.nav.wall_a):
                crossed = geo.segments_block(old_pos, crowd.pos, self.nav.wall_a, self.nav.wall_b)
                self.wall_crossings += int(crossed.any(axis=1).sum())

            speed = np.hypot(crowd.vel[:, 0], crowd.vel[:, 1])
            moving = speed >= self.params.v_heading_min_ms
            crowd.heading[moving] = _wrap_angle(
                np.arctan2(crowd.vel[moving, 1], crowd.vel[moving, 0])
            )
            alpha = dt / max(self.params.impatience_time_s, dt)
            self._v_avg += alpha * (speed - self._v_avg)
        else:
            self.per_step_contact_force_sum = 0.0

        self.step_index += 1
        self.t = self.step_index * dt

        new_doors = apply_events(self.scenario, self.t)
        doors_changed = new_doors != self.doors
        if doors_changed:
            self.doors = new_doors
            if crowd.count:
                self._rebuild_nav()

        self._remove_exited(old_pos)

        if crowd.count:
            if doors_changed or self.step_index % REROUTE_INTERVAL_STEPS == 0:
                # Periodic global refresh: crowd pressure can carry an agent
                # past its waypoint without ever touching it, leaving a stale
                # target behind the agent; refreshing bounds the staleness.
                self._recompute_waypoints(np.arange(crowd.count))
            else:
                self._maintain_waypoints()
        return self.frame()

    def _remove_exited(self, old_pos: np.ndarray | None) -> None:
        """Drop agents whose centre passed through an open exit segment, log them.

        Through-flow removal keeps the door an honest aperture: bodies must
        physically thread the gap one or two abreast, which is what meters
        door capacity. (Capture on mere disc contact lets a pressed queue
        leave several abreast and makes doors unrealistically fast.)
        """
        crowd = self.crowd
        if crowd.count == 0 or old_pos is None:
            return
        open_exits = [e for e in self.scenario.floorplan.exits if self.doors.get(e.id, e.open)]
        if not open_exits:
            return
        a = np.array([e.segment[0] for e in open_exits])
        b = np.array([e.segment[1] for e in open_exits])
        crossed = geo.segments_block(old_pos, crowd.pos, a, b)    # (n, n_open)
        leaving = crossed.any(axis=1)
        if not leaving.any():
            return
        mid = 0.5 * (a + b)
        for row in np.flatnonzero(leaving):
            hit = np.flatnonzero(crossed[row])
            if len(hit) > 1:
                d = np.hypot(*(mid[hit] - crowd.pos[row]).T)
                hit = hit[np.argmin(d) : np.argmin(d) + 1]
            self.exits_log[open_exits[int(hit[0])].id] += 1
        keep = ~leaving
        crowd.keep(keep)
        self.wp_vertex = self.wp_vertex[keep]
        self.wp_xy = self.wp_xy[keep]
        self._v0_base = self._v0_base[keep]
        self._v_avg = self._v_avg[keep]
        self._pairs_age = 10**9  # cached pair indices are stale after compaction

    def frame(self) -> SimFrame:
        return SimFrame(
            t=self.t,
            crowd=self.crowd,
            doors=dict(self.doors),
            per_step_contact_force_sum=self.per_step_contact_force_sum,
            exits_log=dict(self.exits_log),
        )
