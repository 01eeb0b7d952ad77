"""Static visibility-graph routing toward the nearest known open exit.

The graph is built once per door state: vertices are wall-tip clearance nodes
plus the midpoints of open exits, edges join mutually visible vertices, and a
Dijkstra pass per exit yields remaining path length at every vertex. Agents
then steer toward the visible vertex minimising (distance to vertex + vertex's
remaining distance to the best usable exit).
"""
from __future__ import annotations

import heapq

import numpy as np

from . import geometry as geo
from .scenario import Floorplan

# Clearance nodes sit this far beyond each wall tip, along the wall direction.
NODE_OFFSET_M = 0.4


class NoOpenExitError(RuntimeError):
    """No exit is open anywhere: the population is trapped."""


class NavMesh:
    """Routing data for one floorplan + door state."""

    def __init__(self, floorplan: Floorplan, doors: dict[str, bool]):
        self.floorplan = floorplan
        self.doors = dict(doors)
        self.open_exit_ids = [e.id for e in floorplan.exits if self.doors.get(e.id, e.open)]
        if not self.open_exit_ids:
            raise NoOpenExitError("all exits are closed")

        walls = [np.asarray(w, dtype=float) for w in floorplan.walls]
        closed = [
            np.asarray(e.segment, dtype=float)
            for e in floorplan.exits
            if e.id not in self.open_exit_ids
        ]
        segs = walls + closed
        self.wall_a = np.array([s[0] for s in segs]) if segs else np.zeros((0, 2))
        self.wall_b = np.array([s[1] for s in segs]) if segs else np.zeros((0, 2))

        self.vertices, self.exit_vertex = self._build_vertices(walls)
        self.is_exit_vertex = np.zeros(len(self.vertices), dtype=bool)
        for v in self.exit_vertex.values():
            self.is_exit_vertex[v] = True

        # Door jambs: wall segments sharing an endpoint with an open exit.
        self.jamb_walls: dict[str, list[int]] = {}
        for e in floorplan.exits:
            if e.id not in self.open_exit_ids:
                continue
            ends = np.asarray(e.segment, dtype=float)
            touching = []
            for w in range(len(self.wall_a)):
                for tip in (self.wall_a[w], self.wall_b[w]):
                    if np.hypot(*(ends - tip).T).min() < 1e-6:
                        touching.append(w)
                        break
            self.jamb_walls[e.id] = touching
        self._vis = self._visibility_matrix()
        self.exit_dist = {
            exit_id: self._dijkstra(self.exit_vertex[exit_id])
            for exit_id in self.open_exit_ids
        }

    # -- construction ------------------------------------------------------

    def _build_vertices(self, walls) -> tuple[np.ndarray, dict[str, int]]:
        (bx0, by0), (bx1, by1) = self.floorplan.bounds
        pts: list[np.ndarray] = []
        for seg in walls:
            a, b = seg[0], seg[1]
            d = b - a
            length = np.hypot(*d)
            if length == 0.0:
                continue
            u = d / length
            for tip, direction in ((a, -u), (b, u)):
                cand = tip + NODE_OFFSET_M * direction
                if not (bx0 < cand[0] < bx1 and by0 < cand[1] < by1):
                    continue
                if len(self.wall_a) and geo.point_segment_distances(
                    cand[None, :], self.wall_a, self.wall_b
                ).min() < 0.5 * NODE_OFFSET_M:
                    continue
                pts.append(cand)

        exit_vertex: dict[str, int] = {}
        for e in self.floorplan.exits:
            if e.id in self.open_exit_ids:
                exit_vertex[e.id] = len(pts)
                pts.append(np.asarray(e.midpoint, dtype=float))
        return np.array(pts), exit_vertex

    def _visibility_matrix(self) -> np.ndarray:
        n = len(self.vertices)
        vis = np.zeros((n, n), dtype=bool)
        if n == 0:
            return vis
        for i in range(n):
            p = np.repeat(self.vertices[i][None, :], n, axis=0)
            if len(self.wall_a):
                blocked = geo.segments_block(p, self.vertices, self.wall_a, self.wall_b).any(axis=1)
            else:
                blocked = np.zeros(n, dtype=bool)
            vis[i] = ~blocked
        np.fill_diagonal(vis, False)
        return vis

    def _dijkstra(self, source: int) -> np.ndarray:
        n = len(self.vertices)
        dist = np.full(n, np.inf)
        dist[source] = 0.0
        heap = [(0.0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            reach = np.flatnonzero(self._vis[u])
            step = np.hypot(*(self.vertices[reach] - self.vertices[u]).T)
            for v, w in zip(reach, step):
                nd = d + w
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        return dist

    # -- queries -----------------------------------------------------------

    def visible_vertices(self, pos: np.ndarray) -> np.ndarray:
        """Bool mask over vertices with clear line of sight from ``pos``."""
        n = len(self.vertices)
        if n == 0:
            return np.zeros(0, dtype=bool)
        p = np.repeat(np.asarray(pos, dtype=float)[None, :], n, axis=0)
        if not len(self.wall_a):
            return np.ones(n, dtype=bool)
        return ~geo.segments_block(p, self.vertices, self.wall_a, self.wall_b).any(axis=1)

    def line_blocked(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Vectorised: True where sight line p_i -> q_i crosses a wall."""
        if not len(self.wall_a):
            return np.zeros(len(np.atleast_2d(p)), dtype=bool)
        return geo.segments_block(p, q, self.wall_a, self.wall_b).any(axis=1)

    def usable_exits(self, knowledge: frozenset[str] | set[str]) -> list[str]:
        """Known open exits, falling back to all open exits when none remain."""
        usable = [e for e in self.open_exit_ids if e in knowledge]
        return usable or list(self.open_exit_ids)

    def remaining_dist(self, usable: list[str]) -> np.ndarray:
        """Per-vertex remaining path length to the best of ``usable`` exits."""
        return np.minimum.reduce([self.exit_dist[e] for e in usable])

    def best_waypoint(
        self,
        pos: np.ndarray,
        knowledge: frozenset[str] | set[str],
        exclude_radius: float = 0.0,
    ) -> tuple[int, float]:
        """(vertex index, total path length) of the best next waypoint.

        Non-exit vertices closer than ``exclude_radius`` are skipped so an
        agent standing on a waypoint advances to the next one. Returns
        (-1, inf) when no vertex is visible.
        """
        vis = self.visible_vertices(pos)
        if not vis.any():
            return -1, np.inf
        remaining = self.remaining_dist(self.usable_exits(knowledge))
        hop = np.hypot(*(self.vertices - np.asarray(pos)).T)
        cost = np.where(vis, hop + remaining, np.inf)
        if exclude_radius > 0.0:
            near = hop < exclude_radius
            near[list(self.exit_vertex.values())] = False
            cost[near] = np.inf
        best = int(np.argmin(cost))
        if not np.isfinite(cost[best]):
            return -1, np.inf
        return best, float(cost[best])


def desired_direction(agent, frame, floorplan: Floorplan) -> np.ndarray:
    """Unit vector along the shortest wall-free path to the agent's best exit.

    Convenience single-agent query matching the engine's routing; ``frame``
    provides the door states. Raises NoOpenExitError when every exit is shut.
    """
    nav = NavMesh(floorplan, frame.doors)
    pos = np.asarray(agent.position, dtype=float)
    vertex, _ = nav.best_waypoint(pos, agent.knowledge)
    if vertex < 0:
        return np.zeros(2)
    d = nav.vertices[vertex] - pos
    norm = np.hypot(*d)
    return d / norm if norm > 0 else np.zeros(2)
