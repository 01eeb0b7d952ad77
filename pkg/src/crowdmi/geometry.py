"""2-D geometric primitives shared by scenario validation, navigation and the engine.

All coordinates are metres in a fixed world frame. Most helpers are
vectorised with numpy broadcasting; walls are passed as two (m, 2) arrays
of segment endpoints.
"""
from __future__ import annotations

import numpy as np


def as_segments(segments) -> tuple[np.ndarray, np.ndarray]:
    """Split a list of [[x1, y1], [x2, y2]] segments into (a, b) endpoint arrays."""
    arr = np.asarray(segments, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return arr[:, 0, :].copy(), arr[:, 1, :].copy()


def segment_lengths(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.hypot(*(b - a).T)


def closest_point_on_segments(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Closest point on each segment (a_j, b_j) to each point p_i.

    p: (n, 2); a, b: (m, 2). Returns (n, m, 2).
    """
    p = np.atleast_2d(p)
    ab = b - a                                        # (m, 2)
    denom = np.einsum("mk,mk->m", ab, ab)             # squared lengths
    denom = np.where(denom > 0.0, denom, 1.0)
    ap = p[:, None, :] - a[None, :, :]                # (n, m, 2)
    t = np.einsum("nmk,mk->nm", ap, ab) / denom
    t = np.clip(t, 0.0, 1.0)
    return a[None, :, :] + t[:, :, None] * ab[None, :, :]


def point_segment_distances(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point p_i to each segment (a_j, b_j); shape (n, m)."""
    c = closest_point_on_segments(p, a, b)
    d = np.atleast_2d(p)[:, None, :] - c
    return np.hypot(d[..., 0], d[..., 1])


def _cross(ox, oy, ax, ay, bx, by):
    """z-component of (a - o) x (b - o)."""
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def segments_block(p: np.ndarray, q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Conservative intersection test for line-of-sight segments against walls.

    p, q: (n, 2) sight-line endpoints; a, b: (m, 2) wall endpoints.
    Returns (n, m) bool, True where sight line i is blocked by wall j.
    Touching or collinear overlap counts as blocked.
    """
    p = np.atleast_2d(p)
    q = np.atleast_2d(q)
    px, py = p[:, 0, None], p[:, 1, None]
    qx, qy = q[:, 0, None], q[:, 1, None]
    ax, ay = a[None, :, 0], a[None, :, 1]
    bx, by = b[None, :, 0], b[None, :, 1]

    d1 = _cross(ax, ay, bx, by, px, py)   # p relative to wall
    d2 = _cross(ax, ay, bx, by, qx, qy)   # q relative to wall
    d3 = _cross(px, py, qx, qy, ax, ay)   # wall start relative to sight line
    d4 = _cross(px, py, qx, qy, bx, by)   # wall end relative to sight line
    straddle = (d1 * d2 <= 0.0) & (d3 * d4 <= 0.0)

    # All four zero means collinear lines; blocked only if the 1-D spans overlap.
    collinear = (d1 == 0.0) & (d2 == 0.0) & (d3 == 0.0) & (d4 == 0.0)
    if np.any(collinear):
        lo_p, hi_p = np.minimum(px, qx), np.maximum(px, qx)
        lo_a, hi_a = np.minimum(ax, bx), np.maximum(ax, bx)
        lo_py, hi_py = np.minimum(py, qy), np.maximum(py, qy)
        lo_ay, hi_ay = np.minimum(ay, by), np.maximum(ay, by)
        overlap = (hi_p >= lo_a) & (hi_a >= lo_p) & (hi_py >= lo_ay) & (hi_ay >= lo_py)
        straddle = np.where(collinear, overlap, straddle)
    return straddle


def polygon_area(poly) -> float:
    """Unsigned shoelace area."""
    v = np.asarray(poly, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_is_convex(poly) -> bool:
    v = np.asarray(poly, dtype=float)
    if len(v) < 3:
        return False
    d = np.roll(v, -1, axis=0) - v
    cross = d[:, 0] * np.roll(d, -1, axis=0)[:, 1] - d[:, 1] * np.roll(d, -1, axis=0)[:, 0]
    return bool(np.all(cross >= -1e-12) or np.all(cross <= 1e-12))


def points_in_polygon(p: np.ndarray, poly) -> np.ndarray:
    """Even-odd rule point-in-polygon test; p: (n, 2) -> (n,) bool."""
    p = np.atleast_2d(p)
    v = np.asarray(poly, dtype=float)
    w = np.roll(v, -1, axis=0)
    x, y = p[:, 0, None], p[:, 1, None]
    vx, vy = v[None, :, 0], v[None, :, 1]
    wx, wy = w[None, :, 0], w[None, :, 1]
    crosses_ray = (vy > y) != (wy > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at_y = vx + (y - vy) * (wx - vx) / (wy - vy)
    hits = crosses_ray & (x < x_at_y)
    return np.sum(hits, axis=1) % 2 == 1


def segment_intersects_polygon(a, b, poly) -> bool:
    """True if segment (a, b) crosses the polygon boundary or lies inside it."""
    edges_a = np.asarray(poly, dtype=float)
    edges_b = np.roll(edges_a, -1, axis=0)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if segments_block(a[None, :], b[None, :], edges_a, edges_b).any():
        return True
    mid = 0.5 * (a + b)
    return bool(points_in_polygon(mid[None, :], poly)[0])


def normalize_rows(v: np.ndarray, fallback: float = 0.0) -> np.ndarray:
    """Row-normalise vectors; zero rows map to (fallback, fallback)."""
    n = np.hypot(v[:, 0], v[:, 1])
    safe = np.where(n > 0.0, n, 1.0)
    out = v / safe[:, None]
    out[n == 0.0] = fallback
    return out
