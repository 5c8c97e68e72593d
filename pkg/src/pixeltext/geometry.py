"""Polygon and polyline primitives.

Coordinates are image coordinates: origin at the top-left corner, ``x`` to the
right, ``y`` downward.  Pixel ``(row, col)`` covers the unit square
``[col, col+1] x [row, row+1]`` and its center sits at ``(col+0.5, row+0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

ArrayLike = np.ndarray | Sequence[Sequence[float]]


class GeometryError(ValueError):
    """Raised for degenerate or invalid geometric input."""


def _as_points(points: ArrayLike) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError(f"expected an (N, 2) point array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("non-finite coordinate")
    return arr


def signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _self_intersection(v: np.ndarray) -> tuple[int, int] | None:
    """Return a pair of offending edge indices, or None when the ring is simple."""
    n = len(v)
    a = v
    b = np.roll(v, -1, axis=0)
    d = b - a
    scale = max(1.0, float(np.abs(v).max()))
    tol = 1e-12 * scale * scale
    for i in range(n):
        # adjacent edges: only a backtracking spike counts
        nxt = (i + 1) % n
        cross = d[i, 0] * d[nxt, 1] - d[i, 1] * d[nxt, 0]
        if abs(cross) <= tol and float(d[i] @ d[nxt]) < 0:
            return i, nxt
        j = np.arange(i + 2, n)
        if i == 0:
            j = j[j != n - 1]
        if len(j) == 0:
            continue
        p, q = a[i], b[i]
        r, s = a[j], b[j]
        o1 = _orient(p[0], p[1], q[0], q[1], r[:, 0], r[:, 1])
        o2 = _orient(p[0], p[1], q[0], q[1], s[:, 0], s[:, 1])
        o3 = _orient(r[:, 0], r[:, 1], s[:, 0], s[:, 1], p[0], p[1])
        o4 = _orient(r[:, 0], r[:, 1], s[:, 0], s[:, 1], q[0], q[1])
        z1, z2, z3, z4 = (np.abs(o) <= tol for o in (o1, o2, o3, o4))
        # near-zero orientations are collinear cases, handled by `touch` below
        s1, s2, s3, s4 = (np.where(z, 0, np.sign(o)) for z, o in ((z1, o1), (z2, o2), (z3, o3), (z4, o4)))
        proper = (s1 * s2 < 0) & (s3 * s4 < 0)

        def within(px, py, sx0, sy0, sx1, sy1):
            return (
                (np.minimum(sx0, sx1) - 1e-12 <= px)
                & (px <= np.maximum(sx0, sx1) + 1e-12)
                & (np.minimum(sy0, sy1) - 1e-12 <= py)
                & (py <= np.maximum(sy0, sy1) + 1e-12)
            )

        touch = (
            (z1 & within(r[:, 0], r[:, 1], p[0], p[1], q[0], q[1]))
            | (z2 & within(s[:, 0], s[:, 1], p[0], p[1], q[0], q[1]))
            | (z3 & within(p[0], p[1], r[:, 0], r[:, 1], s[:, 0], s[:, 1]))
            | (z4 & within(q[0], q[1], r[:, 0], r[:, 1], s[:, 0], s[:, 1]))
        )
        hit = np.flatnonzero(proper | touch)
        if len(hit):
            return i, int(j[hit[0]])
    return None


@dataclass(frozen=True, eq=False)
class Polygon:
    """A simple closed polygon; the last vertex connects back to the first.

    Construction validates: at least three distinct vertices, non-zero area,
    and no self-intersection.  Consecutive duplicate vertices are dropped.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = _as_points(self.vertices)
        if len(v):
            keep = np.any(v != np.roll(v, 1, axis=0), axis=1)
            if not keep.any():
                keep[0] = True
            v = v[keep]
        if len(v) < 3:
            raise GeometryError(f"polygon needs at least 3 distinct vertices, got {len(v)}")
        if abs(signed_area(v)) < 1e-12:
            raise GeometryError("polygon has zero area")
        bad = _self_intersection(v)
        if bad is not None:
            raise GeometryError(f"polygon self-intersects (edges {bad[0]} and {bad[1]})")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        return abs(signed_area(self.vertices))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def transformed(self, matrix: np.ndarray, offset=(0.0, 0.0)) -> "Polygon":
        return Polygon(self.vertices @ np.asarray(matrix).T + np.asarray(offset))


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Ordered skeleton dots with the local half-height of the text at each dot."""

    dots: np.ndarray
    half_heights: np.ndarray
    corners: tuple[int, ...] = field(default=())

    def __post_init__(self):
        dots = _as_points(self.dots)
        hh = np.asarray(self.half_heights, dtype=np.float64)
        if len(dots) < 2:
            raise GeometryError("skeleton needs at least 2 dots")
        if hh.shape != (len(dots),):
            raise GeometryError("half_heights must have one entry per dot")
        if np.any(hh <= 0):
            raise GeometryError("half_heights must be positive")
        object.__setattr__(self, "dots", dots)
        object.__setattr__(self, "half_heights", hh)


def polyline_length(points: np.ndarray) -> float:
    return float(np.sum(np.hypot(*np.diff(points, axis=0).T)))


def resample_chain(points: ArrayLike, k: int) -> np.ndarray:
    """Place ``k`` points at equal arc-length spacing along an open polyline.

    The first and last output points are exactly the chain endpoints.
    """
    pts = _as_points(points)
    if len(pts) < 2:
        raise GeometryError("chain needs at least 2 points")
    if k < 2:
        raise GeometryError("k must be at least 2")
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        raise GeometryError("degenerate chain (zero length)")
    targets = np.linspace(0.0, total, k)
    out = np.empty((k, 2))
    out[:, 0] = np.interp(targets, cum, pts[:, 0])
    out[:, 1] = np.interp(targets, cum, pts[:, 1])
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def turning_angles(vertices: np.ndarray) -> np.ndarray:
    """Exterior turning angle (radians, in [0, pi]) at each polygon vertex."""
    incoming = vertices - np.roll(vertices, 1, axis=0)
    outgoing = np.roll(vertices, -1, axis=0) - vertices
    a_in = np.arctan2(incoming[:, 1], incoming[:, 0])
    a_out = np.arctan2(outgoing[:, 1], outgoing[:, 0])
    turn = np.abs((a_out - a_in + np.pi) % (2 * np.pi) - np.pi)
    return turn


def find_corners(poly: Polygon) -> tuple[int, int, int, int]:
    """Indices of the four sharpest-turning vertices, in boundary order."""
    n = len(poly)
    if n < 4:
        raise GeometryError(f"need at least 4 vertices to find corners, got {n}")
    if n == 4:
        return (0, 1, 2, 3)
    turn = turning_angles(poly.vertices)
    # stable sort on negated score: ties keep the earliest index
    order = np.argsort(-np.round(turn, 12), kind="stable")
    return tuple(sorted(int(i) for i in order[:4]))


def _ring_chain(vertices: np.ndarray, start: int, stop: int) -> np.ndarray:
    n = len(vertices)
    idx = [start]
    i = start
    while i != stop:
        i = (i + 1) % n
        idx.append(i)
    return vertices[idx]


def split_chains(poly: Polygon) -> list[np.ndarray]:
    """Split the boundary at its four corners into four chains, in boundary order."""
    c = find_corners(poly)
    return [_ring_chain(poly.vertices, c[i], c[(i + 1) % 4]) for i in range(4)]


def extract_skeleton(poly: Polygon, k_dots: int = 15) -> Skeleton:
    """Build the text skeleton from the two long sides of a text polygon.

    The boundary is cut into four chains at its corners.  The opposite pair
    with the larger total length is kept as the two long sides; the other pair
    (head and tail) is discarded.  Each long side is resampled to ``k_dots``
    points, the second one reversed so that samples face each other, and each
    dot is the midpoint of a facing pair.
    """
    if len(poly) < 4:
        raise GeometryError(f"no 4-corner decomposition for a {len(poly)}-vertex polygon")
    chains = split_chains(poly)
    lengths = [polyline_length(ch) for ch in chains]
    if lengths[0] + lengths[2] >= lengths[1] + lengths[3]:
        side_a, side_b = chains[0], chains[2]
    else:
        side_a, side_b = chains[1], chains[3]
    try:
        a = resample_chain(side_a, k_dots)
        b = resample_chain(side_b[::-1], k_dots)
    except GeometryError as exc:
        raise GeometryError(f"no valid 4-corner decomposition: {exc}; chain lengths {lengths}") from exc
    dots = 0.5 * (a + b)
    half = 0.5 * np.hypot(*(a - b).T)
    if np.any(half <= 0):
        raise GeometryError(f"no valid 4-corner decomposition: long sides touch; chain lengths {lengths}")
    c = find_corners(poly)
    return Skeleton(dots, half, corners=c)


def segment_angle(a, b) -> float:
    """Undirected angle of segment ab from the +x axis, in degrees, in [0, 180)."""
    dx = float(b[0]) - float(a[0])
    dy = float(b[1]) - float(a[1])
    if dx == 0 and dy == 0:
        raise GeometryError("segment endpoints coincide")
    ang = math.degrees(math.atan2(dy, dx)) % 180.0
    return 0.0 if ang >= 180.0 else ang


class Side(Enum):
    POSITIVE = 1
    NEGATIVE = -1
    ON = 0


def point_side_of_segment(p, a, b) -> Side:
    """Sign of the cross product (b - a) x (p - a).

    In image coordinates ``POSITIVE`` is the clockwise-right side of a->b: for a
    left-to-right segment that is below it.
    """
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    length = math.hypot(bx - ax, by - ay)
    if length == 0:
        raise GeometryError("segment endpoints coincide")
    cross = (bx - ax) * (float(p[1]) - ay) - (by - ay) * (float(p[0]) - ax)
    if abs(cross) < 1e-9 * length:
        return Side.ON
    return Side.POSITIVE if cross > 0 else Side.NEGATIVE


def points_in_polygon(points: ArrayLike, poly: Polygon, on_tol: float = 1e-9) -> np.ndarray:
    """Vectorized even-odd membership; points on the boundary count as inside."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    px, py = pts[:, 0], pts[:, 1]
    v = poly.vertices
    inside = np.zeros(len(pts), dtype=bool)
    on_edge = np.zeros(len(pts), dtype=bool)
    for (x1, y1), (x2, y2) in zip(v, np.roll(v, -1, axis=0)):
        crosses = (y1 > py) != (y2 > py)
        if crosses.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (px < xint)
        ex, ey = x2 - x1, y2 - y1
        length = math.hypot(ex, ey)
        cross = ex * (py - y1) - ey * (px - x1)
        near = np.abs(cross) <= on_tol * max(length, 1.0)
        if near.any():
            dot = ex * (px - x1) + ey * (py - y1)
            on_edge |= near & (dot >= -on_tol) & (dot <= length * length + on_tol)
    return inside | on_edge


def point_in_polygon(p, poly: Polygon) -> bool:
    return bool(points_in_polygon([p], poly)[0])


def scanline_fill(vertices: np.ndarray, height: int, width: int) -> np.ndarray:
    """Rasterize a polygon by row scanlines, sampling at pixel centers.

    An independent route to :func:`points_in_polygon` that agrees with it off
    the boundary.  Coordinates are in the grid's own pixel units.
    """
    v = np.asarray(vertices, dtype=np.float64)
    out = np.zeros((height, width), dtype=bool)
    x1, y1 = v[:, 0], v[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    ymin = max(int(math.floor(v[:, 1].min() - 0.5)), 0)
    ymax = min(int(math.ceil(v[:, 1].max() - 0.5)), height - 1)
    for row in range(ymin, ymax + 1):
        yc = row + 0.5
        hit = (y1 <= yc) & (y2 > yc) | (y2 <= yc) & (y1 > yc)
        if not hit.any():
            continue
        xs = np.sort(x1[hit] + (yc - y1[hit]) * (x2[hit] - x1[hit]) / (y2[hit] - y1[hit]))
        for xa, xb in zip(xs[0::2], xs[1::2]):
            c0 = max(int(math.ceil(xa - 0.5)), 0)
            c1 = min(int(math.floor(xb - 0.5)), width - 1)
            if c1 >= c0:
                out[row, c0 : c1 + 1] = True
    return out


def polygon_mask(poly: Polygon, height: int, width: int) -> np.ndarray:
    """Boolean mask of pixels whose centers lie inside or on ``poly``.

    Only the polygon's bounding box is tested.
    """
    out = np.zeros((height, width), dtype=bool)
    x0, y0, x1, y1 = poly.bounds
    c0 = max(int(math.floor(x0 - 0.5)), 0)
    r0 = max(int(math.floor(y0 - 0.5)), 0)
    c1 = min(int(math.ceil(x1 - 0.5)), width - 1)
    r1 = min(int(math.ceil(y1 - 0.5)), height - 1)
    if c1 < c0 or r1 < r0:
        return out
    rows, cols = np.mgrid[r0 : r1 + 1, c0 : c1 + 1]
    pts = np.stack([cols.ravel() + 0.5, rows.ravel() + 0.5], axis=1)
    out[r0 : r1 + 1, c0 : c1 + 1] = points_in_polygon(pts, poly).reshape(rows.shape)
    return out


def nearest_segments(points: np.ndarray, polyline: np.ndarray):
    """For each point, the nearest segment of ``polyline`` (ties to the lower index).

    Returns ``(index, distance, t)`` where ``t`` in [0, 1] is the position of
    the closest point along the chosen segment.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    a = polyline[:-1]
    d = polyline[1:] - a
    len2 = np.einsum("ij,ij->i", d, d)
    rel = pts[:, None, :] - a[None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.einsum("nkj,kj->nk", rel, d) / len2
    t = np.where(len2 > 0, np.clip(t, 0.0, 1.0), 0.0)
    closest = a[None] + t[..., None] * d[None]
    dist = np.hypot(*(pts[:, None, :] - closest).transpose(2, 0, 1))
    idx = np.argmin(dist, axis=1)
    rows = np.arange(len(pts))
    return idx, dist[rows, idx], t[rows, idx]
