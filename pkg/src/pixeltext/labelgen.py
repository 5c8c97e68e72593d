"""Rasterize text polygons into skeleton, region and directional label maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import (
    GeometryError,
    Polygon,
    Side,
    Skeleton,
    extract_skeleton,
    nearest_segments,
    point_side_of_segment,
    polygon_mask,
    segment_angle,
)

DIRECTIONS = ("up", "down", "left", "right")


class Orientation(Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


@dataclass
class LabelConfig:
    k_dots: int = 15
    r_frac: float = 0.2


@dataclass
class LabelSet:
    """Ground-truth maps for one image.  All maps are float32 ``(H, W)`` in {0, 1}."""

    ts: np.ndarray
    tr: np.ndarray
    dpr_up: np.ndarray
    dpr_down: np.ndarray
    dpr_left: np.ndarray
    dpr_right: np.ndarray
    instance_ids: np.ndarray
    skeletons: list[Skeleton] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.tr.shape

    def dpr(self, direction: str) -> np.ndarray:
        return getattr(self, f"dpr_{direction}")

    @property
    def dprs(self) -> list[np.ndarray]:
        return [self.dpr(d) for d in DIRECTIONS]


def rasterize_text_region(polys: list[Polygon], width: int, height: int):
    """Text-region mask and 1-based instance ids at pixel centers.

    Overlapping polygons (sharing any pixel center) are rejected.
    """
    tr = np.zeros((height, width), dtype=np.float32)
    ids = np.zeros((height, width), dtype=np.int32)
    for i, poly in enumerate(polys, start=1):
        m = polygon_mask(poly, height, width)
        clash = ids[m]
        if np.any(clash):
            other = int(clash[clash > 0][0])
            raise GeometryError(f"polygons {other} and {i} overlap")
        ids[m] = i
        tr[m] = 1.0
    return tr, ids


def _band_window(skel: Skeleton, radius_max: float, width: int, height: int):
    lo = skel.dots.min(axis=0) - radius_max - 1
    hi = skel.dots.max(axis=0) + radius_max + 1
    c0, r0 = max(int(lo[0]), 0), max(int(lo[1]), 0)
    c1, r1 = min(int(np.ceil(hi[0])), width - 1), min(int(np.ceil(hi[1])), height - 1)
    return r0, r1, c0, c1


def rasterize_skeleton_band(
    skel: Skeleton,
    width: int,
    height: int,
    r_frac: float = 0.2,
    tr_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Binary band around the skeleton polyline.

    The band radius at a point of the polyline interpolates
    ``r_frac * half_height`` between the bracketing dots, never below half a
    pixel so the band stays connected.
    """
    out = np.zeros((height, width), dtype=np.float32)
    radii = np.maximum(r_frac * skel.half_heights, 0.5)
    r0, r1, c0, c1 = _band_window(skel, float(radii.max()), width, height)
    if r1 < r0 or c1 < c0:
        return out
    rows, cols = np.mgrid[r0 : r1 + 1, c0 : c1 + 1]
    pts = np.stack([cols.ravel() + 0.5, rows.ravel() + 0.5], axis=1)
    idx, dist, t = nearest_segments(pts, skel.dots)
    radius = (1 - t) * radii[idx] + t * radii[idx + 1]
    band = (dist <= radius + 1e-9).reshape(rows.shape)
    out[r0 : r1 + 1, c0 : c1 + 1] = band
    if tr_mask is not None:
        out *= (tr_mask > 0).astype(np.float32)
    return out


def classify_direction(angle: float) -> frozenset[Orientation]:
    """Which DPR families a skeleton segment at ``angle`` degrees feeds.

    Near-horizontal segments split pixels into up/down, near-vertical ones into
    left/right; the closed bands [30, 60] and [120, 150] feed both.
    """
    a = angle % 180.0
    out = set()
    if a <= 60 or a >= 120:
        out.add(Orientation.HORIZONTAL)
    if 30 <= a <= 150:
        out.add(Orientation.VERTICAL)
    return frozenset(out)


def assign_dpr(
    poly: Polygon,
    skel: Skeleton,
    tr_mask: np.ndarray,
    ts_band: np.ndarray,
) -> dict[str, np.ndarray]:
    """Split the instance's non-skeleton text pixels into the four DPR maps.

    ``tr_mask`` must be this instance's own region mask.  Each pixel takes the
    nearest skeleton segment; its angle picks the families, and the pixel's
    side of that segment picks up/down and/or left/right.
    """
    h, w = tr_mask.shape
    maps = {d: np.zeros((h, w), dtype=np.float32) for d in DIRECTIONS}
    rows, cols = np.nonzero((tr_mask > 0) & ~(ts_band > 0))
    if len(rows) == 0:
        return maps
    pts = np.stack([cols + 0.5, rows + 0.5], axis=1)
    idx, _, _ = nearest_segments(pts, skel.dots)

    a = skel.dots[idx]
    b = skel.dots[idx + 1]
    d = b - a
    angles = np.degrees(np.arctan2(d[:, 1], d[:, 0])) % 180.0
    horiz = (angles <= 60) | (angles >= 120)
    vert = (angles >= 30) & (angles <= 150)
    # orient each segment left-to-right for up/down, top-to-bottom for left/right;
    # with that orientation a positive cross product means below / left
    cross = d[:, 0] * (pts[:, 1] - a[:, 1]) - d[:, 1] * (pts[:, 0] - a[:, 0])
    length = np.hypot(d[:, 0], d[:, 1])
    on = np.abs(cross) < 1e-9 * length
    sx = np.where(d[:, 0] < 0, -1.0, 1.0)
    sy = np.where(d[:, 1] < 0, -1.0, 1.0)
    below = (cross * sx > 0) | on
    left = (cross * sy > 0) & ~on

    sel = horiz
    maps["up"][rows[sel & ~below], cols[sel & ~below]] = 1.0
    maps["down"][rows[sel & below], cols[sel & below]] = 1.0
    sel = vert
    maps["left"][rows[sel & left], cols[sel & left]] = 1.0
    maps["right"][rows[sel & ~left], cols[sel & ~left]] = 1.0
    return maps


def dpr_side(p, a, b, orientation: Orientation) -> str:
    """Scalar reference for the side rule used by :func:`assign_dpr`."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if orientation is Orientation.HORIZONTAL:
        if b[0] < a[0] or (b[0] == a[0] and b[1] < a[1]):
            a, b = b, a
        side = point_side_of_segment(p, a, b)
        return "up" if side is Side.NEGATIVE else "down"
    if b[1] < a[1] or (b[1] == a[1] and b[0] < a[0]):
        a, b = b, a
    side = point_side_of_segment(p, a, b)
    return "left" if side is Side.POSITIVE else "right"


def generate_labels(
    polys: list[Polygon],
    width: int,
    height: int,
    config: LabelConfig | None = None,
) -> LabelSet:
    cfg = config or LabelConfig()
    tr, ids = rasterize_text_region(polys, width, height)
    ts = np.zeros_like(tr)
    dprs = {d: np.zeros_like(tr) for d in DIRECTIONS}
    skeletons = []
    for i, poly in enumerate(polys, start=1):
        skel = extract_skeleton(poly, cfg.k_dots)
        skeletons.append(skel)
        own = ids == i
        if not own.any():
            continue
        band = rasterize_skeleton_band(skel, width, height, cfg.r_frac, tr_mask=own)
        ts = np.maximum(ts, band)
        for d, m in assign_dpr(poly, skel, own, band).items():
            dprs[d] = np.maximum(dprs[d], m)
    return LabelSet(
        ts=ts,
        tr=tr,
        dpr_up=dprs["up"],
        dpr_down=dprs["down"],
        dpr_left=dprs["left"],
        dpr_right=dprs["right"],
        instance_ids=ids,
        skeletons=skeletons,
    )


def check_label_invariants(labels: LabelSet) -> list[str]:
    """Return a list of violated LabelSet invariants (empty when consistent)."""
    problems = []
    tr = labels.tr > 0
    ts = labels.ts > 0
    dprs = [m > 0 for m in labels.dprs]
    for name, m in [("ts", labels.ts), ("tr", labels.tr)] + list(zip(DIRECTIONS, labels.dprs)):
        if m.shape != labels.tr.shape:
            problems.append(f"{name}: shape {m.shape} != {labels.tr.shape}")
        elif not np.all((m == 0) | (m == 1)):
            problems.append(f"{name}: non-binary values")
    if problems:
        return problems
    if np.any(ts & ~tr):
        problems.append("ts outside tr")
    for d, m in zip(DIRECTIONS, dprs):
        if np.any(m & ~tr):
            problems.append(f"dpr_{d} outside tr")
        if np.any(m & ts):
            problems.append(f"dpr_{d} overlaps ts")
    union = ts.copy()
    for m in dprs:
        union |= m
    if np.any(union != tr):
        problems.append("ts + dpr does not cover tr")
    mult = np.sum(dprs, axis=0)
    if mult.max(initial=0) > 2:
        problems.append("pixel in more than two DPR maps")
    if np.any((labels.instance_ids != 0) != tr):
        problems.append("instance_ids nonzero set differs from tr")
    return problems
