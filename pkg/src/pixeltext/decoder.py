"""Decode predicted score maps into text instances.

Pipeline: threshold the skeleton map into candidate seeds, keep candidates
whose mean skeleton score clears ``gamma``, grow each kept seed along the
directional maps inside the text region, hand contested pixels to the nearest
seed, and trace each final mask into a polygon.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .geometry import GeometryError, Polygon, _self_intersection, points_in_polygon

EIGHT = np.ones((3, 3), dtype=bool)
FOUR = ndimage.generate_binary_structure(2, 1)

CHANNELS = ("ts", "tf", "tr", "dpr_up", "dpr_down", "dpr_left", "dpr_right")


@dataclass
class PredictionMaps:
    ts: np.ndarray
    tf: np.ndarray
    tr: np.ndarray
    dpr_up: np.ndarray
    dpr_down: np.ndarray
    dpr_left: np.ndarray
    dpr_right: np.ndarray

    def __post_init__(self):
        shape = np.shape(self.ts)
        for name in CHANNELS:
            arr = np.asarray(getattr(self, name), dtype=np.float32)
            if arr.ndim != 2 or arr.shape != shape:
                raise ValueError(f"channel {name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)) or arr.min(initial=0) < 0 or arr.max(initial=0) > 1:
                raise ValueError(f"channel {name} has values outside [0, 1]")
            setattr(self, name, arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.ts.shape

    def stack(self) -> np.ndarray:
        return np.stack([getattr(self, c) for c in CHANNELS])

    @classmethod
    def from_stack(cls, arr: np.ndarray) -> "PredictionMaps":
        return cls(*[arr[i] for i in range(len(CHANNELS))])

    @classmethod
    def from_labels(cls, labels) -> "PredictionMaps":
        """Treat a LabelSet as a perfect prediction (TF mirrors TS)."""
        return cls(
            ts=labels.ts,
            tf=labels.ts,
            tr=labels.tr,
            dpr_up=labels.dpr_up,
            dpr_down=labels.dpr_down,
            dpr_left=labels.dpr_left,
            dpr_right=labels.dpr_right,
        )

    def replace(self, **changes) -> "PredictionMaps":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return PredictionMaps(**kw)


@dataclass(frozen=True)
class DecodeConfig:
    gamma: float = 0.54
    t_tr: float = 0.2
    t_dpr: float = 0.1
    ts_binarize: float = 0.2
    min_component_px: int = 5
    simplify_eps: float = 1.0
    use_confidence: bool = True

    def __post_init__(self):
        for name in ("gamma", "t_tr", "t_dpr", "ts_binarize"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.min_component_px < 1:
            raise ValueError("min_component_px must be >= 1")
        if self.simplify_eps < 0:
            raise ValueError("simplify_eps must be >= 0")


# Total-Text and SCUT-CTW1500 settings; they differ only in gamma.
TOTAL_TEXT = DecodeConfig(gamma=0.54)
CTW1500 = DecodeConfig(gamma=0.29)


@dataclass(eq=False)
class Candidate:
    seed: np.ndarray  # bool (H, W)
    mean_ts_score: float


@dataclass(eq=False)
class Detection:
    mask: np.ndarray  # bool (H, W)
    polygon: Polygon
    score: float
    seed: np.ndarray


def find_candidates(maps: PredictionMaps, cfg: DecodeConfig = TOTAL_TEXT) -> list[Candidate]:
    """8-connected skeleton components, scored by their mean raw TS value."""
    binary = (maps.ts > cfg.ts_binarize) & (maps.tr > cfg.t_tr)
    labels, n = ndimage.label(binary, structure=EIGHT)
    if n == 0:
        return []
    idx = np.arange(1, n + 1)
    sizes = ndimage.sum_labels(binary, labels, idx)
    means = ndimage.mean(maps.ts.astype(np.float64), labels, idx)
    out = []
    for k, size, mean in zip(idx, sizes, means):
        if size >= cfg.min_component_px:
            out.append(Candidate(labels == k, float(mean)))
    return out


def confidence_filter(cands: list[Candidate], gamma: float):
    kept = [c for c in cands if c.mean_ts_score > gamma]
    rejected = [c for c in cands if not c.mean_ts_score > gamma]
    return kept, rejected


def _allowed(maps: PredictionMaps, cfg: DecodeConfig) -> list[np.ndarray]:
    tr_ok = maps.tr > cfg.t_tr
    return [(getattr(maps, f"dpr_{d}") > cfg.t_dpr) & tr_ok for d in ("up", "down", "left", "right")]


def diffuse(cand: Candidate, maps: PredictionMaps, cfg: DecodeConfig = TOTAL_TEXT, allowed=None) -> np.ndarray:
    """Grow the seed one pixel at a time along the four directional maps.

    A pixel joins when a member sits next to it on the side it is entered from
    (moving up enters through ``dpr_up``, etc.) and it is inside the text
    region.  Every member expands in all four directions until nothing changes.
    """
    h, w = maps.shape
    allowed = allowed if allowed is not None else _allowed(maps, cfg)
    up, down, left, right = (a.ravel().tolist() for a in allowed)
    inside = bytearray(cand.seed.ravel().astype(np.uint8).tobytes())
    queue = deque(np.flatnonzero(cand.seed).tolist())
    while queue:
        p = queue.popleft()
        col = p % w
        if p >= w:
            q = p - w
            if up[q] and not inside[q]:
                inside[q] = 1
                queue.append(q)
        if p < (h - 1) * w:
            q = p + w
            if down[q] and not inside[q]:
                inside[q] = 1
                queue.append(q)
        if col > 0:
            q = p - 1
            if left[q] and not inside[q]:
                inside[q] = 1
                queue.append(q)
        if col < w - 1:
            q = p + 1
            if right[q] and not inside[q]:
                inside[q] = 1
                queue.append(q)
    return np.frombuffer(bytes(inside), dtype=np.uint8).reshape(h, w).astype(bool)


def resolve_conflicts(masks: list[np.ndarray], seeds: list[np.ndarray]) -> list[np.ndarray]:
    """Make masks disjoint: a contested pixel goes to the claimant with the nearest seed pixel.

    Ties go to the lower instance index.  Seed pixels always stay with their own
    instance since their seed distance is zero.
    """
    if len(masks) < 2:
        return [m.copy() for m in masks]
    count = np.sum(masks, axis=0)
    contested = count > 1
    out = [m & ~contested for m in masks]
    if not contested.any():
        return out
    rows, cols = np.nonzero(contested)
    pts = np.stack([rows, cols], axis=1).astype(np.float64)
    best = np.full(len(pts), np.inf)
    owner = np.full(len(pts), -1)
    for i, (m, s) in enumerate(zip(masks, seeds)):
        claim = m[rows, cols]
        if not claim.any():
            continue
        tree = cKDTree(np.argwhere(s).astype(np.float64))
        dist = np.full(len(pts), np.inf)
        dist[claim], _ = tree.query(pts[claim])
        better = dist < best  # strict: earlier index keeps ties
        best[better] = dist[better]
        owner[better] = i
    for i in range(len(masks)):
        sel = owner == i
        out[i][rows[sel], cols[sel]] = True
    return out


def _trace_outer_boundary(mask: np.ndarray) -> np.ndarray:
    """Corner coordinates of the outer boundary of a hole-free 4-connected mask.

    Boundary cracks between pixels are oriented with the interior on the right
    (clockwise on screen) and chained; each vertex has one outgoing crack since
    the mask has no pinch points.
    """
    m = np.pad(mask, 1)
    h, w = m.shape
    nxt = {}
    # pixel (r, c) covers x in [c, c+1], y in [r, r+1]
    r, c = np.nonzero(m[1:-1, 1:-1] & ~m[:-2, 1:-1])  # top edge, left to right
    for y, x in zip(r, c):
        nxt[(x, y)] = (x + 1, y)
    r, c = np.nonzero(m[1:-1, 1:-1] & ~m[2:, 1:-1])  # bottom edge, right to left
    for y, x in zip(r, c):
        nxt[(x + 1, y + 1)] = (x, y + 1)
    r, c = np.nonzero(m[1:-1, 1:-1] & ~m[1:-1, :-2])  # left edge, bottom to top
    for y, x in zip(r, c):
        nxt[(x, y + 1)] = (x, y)
    r, c = np.nonzero(m[1:-1, 1:-1] & ~m[1:-1, 2:])  # right edge, top to bottom
    for y, x in zip(r, c):
        nxt[(x + 1, y)] = (x + 1, y + 1)
    start = min(nxt, key=lambda p: (p[1], p[0]))
    ring = [start]
    p = nxt[start]
    while p != start:
        ring.append(p)
        p = nxt[p]
    pts = np.array(ring, dtype=np.float64)
    # drop collinear vertices
    prev = np.roll(pts, 1, axis=0)
    after = np.roll(pts, -1, axis=0)
    cross = (pts[:, 0] - prev[:, 0]) * (after[:, 1] - pts[:, 1]) - (pts[:, 1] - prev[:, 1]) * (after[:, 0] - pts[:, 0])
    return pts[cross != 0]


def _dp_open(pts: np.ndarray, eps: float) -> list[int]:
    keep = [0, len(pts) - 1]
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        a, b = pts[i], pts[j]
        seg = b - a
        mid = pts[i + 1 : j]
        norm = np.hypot(*seg)
        if norm == 0:
            d = np.hypot(*(mid - a).T)
        else:
            d = np.abs(seg[0] * (mid[:, 1] - a[1]) - seg[1] * (mid[:, 0] - a[0])) / norm
        k = int(np.argmax(d))
        if d[k] > eps:
            keep.append(i + 1 + k)
            stack.append((i, i + 1 + k))
            stack.append((i + 1 + k, j))
    return sorted(keep)


def simplify_ring(ring: np.ndarray, eps: float) -> np.ndarray:
    """Douglas-Peucker on a closed ring, anchored at vertex 0 and the vertex farthest from it."""
    if eps <= 0 or len(ring) <= 4:
        return ring
    far = int(np.argmax(np.hypot(*(ring - ring[0]).T)))
    first = ring[: far + 1]
    second = np.vstack([ring[far:], ring[:1]])
    k1 = _dp_open(first, eps)
    k2 = _dp_open(second, eps)
    pts = np.vstack([first[k1], second[k2][1:-1]])
    return pts


def mask_to_polygon(mask: np.ndarray, simplify_eps: float = 1.0) -> Polygon:
    """Polygon around the largest connected part of ``mask`` on pixel corners.

    Holes are filled and diagonal-only attachments dropped so the traced ring
    is simple.  Simplification is relaxed (halved) whenever it would produce an
    invalid ring.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise GeometryError("cannot build a polygon from an empty mask")
    lab, n = ndimage.label(mask, structure=EIGHT)
    if n > 1:
        sizes = ndimage.sum_labels(mask, lab, np.arange(1, n + 1))
        mask = lab == (1 + int(np.argmax(sizes)))
    lab, n = ndimage.label(mask, structure=FOUR)
    if n > 1:
        sizes = ndimage.sum_labels(mask, lab, np.arange(1, n + 1))
        mask = lab == (1 + int(np.argmax(sizes)))
    mask = ndimage.binary_fill_holes(mask, structure=FOUR)
    ring = _trace_outer_boundary(mask)
    eps = simplify_eps
    while True:
        pts = simplify_ring(ring, eps)
        if len(pts) >= 3 and _self_intersection(pts) is None:
            try:
                return Polygon(pts)
            except GeometryError:
                pass
        if eps <= 0:
            return Polygon(ring)
        eps = eps / 2 if eps > 0.05 else 0.0


def mask_coverage(poly: Polygon, mask: np.ndarray) -> float:
    """Fraction of mask pixel centers inside ``poly``."""
    rows, cols = np.nonzero(mask)
    if len(rows) == 0:
        return 1.0
    inside = points_in_polygon(np.stack([cols + 0.5, rows + 0.5], axis=1), poly)
    return float(inside.mean())


def decode(maps: PredictionMaps, cfg: DecodeConfig = TOTAL_TEXT) -> list[Detection]:
    cands = find_candidates(maps, cfg)
    kept = confidence_filter(cands, cfg.gamma)[0] if cfg.use_confidence else cands
    if not kept:
        return []
    allowed = _allowed(maps, cfg)
    grown = [diffuse(c, maps, cfg, allowed) for c in kept]
    seeds = [c.seed for c in kept]
    masks = resolve_conflicts(grown, seeds)
    dets = [
        Detection(mask=m, polygon=mask_to_polygon(m, cfg.simplify_eps), score=c.mean_ts_score, seed=c.seed)
        for m, c in zip(masks, kept)
    ]
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    return [dets[i] for i in order]
