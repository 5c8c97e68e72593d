"""Procedural curved-text corpus with known centerlines.

Each instance is a ribbon: a constant height swept along a line, circular arc or
one sine period, then rotated and placed so that instances keep a pixel margin.
The dense centerline used to build each ribbon is kept as a geometric oracle.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .annotations import AnnotationFile, format_annotation
from .geometry import GeometryError, Polygon, polygon_mask

log = logging.getLogger(__name__)

KINDS = ("line", "arc", "sine")
MAX_ARC_TURN = 1.5  # radians swept by an arc ribbon


@dataclass
class SynthConfig:
    seed: int = 0
    count: int = 100
    size: tuple[int, int] = (512, 512)  # (width, height)
    instances_per_image: tuple[int, int] = (1, 4)
    curvature: tuple[float, float] = (0.0, 0.006)  # peak centerline curvature, 1/px
    height_px: tuple[float, float] = (16.0, 40.0)
    aspect: tuple[float, float] = (3.0, 8.0)  # ribbon length / height
    samples_per_side: int = 10
    margin: int = 2
    max_tries: int = 200

    def __post_init__(self):
        for name in ("instances_per_image", "curvature", "height_px", "aspect"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: empty range ({lo}, {hi})")
        if self.size[0] < 64 or self.size[1] < 64:
            raise ValueError(f"size must be at least 64x64, got {self.size}")
        if self.instances_per_image[0] < 0 or self.curvature[0] < 0 or self.height_px[0] <= 0:
            raise ValueError("ranges must be non-negative (height positive)")
        if self.samples_per_side < 2:
            raise ValueError("samples_per_side must be >= 2")


@dataclass
class SynthImage:
    annotation: AnnotationFile
    centerlines: list[np.ndarray] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)


def _curve(kind: str, length: float, kappa: float, t: np.ndarray, phase: float):
    """Points and unit normals of the centerline at parameters t in [0, 1]."""
    if kind == "line" or kappa * length < 1e-9:  # a flatter arc is a line to double precision
        x = length * t
        pts = np.stack([x, np.zeros_like(x)], axis=1)
        tang = np.tile([1.0, 0.0], (len(t), 1))
    elif kind == "arc":
        radius = 1.0 / kappa
        theta = (t - 0.5) * length / radius
        pts = np.stack([radius * np.sin(theta), radius * (1 - np.cos(theta))], axis=1)
        tang = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    elif kind == "sine":
        # peak curvature of a*sin(w x) is a*w^2
        w = 2 * math.pi / length
        amp = kappa / w**2
        x = length * t
        pts = np.stack([x, amp * np.sin(w * x + phase)], axis=1)
        tang = np.stack([np.ones_like(x), amp * w * np.cos(w * x + phase)], axis=1)
        tang /= np.hypot(*tang.T)[:, None]
    else:
        raise ValueError(f"unknown ribbon kind {kind!r}")
    normal = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
    return pts, normal


def make_ribbon(kind, length, height, kappa, angle, center, samples=10, phase=0.0, dense=400):
    """One ribbon polygon (vertices rounded to 0.01 px) and its dense centerline.

    Vertices run along one long side and back along the other, so the four
    corners are vertices ``0, samples-1, samples, 2*samples-1``.
    """
    t = np.linspace(0.0, 1.0, samples)
    c, n = _curve(kind, length, kappa, t, phase)
    cd, _ = _curve(kind, length, kappa, np.linspace(0.0, 1.0, dense), phase)
    origin = 0.5 * (c.min(axis=0) + c.max(axis=0))
    top = c + 0.5 * height * n
    bottom = c - 0.5 * height * n
    verts = np.vstack([top, bottom[::-1]]) - origin
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    offset = np.asarray(center, dtype=float)
    verts = np.round(verts @ rot.T + offset, 2)
    return verts, (cd - origin) @ rot.T + offset


def _draw_instance(rng: np.random.Generator, cfg: SynthConfig):
    kind = KINDS[rng.integers(len(KINDS))]
    height = rng.uniform(*cfg.height_px)
    length = height * rng.uniform(*cfg.aspect)
    length = min(length, 0.8 * min(cfg.size))
    kappa = rng.uniform(*cfg.curvature)
    if kind == "arc" and kappa > 0:
        kappa = min(kappa, MAX_ARC_TURN / length)
    # keep the inner offset curve well-formed
    kappa = min(kappa, 1.0 / height)
    angle = rng.uniform(0.0, math.pi)
    phase = rng.uniform(0.0, 2 * math.pi)
    return kind, length, height, kappa, angle, phase


def _generate_image(index: int, cfg: SynthConfig) -> SynthImage:
    rng = np.random.default_rng([cfg.seed, index])
    w, h = cfg.size
    lo, hi = cfg.instances_per_image
    target = int(rng.integers(lo, hi + 1))
    occupied = np.zeros((h, w), dtype=bool)
    polys, lines, kinds = [], [], []
    tries = 0
    while len(polys) < target and tries < cfg.max_tries:
        tries += 1
        kind, length, height, kappa, angle, phase = _draw_instance(rng, cfg)
        verts, line = make_ribbon(kind, length, height, kappa, angle, (0.0, 0.0), cfg.samples_per_side, phase)
        lo_xy = verts.min(axis=0)
        hi_xy = verts.max(axis=0)
        span = hi_xy - lo_xy
        room = np.array([w, h]) - 2 * cfg.margin - span
        if np.any(room <= 0):
            continue
        shift = cfg.margin - lo_xy + rng.uniform(0, 1, 2) * room
        shift = np.round(shift, 2)
        try:
            poly = Polygon(verts + shift)
        except GeometryError:
            continue
        mask = polygon_mask(poly, h, w)
        grown = ndimage.binary_dilation(mask, structure=np.ones((3, 3), bool), iterations=cfg.margin + 1)
        if np.any(grown & occupied):
            continue
        occupied |= mask
        polys.append(poly)
        lines.append(line + shift)
        kinds.append(kind)
    if len(polys) < target:
        log.warning("image %d: placed %d of %d instances after %d tries", index, len(polys), target, tries)
    ann = AnnotationFile(image_id=f"img_{index:04d}", image_size=(w, h), instances=polys)
    return SynthImage(annotation=ann, centerlines=lines, kinds=kinds)


def synth_corpus(cfg: SynthConfig) -> list[SynthImage]:
    """Generate ``cfg.count`` images; image ``i`` depends only on ``(cfg, i)``."""
    return [_generate_image(i, cfg) for i in range(cfg.count)]


def write_corpus(images: list[SynthImage], out_dir) -> list[Path]:
    from .smap import atomic_write

    out_dir = Path(out_dir)
    written = []
    for img in images:
        path = out_dir / f"{img.annotation.image_id}.txt"
        atomic_write(path, format_annotation(img.annotation))
        oracle = {
            "image_id": img.annotation.image_id,
            "kinds": img.kinds,
            "centerlines": [np.round(c, 3).tolist() for c in img.centerlines],
        }
        atomic_write(out_dir / f"{img.annotation.image_id}.centerlines.json", json.dumps(oracle))
        written.append(path)
    return written
