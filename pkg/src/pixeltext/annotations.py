"""Polyline annotation and detection record text formats.

Annotation file, one instance per line::

    # image_id=img_0003 width=512 height=512
    x1,y1,x2,y2,...,xn,yn
    x1,y1,...,xn,yn,###          <- trailing ### marks an ignore (don't-care) instance

Detection file, one instance per line::

    score;x1,y1,...,xn,yn
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import GeometryError, Polygon

IGNORE_TOKEN = "###"
_HEADER = re.compile(r"(\w+)=(\S+)")


class AnnotationError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"{message} at line {line}" if line is not None else message)


@dataclass
class AnnotationFile:
    image_id: str
    image_size: tuple[int, int]  # (width, height)
    instances: list[Polygon] = field(default_factory=list)
    ignore: list[bool] = field(default_factory=list)

    def __post_init__(self):
        if not self.ignore:
            self.ignore = [False] * len(self.instances)

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    def cared(self) -> list[Polygon]:
        return [p for p, ig in zip(self.instances, self.ignore) if not ig]


def _fmt(v: float) -> str:
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def format_coords(vertices: np.ndarray) -> str:
    return ",".join(_fmt(float(c)) for c in np.asarray(vertices).ravel())


def _parse_coords(tokens: list[str], lineno: int) -> np.ndarray:
    if len(tokens) % 2:
        raise AnnotationError("odd coordinate count", lineno)
    try:
        values = [float(t) for t in tokens]
    except ValueError:
        bad = next(t for t in tokens if not _is_number(t))
        raise AnnotationError(f"non-numeric token {bad!r}", lineno) from None
    if not all(np.isfinite(values)):
        raise AnnotationError("non-finite coordinate", lineno)
    if len(values) < 8:
        raise AnnotationError(f"need at least 4 points, got {len(values) // 2}", lineno)
    return np.array(values, dtype=np.float64).reshape(-1, 2)


def _is_number(t: str) -> bool:
    try:
        float(t)
    except ValueError:
        return False
    return True


def parse_polyline_annotation(
    text: str,
    image_id: str | None = None,
    image_size: tuple[int, int] | None = None,
) -> AnnotationFile:
    """Parse annotation text.

    Header values take effect unless ``image_id``/``image_size`` are passed.
    Coordinates are clamped into the image; every polygon is validated.
    """
    meta = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            meta.update(_HEADER.findall(line))
            continue
        tokens = [t.strip() for t in line.split(",")]
        ignore = False
        if tokens and tokens[-1] == IGNORE_TOKEN:
            ignore = True
            tokens = tokens[:-1]
        rows.append((lineno, _parse_coords(tokens, lineno), ignore))

    if image_size is None:
        try:
            image_size = (int(meta["width"]), int(meta["height"]))
        except KeyError:
            image_size = (512, 512)
        except ValueError as exc:
            raise AnnotationError(f"bad image size in header: {exc}") from None
    if image_id is None:
        image_id = meta.get("image_id", "image")
    w, h = image_size
    if w < 1 or h < 1:
        raise AnnotationError(f"image size must be positive, got {image_size}")

    polys, flags = [], []
    for lineno, pts, ignore in rows:
        pts[:, 0] = np.clip(pts[:, 0], 0, w)
        pts[:, 1] = np.clip(pts[:, 1], 0, h)
        try:
            polys.append(Polygon(pts))
        except GeometryError as exc:
            raise AnnotationError(f"invalid polygon ({exc})", lineno) from None
        flags.append(ignore)
    return AnnotationFile(image_id=image_id, image_size=(w, h), instances=polys, ignore=flags)


def format_annotation(ann: AnnotationFile) -> str:
    lines = [f"# image_id={ann.image_id} width={ann.width} height={ann.height}"]
    for poly, ig in zip(ann.instances, ann.ignore):
        lines.append(format_coords(poly.vertices) + (f",{IGNORE_TOKEN}" if ig else ""))
    return "\n".join(lines) + "\n"


def read_annotation(path, image_size=None) -> AnnotationFile:
    path = Path(path)
    return parse_polyline_annotation(path.read_text(), image_id=None, image_size=image_size)


def format_detections(dets) -> str:
    lines = []
    for d in dets:
        score, poly = (d if isinstance(d, tuple) else (d.score, d.polygon))
        lines.append(f"{score:.6f};{format_coords(poly.vertices)}")
    return "".join(line + "\n" for line in lines)


def parse_detections(text: str) -> list[tuple[float, Polygon]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ";" not in line:
            raise AnnotationError("missing ';' between score and coordinates", lineno)
        head, tail = line.split(";", 1)
        try:
            score = float(head)
        except ValueError:
            raise AnnotationError(f"non-numeric score {head!r}", lineno) from None
        tokens = [t.strip() for t in tail.split(",")]
        if len(tokens) % 2:
            raise AnnotationError("odd coordinate count", lineno)
        try:
            pts = np.array([float(t) for t in tokens]).reshape(-1, 2)
        except ValueError:
            raise AnnotationError("non-numeric coordinate", lineno) from None
        try:
            out.append((score, Polygon(pts)))
        except GeometryError as exc:
            raise AnnotationError(f"invalid polygon ({exc})", lineno) from None
    return out
