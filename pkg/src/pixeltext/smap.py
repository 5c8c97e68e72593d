"""SMAP: a small binary container for stacks of score maps.

Layout (little-endian)::

    offset  size  field
    0       4     magic b"SMAP"
    4       1     version (u8, = 1)
    5       4     height (u32)
    9       4     width (u32)
    13      1     channels (u8, 1..7)
    14      ...   channels * height * width float32, channel-major, row-major

Channels are always a prefix of ``ts, tf, tr, up, down, left, right``; readers
zero-fill the missing tail.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .decoder import CHANNELS, PredictionMaps

MAGIC = b"SMAP"
VERSION = 1
HEADER = struct.Struct("<4sBIIB")
HEADER_SIZE = HEADER.size


class MapFormatError(ValueError):
    pass


class BadMagicError(MapFormatError):
    pass


class UnsupportedVersionError(MapFormatError):
    pass


class TruncatedPayloadError(MapFormatError):
    pass


class TrailingDataError(MapFormatError):
    pass


class BadHeaderError(MapFormatError):
    pass


class NonFiniteValueError(MapFormatError):
    pass


class ValueRangeError(MapFormatError):
    pass


def encode(stack: np.ndarray) -> bytes:
    """Serialize a ``(C, H, W)`` stack with values in [0, 1]."""
    arr = np.asarray(stack)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise BadHeaderError(f"expected (C, H, W), got shape {arr.shape}")
    c, h, w = arr.shape
    if not 1 <= c <= len(CHANNELS):
        raise BadHeaderError(f"channel count must be 1..{len(CHANNELS)}, got {c}")
    if h < 1 or w < 1:
        raise BadHeaderError(f"empty map {h}x{w}")
    data = arr.astype("<f4")
    _check_values(data)
    return HEADER.pack(MAGIC, VERSION, h, w, c) + data.tobytes(order="C")


def _check_values(data: np.ndarray) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteValueError("non-finite value in payload")
    if data.size and (data.min() < 0 or data.max() > 1):
        raise ValueRangeError("payload value outside [0, 1]")


def decode_stack(buf: bytes) -> np.ndarray:
    """Parse SMAP bytes into a ``(C, H, W)`` float32 array (only the stored channels)."""
    if len(buf) < HEADER_SIZE:
        if not MAGIC.startswith(bytes(buf[:4])):
            raise BadMagicError(f"bad magic {bytes(buf[:4])!r}")
        raise TruncatedPayloadError("truncated header")
    magic, version, h, w, c = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    if not 1 <= c <= len(CHANNELS) or h < 1 or w < 1:
        raise BadHeaderError(f"bad dimensions c={c} h={h} w={w}")
    need = 4 * c * h * w
    have = len(buf) - HEADER_SIZE
    if have < need:
        raise TruncatedPayloadError(f"truncated payload: {have} of {need} bytes")
    if have > need:
        raise TrailingDataError(f"{have - need} trailing bytes after payload")
    data = np.frombuffer(buf, dtype="<f4", count=c * h * w, offset=HEADER_SIZE).reshape(c, h, w)
    _check_values(data)
    return data.astype(np.float32)


def write_maps(maps: PredictionMaps) -> bytes:
    return encode(maps.stack())


def read_maps(buf: bytes) -> PredictionMaps:
    data = decode_stack(buf)
    c, h, w = data.shape
    full = np.zeros((len(CHANNELS), h, w), dtype=np.float32)
    full[:c] = data
    return PredictionMaps.from_stack(full)


def atomic_write(path, payload: bytes | str) -> None:
    """Write via a temp file in the target directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = payload.encode() if isinstance(payload, str) else payload
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def save_maps(path, maps: PredictionMaps) -> None:
    atomic_write(path, write_maps(maps))


def load_maps(path) -> PredictionMaps:
    return read_maps(Path(path).read_bytes())


def to_pgm(channel: np.ndarray) -> bytes:
    """Binary PGM (P5) preview: values scaled by 255 and rounded."""
    arr = np.asarray(channel, dtype=np.float64)
    h, w = arr.shape
    pix = np.clip(np.rint(arr * 255), 0, 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode() + pix.tobytes()
