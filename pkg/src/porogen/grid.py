"""Image and mask types, PGM I/O, binarization and porosity.

Phase convention: pore = 1 (written as 255), solid = 0.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

PORE = 1
SOLID = 0


class PGMError(ValueError):
    """Malformed or unsupported PGM data."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Two-phase microstructure, ``data[row, col] in {0, 1}``."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2 or a.size == 0:
            raise ValueError(f"expected a nonempty 2D array, got shape {a.shape}")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("binary image values must be 0 or 1")
        object.__setattr__(self, "data", _frozen(a.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))

    def as_soft(self) -> SoftImage:
        return SoftImage(self.data.astype(np.float64))


@dataclass(frozen=True, eq=False)
class SoftImage:
    """Per-pixel pore probability in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 2 or a.size == 0:
            raise ValueError(f"expected a nonempty 2D array, got shape {a.shape}")
        if not np.all((a >= 0.0) & (a <= 1.0)):
            raise ValueError("soft image values must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, SoftImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))


@dataclass(frozen=True, eq=False)
class Mask:
    """Boolean map of informed (hard-data) pixels."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2 or a.size == 0:
            raise ValueError(f"expected a nonempty 2D array, got shape {a.shape}")
        object.__setattr__(self, "data", _frozen(a.astype(bool)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def informed_count(self) -> int:
        return int(self.data.sum())

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))


@dataclass(frozen=True)
class ConditionalInput:
    """Two-channel conditioning: phase values on informed pixels, and the mask.

    Unknown pixels carry 0 in ``values``; the mask is what tells them apart
    from informed solid pixels.
    """

    values: SoftImage
    mask: Mask

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise ValueError(
                f"values {self.values.shape} and mask {self.mask.shape} differ in shape"
            )
        if np.any(self.values.data[~self.mask.data] != 0.0):
            raise ValueError("values must be 0 at unknown pixels")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def stacked(self) -> np.ndarray:
        """(2, H, W) float array: values channel then mask channel."""
        return np.stack([self.values.data, self.mask.data.astype(np.float64)])


# ---------------------------------------------------------------------------
# PGM


def _is_space(b: int) -> bool:
    return b in b" \t\r\n\x0b\x0c"


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int, int]:
    """Return (token, token_start, end) skipping whitespace and ``#`` comments."""
    n = len(buf)
    while pos < n:
        b = buf[pos]
        if _is_space(b):
            pos += 1
        elif b == ord("#"):
            while pos < n and buf[pos] not in b"\r\n":
                pos += 1
        else:
            break
    if pos >= n:
        raise PGMError("unexpected end of header", pos)
    start = pos
    while pos < n and not _is_space(buf[pos]) and buf[pos] != ord("#"):
        pos += 1
    return buf[start:pos], start, pos


def _header_int(buf: bytes, pos: int, name: str) -> tuple[int, int]:
    tok, start, pos = _read_token(buf, pos)
    if not tok.isdigit():
        raise PGMError(f"invalid {name} {tok!r}", start)
    return int(tok), pos


def parse_pgm(buf: bytes) -> np.ndarray:
    """Decode P2/P5 PGM bytes into a (H, W) uint8 array."""
    if len(buf) < 2:
        raise PGMError("file too short for a PGM magic number", 0)
    magic = buf[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMError(f"unsupported magic {magic!r}", 0)
    pos = 2
    if pos < len(buf) and not (_is_space(buf[pos]) or buf[pos] == ord("#")):
        raise PGMError("missing whitespace after magic", pos)
    width, pos = _header_int(buf, pos, "width")
    height, pos = _header_int(buf, pos, "height")
    maxval, maxval_end = _header_int(buf, pos, "maxval")
    if width <= 0 or height <= 0:
        raise PGMError(f"nonpositive dimensions {width}x{height}", 2)
    if maxval != 255:
        raise PGMError(f"unsupported maxval {maxval}, only 255 is accepted", maxval_end - 1)
    pos = maxval_end
    count = width * height
    if magic == b"P5":
        if pos >= len(buf) or not _is_space(buf[pos]):
            raise PGMError("missing whitespace before raster", pos)
        pos += 1
        raster = buf[pos:pos + count]
        if len(raster) < count:
            raise PGMError(
                f"truncated raster: expected {count} bytes, got {len(raster)}", pos + len(raster)
            )
        return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()
    values = np.empty(count, dtype=np.uint8)
    for i in range(count):
        try:
            v, pos = _header_int(buf, pos, "sample")
        except PGMError as exc:
            raise PGMError(f"truncated raster after {i} of {count} samples", exc.offset) from None
        if v > maxval:
            raise PGMError(f"sample {v} exceeds maxval", pos - 1)
        values[i] = v
    return values.reshape(height, width)


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write_bytes(path, payload: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(payload)


def load_image(path: str | os.PathLike) -> BinaryImage:
    """Read a PGM; samples >= 128 are pore."""
    pixels = parse_pgm(_read_bytes(path))
    return BinaryImage((pixels >= 128).astype(np.uint8))


def save_image(img: BinaryImage, path: str | os.PathLike) -> None:
    _write_bytes(path, encode_pgm(img.data * np.uint8(255)))


def load_mask(path: str | os.PathLike) -> Mask:
    """Mask PGMs use 255 for informed pixels (anything >= 128 counts)."""
    return Mask(parse_pgm(_read_bytes(path)) >= 128)


def save_mask(mask: Mask, path: str | os.PathLike) -> None:
    _write_bytes(path, encode_pgm(mask.data.astype(np.uint8) * np.uint8(255)))


# ---------------------------------------------------------------------------
# basic operations


def porosity(img: BinaryImage) -> float:
    return float(img.data.sum()) / img.data.size


def binarize(img: SoftImage, threshold: float = 0.5) -> BinaryImage:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return BinaryImage((img.data >= threshold).astype(np.uint8))


def make_conditional_input(target: BinaryImage, mask: Mask) -> ConditionalInput:
    if target.shape != mask.shape:
        raise ValueError(f"target {target.shape} and mask {mask.shape} differ in shape")
    values = np.where(mask.data, target.data, 0).astype(np.float64)
    return ConditionalInput(SoftImage(values), mask)


def hard_data_fidelity(img: BinaryImage, cond: ConditionalInput) -> float:
    """Fraction of informed pixels whose phase in ``img`` matches ``cond``."""
    m = cond.mask.data
    if not m.any():
        raise ValueError("conditional input has no informed pixels")
    return float(np.mean(img.data[m] == cond.values.data[m]))


def enforce_hard_data(img: BinaryImage, cond: ConditionalInput) -> BinaryImage:
    out = np.where(cond.mask.data, cond.values.data.astype(np.uint8), img.data)
    return BinaryImage(out)
