"""Morphological descriptors (S2, lineal path, two-point cluster) and
pattern histograms of binary images.

All statistics use non-periodic boundaries: a pair, segment or window is
counted only when it lies fully inside the image.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from porogen.grid import BinaryImage

KINDS = ("S2", "L", "C2")
PHASES = ("pore", "solid")
DIRECTIONS = ("x", "y", "xy", "se")

# unit step (drow, dcol) per direction
_STEPS = {"x": (0, 1), "y": (1, 0), "se": (1, 1)}


@dataclass(frozen=True, eq=False)
class CurveStatistic:
    kind: str
    phase: str
    direction: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown descriptor kind {self.kind!r}")
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        v = np.array(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def r_max(self) -> int:
        return len(self.values) - 1

    def same_axes(self, other: CurveStatistic) -> bool:
        return (self.kind, self.phase, self.direction, len(self.values)) == (
            other.kind, other.phase, other.direction, len(other.values))

    def __eq__(self, other):
        if not isinstance(other, CurveStatistic):
            return NotImplemented
        return self.same_axes(other) and bool(np.array_equal(self.values, other.values))


def _phase_array(img: BinaryImage, phase: str) -> np.ndarray:
    if phase == "pore":
        return img.data == 1
    if phase == "solid":
        return img.data == 0
    raise ValueError(f"unknown phase {phase!r}")


def _check_r_max(shape: tuple[int, int], direction: str, r_max: int) -> None:
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    h, w = shape
    extent = {"x": w, "y": h}.get(direction, min(h, w))
    if not 0 <= r_max < extent:
        raise ValueError(f"r_max={r_max} out of range for extent {extent} along {direction!r}")


def _pair_views(a: np.ndarray, r: int, step: tuple[int, int]):
    """Views of the first and second member of every in-image pair at lag r."""
    dr, dc = step[0] * r, step[1] * r
    h, w = a.shape
    return a[: h - dr, : w - dc], a[dr:, dc:]


def _directional(fn, a: np.ndarray, direction: str, r_max: int) -> np.ndarray:
    if direction == "xy":
        return 0.5 * (fn(a, _STEPS["x"], r_max) + fn(a, _STEPS["y"], r_max))
    return fn(a, _STEPS[direction], r_max)


def _s2_counts(a: np.ndarray, step, r_max: int) -> np.ndarray:
    out = np.empty(r_max + 1)
    for r in range(r_max + 1):
        p, q = _pair_views(a, r, step)
        out[r] = np.count_nonzero(p & q) / p.size
    return out


def _lineal_counts(a: np.ndarray, step, r_max: int) -> np.ndarray:
    out = np.empty(r_max + 1)
    run = a
    out[0] = np.count_nonzero(a) / a.size
    for r in range(1, r_max + 1):
        # run[i] is True when the r+1 pixels starting at i are all in phase
        _, q = _pair_views(a, r, step)
        h, w = q.shape
        run = run[:h, :w] & q
        out[r] = np.count_nonzero(run) / run.size
    return out


def two_point_correlation(img: BinaryImage, phase: str = "pore", direction: str = "xy",
                          r_max: int | None = None) -> CurveStatistic:
    """Probability that both ends of a lag-r pair lie in ``phase``."""
    if r_max is None:
        r_max = min(img.shape) // 2
    _check_r_max(img.shape, direction, r_max)
    a = _phase_array(img, phase)
    return CurveStatistic("S2", phase, direction, _directional(_s2_counts, a, direction, r_max))


def lineal_path(img: BinaryImage, phase: str = "pore", direction: str = "xy",
                r_max: int | None = None) -> CurveStatistic:
    """Probability that r+1 consecutive collinear pixels all lie in ``phase``."""
    if r_max is None:
        r_max = min(img.shape) // 2
    _check_r_max(img.shape, direction, r_max)
    a = _phase_array(img, phase)
    return CurveStatistic("L", phase, direction, _directional(_lineal_counts, a, direction, r_max))


def label_clusters(img: BinaryImage, phase: str = "pore", connectivity: int = 4) -> np.ndarray:
    """Connected components of ``phase``; labels 1..n, background 0."""
    if connectivity == 4:
        structure = ndimage.generate_binary_structure(2, 1)
    elif connectivity == 8:
        structure = np.ones((3, 3), dtype=bool)
    else:
        raise ValueError("connectivity must be 4 or 8")
    labels, _ = ndimage.label(_phase_array(img, phase), structure=structure)
    return labels


def two_point_cluster(img: BinaryImage, phase: str = "pore", direction: str = "xy",
                      r_max: int | None = None, connectivity: int = 4) -> CurveStatistic:
    """Probability that both ends of a lag-r pair lie in the same cluster of ``phase``."""
    if r_max is None:
        r_max = min(img.shape) // 2
    _check_r_max(img.shape, direction, r_max)
    labels = label_clusters(img, phase, connectivity)

    def counts(lab, step, r_max):
        out = np.empty(r_max + 1)
        for r in range(r_max + 1):
            p, q = _pair_views(lab, r, step)
            out[r] = np.count_nonzero((p == q) & (p > 0)) / p.size
        return out

    return CurveStatistic("C2", phase, direction, _directional(counts, labels, direction, r_max))


def descriptor_suite(img: BinaryImage, phase: str = "pore", direction: str = "xy",
                     r_max: int | None = None) -> dict[str, CurveStatistic]:
    return {
        "S2": two_point_correlation(img, phase, direction, r_max),
        "L": lineal_path(img, phase, direction, r_max),
        "C2": two_point_cluster(img, phase, direction, r_max),
    }


def average_curves(curves) -> CurveStatistic:
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to average")
    first = curves[0]
    for c in curves[1:]:
        if not first.same_axes(c):
            raise ValueError("cannot average curves of different kind/phase/direction/length")
    total = np.zeros_like(first.values)
    for c in curves:
        total += c.values
    return CurveStatistic(first.kind, first.phase, first.direction, total / len(curves))


def curves_to_csv(curves) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "phase", "direction", "r", "value"])
    for c in curves:
        for r, v in enumerate(c.values):
            writer.writerow([c.kind, c.phase, c.direction, r, repr(float(v))])
    return buf.getvalue()


def curves_from_csv(text: str) -> list[CurveStatistic]:
    groups: dict[tuple[str, str, str], list[tuple[int, float]]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        key = (row["kind"], row["phase"], row["direction"])
        groups.setdefault(key, []).append((int(row["r"]), float(row["value"])))
    out = []
    for (kind, phase, direction), pts in groups.items():
        pts.sort()
        if [r for r, _ in pts] != list(range(len(pts))):
            raise ValueError(f"curve {kind}/{phase}/{direction} has missing lags")
        out.append(CurveStatistic(kind, phase, direction, [v for _, v in pts]))
    return out


# ---------------------------------------------------------------------------
# pattern histograms


@dataclass(frozen=True, eq=False)
class PatternDistribution:
    """Normalized histogram of N x N window codes (sparse: observed codes only).

    Codes flatten the window row-major with the first pixel as the most
    significant bit.
    """

    template_size: int
    codes: np.ndarray = field(repr=False)
    frequencies: np.ndarray = field(repr=False)

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        freqs = np.asarray(self.frequencies, dtype=np.float64)
        if codes.shape != freqs.shape:
            raise ValueError("codes and frequencies differ in length")
        if np.any(freqs < 0):
            raise ValueError("frequencies must be nonnegative")
        order = np.argsort(codes, kind="stable")
        codes, freqs = codes[order], freqs[order]
        if np.any(np.diff(codes) == 0):
            raise ValueError("duplicate pattern codes")
        for a in (codes, freqs):
            a.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "frequencies", freqs)

    @property
    def n_codes(self) -> int:
        return 1 << (self.template_size * self.template_size)

    @property
    def probabilities(self) -> dict[int, float]:
        return {int(c): float(f) for c, f in zip(self.codes, self.frequencies)}

    @classmethod
    def from_dense(cls, template_size: int, dense) -> PatternDistribution:
        dense = np.asarray(dense, dtype=np.float64)
        nz = np.flatnonzero(dense)
        return cls(template_size, nz, dense[nz])

    def dense(self) -> np.ndarray:
        out = np.zeros(self.n_codes)
        out[self.codes] = self.frequencies
        return out


def pattern_codes(a: np.ndarray, n: int) -> np.ndarray:
    """Integer code of every fully-inside n x n window of a 0/1 array."""
    h, w = a.shape
    if n < 1 or n > min(h, w):
        raise ValueError(f"template size {n} does not fit a {h}x{w} image")
    if n * n > 62:
        raise ValueError(f"template size {n} exceeds the 62-bit code space")
    a = a.astype(np.int64)
    codes = np.zeros((h - n + 1, w - n + 1), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            codes = (codes << 1) | a[i:h - n + 1 + i, j:w - n + 1 + j]
    return codes


def pattern_distribution(img: BinaryImage, n: int) -> PatternDistribution:
    codes = pattern_codes(img.data, n)
    uniq, counts = np.unique(codes, return_counts=True)
    return PatternDistribution(n, uniq, counts / codes.size)


def pattern_distance(a: PatternDistribution, b: PatternDistribution) -> float:
    """Squared Euclidean distance between two pattern histograms."""
    if a.template_size != b.template_size:
        raise ValueError(
            f"template sizes differ: {a.template_size} vs {b.template_size}")
    codes = np.union1d(a.codes, b.codes)
    va = np.zeros(len(codes))
    vb = np.zeros(len(codes))
    va[np.searchsorted(codes, a.codes)] = a.frequencies
    vb[np.searchsorted(codes, b.codes)] = b.frequencies
    return float(np.sum((va - vb) ** 2))

