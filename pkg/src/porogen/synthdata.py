"""Synthetic two-phase media, hard-data masks, and paired datasets on disk.

Porosity is controlled exactly by ranking a continuous field and marking the
top ``round(phi * H * W)`` pixels as pore.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from porogen.grid import (
    BinaryImage,
    ConditionalInput,
    Mask,
    load_image,
    load_mask,
    make_conditional_input,
    save_image,
    save_mask,
)

MEDIUM_KINDS = ("blob", "disks", "anisotropic-blob")
MASK_KINDS = ("corner-square", "k-random-squares", "horizontal-strip", "vertical-strip")
TRAIN_FRACTION = 0.7
MAX_PLACEMENT_TRIES = 10_000


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int or a sequence of ints."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class MediumSpec:
    kind: str = "blob"
    phi: float = 0.3
    corr_length: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MEDIUM_KINDS:
            raise ValueError(f"unknown medium kind {self.kind!r}; expected one of {MEDIUM_KINDS}")
        if not 0.0 < self.phi < 1.0:
            raise ValueError(f"porosity must lie in (0, 1), got {self.phi}")
        if self.corr_length < 1.0:
            raise ValueError(f"correlation length must be >= 1, got {self.corr_length}")


@dataclass(frozen=True)
class MaskSpec:
    """``size`` is the square side, strip height or strip width, by kind."""

    kind: str = "corner-square"
    size: int = 26
    count: int = 1
    random_placement: bool = False

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}; expected one of {MASK_KINDS}")
        if self.size < 1 or self.count < 1:
            raise ValueError("mask size and count must be positive")


def threshold_by_rank(values: np.ndarray, phi: float) -> np.ndarray:
    """Mark the ``round(phi * n)`` largest values as pore (stable tie-break)."""
    flat = values.ravel()
    k = int(math.floor(phi * flat.size + 0.5))
    if k <= 0 or k >= flat.size:
        raise ValueError(f"porosity {phi} rounds to a single-phase {values.shape} image")
    order = np.argsort(-flat, kind="stable")
    out = np.zeros(flat.size, dtype=np.uint8)
    out[order[:k]] = 1
    return out.reshape(values.shape)


def _diagonal_kernel(length: float) -> np.ndarray:
    """Gaussian elongated 3:1 along the (+1, +1) (row, col) diagonal."""
    s_major, s_minor = 3.0 * length, length
    r = int(math.ceil(3 * s_major))
    di, dj = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    u = (di + dj) / math.sqrt(2.0)
    v = (di - dj) / math.sqrt(2.0)
    k = np.exp(-0.5 * (u / s_major) ** 2 - 0.5 * (v / s_minor) ** 2)
    return k / k.sum()


def generate_medium(spec: MediumSpec, size: int | tuple[int, int]) -> BinaryImage:
    shape = (size, size) if isinstance(size, int) else tuple(size)
    if min(shape) < 2:
        raise ValueError(f"medium too small: {shape}")
    rng = make_rng(spec.seed)
    if spec.kind == "blob":
        noise = rng.standard_normal(shape)
        field_ = ndimage.gaussian_filter(noise, spec.corr_length, mode="wrap")
    elif spec.kind == "anisotropic-blob":
        noise = rng.standard_normal(shape)
        field_ = ndimage.convolve(noise, _diagonal_kernel(spec.corr_length), mode="wrap")
    else:
        # boolean model: Poisson centers, field = -distance to nearest center
        radius = spec.corr_length
        density = -math.log(1.0 - spec.phi) / (math.pi * radius ** 2)
        n_centers = max(1, rng.poisson(density * shape[0] * shape[1]))
        centers = np.ones(shape, dtype=bool)
        rows = rng.integers(0, shape[0], n_centers)
        cols = rng.integers(0, shape[1], n_centers)
        centers[rows, cols] = False
        field_ = -ndimage.distance_transform_edt(centers)
    return BinaryImage(threshold_by_rank(field_, spec.phi))


def generate_mask(spec: MaskSpec, size: int | tuple[int, int], seed: int = 0) -> Mask:
    h, w = (size, size) if isinstance(size, int) else tuple(size)
    s = spec.size
    m = np.zeros((h, w), dtype=bool)
    if spec.kind == "corner-square":
        if s > min(h, w):
            raise ValueError(f"{s}x{s} square does not fit a {h}x{w} image")
        m[:s, :s] = True
    elif spec.kind == "horizontal-strip":
        if s > h:
            raise ValueError(f"strip of height {s} does not fit a {h}x{w} image")
        m[:s, :] = True
    elif spec.kind == "vertical-strip":
        if s > w:
            raise ValueError(f"strip of width {s} does not fit a {h}x{w} image")
        m[:, :s] = True
    else:
        if s > min(h, w):
            raise ValueError(f"{s}x{s} square does not fit a {h}x{w} image")
        rng = make_rng(seed)
        placed = 0
        for _ in range(MAX_PLACEMENT_TRIES):
            i = int(rng.integers(0, h - s + 1))
            j = int(rng.integers(0, w - s + 1))
            if m[i:i + s, j:j + s].any():
                continue
            m[i:i + s, j:j + s] = True
            placed += 1
            if placed == spec.count:
                break
        else:
            raise ValueError(
                f"could not place {spec.count} disjoint {s}x{s} squares in {h}x{w} "
                f"after {MAX_PLACEMENT_TRIES} tries")
    return Mask(m)


@dataclass
class DatasetManifest:
    count: int
    size: int
    train: list[int]
    test: list[int]
    medium: MediumSpec
    mask: MaskSpec
    seed: int

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> DatasetManifest:
        d = json.loads(text)
        d["medium"] = MediumSpec(**d["medium"])
        d["mask"] = MaskSpec(**d["mask"])
        return cls(**d)


def split_indices(n: int, seed: int) -> tuple[list[int], list[int]]:
    n_train = int(math.floor(TRAIN_FRACTION * n + 0.5))
    perm = make_rng([seed, 0x5B1]).permutation(n)
    return sorted(int(i) for i in perm[:n_train]), sorted(int(i) for i in perm[n_train:])


def pair_paths(root, index: int) -> dict[str, Path]:
    base = Path(root) / "pairs"
    return {k: base / f"{index:04d}_{k}.pgm" for k in ("input", "mask", "target")}


def make_sample(index: int, medium: MediumSpec, mask_spec: MaskSpec, size: int,
                seed: int, fixed_mask: Mask | None = None):
    target = generate_medium(
        MediumSpec(medium.kind, medium.phi, medium.corr_length, derive_seed(seed, index)), size)
    mask = fixed_mask or generate_mask(mask_spec, size, derive_seed(seed ^ 0xA5A5, index))
    return make_conditional_input(target, mask), target


def build_dataset(n: int, medium: MediumSpec, mask: MaskSpec, seed: int,
                  out_dir, size: int = 64) -> DatasetManifest:
    """Generate ``n`` (input, target) pairs under ``out_dir`` and a seeded 70/30 split.

    ``medium.seed`` is ignored; per-sample seeds derive from ``seed``.
    """
    if n < 10:
        raise ValueError("a dataset needs at least 10 samples")
    out_dir = Path(out_dir)
    (out_dir / "pairs").mkdir(parents=True, exist_ok=True)
    fixed = None if mask.random_placement else generate_mask(mask, size, seed)
    for i in range(n):
        cond, target = make_sample(i, medium, mask, size, seed, fixed)
        paths = pair_paths(out_dir, i)
        save_image(BinaryImage(cond.values.data.astype(np.uint8)), paths["input"])
        save_mask(cond.mask, paths["mask"])
        save_image(target, paths["target"])
    train, test = split_indices(n, seed)
    manifest = DatasetManifest(n, size, train, test, medium, mask, seed)
    (out_dir / "manifest.json").write_text(manifest.to_json())
    return manifest


@dataclass
class Dataset:
    manifest: DatasetManifest
    conds: list[ConditionalInput] = field(repr=False)
    targets: list[BinaryImage] = field(repr=False)

    def subset(self, which: str):
        idx = self.manifest.train if which == "train" else self.manifest.test
        return [self.conds[i] for i in idx], [self.targets[i] for i in idx]


def load_pair(root, index: int) -> tuple[ConditionalInput, BinaryImage]:
    paths = pair_paths(root, index)
    values = load_image(paths["input"])
    mask = load_mask(paths["mask"])
    target = load_image(paths["target"])
    cond = ConditionalInput(values.as_soft(), mask)
    return cond, target


def load_dataset(root: str | os.PathLike) -> Dataset:
    manifest = DatasetManifest.from_json((Path(root) / "manifest.json").read_text())
    conds, targets = [], []
    for i in range(manifest.count):
        c, t = load_pair(root, i)
        conds.append(c)
        targets.append(t)
    return Dataset(manifest, conds, targets)
