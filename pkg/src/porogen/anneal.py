"""Simulated-annealing reconstruction with hard data frozen.

Energy is a weighted sum of the pattern-histogram distance, the squared
porosity error and (optionally) the squared error of the X/Y-averaged pore
S2 curve. Moves swap an unknown pore pixel with an unknown solid pixel, so
porosity never changes after initialization. Energy changes are computed
incrementally inside a numba kernel and checked against a full recomputation
at the end of every sweep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from porogen.grid import BinaryImage, ConditionalInput
from porogen.morph import (
    CurveStatistic,
    PatternDistribution,
    pattern_distance,
    pattern_distribution,
    two_point_correlation,
)
from porogen.synthdata import make_rng

DRIFT_TOL = 1e-9


@dataclass(frozen=True)
class AnnealConfig:
    # None: calibrate so that an average uphill move is accepted with probability 1/2
    initial_temperature: float | None = None
    cooling: float = 0.95
    sweeps: int = 100
    w_pattern: float = 1.0
    w_porosity: float = 1.0
    w_s2: float = 0.0
    template: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling factor must lie in (0, 1)")
        if self.initial_temperature is not None and self.initial_temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.sweeps < 0:
            raise ValueError("sweeps must be nonnegative")
        if self.template < 1 or self.template ** 2 > 20:
            raise ValueError("template size N must satisfy 1 <= N*N <= 20")


@dataclass(frozen=True)
class TargetStats:
    pattern: PatternDistribution
    phi: float
    s2: CurveStatistic | None = None

    @classmethod
    def from_image(cls, img: BinaryImage, template: int = 3, s2_r_max: int | None = None):
        phi = float(img.data.mean())
        s2 = None if s2_r_max is None else two_point_correlation(img, "pore", "xy", s2_r_max)
        return cls(pattern_distribution(img, template), phi, s2)


@dataclass
class AnnealResult:
    image: BinaryImage
    # rows of (sweep, temperature, pattern energy, total energy)
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)
    initial_energy: float = 0.0
    final_energy: float = 0.0
    max_drift: float = 0.0
    accepted: int = 0


def energy_terms(img: BinaryImage, target: TargetStats, cfg: AnnealConfig) -> tuple[float, float]:
    """(pattern energy, total energy) from scratch, via :mod:`porogen.morph`."""
    pat = pattern_distance(pattern_distribution(img, cfg.template), target.pattern)
    total = cfg.w_pattern * pat + cfg.w_porosity * (float(img.data.mean()) - target.phi) ** 2
    if target.s2 is not None and cfg.w_s2 > 0:
        s2 = two_point_correlation(img, "pore", "xy", target.s2.r_max).values
        total += cfg.w_s2 * float(np.sum((s2 - target.s2.values) ** 2))
    return pat, total


@numba.njit(cache=True)
def _window_code(img, i0, j0, n):
    c = 0
    for a in range(n):
        for b in range(n):
            c = (c << 1) | img[i0 + a, j0 + b]
    return c


@numba.njit(cache=True)
def _collect_windows(pi, pj, qi, qj, h, w, n, out):
    """Top-left corners of windows covering p or q, each once."""
    k = 0
    for i0 in range(max(0, pi - n + 1), min(pi, h - n) + 1):
        for j0 in range(max(0, pj - n + 1), min(pj, w - n) + 1):
            out[k, 0] = i0
            out[k, 1] = j0
            k += 1
    for i0 in range(max(0, qi - n + 1), min(qi, h - n) + 1):
        for j0 in range(max(0, qj - n + 1), min(qj, w - n) + 1):
            if i0 <= pi < i0 + n and j0 <= pj < j0 + n:
                continue
            out[k, 0] = i0
            out[k, 1] = j0
            k += 1
    return k


@numba.njit(cache=True)
def _pore_partners(img, i, j, r, h, w, xi, xj, along_x):
    """Pore pixels at lag r from (i, j) along one axis, ignoring (xi, xj)."""
    s = 0
    if along_x:
        if j + r < w and img[i, j + r] == 1 and not (i == xi and j + r == xj):
            s += 1
        if j - r >= 0 and img[i, j - r] == 1 and not (i == xi and j - r == xj):
            s += 1
    else:
        if i + r < h and img[i + r, j] == 1 and not (i + r == xi and j == xj):
            s += 1
        if i - r >= 0 and img[i - r, j] == 1 and not (i - r == xi and j == xj):
            s += 1
    return s


@numba.njit(cache=True)
def _sweep(img, pores, solids, counts, target_pat, n_windows, n, w_pat,
           cx, cy, target_s2, w_s2, r_max, temperature, pick_p, pick_q, uniforms,
           probe, probe_out):
    """Run one batch of swap proposals in place; returns (energy change, accepted)."""
    h, w = img.shape
    windows = np.empty((2 * n * n, 2), dtype=np.int64)
    old_codes = np.empty(2 * n * n, dtype=np.int64)
    new_codes = np.empty(2 * n * n, dtype=np.int64)
    dcx = np.zeros(r_max + 1, dtype=np.int64)
    dcy = np.zeros(r_max + 1, dtype=np.int64)
    inv_nw = 1.0 / n_windows
    total_change = 0.0
    accepted = 0
    for m in range(pick_p.shape[0]):
        a = pick_p[m]
        b = pick_q[m]
        p = pores[a]
        q = solids[b]
        pi, pj = p // w, p % w
        qi, qj = q // w, q % w

        nw = _collect_windows(pi, pj, qi, qj, h, w, n, windows)
        for k in range(nw):
            old_codes[k] = _window_code(img, windows[k, 0], windows[k, 1], n)

        if w_s2 > 0.0:
            for r in range(1, r_max + 1):
                dcx[r] = -_pore_partners(img, pi, pj, r, h, w, -1, -1, True)
                dcy[r] = -_pore_partners(img, pi, pj, r, h, w, -1, -1, False)

        img[pi, pj] = 0
        img[qi, qj] = 1

        if w_s2 > 0.0:
            for r in range(1, r_max + 1):
                dcx[r] += _pore_partners(img, qi, qj, r, h, w, pi, pj, True)
                dcy[r] += _pore_partners(img, qi, qj, r, h, w, pi, pj, False)

        delta = 0.0
        for k in range(nw):
            new_codes[k] = _window_code(img, windows[k, 0], windows[k, 1], n)
        for k in range(nw):
            c = old_codes[k]
            before = (counts[c] * inv_nw - target_pat[c]) ** 2
            counts[c] -= 1
            delta += w_pat * ((counts[c] * inv_nw - target_pat[c]) ** 2 - before)
            c = new_codes[k]
            before = (counts[c] * inv_nw - target_pat[c]) ** 2
            counts[c] += 1
            delta += w_pat * ((counts[c] * inv_nw - target_pat[c]) ** 2 - before)

        if w_s2 > 0.0:
            for r in range(1, r_max + 1):
                nx = h * (w - r)
                ny = (h - r) * w
                before = 0.5 * (cx[r] / nx + cy[r] / ny) - target_s2[r]
                after = 0.5 * ((cx[r] + dcx[r]) / nx + (cy[r] + dcy[r]) / ny) - target_s2[r]
                delta += w_s2 * (after * after - before * before)

        if probe:
            probe_out[m] = delta
            accept = False
        else:
            accept = delta <= 0.0 or uniforms[m] < math.exp(-delta / temperature)

        if accept:
            pores[a] = q
            solids[b] = p
            total_change += delta
            accepted += 1
            if w_s2 > 0.0:
                for r in range(1, r_max + 1):
                    cx[r] += dcx[r]
                    cy[r] += dcy[r]
        else:
            img[pi, pj] = 1
            img[qi, qj] = 0
            for k in range(nw):
                counts[new_codes[k]] -= 1
                counts[old_codes[k]] += 1
    return total_change, accepted


def _initialize(cond: ConditionalInput, phi: float, rng) -> np.ndarray:
    mask = cond.mask.data
    img = np.where(mask, cond.values.data, 0).astype(np.int64)
    unknown = np.flatnonzero(~mask.ravel())
    if unknown.size == 0:
        raise ValueError("conditional input has no unknown pixels")
    want = int(math.floor(phi * img.size + 0.5)) - int(img.sum())
    if want < 0 or want > unknown.size:
        raise ValueError(
            f"target porosity {phi} is infeasible: hard data already fixes {int(img.sum())} pores")
    chosen = rng.choice(unknown, size=want, replace=False)
    img.ravel()[chosen] = 1
    return img


def _pair_counts(img: np.ndarray, r_max: int) -> tuple[np.ndarray, np.ndarray]:
    cx = np.zeros(r_max + 1, dtype=np.int64)
    cy = np.zeros(r_max + 1, dtype=np.int64)
    for r in range(r_max + 1):
        cx[r] = np.count_nonzero(img[:, :img.shape[1] - r] & img[:, r:])
        cy[r] = np.count_nonzero(img[:img.shape[0] - r, :] & img[r:, :])
    return cx, cy


def anneal_reconstruct(cond: ConditionalInput, target: TargetStats,
                       cfg: AnnealConfig = AnnealConfig()) -> AnnealResult:
    """Minimize the statistical energy over unknown pixels of ``cond``."""
    if target.pattern.template_size != cfg.template:
        raise ValueError(
            f"target template {target.pattern.template_size} != configured {cfg.template}")
    if cond.mask.data.all():
        img = BinaryImage(cond.values.data.astype(np.uint8))
        _, e = energy_terms(img, target, cfg)
        return AnnealResult(img, [], e, e, 0.0, 0)

    rng = make_rng(cfg.seed)
    img = _initialize(cond, target.phi, rng)
    mask = cond.mask.data.ravel()
    flat = img.ravel()
    pores = np.flatnonzero((flat == 1) & ~mask).astype(np.int64)
    solids = np.flatnonzero((flat == 0) & ~mask).astype(np.int64)
    if pores.size == 0 or solids.size == 0:
        raise ValueError("no swap moves possible: unknown pixels are single-phase")

    n = cfg.template
    h, w = img.shape
    n_windows = (h - n + 1) * (w - n + 1)
    codes = pattern_distribution(BinaryImage(img.astype(np.uint8)), n)
    counts = np.zeros(1 << (n * n), dtype=np.int64)
    counts[codes.codes] = np.rint(codes.frequencies * n_windows).astype(np.int64)
    target_pat = target.pattern.dense()
    use_s2 = target.s2 is not None and cfg.w_s2 > 0
    r_max = target.s2.r_max if use_s2 else 0
    target_s2 = target.s2.values.copy() if use_s2 else np.zeros(1)
    cx, cy = _pair_counts(img, r_max)
    w_s2 = cfg.w_s2 if use_s2 else 0.0

    moves = pores.size + solids.size

    def draw(count):
        return (rng.integers(0, pores.size, count), rng.integers(0, solids.size, count),
                rng.random(count))

    def run(temperature, picks, probe=False, probe_out=np.zeros(0)):
        return _sweep(img, pores, solids, counts, target_pat, n_windows, n, cfg.w_pattern,
                      cx, cy, target_s2, w_s2, r_max, temperature, *picks, probe, probe_out)

    _, energy = energy_terms(BinaryImage(img.astype(np.uint8)), target, cfg)
    result = AnnealResult(BinaryImage(img.astype(np.uint8)), initial_energy=energy)

    temperature = cfg.initial_temperature
    if temperature is None:
        probe_n = min(moves, 2000)
        deltas = np.empty(probe_n)
        run(1.0, draw(probe_n), True, deltas)
        uphill = deltas[deltas > 0]
        temperature = float(uphill.mean() / math.log(2.0)) if uphill.size else 1e-12

    for sweep in range(1, cfg.sweeps + 1):
        change, accepted = run(temperature, draw(moves))
        energy += change
        result.accepted += accepted
        pat_full, e_full = energy_terms(BinaryImage(img.astype(np.uint8)), target, cfg)
        drift = abs(energy - e_full)
        result.max_drift = max(result.max_drift, drift)
        if drift > DRIFT_TOL:
            raise RuntimeError(
                f"incremental energy {energy} drifted from full recomputation {e_full} "
                f"at sweep {sweep}")
        energy = e_full
        result.trace.append((sweep, temperature, pat_full, e_full))
        temperature *= cfg.cooling

    result.image = BinaryImage(img.astype(np.uint8))
    result.final_energy = energy
    return result


def trace_to_csv(trace) -> str:
    lines = ["sweep,temperature,pattern_energy,total_energy"]
    lines += [f"{s},{t!r},{p!r},{e!r}" for s, t, p, e in trace]
    return "\n".join(lines) + "\n"
