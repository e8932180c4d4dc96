"""Evaluation of a set of realizations against a target, and SVG curve plots."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from porogen.grid import BinaryImage, ConditionalInput, hard_data_fidelity, porosity
from porogen.morph import CurveStatistic, average_curves, curves_to_csv, descriptor_suite

DEFAULT_DIRECTIONS = ("xy", "se")


def porosity_line(values) -> str:
    """``mean ± std`` with three decimals; std is the sample deviation."""
    v = np.asarray(values, dtype=np.float64)
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return f"{v.mean():.3f} ± {std:.3f}"


def diversity(images, cond: ConditionalInput) -> float:
    """Mean pairwise Hamming distance on unknown pixels, as a fraction of them."""
    unknown = ~cond.mask.data
    n_unknown = int(unknown.sum())
    if len(images) < 2 or n_unknown == 0:
        return 0.0
    flat = np.stack([img.data[unknown] for img in images])
    dists = [np.count_nonzero(a != b) for a, b in combinations(flat, 2)]
    return float(np.mean(dists)) / n_unknown


def _curve_key(c: CurveStatistic) -> str:
    return f"{c.kind}/{c.direction}"


@dataclass
class EvalReport:
    target_porosity: float
    porosities: list[float]
    porosity_summary: str
    fidelity_pre: float | None  # before hard-data overwrite; None when unknown
    fidelity_post: float
    diversity: float
    average_curves: dict[str, CurveStatistic] = field(repr=False)
    target_curves: dict[str, CurveStatistic] = field(repr=False)
    seconds: list[float] = field(default_factory=list, repr=False)

    @property
    def max_curve_gap(self) -> dict[str, float]:
        return {k: float(np.max(np.abs(self.average_curves[k].values - t.values)))
                for k, t in self.target_curves.items()}

    def to_json(self) -> str:
        """Deterministic summary; wall-clock times are left to :meth:`timing_json`."""
        d = {
            "target_porosity": self.target_porosity,
            "porosities": self.porosities,
            "porosity": self.porosity_summary,
            "fidelity_pre_overwrite": self.fidelity_pre,
            "fidelity_post_overwrite": self.fidelity_post,
            "diversity": self.diversity,
            "max_curve_gap": self.max_curve_gap,
            "realizations": len(self.porosities),
        }
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def timing_json(self) -> str:
        s = self.seconds
        d = {"seconds_per_realization": s, "mean_seconds": float(np.mean(s)) if s else None}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def curves_csv(self) -> str:
        """Target and averaged curves, one block each, tagged in a ``series`` column."""
        lines = []
        for series, curves in (("target", self.target_curves), ("average", self.average_curves)):
            body = curves_to_csv(curves.values()).splitlines()
            if not lines:
                lines.append("series," + body[0])
            lines += [f"{series},{row}" for row in body[1:]]
        return "\n".join(lines) + "\n"

    def summary_lines(self) -> list[str]:
        out = [f"porosity: {self.porosity_summary} (mean ± std over "
               f"{len(self.porosities)} realizations; target {self.target_porosity:.3f})"]
        if self.fidelity_pre is not None:
            out.append(f"hard-data fidelity before overwrite: {self.fidelity_pre:.4f}")
        out.append(f"hard-data fidelity after overwrite: {self.fidelity_post:.4f}")
        out.append(f"diversity: {self.diversity:.4f}")
        out += [f"max gap {k}: {v:.4f}" for k, v in sorted(self.max_curve_gap.items())]
        if self.seconds:
            out.append(f"wall-clock per realization: {np.mean(self.seconds):.3f} s")
        return out


def realization_curves(images, directions=DEFAULT_DIRECTIONS, r_max: int | None = None,
                       phase: str = "pore") -> list[dict[str, CurveStatistic]]:
    out = []
    for img in images:
        row = {}
        for d in directions:
            for c in descriptor_suite(img, phase, d, r_max).values():
                row[_curve_key(c)] = c
        out.append(row)
    return out


def evaluate(images, cond: ConditionalInput, target: BinaryImage, fidelity_pre=None,
             seconds=None, directions=DEFAULT_DIRECTIONS, r_max: int | None = None) -> EvalReport:
    images = list(images)
    if not images:
        raise ValueError("no realizations to evaluate")
    for img in images:
        if img.shape != target.shape:
            raise ValueError(f"realization {img.shape} and target {target.shape} differ")
    per = realization_curves(images, directions, r_max)
    averaged = {k: average_curves(row[k] for row in per) for k in per[0]}
    target_curves = realization_curves([target], directions, r_max)[0]
    pre = None if fidelity_pre is None else float(np.mean(fidelity_pre))
    return EvalReport(
        target_porosity=porosity(target),
        porosities=[porosity(i) for i in images],
        porosity_summary=porosity_line([porosity(i) for i in images]),
        fidelity_pre=pre,
        fidelity_post=float(np.mean([hard_data_fidelity(i, cond) for i in images])),
        diversity=diversity(images, cond),
        average_curves=averaged,
        target_curves=target_curves,
        seconds=list(seconds or []),
    )


# ---------------------------------------------------------------------------
# SVG

PANEL_W, PANEL_H = 300, 220
MARGIN_L, MARGIN_B, MARGIN_T = 50, 40, 30


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _panel(ox: int, title: str, target: CurveStatistic, realizations, average) -> list[str]:
    r_max = target.r_max
    ys = [target.values, average.values] + [c.values for c in realizations]
    y_hi = max(1e-12, max(float(np.max(v)) for v in ys))
    y_hi = float(np.ceil(y_hi * 10) / 10)
    pw, ph = PANEL_W - MARGIN_L - 10, PANEL_H - MARGIN_B - MARGIN_T

    def pt(r, v):
        x = ox + MARGIN_L + (r / max(r_max, 1)) * pw
        y = MARGIN_T + ph - (v / y_hi) * ph
        return f"{_fmt(x)},{_fmt(y)}"

    def polyline(values, style):
        pts = " ".join(pt(r, v) for r, v in enumerate(values))
        return f'<polyline points="{pts}" {style} fill="none"/>'

    x0, y0 = ox + MARGIN_L, MARGIN_T + ph
    out = [f'<text x="{ox + PANEL_W / 2:.1f}" y="18" text-anchor="middle">{title}</text>',
           f'<line x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="black"/>',
           f'<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" stroke="black"/>']
    for i in range(5):
        r = round(r_max * i / 4)
        x = ox + MARGIN_L + (r / max(r_max, 1)) * pw
        out.append(f'<line x1="{_fmt(x)}" y1="{y0}" x2="{_fmt(x)}" y2="{y0 + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{y0 + 16}" text-anchor="middle">{r}</text>')
        v = y_hi * i / 4
        y = MARGIN_T + ph - (v / y_hi) * ph
        out.append(f'<line x1="{x0 - 4}" y1="{_fmt(y)}" x2="{x0}" y2="{_fmt(y)}" stroke="black"/>')
        out.append(f'<text x="{x0 - 6}" y="{_fmt(y + 4)}" text-anchor="end">{v:.2f}</text>')
    out.append(f'<text x="{x0 + pw / 2:.1f}" y="{y0 + 32}" text-anchor="middle">r (pixels)</text>')
    for c in realizations:
        out.append(polyline(c.values, 'stroke="#bbbbbb" stroke-width="0.8"'))
    out.append(polyline(target.values, 'stroke="#d62728" stroke-width="2"'))
    out.append(polyline(average.values, 'stroke="#1f77b4" stroke-width="1.5" '
                                        'stroke-dasharray="5,3"'))
    return out


def svg_plot(target_curves: dict[str, CurveStatistic],
             per_realization: list[dict[str, CurveStatistic]]) -> tuple[str, float]:
    """One panel per curve key: realizations (grey), their average, and the target.

    Returns the SVG text and the largest absolute average-vs-target gap.
    """
    keys = list(target_curves)
    width = PANEL_W * len(keys)
    height = PANEL_H + 30
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    gap = 0.0
    for i, k in enumerate(keys):
        reals = [row[k] for row in per_realization]
        avg = average_curves(reals)
        gap = max(gap, float(np.max(np.abs(avg.values - target_curves[k].values))))
        parts += _panel(i * PANEL_W, k, target_curves[k], reals, avg)
    ly = PANEL_H + 15
    legend = (("#d62728", "", "target"), ("#1f77b4", ' stroke-dasharray="5,3"', "average"),
              ("#bbbbbb", "", "realizations"))
    for j, (color, dash, label) in enumerate(legend):
        lx = 60 + j * 120
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 25}" y2="{ly}" stroke="{color}" '
                     f'stroke-width="2"{dash}/>')
        parts.append(f'<text x="{lx + 30}" y="{ly + 4}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n", gap
