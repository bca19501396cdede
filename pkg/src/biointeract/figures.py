"""Figure data for the three views of the two-factor fit, plus a static SVG renderer.

Each view has one series per level of Z, plotted across X = 0, 1 with Wald
whiskers:

* ``additivity`` -- identity-link cell risks (scaled, e.g. per 100,000)
* ``log_risk``   -- log-link linear predictor, i.e. log probabilities
* ``log_odds``   -- logit-link linear predictor
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TextIO
from xml.sax.saxutils import escape

import numpy as np

from .glm import ModelSpec, cell_design, fit
from .tabular import CELL_KEYS, ExposureTable
from .variance import contrast

FIGURES = {
    "additivity": ("identity", "risk_per_100k"),
    "log_risk": ("log", "log_probability"),
    "log_odds": ("logit", "log_odds"),
}


@dataclass(frozen=True)
class Series:
    z: int
    x: tuple[int, int]
    estimate: tuple[float, float]
    ci_low: tuple[float, float]
    ci_high: tuple[float, float]

    @property
    def slope(self) -> float:
        return self.estimate[1] - self.estimate[0]


@dataclass(frozen=True)
class FigureSeries:
    name: str
    y_scale: str
    series: tuple[Series, Series]
    labels: tuple[str, str, str] = ("x", "z", "y")

    def to_rows(self) -> list[dict]:
        rows = []
        for s in self.series:
            for i in range(2):
                rows.append({"figure": self.name, "y_scale": self.y_scale, "z": s.z, "x": s.x[i],
                             "estimate": s.estimate[i], "ci_low": s.ci_low[i], "ci_high": s.ci_high[i]})
        return rows


def figure_series(table: ExposureTable, which: str, scale: float = 100000.0, level: float = 0.95) -> FigureSeries:
    if which not in FIGURES:
        raise ValueError(f"unknown figure {which!r}; choose from {sorted(FIGURES)}")
    link, y_scale = FIGURES[which]
    result = fit(table, ModelSpec(link))
    factor = scale if which == "additivity" else 1.0
    if which == "additivity" and scale != 100000.0:
        y_scale = f"risk_per_{scale:g}"
    C = cell_design()
    walds = {k: contrast(result, C[i], "model", level).scaled(factor) for i, k in enumerate(CELL_KEYS)}
    series = []
    for z in (0, 1):
        w0, w1 = walds[(0, z)], walds[(1, z)]
        series.append(Series(z, (0, 1), (w0.estimate, w1.estimate), (w0.ci_low, w1.ci_low),
                             (w0.ci_high, w1.ci_high)))
    return FigureSeries(which, y_scale, tuple(series), tuple(table.labels))


def write_csv(fig: FigureSeries, sink: TextIO) -> None:
    rows = fig.to_rows()
    writer = csv.DictWriter(sink, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


_Y_LABELS = {
    "log_probability": "ln[p(outcome)]",
    "log_odds": "log odds of outcome",
}


def render_svg(fig: FigureSeries, width: int = 480, height: int = 360) -> str:
    """Static SVG 1.1: two line series with serif-capped CI whiskers."""
    left, right, top, bottom = 70, 20, 20, 50
    lo = min(min(s.ci_low) for s in fig.series)
    hi = max(max(s.ci_high) for s in fig.series)
    pad = 0.05 * (hi - lo or 1.0)
    lo, hi = lo - pad, hi + pad

    def px(x: float, offset: float) -> float:
        return left + (0.2 + 0.6 * x) * (width - left - right) + offset

    def py(y: float) -> float:
        return top + (hi - y) / (hi - lo) * (height - top - bottom)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
    ]
    for t in np.linspace(lo + pad, hi - pad, 5):
        y = py(t)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" font-size="10" text-anchor="end">{t:.4g}</text>')
    xname = escape(fig.labels[0])
    for x in (0, 1):
        out.append(f'<text x="{px(x, 0):.2f}" y="{height - bottom + 18}" font-size="12" '
                   f'text-anchor="middle">{xname}={x}</text>')
    ylab = escape(_Y_LABELS.get(fig.y_scale, fig.y_scale.replace("_", " ")))
    out.append(f'<text x="14" y="{(top + height - bottom) / 2:.2f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {(top + height - bottom) / 2:.2f})">{ylab}</text>')

    for s, dash, offset in zip(fig.series, ("none", "6,4"), (-4.0, 4.0)):
        pts = " ".join(f"{px(x, offset):.2f},{py(e):.2f}" for x, e in zip(s.x, s.estimate))
        out.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-dasharray="{dash}"/>')
        for x, e, l, h in zip(s.x, s.estimate, s.ci_low, s.ci_high):
            cx = px(x, offset)
            out.append(f'<line x1="{cx:.2f}" y1="{py(l):.2f}" x2="{cx:.2f}" y2="{py(h):.2f}" stroke="black"/>')
            for cap in (l, h):
                out.append(f'<line x1="{cx - 3:.2f}" y1="{py(cap):.2f}" x2="{cx + 3:.2f}" y2="{py(cap):.2f}" '
                           f'stroke="black"/>')
            out.append(f'<rect x="{cx - 4:.2f}" y="{py(e) - 4:.2f}" width="8" height="8" fill="black"/>')
        ly = top + 14 + 16 * s.z
        out.append(f'<line x1="{left + 10}" y1="{ly - 4}" x2="{left + 40}" y2="{ly - 4}" stroke="black" '
                   f'stroke-dasharray="{dash}"/>')
        out.append(f'<text x="{left + 46}" y="{ly}" font-size="11">{escape(fig.labels[1])}={s.z}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
