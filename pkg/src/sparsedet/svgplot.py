"""Minimal deterministic SVG line plots.

Only what the experiment figures need: linear axes, polylines, cross and
circle markers, horizontal reference lines and a legend.  Output depends
only on the data, so files can be diffed between runs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _f(v: float) -> str:
    return f"{v:.2f}"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def nice_ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n, 1)
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = np.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(float(v), 10))
        v += step
    return ticks


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str = ""
    line: bool = True
    marker: Optional[str] = None  # "cross" | "circle" | None
    dashed: bool = False
    color: Optional[str] = None


@dataclass
class Panel:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    series: List[Series] = field(default_factory=list)
    hlines: List[Tuple[float, str]] = field(default_factory=list)
    xlim: Optional[Tuple[float, float]] = None
    ylim: Optional[Tuple[float, float]] = None

    def limits(self):
        xs = [float(v) for s in self.series for v in s.x]
        ys = [float(v) for s in self.series for v in s.y] + [v for v, _ in self.hlines]
        xlim = self.xlim or ((min(xs), max(xs)) if xs else (0.0, 1.0))
        ylim = self.ylim or ((min(0.0, min(ys)), max(ys) * 1.05) if ys else (0.0, 1.0))
        if xlim[1] <= xlim[0]:
            xlim = (xlim[0] - 0.5, xlim[0] + 0.5)
        if ylim[1] <= ylim[0]:
            ylim = (ylim[0], ylim[0] + 1.0)
        return xlim, ylim


def render(panels: Sequence[Panel], width: int = 640, panel_height: int = 300) -> str:
    W, PH = width, panel_height
    H = PH * max(len(panels), 1)
    ml, mr, mt, mb = 60, 150, 30, 45
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f"<!-- generator: sparsedet {__version__} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
        'font-family="sans-serif" font-size="11">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
    ]
    for k, p in enumerate(panels):
        oy = k * PH
        x0, x1 = ml, W - mr
        y0, y1 = oy + PH - mb, oy + mt
        (xa, xb), (ya, yb) = p.limits()

        def sx(v):
            return x0 + (float(v) - xa) / (xb - xa) * (x1 - x0)

        def sy(v):
            return y0 - (float(v) - ya) / (yb - ya) * (y0 - y1)

        out.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>')
        for t in nice_ticks(xa, xb):
            out.append(f'<line x1="{_f(sx(t))}" y1="{y0}" x2="{_f(sx(t))}" y2="{y0 + 4}" stroke="black"/>')
            out.append(f'<text x="{_f(sx(t))}" y="{y0 + 16}" text-anchor="middle">{t:g}</text>')
        for t in nice_ticks(ya, yb):
            out.append(f'<line x1="{x0 - 4}" y1="{_f(sy(t))}" x2="{x0}" y2="{_f(sy(t))}" stroke="black"/>')
            out.append(f'<text x="{x0 - 6}" y="{_f(sy(t) + 4)}" text-anchor="end">{t:g}</text>')
        if p.title:
            out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{y1 - 10}" text-anchor="middle" font-weight="bold">{_esc(p.title)}</text>')
        if p.xlabel:
            out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{y0 + 34}" text-anchor="middle">{_esc(p.xlabel)}</text>')
        if p.ylabel:
            cy = (y0 + y1) / 2
            out.append(f'<text x="14" y="{cy:.1f}" text-anchor="middle" transform="rotate(-90 14 {cy:.1f})">{_esc(p.ylabel)}</text>')
        for v, label in p.hlines:
            if ya <= v <= yb:
                out.append(f'<line x1="{x0}" y1="{_f(sy(v))}" x2="{x1}" y2="{_f(sy(v))}" stroke="gray" stroke-dasharray="2,3"/>')
                out.append(f'<text x="{x1 - 4}" y="{_f(sy(v) - 4)}" text-anchor="end" fill="gray">{_esc(label)}</text>')
        for j, s in enumerate(p.series):
            color = s.color or PALETTE[j % len(PALETTE)]
            pts = [(sx(a), sy(b)) for a, b in zip(s.x, s.y)]
            if s.line and len(pts) > 1:
                path = " ".join(f"{_f(a)},{_f(b)}" for a, b in pts)
                dash = ' stroke-dasharray="5,3"' if s.dashed else ""
                out.append(f'<polyline points="{path}" fill="none" stroke="{color}"{dash}/>')
            for a, b in pts:
                if s.marker == "circle":
                    out.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="4" fill="none" stroke="{color}"/>')
                elif s.marker == "cross":
                    out.append(
                        f'<path d="M{_f(a - 4)},{_f(b - 4)}L{_f(a + 4)},{_f(b + 4)}M{_f(a - 4)},{_f(b + 4)}L{_f(a + 4)},{_f(b - 4)}" stroke="{color}"/>'
                    )
            if s.label:
                ly = y1 + 14 + 16 * j
                out.append(f'<line x1="{x1 + 10}" y1="{ly - 4}" x2="{x1 + 30}" y2="{ly - 4}" stroke="{color}"/>')
                out.append(f'<text x="{x1 + 36}" y="{ly}">{_esc(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
