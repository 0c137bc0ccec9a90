"""Minimal static SVG 1.1 emission: log-log / linear line plots and histogram
overlays, with axes, ticks, and a legend.  No plotting dependency; the CSV
tables remain the canonical artifact and these files are companions for a
quick look.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = ["Series", "line_plot", "histogram_overlay"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")

_W, _H = 720, 520
_ML, _MR, _MT, _MB = 72, 24, 40, 56


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    dashed: bool = False


def _nice_ticks(lo: float, hi: float, n: int = 6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _log2_ticks(lo: float, hi: float):
    return list(range(math.ceil(lo), math.floor(hi) + 1))


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


class _Canvas:
    def __init__(self, title, xlabel, ylabel, xlim, ylim, xlog2, ylog2):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
            f'<rect width="{_W}" height="{_H}" fill="white"/>',
            f'<text x="{_W / 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{_esc(title)}</text>',
        ]
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.xlog2, self.ylog2 = xlog2, ylog2
        self._frame(xlabel, ylabel)

    def px(self, x):
        return _ML + (x - self.x0) / (self.x1 - self.x0) * (_W - _ML - _MR)

    def py(self, y):
        return _H - _MB - (y - self.y0) / (self.y1 - self.y0) * (_H - _MT - _MB)

    def _frame(self, xlabel, ylabel):
        p = self.parts
        p.append(
            f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
            f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>'
        )
        xticks = _log2_ticks(self.x0, self.x1) if self.xlog2 else _nice_ticks(self.x0, self.x1)
        yticks = _log2_ticks(self.y0, self.y1) if self.ylog2 else _nice_ticks(self.y0, self.y1)
        for t in xticks:
            x = self.px(t)
            label = f"2^{t}" if self.xlog2 else f"{t:g}"
            p.append(f'<line x1="{x:.2f}" y1="{_H - _MB}" x2="{x:.2f}" '
                     f'y2="{_H - _MB + 5}" stroke="black"/>')
            p.append(f'<text x="{x:.2f}" y="{_H - _MB + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{label}</text>')
        for t in yticks:
            y = self.py(t)
            label = f"2^{t}" if self.ylog2 else f"{t:g}"
            p.append(f'<line x1="{_ML - 5}" y1="{y:.2f}" x2="{_ML}" '
                     f'y2="{y:.2f}" stroke="black"/>')
            p.append(f'<text x="{_ML - 8}" y="{y + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{label}</text>')
        p.append(f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 14}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13">{_esc(xlabel)}</text>')
        p.append(f'<text x="18" y="{(_MT + _H - _MB) / 2}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13" '
                 f'transform="rotate(-90 18 {(_MT + _H - _MB) / 2})">{_esc(ylabel)}</text>')

    def polyline(self, xs, ys, color, dashed=False, width=1.6):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" '
                          f'stroke="{color}" stroke-width="{width}"{dash}/>')
        if not dashed:
            for x, y in zip(xs, ys):
                self.parts.append(f'<circle cx="{self.px(x):.2f}" cy="{self.py(y):.2f}" '
                                  f'r="2.5" fill="{color}"/>')

    def legend(self, entries):
        x, y = _ML + 12, _MT + 14
        for label, color, dashed in entries:
            dash = ' stroke-dasharray="6,4"' if dashed else ""
            self.parts.append(f'<line x1="{x}" y1="{y}" x2="{x + 26}" y2="{y}" '
                              f'stroke="{color}" stroke-width="2"{dash}/>')
            self.parts.append(f'<text x="{x + 32}" y="{y + 4}" font-family="sans-serif" '
                              f'font-size="12">{_esc(label)}</text>')
            y += 18

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"])


def line_plot(
    series: Sequence[Series],
    *,
    title: str,
    xlabel: str,
    ylabel: str,
    xlog2: bool = False,
    ylog2: bool = False,
) -> str:
    """Render line series (log2 axes take raw values and transform here)."""
    tx = (lambda v: math.log2(v)) if xlog2 else float
    ty = (lambda v: math.log2(v)) if ylog2 else float
    data = []
    for s in series:
        xs = [tx(v) for v in s.x]
        ys = [ty(v) for v in s.y]
        data.append((s, xs, ys))
    all_x = [v for _, xs, _ in data for v in xs]
    all_y = [v for _, _, ys in data for v in ys]
    pad_x = 0.05 * (max(all_x) - min(all_x) or 1.0)
    pad_y = 0.05 * (max(all_y) - min(all_y) or 1.0)
    canvas = _Canvas(title, xlabel, ylabel,
                     (min(all_x) - pad_x, max(all_x) + pad_x),
                     (min(all_y) - pad_y, max(all_y) + pad_y), xlog2, ylog2)
    legend = []
    color_idx = 0
    for s, xs, ys in data:
        color = PALETTE[color_idx % len(PALETTE)]
        color_idx += 1
        canvas.polyline(xs, ys, color, dashed=s.dashed)
        legend.append((s.label, color, s.dashed))
    canvas.legend(legend)
    return canvas.render()


def histogram_overlay(
    a,
    b,
    *,
    labels=("empirical", "limit"),
    title: str = "",
    xlabel: str = "value",
    bins: Optional[int] = None,
) -> str:
    """Two semi-transparent density histograms on shared bins.

    Default bin count is ceil(sqrt(n)) of the larger sample.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if bins is None:
        bins = math.ceil(math.sqrt(max(a.size, b.size)))
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    dens_a, _ = np.histogram(a, bins=edges, density=True)
    dens_b, _ = np.histogram(b, bins=edges, density=True)
    top = 1.1 * max(dens_a.max(), dens_b.max(), 1e-12)
    canvas = _Canvas(title, xlabel, "density", (lo, hi), (0.0, top), False, False)
    for dens, color in ((dens_a, PALETTE[0]), (dens_b, PALETTE[1])):
        for j in range(bins):
            x = canvas.px(edges[j])
            w = canvas.px(edges[j + 1]) - x
            y = canvas.py(dens[j])
            h = canvas.py(0.0) - y
            if h <= 0:
                continue
            canvas.parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" '
                f'fill="{color}" fill-opacity="0.45"/>'
            )
    canvas.legend([(labels[0], PALETTE[0], False), (labels[1], PALETTE[1], False)])
    return canvas.render()
