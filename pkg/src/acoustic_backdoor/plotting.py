"""Standalone SVG line charts with no plotting dependency.

Output is byte-deterministic: coordinates are printed at fixed precision
and series are drawn in the order given.
"""

from __future__ import annotations

import math
import os
from html import escape
from typing import Mapping, Sequence

WIDTH, HEIGHT = 800, 500
MARGIN = {"left": 70, "right": 170, "top": 40, "bottom": 60}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


class PlotError(ValueError):
    pass


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi == lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:.6g}"


def render_svg(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
               xlabel: str = "", ylabel: str = "") -> str:
    if not series:
        raise PlotError("no series to plot")
    xs_all, ys_all = [], []
    for name, (xs, ys) in series.items():
        if len(xs) != len(ys):
            raise PlotError(f"series {name!r}: x and y lengths differ")
        if len(xs) == 0:
            raise PlotError(f"series {name!r} is empty")
        for v in list(xs) + list(ys):
            if not math.isfinite(float(v)):
                raise PlotError(f"series {name!r} contains a non-finite value")
        xs_all.extend(float(v) for v in xs)
        ys_all.extend(float(v) for v in ys)
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y: float) -> float:
        return top + ph - (y - y_lo) / (y_hi - y_lo) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        y = py(t)
        out.append(f'<line x1="{left}" y1="{_fmt(y)}" x2="{left + pw}" y2="{_fmt(y)}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{left - 6}" y="{_fmt(y + 4)}" text-anchor="end">{_label(t)}</text>')
    for t in _nice_ticks(x_lo, x_hi):
        x = px(t)
        out.append(f'<line x1="{_fmt(x)}" y1="{top + ph}" x2="{_fmt(x)}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{top + ph + 18}" text-anchor="middle">{_label(t)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        cy = top + ph / 2
        out.append(f'<text x="18" y="{cy:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 18 {cy:.1f})">{escape(ylabel)}</text>')
    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(px(float(x)))},{_fmt(py(float(y)))}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        if len(xs) <= 40:
            for x, y in zip(xs, ys):
                out.append(f'<circle cx="{_fmt(px(float(x)))}" cy="{_fmt(py(float(y)))}" r="3" fill="{color}"/>')
        ly = top + 10 + 20 * i
        lx = left + pw + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], path: str | os.PathLike,
              title: str = "", xlabel: str = "", ylabel: str = "") -> None:
    """Render ``series`` (name -> (x, y)) and write the SVG to ``path``.

    Nothing is written when the input is invalid.
    """
    svg = render_svg(series, title, xlabel, ylabel)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
