"""Minimal deterministic SVG line plots (no external plotting dependency).

Each tracked series plotted here is also written numerically to results.csv;
the plots are views, never the only record.
"""

from __future__ import annotations

import math
from pathlib import Path

__all__ = ["write_line_svg"]

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 40, 50


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        lo_e = math.floor(math.log10(lo))
        hi_e = math.ceil(math.log10(hi))
        return [10.0**e for e in range(int(lo_e), int(hi_e) + 1)]
    span = hi - lo
    if span <= 0:
        return [lo]
    step = 10.0 ** math.floor(math.log10(span / 4))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    x = first
    while x <= hi + 1e-12 * abs(span):
        out.append(x)
        x += step
    return out


def write_line_svg(
    path: str | Path,
    x: list[float],
    y: list[float],
    title: str,
    xlabel: str = "",
    ylabel: str = "",
    logx: bool = False,
    logy: bool = False,
) -> None:
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    pts = [(a, b) for a, b in zip(xs, ys) if math.isfinite(a) and math.isfinite(b)]
    if logx:
        pts = [(a, b) for a, b in pts if a > 0]
    if logy:
        pts = [(a, b) for a, b in pts if b > 0]
    if not pts:
        pts = [(0.0, 0.0)]
        logx = logy = False
    pxs = [p[0] for p in pts]
    pys = [p[1] for p in pts]
    x_lo, x_hi = min(pxs), max(pxs)
    y_lo, y_hi = min(pys), max(pys)
    if x_lo == x_hi:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_lo == y_hi:
        pad = abs(y_lo) * 0.1 + 1e-12
        y_lo, y_hi = y_lo - pad, y_hi + pad

    def tx(v: float) -> float:
        if logx:
            f = (math.log10(v) - math.log10(x_lo)) / (math.log10(x_hi) - math.log10(x_lo))
        else:
            f = (v - x_lo) / (x_hi - x_lo)
        return _ML + f * (_W - _ML - _MR)

    def ty(v: float) -> float:
        if logy:
            f = (math.log10(v) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo))
        else:
            f = (v - y_lo) / (y_hi - y_lo)
        return _H - _MB - f * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svb" viewBox="0 0 {_W} {_H}">'.replace("svb", "svg"),
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W/2}" y="24" text-anchor="middle" font-size="15" font-family="monospace">{title}</text>',
        f'<rect x="{_ML}" y="{_MT}" width="{_W-_ML-_MR}" height="{_H-_MT-_MB}" fill="none" stroke="black"/>',
    ]
    for tick in _ticks(x_lo, x_hi, logx):
        if tick < x_lo or tick > x_hi:
            continue
        px = tx(tick)
        parts.append(f'<line x1="{_fmt(px)}" y1="{_H-_MB}" x2="{_fmt(px)}" y2="{_H-_MB+5}" stroke="black"/>')
        parts.append(
            f'<text x="{_fmt(px)}" y="{_H-_MB+18}" text-anchor="middle" font-size="10" font-family="monospace">{_fmt(tick)}</text>'
        )
    for tick in _ticks(y_lo, y_hi, logy):
        if tick < y_lo or tick > y_hi:
            continue
        py = ty(tick)
        parts.append(f'<line x1="{_ML-5}" y1="{_fmt(py)}" x2="{_ML}" y2="{_fmt(py)}" stroke="black"/>')
        parts.append(
            f'<text x="{_ML-8}" y="{_fmt(py+3)}" text-anchor="end" font-size="10" font-family="monospace">{_fmt(tick)}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{_W/2}" y="{_H-12}" text-anchor="middle" font-size="12" font-family="monospace">{xlabel}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="16" y="{_H/2}" transform="rotate(-90 16 {_H/2})" text-anchor="middle" font-size="12" font-family="monospace">{ylabel}</text>'
        )
    poly = " ".join(f"{_fmt(tx(a))},{_fmt(ty(b))}" for a, b in pts)
    parts.append(f'<polyline points="{poly}" fill="none" stroke="#1f6fb2" stroke-width="1.5"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))
