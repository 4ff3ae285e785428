"""Self-contained SVG line charts (no external assets)."""

from __future__ import annotations

import math
from typing import Sequence

__all__ = ["emit_svg"]

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#17becf"]

_W, _H = 720, 480
_ML, _MR, _MT, _MB = 70, 30, 40, 55


def _decades(lo: float, hi: float):
    a = math.floor(math.log10(lo))
    b = math.ceil(math.log10(hi))
    return [10.0 ** k for k in range(a, b + 1)]


def emit_svg(series: Sequence[tuple], path: str, title: str = "",
             xlabel: str = "T", ylabel: str = "error",
             log_x: bool = True, log_y: bool = True) -> str:
    """Write a line chart; series is a list of (label, xs, ys).

    Rejects empty input and non-finite values. Returns the SVG text.
    """
    if not series:
        raise ValueError("no series to plot")
    for label, xs, ys in series:
        if len(xs) == 0 or len(xs) != len(ys):
            raise ValueError(f"series {label!r}: empty or mismatched points")
        for v in list(xs) + list(ys):
            if not math.isfinite(v):
                raise ValueError(f"series {label!r} contains a non-finite value")
            if (log_x or log_y) and v <= 0:
                raise ValueError(f"series {label!r}: log axes need positive values")

    all_x = [v for _, xs, _ in series for v in xs]
    all_y = [v for _, _, ys in series for v in ys]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_lo == x_hi:
        x_lo, x_hi = x_lo * 0.9 if x_lo else -1.0, x_hi * 1.1 if x_hi else 1.0
    if y_lo == y_hi:
        y_lo, y_hi = y_lo * 0.9 if y_lo else -1.0, y_hi * 1.1 if y_hi else 1.0

    def tx(x):
        if log_x:
            f = (math.log10(x) - math.log10(x_lo)) / (math.log10(x_hi) - math.log10(x_lo))
        else:
            f = (x - x_lo) / (x_hi - x_lo)
        return _ML + f * (_W - _ML - _MR)

    def ty(y):
        if log_y:
            f = (math.log10(y) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo))
        else:
            f = (y - y_lo) / (y_hi - y_lo)
        return _H - _MB - f * (_H - _MT - _MB)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="12">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>']
    # frame
    out.append(f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
               f'height="{_H - _MT - _MB}" fill="none" stroke="#333"/>')
    if title:
        out.append(f'<text x="{_W / 2}" y="24" text-anchor="middle" '
                   f'font-size="15">{title}</text>')

    x_ticks = _decades(x_lo, x_hi) if log_x else [x_lo, 0.5 * (x_lo + x_hi), x_hi]
    y_ticks = _decades(y_lo, y_hi) if log_y else [y_lo, 0.5 * (y_lo + y_hi), y_hi]
    for xv in x_ticks:
        if not x_lo <= xv <= x_hi:
            continue
        px = tx(xv)
        out.append(f'<line x1="{px:.1f}" y1="{_MT}" x2="{px:.1f}" '
                   f'y2="{_H - _MB}" stroke="#ddd"/>')
        lbl = f"1e{int(math.log10(xv))}" if log_x else f"{xv:g}"
        out.append(f'<text x="{px:.1f}" y="{_H - _MB + 18}" '
                   f'text-anchor="middle">{lbl}</text>')
    for yv in y_ticks:
        if not y_lo <= yv <= y_hi:
            continue
        py = ty(yv)
        out.append(f'<line x1="{_ML}" y1="{py:.1f}" x2="{_W - _MR}" '
                   f'y2="{py:.1f}" stroke="#ddd"/>')
        lbl = f"1e{int(math.log10(yv))}" if log_y else f"{yv:g}"
        out.append(f'<text x="{_ML - 6}" y="{py + 4:.1f}" '
                   f'text-anchor="end">{lbl}</text>')
    out.append(f'<text x="{_W / 2}" y="{_H - 14}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="18" y="{_H / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {_H / 2})">{ylabel}</text>')

    for i, (label, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{tx(x):.2f},{ty(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.8"/>')
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{tx(x):.2f}" cy="{ty(y):.2f}" r="3" '
                       f'fill="{color}"/>')
        ly = _MT + 16 + 16 * i
        out.append(f'<line x1="{_W - _MR - 150}" y1="{ly - 4}" '
                   f'x2="{_W - _MR - 126}" y2="{ly - 4}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{_W - _MR - 120}" y="{ly}">{label}</text>')

    out.append("</svg>")
    text = "\n".join(out)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text
