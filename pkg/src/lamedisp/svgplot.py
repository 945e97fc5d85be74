"""Standalone SVG 1.1 line plot of a log-log decay curve."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH = 800
HEIGHT = 600
MARGIN = (80, 40, 40, 70)  # left, right, top, bottom


def _ticks(lo: float, hi: float, n: int = 6):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def loglog_svg(t, values, slope: float, intercept: float, title: str = "") -> str:
    """Polyline of ``log10 values`` against ``log10 t`` with the fitted line and slope label."""
    lt = np.log10(np.asarray(t, dtype=float))
    lv = np.log10(np.asarray(values, dtype=float))
    fit = (slope * np.log(10.0**lt) + intercept) / math.log(10.0)
    x_lo, x_hi = float(lt.min()), float(lt.max())
    y_lo = float(min(lv.min(), fit.min()))
    y_hi = float(max(lv.max(), fit.max()))
    pad = 0.05 * max(y_hi - y_lo, 1e-3)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    left, right, top, bottom = MARGIN
    pw = WIDTH - left - right
    ph = HEIGHT - top - bottom

    def sx(v):
        return left + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return top + (y_hi - v) / (y_hi - y_lo) * ph

    def points(xs, ys):
        return " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys))

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" "http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">',
        f'<svg version="1.1" xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for v in _ticks(x_lo, x_hi):
        out.append(f'<line x1="{sx(v):.2f}" y1="{top + ph}" x2="{sx(v):.2f}" y2="{top + ph + 6}" stroke="black"/>')
        out.append(
            f'<text x="{sx(v):.2f}" y="{top + ph + 22}" font-size="12" text-anchor="middle">{v:.2f}</text>'
        )
    for v in _ticks(y_lo, y_hi):
        out.append(f'<line x1="{left - 6}" y1="{sy(v):.2f}" x2="{left}" y2="{sy(v):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 10}" y="{sy(v) + 4:.2f}" font-size="12" text-anchor="end">{v:.2f}</text>')
    out.append(
        f'<text x="{left + pw / 2}" y="{HEIGHT - 20}" font-size="14" text-anchor="middle">log10 t</text>'
    )
    out.append(
        f'<text x="20" y="{top + ph / 2}" font-size="14" text-anchor="middle" '
        f'transform="rotate(-90 20 {top + ph / 2})">log10 sup|K|</text>'
    )
    out.append(f'<polyline points="{points(lt, fit)}" fill="none" stroke="gray" stroke-dasharray="6,4"/>')
    out.append(f'<polyline points="{points(lt, lv)}" fill="none" stroke="navy" stroke-width="2"/>')
    for a, b in zip(lt, lv):
        out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3" fill="navy"/>')
    label = f"fitted slope = {slope:.4f}"
    if title:
        label = f"{escape(title)}: {label}"
    out.append(f'<text x="{left + 10}" y="{top + 20}" font-size="14">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
