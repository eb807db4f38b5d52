"""Minimal deterministic SVG line plots."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import EmptySeries, ValidationError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


@dataclass(frozen=True)
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str = ""
    markers: bool = False


def _nice_ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = mag * min((1, 2, 2.5, 5, 10), key=lambda m: abs(m * mag - raw))
    start = np.ceil(lo / step - 1e-9) * step
    return np.arange(start, hi + step * 1e-9, step)


def _num(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    return f"{v:.6g}"


def emit_plot(series: Sequence[Series | dict], style: dict | None = None) -> str:
    """Standalone SVG document with axes, ticks and a legend.

    ``style`` keys: ``width``, ``height``, ``title``, ``xlabel``, ``ylabel``.
    Output depends only on the inputs.
    """
    series = [s if isinstance(s, Series) else Series(**s) for s in series]
    if not series:
        raise EmptySeries("no series to plot")
    for s in series:
        if len(s.x) == 0:
            raise EmptySeries(f"series {s.label!r} has no points")
        if len(s.x) != len(s.y):
            raise ValidationError(f"series {s.label!r}: x and y lengths differ")
    st = {"width": 640, "height": 420, "title": "", "xlabel": "", "ylabel": ""}
    st.update(style or {})
    W, H = int(st["width"]), int(st["height"])
    left, right, top, bottom = 70, 20, 40 if st["title"] else 20, 50

    xs = np.concatenate([np.asarray(s.x, float) for s in series])
    ys = np.concatenate([np.asarray(s.y, float) for s in series])
    xt = _nice_ticks(float(xs.min()), float(xs.max()))
    yt = _nice_ticks(float(ys.min()), float(ys.max()))
    x0, x1 = min(xt[0], xs.min()), max(xt[-1], xs.max())
    y0, y1 = min(yt[0], ys.min()), max(yt[-1], ys.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pw, ph = W - left - right, H - top - bottom

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + (y1 - v) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
    ]
    if st["title"]:
        out.append(f'<text x="{W / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="15">{escape(str(st["title"]))}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for v in xt:
        if x0 <= v <= x1:
            X = _num(px(v))
            out.append(f'<line x1="{X}" y1="{top + ph}" x2="{X}" y2="{top + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{X}" y="{top + ph + 18}" text-anchor="middle" font-family="sans-serif" '
                       f'font-size="11">{_tick_label(v)}</text>')
    for v in yt:
        if y0 <= v <= y1:
            Y = _num(py(v))
            out.append(f'<line x1="{left - 5}" y1="{Y}" x2="{left}" y2="{Y}" stroke="black"/>')
            out.append(f'<text x="{left - 8}" y="{Y}" text-anchor="end" dominant-baseline="middle" '
                       f'font-family="sans-serif" font-size="11">{_tick_label(v)}</text>')
    if st["xlabel"]:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{H - 10}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="13">{escape(str(st["xlabel"]))}</text>')
    if st["ylabel"]:
        out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="13" transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(str(st["ylabel"]))}</text>')

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_num(px(a))},{_num(py(b))}" for a, b in zip(s.x, s.y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if s.markers or len(s.x) == 1:
            for a, b in zip(s.x, s.y):
                out.append(f'<circle cx="{_num(px(a))}" cy="{_num(py(b))}" r="2.5" fill="{color}"/>')
        if s.label:
            ly = top + 16 + 16 * i
            lx = left + pw - 150
            out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{lx + 26}" y="{ly}" dominant-baseline="middle" font-family="sans-serif" '
                       f'font-size="11">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
