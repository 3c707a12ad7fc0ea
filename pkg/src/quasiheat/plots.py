"""Minimal SVG emission for log-log remainder curves.

Reports are the source of truth; these plots are optional conveniences and
deliberately avoid a plotting dependency.
"""

from __future__ import annotations

import math
from pathlib import Path

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf", "#ff7f0e"]


def loglog_svg(series, path, guides=(), title="", size=(640, 480)) -> None:
    """Write a log-log line chart.

    ``series``: iterable of (label, xs, ys) with positive values; ``guides``:
    slopes drawn as dashed reference lines through the data's corner.
    """
    w, h = size
    margin = 50
    pts = [
        (math.log10(x), math.log10(y))
        for _, xs, ys in series
        for x, y in zip(xs, ys)
        if x > 0 and y > 0
    ]
    if not pts:
        return
    x0 = min(p[0] for p in pts)
    x1 = max(p[0] for p in pts)
    y0 = min(p[1] for p in pts)
    y1 = max(p[1] for p in pts)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def sx(v):
        return margin + (v - x0) / (x1 - x0) * (w - 2 * margin)

    def sy(v):
        return h - margin - (v - y0) / (y1 - y0) * (h - 2 * margin)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{w - 2 * margin}" '
        f'height="{h - 2 * margin}" fill="none" stroke="#333"/>',
    ]
    if title:
        out.append(
            f'<text x="{w / 2}" y="{margin / 2 + 5}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>'
        )
    for slope in guides:
        gy0 = y0
        gy1 = y0 + slope * (x1 - x0)
        out.append(
            f'<line x1="{sx(x0):.1f}" y1="{sy(gy0):.1f}" x2="{sx(x1):.1f}" '
            f'y2="{sy(min(gy1, y1)):.1f}" stroke="#999" stroke-dasharray="6 4"/>'
        )
        out.append(
            f'<text x="{sx(x1) - 4:.1f}" y="{sy(min(gy1, y1)) - 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11" fill="#777">slope {slope:g}</text>'
        )
    for i, (label, xs, ys) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        coords = [
            f"{sx(math.log10(x)):.1f},{sy(math.log10(y)):.1f}"
            for x, y in zip(xs, ys)
            if x > 0 and y > 0
        ]
        if len(coords) < 2:
            continue
        out.append(
            f'<polyline points="{" ".join(coords)}" fill="none" stroke="{color}" '
            f'stroke-width="1.2"><title>{label}</title></polyline>'
        )
    out.append(
        f'<text x="{w / 2}" y="{h - 12}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12">log10 radius</text>'
    )
    out.append("</svg>")
    Path(path).write_text("\n".join(out))
