"""Minimal static SVG line charts, dependency free.

Only what the reporting command needs: several named series over a shared
x axis, with ticks, labels and a legend.  Output is deterministic for
identical inputs.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

__all__ = ["write_line_chart"]

_PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#7f7f7f",
)


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    power = 10.0 ** math.floor(math.log10(raw))
    step = min(s for s in (power, 2 * power, 5 * power, 10 * power) if s >= raw)
    first = math.ceil(lo / step) * step
    ticks = []
    value = first
    while value <= hi + 1e-9 * step:
        ticks.append(round(value, 10))
        value += step
    return ticks


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def write_line_chart(
    path,
    x: Sequence[float],
    series: Mapping[str, Sequence[float]],
    *,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 860,
    height: int = 520,
) -> None:
    """Render named series against a shared x axis into an SVG file."""
    x = [float(v) for v in x]
    if not x or not series:
        raise ValueError("need x values and at least one series")
    ys = [float(v) for values in series.values() for v in values if math.isfinite(v)]
    if not ys:
        raise ValueError("series hold no finite values")
    x_lo, x_hi = min(x), max(x)
    y_lo, y_hi = min(ys), max(ys)
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad_y = 0.05 * (y_hi - y_lo)
    y_lo -= pad_y
    y_hi += pad_y

    left, right, top, bottom = 70, 160, 40, 50
    plot_w = width - left - right
    plot_h = height - top - bottom

    def sx(v: float) -> float:
        return left + plot_w * (v - x_lo) / (x_hi - x_lo) if x_hi > x_lo else left

    def sy(v: float) -> float:
        return top + plot_h * (1.0 - (v - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
            f'font-size="15">{title}</text>'
        )
    for t in _ticks(x_lo, x_hi):
        px = sx(t)
        parts.append(f'<line x1="{px:.2f}" y1="{top + plot_h}" x2="{px:.2f}" '
                     f'y2="{top + plot_h + 5}" stroke="#333"/>')
        parts.append(f'<text x="{px:.2f}" y="{top + plot_h + 18}" '
                     f'text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y_lo, y_hi):
        py = sy(t)
        parts.append(f'<line x1="{left - 5}" y1="{py:.2f}" x2="{left}" '
                     f'y2="{py:.2f}" stroke="#333"/>')
        parts.append(f'<text x="{left - 8}" y="{py + 4:.2f}" '
                     f'text-anchor="end">{_fmt(t)}</text>')
    if xlabel:
        parts.append(f'<text x="{left + plot_w / 2:.1f}" y="{height - 10}" '
                     f'text-anchor="middle">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="18" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
                     f'transform="rotate(-90 18 {top + plot_h / 2:.1f})">{ylabel}</text>')

    for index, name in enumerate(series):
        color = _PALETTE[index % len(_PALETTE)]
        values = [float(v) for v in series[name]]
        points = " ".join(
            f"{sx(xv):.2f},{sy(yv):.2f}"
            for xv, yv in zip(x, values)
            if math.isfinite(yv)
        )
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        ly = top + 16 + 18 * index
        lx = left + plot_w + 12
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 28}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
