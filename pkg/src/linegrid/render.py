"""Deterministic SVG rendering of grids, segments and polylines."""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .discretize import Polyline
from .geometry import ImageSegment

# Qualitative palette for instances; cycles when exhausted.
INSTANCE_COLORS = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


@dataclass(frozen=True)
class SvgStyle:
    background: str = "#000000"
    grid_color: str = "#404040"
    grid_width: float = 0.5
    gt_color: str = "#ffffff"
    gt_width: float = 1.0
    segment_width: float = 2.0
    polyline_width: float = 2.0
    digits: int = 2


def orientation_hue(dx: float, dy: float) -> float:
    """Directed image-space angle mapped linearly onto [0, 1)."""
    return (math.atan2(dy, dx) % (2 * math.pi)) / (2 * math.pi)


def hue_color(h: float) -> str:
    r, g, b = colorsys.hsv_to_rgb(h % 1.0, 1.0, 1.0)
    return "#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255))


def instance_color(i: int) -> str:
    return INSTANCE_COLORS[i % len(INSTANCE_COLORS)]


def _fmt(v: float, digits: int) -> str:
    s = f"{float(v):.{digits}f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _points_attr(pts, digits: int) -> str:
    return " ".join(f"{_fmt(x, digits)},{_fmt(y, digits)}" for x, y in pts)


def render_svg(
    width: int,
    height: int,
    cell_px: Optional[int] = None,
    segments: Iterable[ImageSegment] = (),
    polylines: Sequence = (),
    ground_truth: Sequence[Polyline] = (),
    style: SvgStyle = SvgStyle(),
    title: Optional[str] = None,
) -> str:
    """SVG document with layers: grid, ground truth, segments (hue = orientation), polylines (color = instance).

    ``polylines`` accepts :class:`Polyline` or anything with ``spline_points``
    (extracted lanes); the latter are colored by ``instance_id``.
    """
    d = style.digits
    out: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="{style.background}"/>')

    out.append(f'<g id="grid" stroke="{style.grid_color}" stroke-width="{_fmt(style.grid_width, d)}">')
    if cell_px:
        for x in range(0, width + 1, cell_px):
            out.append(f'<line x1="{x}" y1="0" x2="{x}" y2="{height}"/>')
        for y in range(0, height + 1, cell_px):
            out.append(f'<line x1="0" y1="{y}" x2="{width}" y2="{y}"/>')
    out.append("</g>")

    if ground_truth:
        out.append(f'<g id="ground-truth" fill="none" stroke="{style.gt_color}" '
                   f'stroke-width="{_fmt(style.gt_width, d)}">')
        for p in ground_truth:
            out.append(f'<polyline points="{_points_attr(p.points, d)}"/>')
        out.append("</g>")

    segs = list(segments)
    if segs:
        out.append(f'<g id="segments" stroke-width="{_fmt(style.segment_width, d)}" stroke-linecap="round">')
        for s in segs:
            col = hue_color(orientation_hue(s.end[0] - s.start[0], s.end[1] - s.start[1]))
            out.append(
                f'<line x1="{_fmt(s.start[0], d)}" y1="{_fmt(s.start[1], d)}" '
                f'x2="{_fmt(s.end[0], d)}" y2="{_fmt(s.end[1], d)}" stroke="{col}"/>'
            )
        out.append("</g>")

    if polylines:
        out.append(f'<g id="polylines" fill="none" stroke-width="{_fmt(style.polyline_width, d)}">')
        for i, p in enumerate(polylines):
            if hasattr(p, "spline_points"):
                pts, k = np.asarray(p.spline_points), p.instance_id
            else:
                pts, k = p.points, i
            out.append(f'<polyline points="{_points_attr(pts, d)}" stroke="{instance_color(k)}"/>')
        out.append("</g>")

    out.append("</svg>")
    return "\n".join(out) + "\n"
