"""Ground-truth polylines to per-cell border-to-border chords.

The pipeline is slice -> merge -> resolve_ends -> encode. Internally a
polyline is handled as a list of *pieces*: maximal runs of the path that
stay inside one cell, delimited by grid-line crossings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .geometry import (
    GridSpec,
    Point,
    Representation,
    SegmentGeometry,
    from_image,
    to_image,
)

GRID_TOL = 1e-9


@dataclass(frozen=True)
class Polyline:
    points: Tuple[Point, ...]
    class_id: Optional[int] = None

    def __post_init__(self) -> None:
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if len(pts) < 2:
            raise ValueError("a polyline needs at least two points")
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise ValueError(f"consecutive duplicate point {a}")
        object.__setattr__(self, "points", pts)

    @property
    def length(self) -> float:
        p = np.asarray(self.points)
        return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


@dataclass(frozen=True)
class CellSegment:
    geometry: SegmentGeometry
    class_id: Optional[int] = None
    source: Optional[int] = None


@dataclass
class CellGroundTruth:
    cell_row: int
    cell_col: int
    segments: List[CellSegment] = field(default_factory=list)


@dataclass
class DeviationReport:
    mean_abs_deviation: float
    per_polyline: List[Tuple[int, float]]


@dataclass
class _Piece:
    cell: Tuple[int, int]
    points: List[Point]


def _check_bounds(p: Polyline, spec: GridSpec) -> None:
    for x, y in p.points:
        if not (-GRID_TOL <= x <= spec.image_width + GRID_TOL and -GRID_TOL <= y <= spec.image_height + GRID_TOL):
            raise ValueError(f"point ({x}, {y}) outside image {spec.image_width}x{spec.image_height}")


def _on_grid(v: float, cell_px: int) -> bool:
    r = v / cell_px
    return abs(r - round(r)) * cell_px <= GRID_TOL


def _is_crossing(p: Point, spec: GridSpec) -> bool:
    return _on_grid(p[0], spec.cell_px) or _on_grid(p[1], spec.cell_px)


def _edge_crossings(a: Point, b: Point, cell_px: int) -> List[float]:
    """Parameters t in (0, 1) where segment a->b crosses a grid line."""
    ts = []
    for axis in (0, 1):
        lo, hi = sorted((a[axis], b[axis]))
        if hi - lo <= GRID_TOL:
            continue
        k0 = math.floor(lo / cell_px) + 1
        k1 = math.ceil(hi / cell_px) - 1
        for k in range(k0, k1 + 1):
            t = (k * cell_px - a[axis]) / (b[axis] - a[axis])
            if GRID_TOL < t < 1.0 - GRID_TOL:
                ts.append(t)
    return sorted(ts)


def _sliced_points(p: Polyline, spec: GridSpec) -> List[Point]:
    pts = p.points
    out: List[Point] = [pts[0]]
    for a, b in zip(pts, pts[1:]):
        for t in _edge_crossings(a, b, spec.cell_px):
            q = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
            q = _snap(q, spec.cell_px)
            if math.dist(q, out[-1]) > GRID_TOL:
                out.append(q)
        if math.dist(b, out[-1]) > GRID_TOL:
            out.append(b)
    if len(out) < 2:
        # whole polyline shorter than the tolerance; later steps drop it
        return list(pts)
    return out


def _snap(q: Point, cell_px: int) -> Point:
    def s(v: float) -> float:
        r = round(v / cell_px) * cell_px
        return float(r) if abs(v - r) <= 1e-7 else v

    return (s(q[0]), s(q[1]))


def _pieces(p: Polyline, spec: GridSpec) -> List[_Piece]:
    """Slice a polyline and split it into single-cell pieces."""
    pts = _sliced_points(p, spec)
    pieces: List[_Piece] = []
    current: List[Point] = [pts[0]]
    cell = None
    for i in range(1, len(pts)):
        a, b = pts[i - 1], pts[i]
        if cell is None:
            cell = spec.cell_of((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)
        current.append(b)
        if i < len(pts) - 1 and _is_crossing(b, spec):
            pieces.append(_Piece(cell, current))
            current, cell = [b], None
    if len(current) > 1:
        pieces.append(_Piece(cell, current))
    return pieces


def _join(pieces: Sequence[_Piece]) -> List[Point]:
    out: List[Point] = []
    for pc in pieces:
        for q in pc.points:
            if not out or math.dist(q, out[-1]) > GRID_TOL:
                out.append(q)
    return out


def _merge_pieces(pieces: List[_Piece]) -> List[_Piece]:
    return [_Piece(pc.cell, [pc.points[0], pc.points[-1]]) for pc in pieces
            if math.dist(pc.points[0], pc.points[-1]) > GRID_TOL]


def _cell_box(cell: Tuple[int, int], spec: GridSpec) -> Tuple[float, float, float, float]:
    r, c = cell
    s = spec.cell_px
    return (c * s, r * s, (c + 1) * s, (r + 1) * s)


def _exit_point(origin: Point, direction: Point, box) -> Point:
    """Where the ray from ``origin`` (inside or on ``box``) leaves the box."""
    x0, y0, x1, y1 = box
    ts = []
    for o, d, lo, hi in ((origin[0], direction[0], x0, x1), (origin[1], direction[1], y0, y1)):
        if d > 0:
            ts.append((hi - o) / d)
        elif d < 0:
            ts.append((lo - o) / d)
    t = max(min(ts), 0.0)
    q = (origin[0] + t * direction[0], origin[1] + t * direction[1])
    return (min(max(q[0], x0), x1), min(max(q[1], y0), y1))


def _resolve_pieces(pieces: List[_Piece], spec: GridSpec) -> List[_Piece]:
    if not pieces:
        return []
    half = spec.cell_px / 2.0
    pieces = [_Piece(pc.cell, list(pc.points)) for pc in pieces]

    if len(pieces) == 1 and not _is_crossing(pieces[0].points[0], spec) and not _is_crossing(pieces[0].points[-1], spec):
        a, b = pieces[0].points[0], pieces[0].points[-1]
        length = math.dist(a, b)
        if length <= half:
            return []
        u = ((b[0] - a[0]) / length, (b[1] - a[1]) / length)
        box = _cell_box(pieces[0].cell, spec)
        start = _exit_point(a, (-u[0], -u[1]), box)
        end = _exit_point(b, u, box)
        return [_Piece(pieces[0].cell, [start, end])]

    first = pieces[0]
    if not _is_crossing(first.points[0], spec):
        a, c = first.points[0], first.points[-1]
        length = math.dist(a, c)
        if length > half:
            u = ((a[0] - c[0]) / length, (a[1] - c[1]) / length)
            first.points[0] = _exit_point(c, u, _cell_box(first.cell, spec))
        else:
            pieces = pieces[1:]
    if pieces:
        last = pieces[-1]
        if not _is_crossing(last.points[-1], spec):
            c, b = last.points[0], last.points[-1]
            length = math.dist(c, b)
            if length > half:
                u = ((b[0] - c[0]) / length, (b[1] - c[1]) / length)
                last.points[-1] = _exit_point(c, u, _cell_box(last.cell, spec))
            else:
                pieces = pieces[:-1]
    return pieces


def _to_polyline(points: List[Point], class_id: Optional[int]) -> Optional[Polyline]:
    if len(points) < 2:
        return None
    return Polyline(tuple(points), class_id)


def slice(p: Polyline, spec: GridSpec) -> Polyline:  # noqa: A001 - pipeline step name
    """Insert every grid-line crossing as a vertex."""
    _check_bounds(p, spec)
    return Polyline(tuple(_sliced_points(p, spec)), p.class_id)


def merge(p: Polyline, spec: GridSpec) -> Polyline:
    """Replace the path inside each cell by the chord between its crossings."""
    merged = _merge_pieces(_pieces(p, spec))
    out = _to_polyline(_join(merged), p.class_id)
    return out if out is not None else p


def resolve_ends(p: Polyline, spec: GridSpec) -> Optional[Polyline]:
    """Extrapolate terminal chords longer than half a cell to the border, drop the rest.

    Returns None when nothing of the polyline survives.
    """
    pieces = _resolve_pieces(_merge_pieces(_pieces(p, spec)), spec)
    return _to_polyline(_join(pieces), p.class_id)


def polyline_chords(
    p: Polyline, spec: GridSpec, resolve: bool = True
) -> List[Tuple[Tuple[int, int], Point, Point]]:
    """(cell, start, end) image-space chords of one polyline in traversal order."""
    _check_bounds(p, spec)
    pieces = _merge_pieces(_pieces(p, spec))
    if resolve:
        pieces = _resolve_pieces(pieces, spec)
    return [(pc.cell, pc.points[0], pc.points[-1]) for pc in pieces
            if math.dist(pc.points[0], pc.points[-1]) > GRID_TOL]


def discretize(
    polylines: Sequence[Polyline],
    spec: GridSpec,
    representation: Union[Representation, str] = Representation.CARTESIAN,
) -> List[CellGroundTruth]:
    """Per-cell ground truth, cells in row-major order.

    Cartesian targets skip end resolution since their endpoints are unbound.
    """
    rep = Representation(representation)
    cells: dict = {}
    for idx, p in enumerate(polylines):
        for cell, a, b in polyline_chords(p, spec, resolve=rep is not Representation.CARTESIAN):
            g = from_image(a, b, cell[0], cell[1], spec, rep)
            cells.setdefault(cell, []).append(CellSegment(g, p.class_id, idx))
    return [CellGroundTruth(r, c, segs) for (r, c), segs in sorted(cells.items())]


def chords_in_image(gt: Sequence[CellGroundTruth], spec: GridSpec):
    """Flatten per-cell ground truth back to image-space segments."""
    out = []
    for cell in gt:
        for seg in cell.segments:
            s = to_image(seg.geometry, cell.cell_row, cell.cell_col, spec, 1.0, seg.class_id)
            out.append((s, seg.source))
    return out


def sample_polyline(points, spacing: float = 1.0) -> np.ndarray:
    """Points at ``spacing`` arc length along a polyline, both ends included."""
    p = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        return p[:1].copy()
    n = int(math.ceil(total / spacing - 1e-9)) + 1
    s = np.linspace(0.0, total, n)
    return np.column_stack([np.interp(s, cum, p[:, 0]), np.interp(s, cum, p[:, 1])])


def _point_segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest of the segments a[j]->b[j]."""
    best = np.full(len(pts), np.inf)
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd == 0.0, 1.0, dd)
    for start in range(0, len(pts), 2048):
        q = pts[start:start + 2048, None, :]
        t = np.clip(np.einsum("pjk,jk->pj", q - a[None], d) / dd[None], 0.0, 1.0)
        proj = a[None] + t[..., None] * d[None]
        best[start:start + 2048] = np.linalg.norm(q - proj, axis=2).min(axis=1)
    return best


def deviation(
    original: Sequence[Polyline], discretized: Sequence[CellGroundTruth], spec: GridSpec
) -> DeviationReport:
    """Mean distance from 1 px samples of the originals to the discretized chords."""
    chords = chords_in_image(discretized, spec)
    if not original:
        return DeviationReport(0.0, [])
    all_a = np.array([s.start for s, _ in chords], dtype=float).reshape(-1, 2)
    all_b = np.array([s.end for s, _ in chords], dtype=float).reshape(-1, 2)
    sources = np.array([-1 if src is None else src for _, src in chords], dtype=int)
    total, count = 0.0, 0
    per: List[Tuple[int, float]] = []
    for idx, p in enumerate(original):
        pts = sample_polyline(p.points, 1.0)
        mask = sources == idx
        if not mask.any():
            mask = np.ones(len(sources), dtype=bool)
        if not mask.any():
            per.append((idx, float("nan")))
            continue
        d = _point_segment_distance(pts, all_a[mask], all_b[mask])
        per.append((idx, float(d.mean())))
        total += float(d.sum())
        count += len(d)
    mean = total / count if count else float("nan")
    return DeviationReport(mean, per)
