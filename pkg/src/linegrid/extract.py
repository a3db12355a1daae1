"""Lane-boundary polylines from suppressed segments.

Segments pointing upwards are chained end-to-start into trees. Each tree is
traversed breadth-first from its topmost segment, every depth level is
collapsed into one confidence-weighted point, and the resulting point
sequence is smoothed with a parametric B-spline.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import interpolate

from .discretize import Polyline
from .geometry import GridSpec, ImageSegment
from .nms import SegmentBatch

NO_LANE = -2.0


@dataclass(frozen=True)
class ExtractConfig:
    max_downward: float = 0.25
    successor_radius: float = 0.75
    min_segments: int = 10
    spline_degree: int = 3
    spline_smoothing: float = 0.05
    # Apply the bottom-row clause to successor candidates; False applies it to nothing.
    restrict_candidates: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.max_downward <= 1.0:
            raise ValueError("max_downward must lie in [0, 1]")
        if self.successor_radius <= 0:
            raise ValueError("successor_radius must be positive")
        if self.min_segments < 1:
            raise ValueError("min_segments must be >= 1")
        if not 1 <= self.spline_degree <= 5:
            raise ValueError("spline_degree must lie in [1, 5]")
        if self.spline_smoothing < 0:
            raise ValueError("spline_smoothing must be >= 0")


@dataclass
class ExtractedPolyline:
    """One lane instance. ``levels`` holds input segment indices, root level first;
    ``raw_points`` runs the other way, from the deepest level up to the root."""

    raw_points: np.ndarray
    spline_points: np.ndarray
    instance_id: int
    levels: List[Tuple[int, ...]] = field(default_factory=list)

    def to_polyline(self, class_id: Optional[int] = None) -> Polyline:
        pts = _dedupe(self.spline_points)
        if len(pts) < 2:
            pts = _dedupe(self.raw_points)
        return Polyline(tuple(map(tuple, pts.tolist())), class_id)


@dataclass
class SplineFit:
    """Parametric spline on per-axis normalized coordinates, evaluated in image px."""

    tck: Optional[tuple]
    u: np.ndarray
    offset: np.ndarray
    scale: np.ndarray
    residual: float
    points: np.ndarray

    def __call__(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.tck is None:
            if len(self.points) == 1:
                return np.repeat(self.points, len(u), axis=0)
            return np.column_stack([np.interp(u, self.u, self.points[:, d]) for d in range(2)])
        xy = np.column_stack(interpolate.splev(u, self.tck))
        return xy * self.scale + self.offset


def _dedupe(pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return pts
    keep = np.concatenate([[True], np.any(np.diff(pts, axis=0) != 0, axis=1)])
    return pts[keep]


def chord_parameter(points: np.ndarray) -> np.ndarray:
    """Cumulative chord length scaled to [0, 1]."""
    pts = np.asarray(points, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    return cum / cum[-1] if cum[-1] > 0 else cum


def fit_spline(points, degree: int = 3, smoothing: float = 0.05) -> SplineFit:
    """Smoothing spline through ``points`` with residual sum of squares <= ``smoothing``.

    Coordinates are normalized to [0, 1] per axis before fitting, so the
    smoothing budget is independent of image size. The degree drops to
    ``len(points) - 1`` for very short inputs.
    """
    pts = _dedupe(points)
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    scale = np.where(span > 0, span, 1.0)
    u = chord_parameter(pts)
    k = min(degree, len(pts) - 1)
    if k < 1:
        return SplineFit(None, u, lo, scale, 0.0, pts)
    norm = (pts - lo) / scale
    (tck, u_out), fp, _, _ = interpolate.splprep(
        [norm[:, 0], norm[:, 1]], u=u, k=k, s=smoothing, full_output=1, quiet=1
    )
    return SplineFit(tck, np.asarray(u_out), lo, scale, float(fp), pts)


def _arrays(segments):
    b = SegmentBatch.from_segments(segments)
    return b.starts, b.ends, b.confidence


def _downward_mask(starts: np.ndarray, ends: np.ndarray, cfg: ExtractConfig, spec: GridSpec) -> np.ndarray:
    return (ends[:, 1] - starts[:, 1]) <= cfg.max_downward * spec.cell_px


def filter_downward(segments: Sequence[ImageSegment], cfg: ExtractConfig, spec: GridSpec) -> List[ImageSegment]:
    """Drop segments descending by more than ``max_downward`` cells (image y grows downwards)."""
    if len(segments) == 0:
        return []
    starts, ends, _ = _arrays(segments)
    keep = _downward_mask(starts, ends, cfg, spec)
    return [s for s, k in zip(segments, keep) if k]


def _successors(starts: np.ndarray, ends: np.ndarray, cfg: ExtractConfig, spec: GridSpec) -> Dict[int, int]:
    n = len(starts)
    if n < 2:
        return {}
    d = np.linalg.norm(ends[:, None, :] - starts[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    if cfg.restrict_candidates:
        bottom_half = starts[:, 1] >= spec.image_height - spec.cell_px / 2.0
        d[:, bottom_half] = np.inf
    best = np.argmin(d, axis=1)
    ok = d[np.arange(n), best] < cfg.successor_radius * spec.cell_px
    return {int(i): int(best[i]) for i in np.flatnonzero(ok)}


def build_adjacency(segments: Sequence[ImageSegment], cfg: ExtractConfig, spec: GridSpec) -> Dict[int, int]:
    """Successor index per segment: the nearest start point to its end point, if in reach.

    Several segments may share one successor. Segments without an entry are roots.
    """
    if len(segments) == 0:
        return {}
    starts, ends, _ = _arrays(segments)
    return _successors(starts, ends, cfg, spec)


def bfs_levels(n: int, successor: Dict[int, int], heights: Optional[np.ndarray] = None) -> List[List[Tuple[int, ...]]]:
    """Trees as lists of depth levels, one per root.

    Roots are nodes without a successor. Components that contain only a
    cycle get rooted at their node of greatest ``heights`` value, which
    cuts the cycle at that node's outgoing link.
    """
    preds: List[List[int]] = [[] for _ in range(n)]
    for i, j in sorted(successor.items()):
        preds[j].append(i)
    visited = np.zeros(n, dtype=bool)

    def walk(root: int) -> List[Tuple[int, ...]]:
        levels = []
        visited[root] = True
        frontier = [root]
        while frontier:
            levels.append(tuple(frontier))
            nxt = []
            for i in frontier:
                for p in preds[i]:
                    if not visited[p]:
                        visited[p] = True
                        nxt.append(p)
            frontier = sorted(nxt)
        return levels

    trees = [walk(r) for r in range(n) if r not in successor]
    if heights is None:
        heights = np.zeros(n)
    while not visited.all():
        rest = np.flatnonzero(~visited)
        root = int(rest[np.argmax(heights[rest])])
        trees.append(walk(root))
    return trees


def _level_points(levels, mids: np.ndarray, conf: np.ndarray) -> np.ndarray:
    out = []
    for lvl in levels:
        idx = np.asarray(lvl)
        w = conf[idx]
        if w.sum() > 0:
            out.append((w[:, None] * mids[idx]).sum(axis=0) / w.sum())
        else:
            out.append(mids[idx].mean(axis=0))
    return np.asarray(out[::-1])


def extract(segments, cfg: ExtractConfig = ExtractConfig(), spec: Optional[GridSpec] = None) -> List[ExtractedPolyline]:
    """Filter, link, traverse, average and smooth. Returns the surviving lane instances."""
    if spec is None:
        raise ValueError("extract needs the grid spec for cell-relative thresholds")
    if len(segments) == 0:
        return []
    starts, ends, conf = _arrays(segments)
    kept = np.flatnonzero(_downward_mask(starts, ends, cfg, spec))
    starts, ends, conf = starts[kept], ends[kept], conf[kept]
    mids = (starts + ends) / 2.0
    succ = _successors(starts, ends, cfg, spec)

    out = []
    for levels in bfs_levels(len(kept), succ, mids[:, 1]):
        if len(levels) < cfg.min_segments:
            continue
        raw = _level_points(levels, mids, conf)
        fit = fit_spline(raw, cfg.spline_degree, cfg.spline_smoothing)
        total = float(np.linalg.norm(np.diff(fit.points, axis=0), axis=1).sum())
        n = max(len(raw), int(math.ceil(total)) + 1)
        dense = fit(np.linspace(0.0, 1.0, n))
        dense[:, 0] = np.clip(dense[:, 0], 0.0, spec.image_width)
        dense[:, 1] = np.clip(dense[:, 1], 0.0, spec.image_height)
        orig = [tuple(int(kept[i]) for i in lvl) for lvl in levels]
        out.append(ExtractedPolyline(raw, dense, len(out), orig))
    return out


def tusimple_lanes(polylines: Sequence, h_samples: Sequence[float]) -> List[List[float]]:
    """Per-lane x positions at fixed image rows, ``-2`` where a lane does not reach the row."""
    lanes = []
    for p in polylines:
        pts = p.spline_points if isinstance(p, ExtractedPolyline) else np.asarray(p.points, dtype=float)
        xs = []
        for h in h_samples:
            x = NO_LANE
            for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
                if min(y0, y1) <= h <= max(y0, y1):
                    x = float(x0) if y1 == y0 else float(x0 + (h - y0) / (y1 - y0) * (x1 - x0))
                    break
            xs.append(x)
        lanes.append(xs)
    return lanes
