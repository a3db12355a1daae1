"""Sampled-point precision/recall for line segments against polylines."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .discretize import Polyline, sample_polyline
from .geometry import ImageSegment

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class EvalConfig:
    sample_px: float = 1.0
    tau_xy: float = 16.0
    tau_alpha: float = 0.15
    directed: bool = True
    per_class: bool = False

    def __post_init__(self) -> None:
        if min(self.sample_px, self.tau_xy, self.tau_alpha) <= 0:
            raise ValueError("sample spacing and match radii must be positive")

    @classmethod
    def for_grid(cls, cell_px: int, **kw) -> "EvalConfig":
        """Defaults with the position radius at half a cell."""
        kw.setdefault("tau_xy", cell_px / 2.0)
        return cls(**kw)

    @property
    def period(self) -> float:
        return TWO_PI if self.directed else math.pi


@dataclass
class EvalResult:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "EvalResult":
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision = 1.0 if fn == 0 else 0.0
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall = 1.0 if fp == 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return cls(tp, fp, fn, precision, recall, f1)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class Samples:
    """Sample points as columns; ``cls`` is -1 for unclassified."""

    x: np.ndarray
    y: np.ndarray
    alpha: np.ndarray
    cls: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if self.cls is None:
            self.cls = np.full(len(self.x), -1, dtype=int)

    def __len__(self) -> int:
        return len(self.x)

    @classmethod
    def concat(cls, parts: Sequence["Samples"]) -> "Samples":
        if not parts:
            return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0, dtype=int))
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("x", "y", "alpha", "cls")))


def _orientation(dx, dy, period: float):
    return np.mod(np.arctan2(dy, dx), period)


def sample_segment(seg: ImageSegment, cfg: EvalConfig = EvalConfig()) -> Samples:
    pts = sample_polyline([seg.start, seg.end], cfg.sample_px)
    dx, dy = seg.end[0] - seg.start[0], seg.end[1] - seg.start[1]
    a = float(_orientation(dx, dy, cfg.period))
    k = -1 if seg.class_id is None else seg.class_id
    n = len(pts)
    return Samples(pts[:, 0], pts[:, 1], np.full(n, a), np.full(n, k, dtype=int))


def sample_polyline_points(p: Polyline, cfg: EvalConfig = EvalConfig()) -> Samples:
    """Samples along the whole polyline; orientation of the edge each sample lies on."""
    pts = np.asarray(p.points, dtype=float)
    seg_len = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    samples = sample_polyline(pts, cfg.sample_px)
    total = cum[-1]
    n = len(samples)
    s = np.linspace(0.0, total, n) if n > 1 else np.zeros(1)
    edge = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg_len) - 1)
    d = np.diff(pts, axis=0)
    alpha = _orientation(d[edge, 0], d[edge, 1], cfg.period)
    k = -1 if p.class_id is None else p.class_id
    return Samples(samples[:, 0], samples[:, 1], alpha, np.full(n, k, dtype=int))


def sample(items: Iterable, cfg: EvalConfig = EvalConfig()) -> Samples:
    """Sample a mix of segments and polylines."""
    parts = []
    for it in items:
        if isinstance(it, ImageSegment):
            parts.append(sample_segment(it, cfg))
        elif isinstance(it, Polyline):
            parts.append(sample_polyline_points(it, cfg))
        else:
            raise TypeError(f"cannot sample {type(it).__name__}")
    return Samples.concat(parts)


def angle_gap(a, b, period: float):
    d = np.mod(np.abs(np.asarray(a) - np.asarray(b)), period)
    return np.minimum(d, period - d)


def candidate_pairs(gt: Samples, pred: Samples, cfg: EvalConfig, match_class: bool = False):
    """All admissible (gt, pred, distance) triples; distance is the max-norm in x/y."""
    if len(gt) == 0 or len(pred) == 0:
        return np.empty(0, int), np.empty(0, int), np.empty(0)
    tree = cKDTree(np.column_stack([pred.x, pred.y]))
    lists = tree.query_ball_point(np.column_stack([gt.x, gt.y]), cfg.tau_xy, p=np.inf)
    counts = np.fromiter((len(l) for l in lists), dtype=int, count=len(lists))
    gi = np.repeat(np.arange(len(gt)), counts)
    pi = np.fromiter((k for l in lists for k in l), dtype=int, count=int(counts.sum()))
    dist = np.maximum(np.abs(gt.x[gi] - pred.x[pi]), np.abs(gt.y[gi] - pred.y[pi]))
    ok = angle_gap(gt.alpha[gi], pred.alpha[pi], cfg.period) <= cfg.tau_alpha
    if match_class:
        ok &= gt.cls[gi] == pred.cls[pi]
    return gi[ok], pi[ok], dist[ok]


def greedy_match(gi: np.ndarray, pi: np.ndarray, dist: np.ndarray, n_gt: int, n_pred: int) -> List[Tuple[int, int]]:
    """One-to-one matching taking the closest free pair first (ties: gt index, then pred index)."""
    order = np.lexsort((pi, gi, dist))
    used_g = np.zeros(n_gt, dtype=bool)
    used_p = np.zeros(n_pred, dtype=bool)
    pairs = []
    for o in order:
        g, p = gi[o], pi[o]
        if used_g[g] or used_p[p]:
            continue
        used_g[g] = used_p[p] = True
        pairs.append((int(g), int(p)))
    return pairs


def match_points(gt: Samples, pred: Samples, cfg: EvalConfig = EvalConfig()) -> Tuple[int, int, int]:
    gi, pi, dist = candidate_pairs(gt, pred, cfg, match_class=cfg.per_class)
    tp = len(greedy_match(gi, pi, dist, len(gt), len(pred)))
    return tp, len(pred) - tp, len(gt) - tp


def evaluate(
    gt: Sequence[Polyline],
    pred: Sequence,
    cfg: EvalConfig = EvalConfig(),
) -> EvalResult:
    """Sample both sides, match, and score. ``pred`` may hold segments and/or polylines."""
    return EvalResult.from_counts(*match_points(sample(gt, cfg), sample(pred, cfg), cfg))


def evaluate_many(pairs: Iterable[Tuple[Sequence[Polyline], Sequence]], cfg: EvalConfig = EvalConfig()):
    """Micro-averaged result over images plus the per-image results."""
    per_image = [evaluate(g, p, cfg) for g, p in pairs]
    tp = sum(r.tp for r in per_image)
    fp = sum(r.fp for r in per_image)
    fn = sum(r.fn for r in per_image)
    return EvalResult.from_counts(tp, fp, fn), per_image


def class_confusion(gt: Samples, pred: Samples, cfg: EvalConfig) -> Dict[Tuple[int, int], int]:
    """Counts of (gt class, predicted class) over class-agnostic matches."""
    gi, pi, dist = candidate_pairs(gt, pred, cfg, match_class=False)
    out: Dict[Tuple[int, int], int] = {}
    for g, p in greedy_match(gi, pi, dist, len(gt), len(pred)):
        key = (int(gt.cls[g]), int(pred.cls[p]))
        out[key] = out.get(key, 0) + 1
    return out


def format_table(result: EvalResult, cfg: EvalConfig, title: str = "aggregate") -> str:
    lines = [
        f"# tau_xy={cfg.tau_xy:g}px tau_alpha={cfg.tau_alpha:g}rad sample={cfg.sample_px:g}px "
        f"directed={cfg.directed} per_class={cfg.per_class}",
        f"{'scope':<12} {'tp':>8} {'fp':>8} {'fn':>8} {'prec':>7} {'rec':>7} {'f1':>7}",
        f"{title:<12} {result.tp:>8} {result.fp:>8} {result.fn:>8} "
        f"{result.precision:>7.4f} {result.recall:>7.4f} {result.f1:>7.4f}",
    ]
    return "\n".join(lines)
