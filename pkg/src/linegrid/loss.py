"""Responsibility matching and the four-term training loss.

Predictions are held densely, like a network output tensor: geometry
``(rows, cols, P, k)``, class scores ``(rows, cols, P, C)`` and
confidences ``(rows, cols, P)``. Distances are evaluated on the raw
geometry vectors, so Euler components are not renormalized here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .discretize import CellGroundTruth, CellSegment
from .geometry import (
    GridSpec,
    Representation,
    SegmentGeometry,
    geometry_from_vector,
    representation_of,
)


@dataclass(frozen=True)
class Predictor:
    g: SegmentGeometry
    l: Tuple[float, ...] = ()
    c: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "l", tuple(float(v) for v in self.l))
        object.__setattr__(self, "c", min(max(float(self.c), 0.0), 1.0))
        if any(v < 0 for v in self.l):
            raise ValueError("class scores must be non-negative")


@dataclass
class PredictorGrid:
    spec: GridSpec
    representation: Representation
    geometry: np.ndarray
    classes: np.ndarray
    confidence: np.ndarray

    def __post_init__(self) -> None:
        self.representation = Representation(self.representation)
        rows, cols = self.spec.rows, self.spec.cols
        self.geometry = np.asarray(self.geometry, dtype=float)
        self.confidence = np.asarray(self.confidence, dtype=float)
        p = self.confidence.shape[-1] if self.confidence.ndim == 3 else 0
        self.classes = np.asarray(self.classes, dtype=float).reshape(rows, cols, p, -1)
        if self.geometry.shape != (rows, cols, p, self.representation.size):
            raise ValueError(f"geometry shape {self.geometry.shape} does not match grid")
        if self.confidence.shape != (rows, cols, p):
            raise ValueError(f"confidence shape {self.confidence.shape} does not match grid")

    @classmethod
    def empty(cls, spec: GridSpec, representation, predictors: int, classes: int = 0) -> "PredictorGrid":
        """All-placeholder grid: zero confidence, geometry at a valid default."""
        rep = Representation(representation)
        shape = (spec.rows, spec.cols, predictors)
        geom = np.zeros(shape + (rep.size,))
        if rep is Representation.EULER:
            geom[..., 0] = geom[..., 2] = 1.0
        return cls(spec, rep, geom, np.zeros(shape + (classes,)), np.zeros(shape))

    @property
    def P(self) -> int:
        return self.confidence.shape[2]

    @property
    def C(self) -> int:
        return self.classes.shape[3]

    def cell(self, row: int, col: int) -> List[Predictor]:
        return [self.predictor(row, col, k) for k in range(self.P)]

    def predictor(self, row: int, col: int, k: int) -> Predictor:
        return Predictor(
            geometry_from_vector(self.representation, self.geometry[row, col, k]),
            tuple(self.classes[row, col, k]),
            float(self.confidence[row, col, k]),
        )

    def set_predictor(self, row: int, col: int, k: int, pred: Predictor) -> None:
        if representation_of(pred.g) is not self.representation:
            raise ValueError("representation mismatch")
        if len(pred.l) != self.C:
            raise ValueError(f"class vector length {len(pred.l)} != {self.C}")
        self.geometry[row, col, k] = pred.g.as_vector()
        self.classes[row, col, k] = pred.l
        self.confidence[row, col, k] = pred.c

    def copy(self) -> "PredictorGrid":
        return PredictorGrid(self.spec, self.representation, self.geometry.copy(),
                             self.classes.copy(), self.confidence.copy())


@dataclass(frozen=True)
class Assignment:
    """Matched (gt index, predictor index) pairs of one cell, in matching order."""

    pairs: Tuple[Tuple[int, int], ...]

    @property
    def predictors(self) -> frozenset:
        return frozenset(k for _, k in self.pairs)


@dataclass(frozen=True)
class LossWeights:
    loc: float = 1.0
    resp: float = 1.0
    noresp: float = 1.0
    cls: float = 1.0


@dataclass
class LossBreakdown:
    loc: float
    resp: float
    noresp: float
    class_term: float
    total: float
    weights: LossWeights
    assigned: int = 0
    unmatched_gt: int = 0


@dataclass
class LossGradient:
    """Gradients of the weighted total with respect to the dense prediction arrays."""

    geometry: np.ndarray
    classes: np.ndarray
    confidence: np.ndarray
    breakdown: LossBreakdown = field(repr=False, default=None)


# --- distances on flat vectors -------------------------------------------


def distance_matrix(rep: Representation, gt: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Pairwise distances, shape (L, P)."""
    rep = Representation(rep)
    diff = pred[None, :, :] - gt[:, None, :]
    if rep is Representation.CARTESIAN:
        return np.hypot(diff[..., 0], diff[..., 1]) + np.hypot(diff[..., 2], diff[..., 3])
    if rep is Representation.BORDER1D:
        a = np.abs(diff)
        return np.minimum(a, np.abs(1.0 - a)).sum(axis=-1)
    return 0.25 * np.sqrt((diff ** 2).sum(axis=-1))


def _distance_grad(rep: Representation, gt: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """d distance(gt[i], pred[i]) / d pred[i] for row-aligned pairs."""
    diff = pred - gt
    if rep is Representation.CARTESIAN:
        out = np.empty_like(diff)
        for sl in (slice(0, 2), slice(2, 4)):
            n = np.linalg.norm(diff[:, sl], axis=1, keepdims=True)
            out[:, sl] = np.divide(diff[:, sl], n, out=np.zeros_like(diff[:, sl]), where=n > 0)
        return out
    if rep is Representation.BORDER1D:
        a = np.abs(diff)
        s = np.sign(diff)
        return np.where(a < np.abs(1.0 - a), s, np.sign(1.0 - a) * -s)
    n = np.linalg.norm(diff, axis=1, keepdims=True)
    return 0.25 * np.divide(diff, n, out=np.zeros_like(diff), where=n > 0)


def greedy_assign(dist: np.ndarray) -> Tuple[Tuple[int, int], ...]:
    """Repeatedly take the globally closest free pair; ties go to lower gt, then lower predictor index."""
    L, P = dist.shape
    if L == 0 or P == 0:
        return ()
    jj, kk = np.meshgrid(np.arange(L), np.arange(P), indexing="ij")
    order = np.lexsort((kk.ravel(), jj.ravel(), dist.ravel()))
    used_g = np.zeros(L, dtype=bool)
    used_p = np.zeros(P, dtype=bool)
    pairs = []
    n = min(L, P)
    for flat in order:
        j, k = divmod(int(flat), P)
        if used_g[j] or used_p[k]:
            continue
        used_g[j] = used_p[k] = True
        pairs.append((j, k))
        if len(pairs) == n:
            break
    return tuple(pairs)


# --- per-cell API ----------------------------------------------------------


def _segments(gt) -> Sequence[CellSegment]:
    return gt.segments if isinstance(gt, CellGroundTruth) else gt


def _check_rep(segs: Sequence[CellSegment], preds: Sequence[Predictor], metric) -> Representation:
    reps = {representation_of(s.geometry) for s in segs} | {representation_of(p.g) for p in preds}
    if metric is not None:
        reps.add(Representation(metric))
    if len(reps) > 1:
        raise ValueError(f"representation mismatch: {sorted(r.value for r in reps)}")
    return reps.pop() if reps else Representation.CARTESIAN


def match(gt, preds: Sequence[Predictor], metric=None) -> Assignment:
    segs = _segments(gt)
    rep = _check_rep(segs, preds, metric)
    if not segs or not preds:
        return Assignment(())
    g = np.array([s.geometry.as_vector() for s in segs])
    p = np.array([q.g.as_vector() for q in preds])
    return Assignment(greedy_assign(distance_matrix(rep, g, p)))


def loss_loc(assignment: Assignment, gt, preds: Sequence[Predictor], metric=None) -> float:
    segs = _segments(gt)
    rep = _check_rep(segs, preds, metric)
    total = 0.0
    for j, k in assignment.pairs:
        g = np.array([segs[j].geometry.as_vector()])
        p = np.array([preds[k].g.as_vector()])
        total += float(distance_matrix(rep, g, p)[0, 0])
    return total


def loss_conf(assignment: Assignment, preds: Sequence[Predictor]) -> Tuple[float, float]:
    chosen = assignment.predictors
    resp = sum((p.c - 1.0) ** 2 for k, p in enumerate(preds) if k in chosen)
    noresp = sum(p.c ** 2 for k, p in enumerate(preds) if k not in chosen)
    return float(resp), float(noresp)


def class_target(class_id, num_classes: int) -> Optional[np.ndarray]:
    """One-hot target; soft targets pass through; None means no class supervision."""
    if num_classes == 0 or class_id is None:
        return None
    if isinstance(class_id, (tuple, list, np.ndarray)):
        t = np.asarray(class_id, dtype=float)
        if t.shape != (num_classes,):
            raise ValueError(f"class target length {t.shape} != {num_classes}")
        return t
    if not 0 <= int(class_id) < num_classes:
        raise ValueError(f"class id {class_id} outside [0, {num_classes})")
    t = np.zeros(num_classes)
    t[int(class_id)] = 1.0
    return t


def loss_class(assignment: Assignment, gt, preds: Sequence[Predictor]) -> float:
    segs = _segments(gt)
    total = 0.0
    for j, k in assignment.pairs:
        lvec = np.asarray(preds[k].l, dtype=float)
        t = class_target(segs[j].class_id, len(lvec))
        if t is None:
            continue
        total += float(((lvec - t) ** 2).sum())
    return total


# --- whole grid --------------------------------------------------------------


def _evaluate(
    grid_gt: Sequence[CellGroundTruth],
    spec: GridSpec,
    rep: Representation,
    geometry: np.ndarray,
    classes: np.ndarray,
    confidence: np.ndarray,
    weights: LossWeights,
    want_grad: bool,
):
    C = classes.shape[-1]
    loc = resp = cls_term = 0.0
    assigned_mask = np.zeros(confidence.shape, dtype=bool)
    n_assigned = n_unmatched = 0
    g_geom = np.zeros_like(geometry) if want_grad else None
    g_cls = np.zeros_like(classes) if want_grad else None
    seen = set()
    for cell in grid_gt:
        r, c = cell.cell_row, cell.cell_col
        if not (0 <= r < spec.rows and 0 <= c < spec.cols):
            raise ValueError(f"ground-truth cell ({r}, {c}) outside grid")
        if (r, c) in seen:
            raise ValueError(f"duplicate ground-truth cell ({r}, {c})")
        seen.add((r, c))
        segs = cell.segments
        if not segs:
            continue
        for s in segs:
            if representation_of(s.geometry) is not rep:
                raise ValueError("representation mismatch between ground truth and grid")
        gvec = np.array([s.geometry.as_vector() for s in segs])
        pvec = geometry[r, c]
        pairs = greedy_assign(distance_matrix(rep, gvec, pvec))
        n_assigned += len(pairs)
        n_unmatched += len(segs) - len(pairs)
        if not pairs:
            continue
        js = np.array([j for j, _ in pairs])
        ks = np.array([k for _, k in pairs])
        d = distance_matrix(rep, gvec[js], pvec[ks]).diagonal()
        loc += float(d.sum())
        assigned_mask[r, c, ks] = True
        if want_grad:
            g_geom[r, c, ks] = weights.loc * _distance_grad(rep, gvec[js], pvec[ks])
        for j, k in pairs:
            t = class_target(segs[j].class_id, C)
            if t is None:
                continue
            diff = classes[r, c, k] - t
            cls_term += float((diff ** 2).sum())
            if want_grad:
                g_cls[r, c, k] = weights.cls * 2.0 * diff
    resp = float(((confidence[assigned_mask] - 1.0) ** 2).sum())
    noresp = float((confidence[~assigned_mask] ** 2).sum())
    total = weights.loc * loc + weights.resp * resp + weights.noresp * noresp + weights.cls * cls_term
    bd = LossBreakdown(loc, resp, noresp, cls_term, total, weights, n_assigned, n_unmatched)
    if not want_grad:
        return bd
    g_conf = np.where(assigned_mask, weights.resp * 2.0 * (confidence - 1.0), weights.noresp * 2.0 * confidence)
    return LossGradient(g_geom, g_cls, g_conf, bd)


def total_loss(
    grid_gt: Sequence[CellGroundTruth],
    grid: PredictorGrid,
    weights: LossWeights = LossWeights(),
    metric=None,
) -> LossBreakdown:
    if metric is not None and Representation(metric) is not grid.representation:
        raise ValueError("metric does not match the grid representation")
    return _evaluate(grid_gt, grid.spec, grid.representation, grid.geometry, grid.classes,
                     grid.confidence, weights, want_grad=False)


def loss_gradient(
    grid_gt: Sequence[CellGroundTruth],
    grid: PredictorGrid,
    weights: LossWeights = LossWeights(),
) -> LossGradient:
    """Analytic gradient of the weighted total for the current (fixed) assignment."""
    return _evaluate(grid_gt, grid.spec, grid.representation, grid.geometry, grid.classes,
                     grid.confidence, weights, want_grad=True)


def assignments(grid_gt: Sequence[CellGroundTruth], grid: PredictorGrid) -> Dict[Tuple[int, int], Assignment]:
    out = {}
    for cell in grid_gt:
        gvec = np.array([s.geometry.as_vector() for s in cell.segments]).reshape(-1, grid.representation.size)
        pvec = grid.geometry[cell.cell_row, cell.cell_col]
        out[(cell.cell_row, cell.cell_col)] = Assignment(greedy_assign(distance_matrix(grid.representation, gvec, pvec)))
    return out


def grid_to_batch(grid: PredictorGrid, min_confidence: float = 0.0):
    """All predictors with confidence above ``min_confidence`` as image-space segments."""
    from .geometry import cartesian_array
    from .nms import SegmentBatch

    spec = grid.spec
    cart = cartesian_array(grid.representation, grid.geometry)
    rows = np.arange(spec.rows)[:, None, None]
    cols = np.arange(spec.cols)[None, :, None]
    s = spec.cell_px
    sx = np.clip((cols + cart[..., 0]) * s, 0, spec.image_width)
    sy = np.clip((rows + cart[..., 1]) * s, 0, spec.image_height)
    ex = np.clip((cols + cart[..., 2]) * s, 0, spec.image_width)
    ey = np.clip((rows + cart[..., 3]) * s, 0, spec.image_height)
    keep = grid.confidence > min_confidence
    if grid.C:
        cls = np.where(grid.classes.max(axis=-1) > 0, grid.classes.argmax(axis=-1), -1)
    else:
        cls = np.full(grid.confidence.shape, -1)
    return SegmentBatch(
        np.column_stack([sx[keep], sy[keep]]),
        np.column_stack([ex[keep], ey[keep]]),
        grid.confidence[keep].copy(),
        cls[keep].astype(int),
    )
