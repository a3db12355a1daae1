"""Synthetic ground truth and a noisy stand-in for a trained predictor."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .discretize import CellGroundTruth, Polyline
from .geometry import (
    CartesianPoints,
    GridSpec,
    Representation,
    convert,
    project_to_border,
    to_cartesian,
)
from .loss import PredictorGrid


@dataclass(frozen=True)
class OracleConfig:
    jitter_sigma: float = 0.0
    duplicates_per_segment: int = 1
    spurious_rate: float = 0.0
    spurious_confidence_range: Tuple[float, float] = (0.0, 0.3)
    matched_confidence_range: Tuple[float, float] = (1.0, 1.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        if self.duplicates_per_segment < 1:
            raise ValueError("duplicates_per_segment must be >= 1")
        if not 0.0 <= self.spurious_rate <= 1.0:
            raise ValueError("spurious_rate must lie in [0, 1]")
        for lo, hi in (self.spurious_confidence_range, self.matched_confidence_range):
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError("confidence ranges must satisfy 0 <= lo <= hi <= 1")


@dataclass
class OracleReport:
    grid: PredictorGrid
    overflow: int
    emitted: int


def _on_border(pt, tol: float = 1e-9) -> bool:
    return min(pt[0], pt[1], 1.0 - pt[0], 1.0 - pt[1]) <= tol


def _jitter_local(rng: np.random.Generator, pt, sigma_local: float, rep: Representation):
    # Border endpoints slide along the border; clipping them instead would
    # shorten every jittered chord on average.
    keep_on_border = rep is not Representation.CARTESIAN or _on_border(pt)
    if sigma_local > 0:
        pt = (pt[0] + rng.normal(0.0, sigma_local), pt[1] + rng.normal(0.0, sigma_local))
    pt = (min(max(pt[0], 0.0), 1.0), min(max(pt[1], 0.0), 1.0))
    if keep_on_border:
        pt = project_to_border(pt)
    return pt


def _encode(s, e, rep: Representation):
    return convert(CartesianPoints(s, e), rep).as_vector()


def synth_oracle(
    gt: Sequence[CellGroundTruth],
    spec: GridSpec,
    representation,
    predictors: int,
    classes: int,
    cfg: OracleConfig = OracleConfig(),
) -> OracleReport:
    """Dense predictor grid built from ground truth.

    Every ground-truth segment is emitted ``duplicates_per_segment`` times
    with Gaussian endpoint jitter; remaining slots hold spurious segments
    (probability ``spurious_rate``) or zero-confidence placeholders.
    """
    rep = Representation(representation)
    rng = np.random.default_rng(cfg.seed)
    grid = PredictorGrid.empty(spec, rep, predictors, classes)
    by_cell = {(c.cell_row, c.cell_col): c for c in gt}
    sigma_local = cfg.jitter_sigma / spec.cell_px
    overflow = emitted = 0
    for r in range(spec.rows):
        for c in range(spec.cols):
            slot = 0
            cell = by_cell.get((r, c))
            if cell is not None:
                for seg in cell.segments:
                    cart = to_cartesian(seg.geometry)
                    for _ in range(cfg.duplicates_per_segment):
                        if slot >= predictors:
                            overflow += 1
                            continue
                        s = _jitter_local(rng, cart.start, sigma_local, rep)
                        e = _jitter_local(rng, cart.end, sigma_local, rep)
                        grid.geometry[r, c, slot] = _encode(s, e, rep)
                        if classes and seg.class_id is not None:
                            grid.classes[r, c, slot, int(seg.class_id)] = 1.0
                        grid.confidence[r, c, slot] = rng.uniform(*cfg.matched_confidence_range)
                        slot += 1
                        emitted += 1
            while slot < predictors:
                if cfg.spurious_rate > 0 and rng.random() < cfg.spurious_rate:
                    s = _jitter_local(rng, tuple(rng.random(2)), 0.0, rep)
                    e = _jitter_local(rng, tuple(rng.random(2)), 0.0, rep)
                    grid.geometry[r, c, slot] = _encode(s, e, rep)
                    if classes:
                        grid.classes[r, c, slot] = rng.dirichlet(np.ones(classes))
                    grid.confidence[r, c, slot] = rng.uniform(*cfg.spurious_confidence_range)
                slot += 1
    return OracleReport(grid, overflow, emitted)


def lane_scene(
    spec: GridSpec,
    rng: np.random.Generator,
    n_lanes: Optional[int] = None,
    vertex_spacing: float = 8.0,
) -> List[Polyline]:
    """Gently curved lane boundaries running from the image bottom upwards.

    Lanes fan out from a common vanishing region like a forward-facing
    camera view; each polyline starts at the bottom edge.
    """
    w, h = spec.image_width, spec.image_height
    if n_lanes is None:
        n_lanes = int(rng.integers(2, 5))
    horizon = h * rng.uniform(0.25, 0.4)
    vanish_x = w * rng.uniform(0.4, 0.6)
    bottoms = np.sort(rng.uniform(0.05 * w, 0.95 * w, n_lanes))
    # keep lanes apart at the bottom
    bottoms = np.linspace(bottoms[0], bottoms[-1], n_lanes) if n_lanes > 1 else bottoms
    bend = rng.uniform(-0.15, 0.15) * w
    lanes = []
    for x0 in bottoms:
        ys = np.arange(h, horizon, -vertex_spacing)
        t = (h - ys) / (h - horizon)
        xs = x0 + 0.6 * (vanish_x - x0) * t + bend * t * (1 - t)
        pts = [(float(x), float(y)) for x, y in zip(xs, ys) if 0.0 <= x <= w]
        if len(pts) >= 2:
            lanes.append(Polyline(tuple(pts), class_id=None))
    return lanes


def smooth_curves(spec: GridSpec, n: int, seed: int = 0, spacing: float = 2.0) -> List[Polyline]:
    """Random smooth sinusoidal arcs kept inside the image, for discretization studies."""
    rng = np.random.default_rng(seed)
    w, h = spec.image_width, spec.image_height
    out = []
    while len(out) < n:
        x0, y0 = rng.uniform(0.1 * w, 0.9 * w), rng.uniform(0.1 * h, 0.9 * h)
        heading = rng.uniform(0, 2 * math.pi)
        length = rng.uniform(0.3, 0.8) * min(w, h)
        amp = rng.uniform(0.02, 0.08) * length
        waves = rng.uniform(0.5, 1.5)
        s = np.arange(0.0, length + spacing / 2, spacing)
        off = amp * np.sin(2 * math.pi * waves * s / length)
        ux, uy = math.cos(heading), math.sin(heading)
        xs = x0 + s * ux - off * uy
        ys = y0 + s * uy + off * ux
        if xs.min() < 0 or xs.max() > w or ys.min() < 0 or ys.max() > h:
            continue
        out.append(Polyline(tuple(zip(xs.tolist(), ys.tolist()))))
    return out
