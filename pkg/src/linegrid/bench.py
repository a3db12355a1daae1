"""Timing harness for segment suppression."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import GridSpec, Representation
from .loss import PredictorGrid, grid_to_batch
from .nms import NmsConfig, preset, suppress


@dataclass
class BenchRow:
    rows: int
    cols: int
    predictors: int
    segments: int
    above_threshold: float
    repetitions: int
    median_ms: float
    p95_ms: float
    fps: float
    total_s: float

    def as_dict(self) -> dict:
        return asdict(self)


def synthetic_frame(
    spec: GridSpec,
    predictors: int,
    rng: np.random.Generator,
    tau_c: float,
    active_fraction: float = 0.25,
    duplicates: int = 4,
    jitter_px: float = 2.0,
) -> PredictorGrid:
    """Cartesian grid where ``active_fraction`` of all slots are confident near-duplicates.

    Active cells receive one random border-to-border segment repeated
    ``duplicates`` times with endpoint jitter; every other slot is a random
    segment with confidence below ``tau_c``.
    """
    grid = PredictorGrid.empty(spec, Representation.CARTESIAN, predictors)
    shape = grid.confidence.shape
    grid.geometry[:] = rng.random(shape + (4,))
    grid.confidence[:] = rng.uniform(0.0, tau_c, shape)
    dup = min(duplicates, predictors)
    n_active = int(round(active_fraction * grid.confidence.size))
    cells = rng.permutation(spec.num_cells)[: -(-n_active // dup)]
    sigma = jitter_px / spec.cell_px
    left = n_active
    for flat in cells:
        r, c = divmod(int(flat), spec.cols)
        base = rng.random(4)
        k = min(dup, left)
        geom = base + rng.normal(0.0, sigma, (k, 4))
        grid.geometry[r, c, :k] = np.clip(geom, 0.0, 1.0)
        conf = rng.uniform(max(tau_c, 0.95), 1.0, k)
        grid.confidence[r, c, :k] = np.minimum(np.maximum(conf, np.nextafter(tau_c, 2.0)), 1.0)
        left -= k
    return grid


def bench_nms(
    grid_sizes: Sequence[Tuple[int, int]] = ((10, 20),),
    predictor_counts: Sequence[int] = (8,),
    repetitions: int = 50,
    cfg: Optional[NmsConfig] = None,
    cell_px: int = 32,
    seed: int = 0,
    warmup: int = 3,
) -> List[BenchRow]:
    """Median and p95 per-frame latency of grid decoding plus suppression.

    ``grid_sizes`` holds (rows, cols). Each repetition times a distinct
    pre-generated frame.
    """
    if repetitions <= 0:
        raise ValueError("empty benchmark")
    cfg = cfg or preset("tusimple")
    rng = np.random.default_rng(seed)
    report = []
    for rows, cols in grid_sizes:
        spec = GridSpec.from_cells(rows, cols, cell_px)
        size = (spec.image_width, spec.image_height)
        for p in predictor_counts:
            frames = [synthetic_frame(spec, p, rng, cfg.tau_c) for _ in range(repetitions)]
            above = float(np.mean([(f.confidence > cfg.tau_c).mean() for f in frames]))
            for f in frames[:warmup]:
                suppress(grid_to_batch(f), cfg, spec.kappa, size)
            times = np.empty(repetitions)
            t_all = time.perf_counter()
            for i, f in enumerate(frames):
                t0 = time.perf_counter()
                suppress(grid_to_batch(f), cfg, spec.kappa, size)
                times[i] = time.perf_counter() - t0
            total = time.perf_counter() - t_all
            med = float(np.median(times))
            report.append(BenchRow(
                rows, cols, p, rows * cols * p, above, repetitions,
                med * 1e3, float(np.percentile(times, 95)) * 1e3,
                1.0 / med if med > 0 else float("inf"), total,
            ))
    return report


def format_report(rows: Sequence[BenchRow]) -> str:
    lines = [f"{'grid':>8} {'P':>3} {'segs':>6} {'>tau_c':>7} {'median ms':>10} {'p95 ms':>8} {'fps':>8}"]
    for r in rows:
        lines.append(
            f"{r.rows:>3}x{r.cols:<4} {r.predictors:>3} {r.segments:>6} {r.above_threshold:>7.3f} "
            f"{r.median_ms:>10.3f} {r.p95_ms:>8.3f} {r.fps:>8.1f}"
        )
    return "\n".join(lines)
