"""Non-maximum suppression for line segments via weighted DBSCAN.

Segments above the confidence threshold are mapped to a 5-vector
(midpoint x/y, length, direction x/y), clustered, and each cluster is
replaced by its weighted mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import ImageSegment

NOISE = -1


@dataclass(frozen=True)
class NmsConfig:
    tau_c: float = 0.9
    lambda_l: float = 0.013
    lambda_m: float = 2.0
    lambda_d: float = 0.05
    epsilon: float = 0.02
    min_weight: float = 2.0
    weight_exponent: float = 10.0
    # "printed": d = lambda_d * delta / scaled_length; "unit": d = lambda_d * delta / |delta|
    direction_mode: str = "printed"
    # image-coordinate unit fed into the formulas: "pixel" or "normalized" (divided by image width)
    frame: str = "pixel"
    # representative confidence: "max" or "mean" (weighted)
    confidence_mode: str = "max"

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau_c <= 1.0:
            raise ValueError("tau_c must lie in [0, 1]")
        if min(self.lambda_l, self.lambda_m, self.lambda_d) <= 0:
            raise ValueError("lambda scales must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.min_weight < 1:
            raise ValueError("min_weight must be >= 1")
        if self.direction_mode not in ("printed", "unit"):
            raise ValueError(f"unknown direction_mode {self.direction_mode!r}")
        if self.frame not in ("pixel", "normalized"):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.confidence_mode not in ("max", "mean"):
            raise ValueError(f"unknown confidence_mode {self.confidence_mode!r}")

    def with_overrides(self, **kw) -> "NmsConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


# Per-dataset thresholds and scales. The pipeline presets cluster in
# width-normalized coordinates with unit directions; see README.
PRESETS = {
    "argoverse": NmsConfig(tau_c=0.99, lambda_l=0.016, lambda_m=1.5, lambda_d=0.05,
                           direction_mode="unit", frame="normalized"),
    "kai": NmsConfig(tau_c=0.95, lambda_l=0.013, lambda_m=1.5, lambda_d=0.05,
                     direction_mode="unit", frame="normalized"),
    "tusimple": NmsConfig(tau_c=0.9, lambda_l=0.013, lambda_m=2.0, lambda_d=0.05,
                          direction_mode="unit", frame="normalized"),
}


def preset(name: str) -> NmsConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class NmsCoordinate:
    m_x: float
    m_y: float
    len: float
    d_x: float
    d_y: float
    weight: float
    source: Optional[ImageSegment] = None

    def as_vector(self) -> Tuple[float, float, float, float, float]:
        return (self.m_x, self.m_y, self.len, self.d_x, self.d_y)


@dataclass
class ClusterResult:
    segments: List[ImageSegment]
    cluster_sizes: List[int]
    noise_count: int
    degenerate_count: int = 0
    kept_count: int = 0
    labels: np.ndarray = field(default=None, repr=False)


def _frame_scale(cfg: NmsConfig, image_size: Optional[Tuple[float, float]]) -> float:
    if cfg.frame == "pixel":
        return 1.0
    if image_size is None:
        raise ValueError("normalized frame needs the image size")
    return 1.0 / float(image_size[0])


def encode(
    starts: np.ndarray,
    ends: np.ndarray,
    conf: np.ndarray,
    cfg: NmsConfig,
    kappa: float,
    image_size: Optional[Tuple[float, float]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized NMS coordinates (N, 5) and weights (N,) for non-degenerate segments."""
    u = _frame_scale(cfg, image_size)
    s = starts * u
    e = ends * u
    m = cfg.lambda_m * kappa * (e + s) / 2.0
    delta = e - s
    norm = np.hypot(delta[:, 0], delta[:, 1])
    length = cfg.lambda_l * norm
    denom = length if cfg.direction_mode == "printed" else norm
    d = cfg.lambda_d * delta / denom[:, None]
    x = np.column_stack([m, length, d])
    return x, np.power(conf, cfg.weight_exponent)


def decode(
    x: np.ndarray, cfg: NmsConfig, kappa: float, image_size: Optional[Tuple[float, float]] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Invert :func:`encode`: (starts, ends) in pixels. Direction is renormalized."""
    u = _frame_scale(cfg, image_size)
    mid = x[:, 0:2] / (cfg.lambda_m * kappa)
    length = x[:, 2] / cfg.lambda_l
    d = x[:, 3:5]
    dn = np.hypot(d[:, 0], d[:, 1])
    unit = d / np.where(dn > 0, dn, 1.0)[:, None]
    half = (length / 2.0)[:, None] * unit
    return (mid - half) / u, (mid + half) / u


def to_nms_coords(
    seg: ImageSegment, cfg: NmsConfig, kappa: float, image_size: Optional[Tuple[float, float]] = None
) -> NmsCoordinate:
    if seg.length == 0.0:
        raise ValueError("zero-length segment has no direction")
    x, w = encode(np.array([seg.start], float), np.array([seg.end], float),
                  np.array([seg.confidence]), cfg, kappa, image_size)
    return NmsCoordinate(*map(float, x[0]), float(w[0]), seg)


def from_nms_coords(
    coord: NmsCoordinate, cfg: NmsConfig, kappa: float, image_size: Optional[Tuple[float, float]] = None
) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    s, e = decode(np.array([coord.as_vector()]), cfg, kappa, image_size)
    return (float(s[0, 0]), float(s[0, 1])), (float(e[0, 0]), float(e[0, 1]))


def weighted_dbscan(x: np.ndarray, weights: np.ndarray, eps: float, min_weight: float) -> np.ndarray:
    """DBSCAN labels where a point is core iff the weights within ``eps`` (inclusive) reach ``min_weight``.

    Clusters are numbered in order of their lowest-index core point and a
    border point joins the first such cluster it touches, which is what a
    sequential scan in index order produces.
    """
    n = len(x)
    labels = np.full(n, NOISE, dtype=int)
    if n == 0:
        return labels
    pairs = cKDTree(x).query_pairs(eps, output_type="ndarray")
    i, j = pairs[:, 0], pairs[:, 1]
    density = weights.astype(float).copy()
    np.add.at(density, i, weights[j])
    np.add.at(density, j, weights[i])
    core = density >= min_weight
    if not core.any():
        return labels

    both = core[i] & core[j]
    graph = coo_matrix((np.ones(both.sum()), (i[both], j[both])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    core_idx = np.flatnonzero(core)
    # relabel components by first core member
    first = {}
    for idx in core_idx:
        first.setdefault(comp[idx], len(first))
    cluster_of = np.full(n, NOISE, dtype=int)
    cluster_of[core_idx] = [first[comp[idx]] for idx in core_idx]
    labels[core] = cluster_of[core]

    # border points: smallest cluster id among core neighbours
    border = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    for a, b in ((i, j), (j, i)):
        m = core[b] & ~core[a]
        np.minimum.at(border, a[m], cluster_of[b[m]])
    has = border != np.iinfo(np.int64).max
    labels[has] = border[has]
    return labels


def dbscan(points: Sequence[NmsCoordinate], cfg: NmsConfig) -> np.ndarray:
    x = np.array([p.as_vector() for p in points], dtype=float).reshape(-1, 5)
    w = np.array([p.weight for p in points], dtype=float)
    return weighted_dbscan(x, w, cfg.epsilon, cfg.min_weight)


def _as_arrays(segments) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(segments, SegmentBatch):
        return segments.starts, segments.ends, segments.confidence, segments.class_ids
    n = len(segments)
    starts = np.array([s.start for s in segments], dtype=float).reshape(n, 2)
    ends = np.array([s.end for s in segments], dtype=float).reshape(n, 2)
    conf = np.array([s.confidence for s in segments], dtype=float)
    cls = np.array([-1 if s.class_id is None else s.class_id for s in segments], dtype=int)
    return starts, ends, conf, cls


@dataclass
class SegmentBatch:
    """Column-wise segments; class id -1 means unclassified."""

    starts: np.ndarray
    ends: np.ndarray
    confidence: np.ndarray
    class_ids: np.ndarray

    @classmethod
    def from_segments(cls, segments: Sequence[ImageSegment]) -> "SegmentBatch":
        return cls(*_as_arrays(segments))

    def __len__(self) -> int:
        return len(self.confidence)

    def to_segments(self) -> List[ImageSegment]:
        return [
            ImageSegment(tuple(map(float, s)), tuple(map(float, e)), float(c), None if k < 0 else int(k))
            for s, e, c, k in zip(self.starts, self.ends, self.confidence, self.class_ids)
        ]


def suppress(
    segments,
    cfg: NmsConfig,
    kappa: float = 1.0,
    image_size: Optional[Tuple[float, float]] = None,
) -> ClusterResult:
    """Threshold, cluster and average. Noise points are discarded."""
    starts, ends, conf, cls = _as_arrays(segments)
    keep = conf > cfg.tau_c
    starts, ends, conf, cls = starts[keep], ends[keep], conf[keep], cls[keep]
    nondeg = np.hypot(*(ends - starts).T) > 0
    degenerate = int((~nondeg).sum())
    starts, ends, conf, cls = starts[nondeg], ends[nondeg], conf[nondeg], cls[nondeg]
    if len(conf) == 0:
        return ClusterResult([], [], 0, degenerate, 0, np.empty(0, dtype=int))

    x, w = encode(starts, ends, conf, cfg, kappa, image_size)
    labels = weighted_dbscan(x, w, cfg.epsilon, cfg.min_weight)
    clustered = labels >= 0
    k = int(labels.max()) + 1 if clustered.any() else 0
    if k == 0:
        return ClusterResult([], [], int(len(labels)), degenerate, len(conf), labels)

    lab = labels[clustered]
    wc = w[clustered]
    wsum = np.bincount(lab, weights=wc, minlength=k)
    mean = np.column_stack([np.bincount(lab, weights=wc * x[clustered, d], minlength=k) for d in range(5)])
    mean /= wsum[:, None]
    rep_start, rep_end = decode(mean, cfg, kappa, image_size)

    if cfg.confidence_mode == "max":
        rep_conf = np.full(k, -np.inf)
        np.maximum.at(rep_conf, lab, conf[clustered])
    else:
        rep_conf = np.bincount(lab, weights=wc * conf[clustered], minlength=k) / wsum

    sizes = np.bincount(lab, minlength=k)
    rep_cls = _weighted_vote(lab, cls[clustered], wc, k)

    out = []
    for c in range(k):
        s, e = rep_start[c], rep_end[c]
        if image_size is not None:
            out.append(ImageSegment.clamped(tuple(s), tuple(e), image_size[0], image_size[1],
                                            float(rep_conf[c]), rep_cls[c]))
        else:
            out.append(ImageSegment((float(s[0]), float(s[1])), (float(e[0]), float(e[1])),
                                    float(rep_conf[c]), rep_cls[c]))
    return ClusterResult(out, sizes.tolist(), int((~clustered).sum()), degenerate, len(conf), labels)


def _weighted_vote(lab: np.ndarray, cls: np.ndarray, w: np.ndarray, k: int) -> List[Optional[int]]:
    if (cls < 0).all():
        return [None] * k
    n_cls = int(cls.max()) + 2
    votes = np.zeros((k, n_cls))
    np.add.at(votes, (lab, cls + 1), w)
    best = votes.argmax(axis=1) - 1
    return [None if b < 0 else int(b) for b in best]
