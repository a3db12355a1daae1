"""Grid definition, cell-local line representations and their distances.

Cell-normalized coordinates have the origin at the top-left corner of a
cell, x to the right and y downwards (image convention), both in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

Point = Tuple[float, float]

VALID_CELL_SIZES = (32, 16, 8)
BORDER_TOL = 1e-9
UNIT_TOL = 4e-16


class Representation(str, Enum):
    CARTESIAN = "cartesian"
    BORDER1D = "border1d"
    EULER = "euler"

    @property
    def size(self) -> int:
        """Length of the flat geometry vector."""
        return 2 if self is Representation.BORDER1D else 4


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of square cells tiling an image exactly."""

    image_width: int
    image_height: int
    cell_px: int

    def __post_init__(self) -> None:
        if self.cell_px not in VALID_CELL_SIZES:
            raise ValueError(f"cell_px must be one of {VALID_CELL_SIZES}, got {self.cell_px}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.image_width % self.cell_px or self.image_height % self.cell_px:
            raise ValueError(
                f"image {self.image_width}x{self.image_height} is not divisible by cell_px={self.cell_px}"
            )

    @classmethod
    def from_cells(cls, rows: int, cols: int, cell_px: int) -> "GridSpec":
        return cls(cols * cell_px, rows * cell_px, cell_px)

    @property
    def rows(self) -> int:
        return self.image_height // self.cell_px

    @property
    def cols(self) -> int:
        return self.image_width // self.cell_px

    @property
    def num_cells(self) -> int:
        return self.rows * self.cols

    @property
    def kappa(self) -> float:
        """Grid scale relative to the 32 px base resolution."""
        return self.cell_px / 32.0

    def cell_of(self, x: float, y: float) -> Tuple[int, int]:
        """Cell (row, col) containing an image point; points on the far image edge map inward."""
        col = min(max(int(math.floor(x / self.cell_px)), 0), self.cols - 1)
        row = min(max(int(math.floor(y / self.cell_px)), 0), self.rows - 1)
        return row, col


@dataclass(frozen=True)
class CartesianPoints:
    start: Point
    end: Point

    def __post_init__(self) -> None:
        for v in (*self.start, *self.end):
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ValueError(f"cartesian coordinates must lie in [0, 1], got {self.start}, {self.end}")

    def as_vector(self) -> Tuple[float, ...]:
        return (*self.start, *self.end)


@dataclass(frozen=True)
class BorderPoints1D:
    start: float
    end: float

    def __post_init__(self) -> None:
        for v in (self.start, self.end):
            if not (0.0 <= v < 1.0):
                raise ValueError(f"border positions must lie in [0, 1), got {v}")

    def as_vector(self) -> Tuple[float, ...]:
        return (self.start, self.end)


@dataclass(frozen=True)
class EulerAngles:
    """Start/end border points as (cos, sin) of their angle from the -y axis.

    Angles run clockwise on screen, i.e. from straight up towards +x.
    The pairs are normalized on construction.
    """

    cos_a: float
    sin_a: float
    cos_b: float
    sin_b: float

    def __post_init__(self) -> None:
        na = math.hypot(self.cos_a, self.sin_a)
        nb = math.hypot(self.cos_b, self.sin_b)
        if na == 0.0 or nb == 0.0:
            raise ValueError("zero-norm (cos, sin) pair cannot be normalized")
        # Pairs already at unit norm are kept bit-for-bit so re-reading is a fixed point.
        if abs(na - 1.0) > UNIT_TOL:
            object.__setattr__(self, "cos_a", self.cos_a / na)
            object.__setattr__(self, "sin_a", self.sin_a / na)
        if abs(nb - 1.0) > UNIT_TOL:
            object.__setattr__(self, "cos_b", self.cos_b / nb)
            object.__setattr__(self, "sin_b", self.sin_b / nb)

    @classmethod
    def from_angles(cls, alpha: float, beta: float) -> "EulerAngles":
        return cls(math.cos(alpha), math.sin(alpha), math.cos(beta), math.sin(beta))

    def as_vector(self) -> Tuple[float, ...]:
        return (self.cos_a, self.sin_a, self.cos_b, self.sin_b)


SegmentGeometry = Union[CartesianPoints, BorderPoints1D, EulerAngles]

_TYPES = {
    Representation.CARTESIAN: CartesianPoints,
    Representation.BORDER1D: BorderPoints1D,
    Representation.EULER: EulerAngles,
}


def representation_of(g: SegmentGeometry) -> Representation:
    for rep, cls in _TYPES.items():
        if isinstance(g, cls):
            return rep
    raise TypeError(f"not a segment geometry: {g!r}")


def geometry_from_vector(rep: Representation | str, vec) -> SegmentGeometry:
    rep = Representation(rep)
    vec = [float(v) for v in vec]
    if len(vec) != rep.size:
        raise ValueError(f"{rep.value} geometry needs {rep.size} values, got {len(vec)}")
    if rep is Representation.CARTESIAN:
        return CartesianPoints((vec[0], vec[1]), (vec[2], vec[3]))
    if rep is Representation.BORDER1D:
        return BorderPoints1D(vec[0], vec[1])
    return EulerAngles(*vec)


@dataclass(frozen=True)
class ImageSegment:
    start: Point
    end: Point
    confidence: float = 1.0
    class_id: Optional[int] = None

    @classmethod
    def clamped(
        cls,
        start: Point,
        end: Point,
        width: float,
        height: float,
        confidence: float = 1.0,
        class_id: Optional[int] = None,
    ) -> "ImageSegment":
        def clamp(p: Point) -> Point:
            return (min(max(float(p[0]), 0.0), width), min(max(float(p[1]), 0.0), height))

        conf = min(max(float(confidence), 0.0), 1.0)
        return cls(clamp(start), clamp(end), conf, class_id)

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])

    @property
    def midpoint(self) -> Point:
        return ((self.start[0] + self.end[0]) / 2.0, (self.start[1] + self.end[1]) / 2.0)


# --- distances -----------------------------------------------------------


def distance_cartesian(g: CartesianPoints, h: CartesianPoints) -> float:
    return math.dist(g.start, h.start) + math.dist(g.end, h.end)


def _border_gap(a: float, b: float) -> float:
    diff = abs(a - b)
    return min(diff, abs(1.0 - diff))


def distance_border1d(g: BorderPoints1D, h: BorderPoints1D) -> float:
    return _border_gap(g.start, h.start) + _border_gap(g.end, h.end)


def distance_euler(g: EulerAngles, h: EulerAngles) -> float:
    return 0.25 * math.dist(g.as_vector(), h.as_vector())


def distance(g: SegmentGeometry, h: SegmentGeometry) -> float:
    """Distance matching the common representation of ``g`` and ``h``."""
    rep = representation_of(g)
    if representation_of(h) is not rep:
        raise TypeError("representation mismatch")
    if rep is Representation.CARTESIAN:
        return distance_cartesian(g, h)
    if rep is Representation.BORDER1D:
        return distance_border1d(g, h)
    return distance_euler(g, h)


# --- conversions ---------------------------------------------------------


def border1d_to_point(t: float) -> Point:
    """Cell-normalized point at clockwise arc position ``t`` (top-left = 0)."""
    t = t % 1.0
    side, frac = divmod(4.0 * t, 1.0)
    side = int(side)
    if side == 0:
        return (frac, 0.0)
    if side == 1:
        return (1.0, frac)
    if side == 2:
        return (1.0 - frac, 1.0)
    return (0.0, 1.0 - frac)


def point_to_border1d(p: Point, tol: float = BORDER_TOL) -> float:
    """Inverse of :func:`border1d_to_point`; corners belong to the side they begin."""
    x, y = p
    if abs(y) <= tol and x < 1.0 - tol:
        t = max(x, 0.0) / 4.0
    elif abs(x - 1.0) <= tol and y < 1.0 - tol:
        t = 0.25 + max(y, 0.0) / 4.0
    elif abs(y - 1.0) <= tol and x > tol:
        t = 0.5 + (1.0 - min(x, 1.0)) / 4.0
    elif abs(x) <= tol and y > tol:
        t = 0.75 + (1.0 - min(y, 1.0)) / 4.0
    else:
        raise ValueError(f"point {p} is not on the cell border")
    return t % 1.0


def angle_to_point(cos_v: float, sin_v: float) -> Point:
    """Border point hit by the ray from the cell center at the given angle."""
    dx, dy = sin_v, -cos_v
    scale = 0.5 / max(abs(dx), abs(dy))
    x = min(max(0.5 + scale * dx, 0.0), 1.0)
    y = min(max(0.5 + scale * dy, 0.0), 1.0)
    # snap the dominant axis so the point is exactly on the border
    if abs(dx) >= abs(dy):
        x = 1.0 if dx > 0 else 0.0
    if abs(dy) >= abs(dx):
        y = 1.0 if dy > 0 else 0.0
    return (x, y)


def point_to_angle(p: Point) -> Tuple[float, float]:
    dx, dy = p[0] - 0.5, p[1] - 0.5
    n = math.hypot(dx, dy)
    if n == 0.0:
        raise ValueError("cell center has no angle")
    return (-dy / n, dx / n)


def to_cartesian(g: SegmentGeometry, spec: Optional[GridSpec] = None) -> CartesianPoints:
    if isinstance(g, CartesianPoints):
        return g
    if isinstance(g, BorderPoints1D):
        return CartesianPoints(border1d_to_point(g.start), border1d_to_point(g.end))
    if isinstance(g, EulerAngles):
        return CartesianPoints(angle_to_point(g.cos_a, g.sin_a), angle_to_point(g.cos_b, g.sin_b))
    raise TypeError(f"not a segment geometry: {g!r}")


def convert(g: SegmentGeometry, rep: Representation | str) -> SegmentGeometry:
    """Convert between representations. Targets other than Cartesian need border points."""
    rep = Representation(rep)
    cart = to_cartesian(g)
    if rep is Representation.CARTESIAN:
        return cart
    if rep is Representation.BORDER1D:
        return BorderPoints1D(point_to_border1d(cart.start), point_to_border1d(cart.end))
    return EulerAngles(*point_to_angle(cart.start), *point_to_angle(cart.end))


def to_image(
    g: SegmentGeometry,
    cell_row: int,
    cell_col: int,
    spec: GridSpec,
    conf: float = 1.0,
    class_id: Optional[int] = None,
) -> ImageSegment:
    if not (0 <= cell_row < spec.rows and 0 <= cell_col < spec.cols):
        raise IndexError("cell out of bounds")
    cart = to_cartesian(g, spec)
    s = spec.cell_px
    start = ((cell_col + cart.start[0]) * s, (cell_row + cart.start[1]) * s)
    end = ((cell_col + cart.end[0]) * s, (cell_row + cart.end[1]) * s)
    return ImageSegment.clamped(start, end, spec.image_width, spec.image_height, conf, class_id)


def from_image(
    start: Point, end: Point, cell_row: int, cell_col: int, spec: GridSpec, rep: Representation | str
) -> SegmentGeometry:
    """Encode image-space endpoints relative to a cell in the requested representation."""
    s = spec.cell_px

    def local(p: Point) -> Point:
        return (
            min(max(p[0] / s - cell_col, 0.0), 1.0),
            min(max(p[1] / s - cell_row, 0.0), 1.0),
        )

    return convert(CartesianPoints(local(start), local(end)), rep)


def project_to_border(p: Point) -> Point:
    """Closest point on the unit cell border to a cell-normalized point."""
    x = min(max(p[0], 0.0), 1.0)
    y = min(max(p[1], 0.0), 1.0)
    gaps = (y, 1.0 - x, 1.0 - y, x)
    side = int(np.argmin(gaps))
    if side == 0:
        return (x, 0.0)
    if side == 1:
        return (1.0, y)
    if side == 2:
        return (x, 1.0)
    return (0.0, y)


# --- vectorized decoding -------------------------------------------------


def _border1d_points(t: np.ndarray) -> np.ndarray:
    t = np.mod(t, 1.0)
    side = np.minimum(np.floor(4.0 * t), 3).astype(int)
    frac = 4.0 * t - side
    x = np.choose(side, [frac, np.ones_like(t), 1.0 - frac, np.zeros_like(t)])
    y = np.choose(side, [np.zeros_like(t), frac, np.ones_like(t), 1.0 - frac])
    return np.stack([x, y], axis=-1)


def _angle_points(cos_v: np.ndarray, sin_v: np.ndarray) -> np.ndarray:
    n = np.hypot(cos_v, sin_v)
    n = np.where(n > 0, n, 1.0)
    dx, dy = sin_v / n, -cos_v / n
    scale = 0.5 / np.maximum(np.maximum(np.abs(dx), np.abs(dy)), 1e-300)
    x = np.clip(0.5 + scale * dx, 0.0, 1.0)
    y = np.clip(0.5 + scale * dy, 0.0, 1.0)
    x = np.where(np.abs(dx) >= np.abs(dy), (dx > 0).astype(float), x)
    y = np.where(np.abs(dy) >= np.abs(dx), (dy > 0).astype(float), y)
    return np.stack([x, y], axis=-1)


def cartesian_array(rep: Representation | str, vec: np.ndarray) -> np.ndarray:
    """Decode (..., k) geometry vectors to (..., 4) cell-normalized endpoints."""
    rep = Representation(rep)
    vec = np.asarray(vec, dtype=float)
    if rep is Representation.CARTESIAN:
        return vec.copy()
    if rep is Representation.BORDER1D:
        return np.concatenate([_border1d_points(vec[..., 0]), _border1d_points(vec[..., 1])], axis=-1)
    return np.concatenate([_angle_points(vec[..., 0], vec[..., 1]),
                           _angle_points(vec[..., 2], vec[..., 3])], axis=-1)
