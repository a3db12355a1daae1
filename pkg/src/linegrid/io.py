"""JSON file formats.

Every document carries a ``schema`` tag and a ``meta`` block with the tool
version and the effective configuration that produced it. Documents are
written canonically (sorted keys, compact separators, floats via ``repr``),
so reading and re-writing a canonical file reproduces it byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from . import __version__
from .discretize import CellGroundTruth, CellSegment, Polyline
from .geometry import GridSpec, ImageSegment, Representation, geometry_from_vector
from .loss import PredictorGrid

PathLike = Union[str, Path]


class FormatError(ValueError):
    """Input document is malformed or violates its schema."""


def make_meta(config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    return {"tool": "linegrid", "version": __version__, "config": dict(config or {})}


def dumps(obj: Dict[str, Any]) -> str:
    try:
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"
    except ValueError as exc:
        raise FormatError(f"cannot serialize: {exc}") from exc


def loads(text: str) -> Dict[str, Any]:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise FormatError("top-level JSON value must be an object")
    return obj


def _need(obj: Dict[str, Any], key: str, kind=None):
    if key not in obj:
        raise FormatError(f"missing field {key!r}")
    val = obj[key]
    if kind is not None and (not isinstance(val, kind) or isinstance(val, bool)):
        raise FormatError(f"field {key!r} has wrong type {type(val).__name__}")
    return val


def _num(v, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise FormatError(f"{what} must be a number")
    if not math.isfinite(v):
        raise FormatError(f"{what} must be finite")
    return float(v)


def _obj(v, what: str) -> Dict[str, Any]:
    if not isinstance(v, dict):
        raise FormatError(f"{what} must be an object")
    return v


def _floats(seq, what: str, n: Optional[int] = None) -> List[float]:
    if not isinstance(seq, list):
        raise FormatError(f"{what} must be a list")
    if n is not None and len(seq) != n:
        raise FormatError(f"{what} must have {n} entries, got {len(seq)}")
    return [_num(v, what) for v in seq]


def _opt_int(v, what: str) -> Optional[int]:
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise FormatError(f"{what} must be an integer or null")
    return v


def _check_schema(obj: Dict[str, Any], schema: str) -> None:
    got = obj.get("schema")
    if got != schema:
        raise FormatError(f"expected schema {schema!r}, got {got!r}")


def _meta(obj: Dict[str, Any]) -> Dict[str, Any]:
    meta = obj.get("meta", make_meta())
    if not isinstance(meta, dict):
        raise FormatError("meta must be an object")
    return meta


def _image(obj: Dict[str, Any]):
    img = _need(obj, "image", dict)
    w, h = _need(img, "width", int), _need(img, "height", int)
    if w <= 0 or h <= 0:
        raise FormatError("image dimensions must be positive")
    return w, h


# --- polylines/1 ------------------------------------------------------------


@dataclass
class PolylineFile:
    width: int
    height: int
    polylines: List[Polyline]
    classes: List[str] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=make_meta)

    SCHEMA = "polylines/1"

    def to_obj(self) -> Dict[str, Any]:
        return {
            "schema": self.SCHEMA,
            "meta": self.meta,
            "image": {"width": self.width, "height": self.height},
            "classes": list(self.classes),
            "polylines": [
                {"class": p.class_id, "points": [[float(x), float(y)] for x, y in p.points]}
                for p in self.polylines
            ],
        }

    @classmethod
    def from_obj(cls, obj: Dict[str, Any]) -> "PolylineFile":
        _check_schema(obj, cls.SCHEMA)
        w, h = _image(obj)
        classes = obj.get("classes", [])
        if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
            raise FormatError("classes must be a list of strings")
        out = []
        for i, p in enumerate(_need(obj, "polylines", list)):
            if not isinstance(p, dict):
                raise FormatError(f"polyline {i} must be an object")
            k = _opt_int(p.get("class"), f"polyline {i} class")
            if k is not None and not 0 <= k < len(classes):
                raise FormatError(f"polyline {i} class {k} does not name one of {len(classes)} classes")
            pts = [tuple(_floats(q, f"polyline {i} point", 2)) for q in _need(p, "points", list)]
            for x, y in pts:
                if not (0.0 <= x <= w and 0.0 <= y <= h):
                    raise FormatError(f"polyline {i} point ({x}, {y}) outside the image")
            try:
                out.append(Polyline(tuple(pts), k))
            except ValueError as exc:
                raise FormatError(f"polyline {i}: {exc}") from exc
        return cls(w, h, out, classes, _meta(obj))


# --- segments/1 -------------------------------------------------------------


@dataclass
class SegmentFile:
    width: int
    height: int
    segments: List[ImageSegment]
    meta: Dict[str, Any] = field(default_factory=make_meta)

    SCHEMA = "segments/1"

    def to_obj(self) -> Dict[str, Any]:
        return {
            "schema": self.SCHEMA,
            "meta": self.meta,
            "image": {"width": self.width, "height": self.height},
            "segments": [
                {
                    "start": [float(s.start[0]), float(s.start[1])],
                    "end": [float(s.end[0]), float(s.end[1])],
                    "c": float(s.confidence),
                    "class": s.class_id,
                }
                for s in self.segments
            ],
        }

    @classmethod
    def from_obj(cls, obj: Dict[str, Any]) -> "SegmentFile":
        _check_schema(obj, cls.SCHEMA)
        w, h = _image(obj)
        out = []
        for i, s in enumerate(_need(obj, "segments", list)):
            if not isinstance(s, dict):
                raise FormatError(f"segment {i} must be an object")
            c = _num(_need(s, "c"), f"segment {i} confidence")
            if not 0.0 <= c <= 1.0:
                raise FormatError(f"segment {i} confidence {c} outside [0, 1]")
            out.append(ImageSegment(
                tuple(_floats(_need(s, "start"), f"segment {i} start", 2)),
                tuple(_floats(_need(s, "end"), f"segment {i} end", 2)),
                c,
                _opt_int(s.get("class"), f"segment {i} class"),
            ))
        return cls(w, h, out, _meta(obj))


# --- grids ------------------------------------------------------------------


def _grid_header(obj: Dict[str, Any]):
    g = _need(obj, "grid", dict)
    rows, cols, cell = _need(g, "rows", int), _need(g, "cols", int), _need(g, "cell_px", int)
    try:
        spec = GridSpec.from_cells(rows, cols, cell)
        rep = Representation(_need(g, "representation", str))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    return g, spec, rep


def _cell_index(c: Dict[str, Any], spec: GridSpec, seen: set, what: str):
    _obj(c, what)
    r, k = _need(c, "row", int), _need(c, "col", int)
    if not (0 <= r < spec.rows and 0 <= k < spec.cols):
        raise FormatError(f"{what} ({r}, {k}) outside the {spec.rows}x{spec.cols} grid")
    if (r, k) in seen:
        raise FormatError(f"{what} ({r}, {k}) listed twice")
    seen.add((r, k))
    return r, k


@dataclass
class CellGroundTruthFile:
    spec: GridSpec
    representation: Representation
    cells: List[CellGroundTruth]
    meta: Dict[str, Any] = field(default_factory=make_meta)

    SCHEMA = "cellgt/1"

    def to_obj(self) -> Dict[str, Any]:
        return {
            "schema": self.SCHEMA,
            "meta": self.meta,
            "grid": {
                "rows": self.spec.rows,
                "cols": self.spec.cols,
                "cell_px": self.spec.cell_px,
                "representation": Representation(self.representation).value,
            },
            "cells": [
                {
                    "row": c.cell_row,
                    "col": c.cell_col,
                    "segments": [
                        {"g": [float(v) for v in s.geometry.as_vector()], "class": s.class_id, "source": s.source}
                        for s in c.segments
                    ],
                }
                for c in self.cells
            ],
        }

    @classmethod
    def from_obj(cls, obj: Dict[str, Any]) -> "CellGroundTruthFile":
        _check_schema(obj, cls.SCHEMA)
        _, spec, rep = _grid_header(obj)
        seen: set = set()
        cells = []
        for c in _need(obj, "cells", list):
            r, k = _cell_index(c, spec, seen, "cell")
            segs = []
            for s in _need(c, "segments", list):
                _obj(s, f"cell ({r}, {k}) segment")
                vec = _floats(_need(s, "g"), "segment geometry", rep.size)
                try:
                    geom = geometry_from_vector(rep, vec)
                except ValueError as exc:
                    raise FormatError(f"cell ({r}, {k}): {exc}") from exc
                segs.append(CellSegment(geom, _opt_int(s.get("class"), "class"), _opt_int(s.get("source"), "source")))
            cells.append(CellGroundTruth(r, k, segs))
        return cls(spec, rep, cells, _meta(obj))


def _is_placeholder(grid: PredictorGrid, r: int, c: int) -> bool:
    blank = PredictorGrid.empty(GridSpec.from_cells(1, 1, grid.spec.cell_px), grid.representation, grid.P, grid.C)
    return (
        not grid.confidence[r, c].any()
        and not grid.classes[r, c].any()
        and np.array_equal(grid.geometry[r, c], blank.geometry[0, 0])
    )


@dataclass
class PredictorGridFile:
    grid: PredictorGrid
    meta: Dict[str, Any] = field(default_factory=make_meta)

    SCHEMA = "predgrid/1"

    def to_obj(self) -> Dict[str, Any]:
        g = self.grid
        cells = []
        for r in range(g.spec.rows):
            for c in range(g.spec.cols):
                if _is_placeholder(g, r, c):
                    continue
                preds = [
                    {
                        "g": [float(v) for v in g.geometry[r, c, k]],
                        "l": [float(v) for v in g.classes[r, c, k]],
                        "c": float(g.confidence[r, c, k]),
                    }
                    for k in range(g.P)
                ]
                cells.append({"row": r, "col": c, "preds": preds})
        return {
            "schema": self.SCHEMA,
            "meta": self.meta,
            "grid": {
                "rows": g.spec.rows,
                "cols": g.spec.cols,
                "cell_px": g.spec.cell_px,
                "predictors": g.P,
                "classes": g.C,
                "representation": g.representation.value,
            },
            "cells": cells,
        }

    @classmethod
    def from_obj(cls, obj: Dict[str, Any]) -> "PredictorGridFile":
        _check_schema(obj, cls.SCHEMA)
        header, spec, rep = _grid_header(obj)
        n_pred, n_cls = _need(header, "predictors", int), _need(header, "classes", int)
        if n_pred < 1 or n_cls < 0:
            raise FormatError("predictors must be >= 1 and classes >= 0")
        grid = PredictorGrid.empty(spec, rep, n_pred, n_cls)
        seen: set = set()
        for cell in _need(obj, "cells", list):
            r, c = _cell_index(cell, spec, seen, "cell")
            preds = _need(cell, "preds", list)
            if len(preds) != n_pred:
                raise FormatError(f"cell ({r}, {c}) has {len(preds)} predictors, expected {n_pred}")
            for k, p in enumerate(preds):
                _obj(p, f"cell ({r}, {c}) predictor")
                vec = _floats(_need(p, "g"), "predictor geometry", rep.size)
                try:
                    geometry_from_vector(rep, vec)
                except ValueError as exc:
                    raise FormatError(f"cell ({r}, {c}) predictor {k}: {exc}") from exc
                grid.geometry[r, c, k] = vec
                grid.classes[r, c, k] = _floats(_need(p, "l"), "predictor classes", n_cls)
                conf = _num(_need(p, "c"), "predictor confidence")
                if not 0.0 <= conf <= 1.0:
                    raise FormatError(f"cell ({r}, {c}) confidence {conf} outside [0, 1]")
                grid.confidence[r, c, k] = conf
        return cls(grid, _meta(obj))


# --- dispatch ---------------------------------------------------------------

DOCUMENTS = {d.SCHEMA: d for d in (PolylineFile, SegmentFile, CellGroundTruthFile, PredictorGridFile)}


def parse(text: str, expect: Optional[Union[str, Sequence[str]]] = None):
    """Parse a document of any known schema, optionally requiring one of ``expect``."""
    obj = loads(text)
    schema = obj.get("schema")
    if expect is not None:
        allowed = (expect,) if isinstance(expect, str) else tuple(expect)
        if schema not in allowed:
            raise FormatError(f"expected schema in {list(allowed)}, got {schema!r}")
    if schema not in DOCUMENTS:
        raise FormatError(f"unknown schema {schema!r}")
    return DOCUMENTS[schema].from_obj(obj)


def render_doc(doc) -> str:
    return dumps(doc.to_obj())


def read(path: PathLike, expect=None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from exc
    return parse(text, expect)


def write(path: PathLike, doc) -> None:
    Path(path).write_text(render_doc(doc), encoding="utf-8")
