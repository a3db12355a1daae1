import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from linegrid.discretize import (
    Polyline,
    chords_in_image,
    deviation,
    discretize,
    merge,
    polyline_chords,
    resolve_ends,
    sample_polyline,
    slice as slice_polyline,
)
from linegrid.geometry import BorderPoints1D, GridSpec, Representation, to_cartesian
from linegrid.oracle import smooth_curves

SPEC = GridSpec(128, 128, 32)


def test_polyline_validation():
    with pytest.raises(ValueError):
        Polyline(((0, 0),))
    with pytest.raises(ValueError):
        Polyline(((0, 0), (0, 0), (1, 1)))


def test_slice_inserts_crossings():
    p = slice_polyline(Polyline(((0, 16), (64, 16))), SPEC)
    assert (32.0, 16.0) in p.points
    d = slice_polyline(Polyline(((0, 0), (64, 64))), SPEC)
    assert (32.0, 32.0) in d.points
    inside = Polyline(((5, 5), (20, 7), (25, 25)))
    assert slice_polyline(inside, SPEC).points == inside.points


def test_slice_rejects_out_of_bounds():
    with pytest.raises(ValueError):
        slice_polyline(Polyline(((0, 0), (200, 10))), SPEC)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.floats(0, 128), st.floats(0, 128)), min_size=2, max_size=6, unique=True))
def test_slice_keeps_trace(pts):
    try:
        p = Polyline(tuple(pts))
    except ValueError:
        return
    s = slice_polyline(p, SPEC)
    # every original vertex survives in order, up to the merge tolerance
    j = 0
    for v in p.points:
        while math.dist(s.points[j], v) > 1e-9:
            j += 1
            assert j < len(s.points)
    # inserted vertices lie on the original path
    for q in s.points:
        d = min(oracles.point_segment_distance(q, a, b) for a, b in zip(p.points, p.points[1:]))
        assert d < 1e-6


def test_merge_v_shape_becomes_top_chord():
    v = Polyline(((40, 20), (48, 40), (56, 20)))
    m = merge(slice_polyline(v, SPEC), SPEC)
    assert m.points == ((40.0, 20.0), (44.8, 32.0), (51.2, 32.0), (56.0, 20.0))


def test_merge_keeps_border_to_border():
    p = Polyline(((0, 16), (64, 16)))
    assert merge(slice_polyline(p, SPEC), SPEC).points == ((0.0, 16.0), (32.0, 16.0), (64.0, 16.0))


def test_merge_keeps_interior_endpoints():
    p = Polyline(((10, 40), (50, 40)))
    m = merge(slice_polyline(p, SPEC), SPEC)
    assert m.points[0] == (10.0, 40.0) and m.points[-1] == (50.0, 40.0)


def test_resolve_extrapolates_long_terminal_chord():
    # last chord runs 24 px (0.75 cell) into the cell, then extends to the border
    p = Polyline(((0, 40), (56, 40)))
    r = resolve_ends(merge(slice_polyline(p, SPEC), SPEC), SPEC)
    assert r.points[-1] == pytest.approx((64.0, 40.0))


def test_resolve_drops_short_terminal_chord():
    p = Polyline(((0, 40), (40, 40)))
    r = resolve_ends(merge(slice_polyline(p, SPEC), SPEC), SPEC)
    assert r.points[-1] == pytest.approx((32.0, 40.0))


def test_resolve_leaves_border_endpoints():
    p = Polyline(((0, 40), (64, 40)))
    assert resolve_ends(merge(slice_polyline(p, SPEC), SPEC), SPEC).points == ((0.0, 40.0), (32.0, 40.0), (64.0, 40.0))


def test_resolve_single_cell_cases():
    long_ = resolve_ends(merge(Polyline(((40, 40), (60, 40))), SPEC), SPEC)
    assert long_.points == ((32.0, 40.0), (64.0, 40.0))
    assert resolve_ends(merge(Polyline(((40, 40), (44, 40))), SPEC), SPEC) is None


def test_discretize_straight_line_three_cells():
    cells = discretize([Polyline(((0, 16), (96, 16)))], SPEC, "border1d")
    assert [(c.cell_row, c.cell_col) for c in cells] == [(0, 0), (0, 1), (0, 2)]
    assert all(len(c.segments) == 1 for c in cells)
    assert cells[0].segments[0].geometry == BorderPoints1D(0.875, 0.375)
    g = to_cartesian(cells[1].segments[0].geometry)
    assert g.start == pytest.approx((0.0, 0.5)) and g.end == pytest.approx((1.0, 0.5))


def test_discretize_dashes():
    dashes = [Polyline(((32 * i + 6, 48), (32 * i + 26, 48))) for i in range(4)]
    dashes.append(Polyline(((6, 80), (26, 80))))
    cells = discretize(dashes, SPEC, "euler")
    assert len(cells) == 5
    for c in cells:
        g = to_cartesian(c.segments[0].geometry)
        assert g.start == pytest.approx((0.0, 0.5)) and g.end == pytest.approx((1.0, 0.5))


def test_discretize_empty():
    assert discretize([], SPEC, "cartesian") == []


def test_cartesian_keeps_interior_endpoints():
    cells = discretize([Polyline(((40, 40), (44, 40)))], SPEC, "cartesian")
    g = to_cartesian(cells[0].segments[0].geometry)
    assert g.start == pytest.approx((0.25, 0.25)) and g.end == pytest.approx((0.375, 0.25))


def test_corner_touch_gives_no_segment():
    cells = discretize([Polyline(((0, 64), (64, 0)))], SPEC, "border1d")
    # the diagonal passes through the corner (32,32) only; cells (0,0) and (1,1) get nothing
    assert {(c.cell_row, c.cell_col) for c in cells} == {(1, 0), (0, 1)}


def test_crossing_polyline_gives_two_segments_in_cell():
    p = Polyline(((0, 40), (48, 40), (48, 8), (40, 8), (40, 64)))
    cells = {(c.cell_row, c.cell_col): c for c in discretize([p], SPEC, "border1d")}
    assert len(cells[(1, 1)].segments) == 2


@pytest.mark.parametrize("rep", ["border1d", "euler"])
def test_border_targets_end_on_border(rep):
    spec = GridSpec(256, 256, 16)
    for cell in discretize(smooth_curves(spec, 20, seed=3), spec, rep):
        for s in cell.segments:
            c = to_cartesian(s.geometry)
            for x, y in (c.start, c.end):
                assert min(x, y, 1 - x, 1 - y) < 1e-9


def test_discretized_length_bound():
    spec = GridSpec(256, 256, 32)
    polys = smooth_curves(spec, 20, seed=4)
    for i, p in enumerate(polys):
        chords = polyline_chords(p, spec)
        total = sum(math.dist(a, b) for _, a, b in chords)
        assert total <= p.length + 2 * spec.cell_px + 1e-9


@pytest.mark.parametrize("rep", list(Representation))
def test_discretize_idempotent(rep):
    spec = GridSpec(256, 256, 16)
    first = discretize(smooth_curves(spec, 10, seed=6), spec, rep)
    polys = [Polyline((seg.start, seg.end)) for seg, _ in chords_in_image(first, spec)]
    second = discretize(polys, spec, rep)
    a = sorted((c.cell_row, c.cell_col, tuple(np.round(s.geometry.as_vector(), 9))) for c in first for s in c.segments)
    b = sorted((c.cell_row, c.cell_col, tuple(np.round(s.geometry.as_vector(), 9))) for c in second for s in c.segments)
    assert a == b


def test_sample_polyline_counts():
    pts = sample_polyline([(0, 0), (10, 0)], 1.0)
    assert len(pts) == 11
    assert len(sample_polyline([(0, 0), (3, 4)], 1.0)) == 6


def test_deviation_zero_on_grid_lines():
    polys = [Polyline(((0, 32), (128, 32))), Polyline(((64, 0), (64, 128)))]
    rep = deviation(polys, discretize(polys, SPEC, "border1d"), SPEC)
    assert rep.mean_abs_deviation == pytest.approx(0.0, abs=1e-9)


def test_deviation_matches_bruteforce():
    spec = GridSpec(128, 128, 32)
    polys = smooth_curves(spec, 3, seed=9)
    cells = discretize(polys, spec, "border1d")
    rep = deviation(polys, cells, spec)
    chords = {}
    for seg, src in chords_in_image(cells, spec):
        chords.setdefault(src, []).append((seg.start, seg.end))
    total = n = 0
    for i, p in enumerate(polys):
        for q in sample_polyline(p.points, 1.0):
            total += min(oracles.point_segment_distance(q, a, b) for a, b in chords[i])
            n += 1
    assert rep.mean_abs_deviation == pytest.approx(total / n, rel=1e-9)


def test_deviation_decreases_with_resolution():
    polys = smooth_curves(GridSpec(256, 256, 32), 10, seed=1)
    devs = []
    for cell in (32, 16, 8):
        spec = GridSpec(256, 256, cell)
        devs.append(deviation(polys, discretize(polys, spec, "border1d"), spec).mean_abs_deviation)
    assert devs[0] > devs[1] > devs[2] >= 0
