import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linegrid.geometry import (
    BorderPoints1D,
    CartesianPoints,
    EulerAngles,
    GridSpec,
    ImageSegment,
    Representation,
    border1d_to_point,
    cartesian_array,
    convert,
    distance,
    distance_border1d,
    distance_cartesian,
    distance_euler,
    from_image,
    point_to_border1d,
    to_cartesian,
    to_image,
)

unit = st.floats(0.0, 1.0, allow_nan=False)
frac = st.floats(0.0, 1.0, allow_nan=False, exclude_max=True)


@st.composite
def border_point(draw):
    side = draw(st.integers(0, 3))
    f = draw(frac)
    return [(f, 0.0), (1.0, f), (1.0 - f, 1.0), (0.0, 1.0 - f)][side]


# --- grid ------------------------------------------------------------------


def test_grid_counts_and_kappa():
    spec = GridSpec(640, 320, 16)
    assert (spec.rows, spec.cols, spec.num_cells) == (20, 40, 800)
    assert spec.kappa == 0.5
    assert GridSpec.from_cells(10, 20, 32) == GridSpec(640, 320, 32)


@pytest.mark.parametrize("w,h,c", [(100, 64, 32), (64, 64, 12), (0, 32, 32)])
def test_grid_rejects_bad_inputs(w, h, c):
    with pytest.raises(ValueError):
        GridSpec(w, h, c)


def test_cell_of_clamps_far_edge():
    spec = GridSpec(64, 64, 32)
    assert spec.cell_of(64, 64) == (1, 1)
    assert spec.cell_of(31.9, 0) == (0, 0)


# --- distances -------------------------------------------------------------


def test_distance_cartesian_examples():
    g = CartesianPoints((0.3, 0.3), (0.7, 0.7))
    assert distance_cartesian(g, g) == 0.0
    assert distance_cartesian(CartesianPoints((0, 0), (1, 1)), CartesianPoints((0, 1), (1, 0))) == pytest.approx(2.0)
    assert distance_cartesian(CartesianPoints((0, 0), (0, 0)),
                              CartesianPoints((0.3, 0.4), (0.3, 0.4))) == pytest.approx(1.0)


def test_distance_border1d_examples():
    assert distance_border1d(BorderPoints1D(0.2, 0.8), BorderPoints1D(0.2, 0.8)) == 0.0
    assert distance_border1d(BorderPoints1D(0.05, 0.5), BorderPoints1D(0.95, 0.5)) == pytest.approx(0.1)
    assert distance_border1d(BorderPoints1D(0.0, 0.25), BorderPoints1D(0.5, 0.75)) == pytest.approx(1.0)


def test_distance_euler_examples():
    g = EulerAngles.from_angles(0.3, 1.2)
    assert distance_euler(g, g) == 0.0
    assert distance_euler(EulerAngles.from_angles(0, 0.7), EulerAngles.from_angles(math.pi, 0.7)) == pytest.approx(0.5)
    assert distance_euler(EulerAngles.from_angles(0, 0), EulerAngles.from_angles(math.pi, math.pi)) == pytest.approx(
        math.sqrt(2) / 2)


def test_distance_rejects_mixed_representations():
    with pytest.raises(TypeError):
        distance(BorderPoints1D(0, 0.5), EulerAngles.from_angles(0, 1))


def test_euler_normalizes_and_rejects_zero():
    e = EulerAngles(3.0, 4.0, 0.0, 2.0)
    assert e.as_vector() == pytest.approx((0.6, 0.8, 0.0, 1.0))
    with pytest.raises(ValueError):
        EulerAngles(0.0, 0.0, 1.0, 0.0)


def test_euler_construction_is_bit_idempotent():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        e = EulerAngles(*rng.normal(size=4))
        assert EulerAngles(*e.as_vector()).as_vector() == e.as_vector()


@pytest.mark.parametrize("bad", [(-0.1, 0, 1, 1), (0, 0, 1, 1.2)])
def test_cartesian_range_checked(bad):
    with pytest.raises(ValueError):
        CartesianPoints(bad[:2], bad[2:])


def test_border1d_range_checked():
    with pytest.raises(ValueError):
        BorderPoints1D(1.0, 0.2)


@settings(max_examples=300)
@given(st.tuples(unit, unit, unit, unit), st.tuples(unit, unit, unit, unit))
def test_cartesian_distance_metric_properties(a, b):
    g, h = CartesianPoints(a[:2], a[2:]), CartesianPoints(b[:2], b[2:])
    assert distance_cartesian(g, h) == pytest.approx(distance_cartesian(h, g))
    assert distance_cartesian(g, h) >= 0
    assert distance_cartesian(g, g) == 0


@settings(max_examples=300)
@given(frac, frac, frac, frac)
def test_border1d_distance_bounds(a, b, c, d):
    g, h = BorderPoints1D(a, b), BorderPoints1D(c, d)
    v = distance_border1d(g, h)
    assert 0 <= v <= 1.0
    assert v == pytest.approx(distance_border1d(h, g))
    for x, y in ((a, c), (b, d)):
        assert min(abs(x - y), 1 - abs(x - y)) <= 0.5


@settings(max_examples=300)
@given(st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_euler_distance_symmetric(a, b, c, d):
    g, h = EulerAngles.from_angles(a, b), EulerAngles.from_angles(c, d)
    assert distance_euler(g, h) == pytest.approx(distance_euler(h, g))
    assert distance_euler(g, g) == 0


def test_euler_continuous_across_border1d_seam():
    # border points just either side of the top-left corner
    prev = None
    for gap in (1e-1, 1e-2, 1e-3, 1e-4):
        a = convert(BorderPoints1D(gap / 2, 0.5), "euler")
        b = convert(BorderPoints1D(1 - gap / 2, 0.5), "euler")
        d = distance_euler(a, b)
        if prev is not None:
            assert d < prev
        prev = d
    assert prev < 1e-3


# --- conversions -----------------------------------------------------------


def test_to_cartesian_examples():
    assert to_cartesian(BorderPoints1D(0.125, 0.625)) == CartesianPoints((0.5, 0.0), (0.5, 1.0))
    c = CartesianPoints((0.2, 0.1), (0.3, 0.9))
    assert to_cartesian(c) is c
    assert to_cartesian(EulerAngles.from_angles(0.0, math.pi)).start == (0.5, 0.0)


def test_euler_angles_run_clockwise_from_up():
    # quarter turn clockwise from straight up points to +x, i.e. the right edge
    assert to_cartesian(EulerAngles.from_angles(math.pi / 2, math.pi)).start == pytest.approx((1.0, 0.5))
    assert to_cartesian(EulerAngles.from_angles(math.pi / 2, math.pi)).end == pytest.approx((0.5, 1.0))


def test_corner_ownership_clockwise():
    assert point_to_border1d((1.0, 0.0)) == 0.25
    assert point_to_border1d((1.0, 1.0)) == 0.5
    assert point_to_border1d((0.0, 1.0)) == 0.75
    assert point_to_border1d((0.0, 0.0)) == 0.0
    assert border1d_to_point(0.25) == (1.0, 0.0)


def test_point_off_border_rejected():
    with pytest.raises(ValueError):
        point_to_border1d((0.5, 0.5))


def test_to_image_examples():
    spec = GridSpec(64, 64, 32)
    s = to_image(CartesianPoints((0, 0), (1, 1)), 0, 0, spec)
    assert (s.start, s.end) == ((0, 0), (32, 32))
    spec16 = GridSpec(64, 64, 16)
    s = to_image(CartesianPoints((0.5, 0.5), (0.5, 0.5)), 1, 2, spec16)
    assert s.start == s.end == (40, 24)
    s = to_image(BorderPoints1D(0.125, 0.625), 0, 0, GridSpec(8, 8, 8))
    assert (s.start, s.end) == ((4, 0), (4, 8))


def test_to_image_out_of_bounds():
    with pytest.raises(IndexError, match="cell out of bounds"):
        to_image(BorderPoints1D(0.1, 0.6), 2, 0, GridSpec(64, 64, 32))


def test_image_segment_clamps():
    s = ImageSegment.clamped((-3, 5), (70, 80), 64, 64, confidence=1.7)
    assert s.start == (0, 5) and s.end == (64, 64) and s.confidence == 1.0
    assert ImageSegment((0, 0), (3, 4)).length == 5


@settings(max_examples=500)
@given(border_point(), border_point())
def test_border_round_trips(p, q):
    cart = CartesianPoints(p, q)
    for rep in ("border1d", "euler"):
        back = to_cartesian(convert(cart, rep))
        assert back.start == pytest.approx(p, abs=1e-9)
        assert back.end == pytest.approx(q, abs=1e-9)


@settings(max_examples=300)
@given(border_point(), border_point(), st.integers(0, 1), st.integers(0, 2),
       st.sampled_from(list(Representation)))
def test_to_image_commutes_with_conversion(p, q, row, col, rep):
    spec = GridSpec(96, 64, 32)
    g = CartesianPoints(p, q)
    direct = to_image(g, row, col, spec)
    via = to_image(convert(g, rep), row, col, spec)
    assert via.start == pytest.approx(direct.start, abs=1e-9)
    assert via.end == pytest.approx(direct.end, abs=1e-9)
    back = from_image(direct.start, direct.end, row, col, spec, rep)
    assert to_cartesian(back).start == pytest.approx(p, abs=1e-9)


@pytest.mark.parametrize("rep", list(Representation))
def test_vectorized_decoding_matches_scalar(rep):
    rng = np.random.default_rng(2)
    vecs = []
    scal = []
    for _ in range(200):
        t = rng.random(2)
        p, q = border1d_to_point(t[0]), border1d_to_point(t[1])
        g = convert(CartesianPoints(p, q), rep)
        vecs.append(g.as_vector())
        c = to_cartesian(g)
        scal.append((*c.start, *c.end))
    np.testing.assert_allclose(cartesian_array(rep, np.array(vecs)), np.array(scal), atol=1e-12)
