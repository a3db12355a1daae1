import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from linegrid.discretize import CellGroundTruth, CellSegment, Polyline, discretize
from linegrid.geometry import (
    BorderPoints1D,
    CartesianPoints,
    EulerAngles,
    GridSpec,
    Representation,
    geometry_from_vector,
)
from linegrid.loss import (
    Assignment,
    LossWeights,
    Predictor,
    PredictorGrid,
    assignments,
    greedy_assign,
    loss_class,
    loss_conf,
    loss_gradient,
    loss_loc,
    match,
    total_loss,
)
from linegrid.oracle import OracleConfig, smooth_curves, synth_oracle


def random_vec(rng, rep):
    rep = Representation(rep)
    if rep is Representation.CARTESIAN:
        return rng.random(4)
    if rep is Representation.BORDER1D:
        return rng.random(2)
    a, b = rng.uniform(0, 2 * np.pi, 2)
    return np.array([np.cos(a), np.sin(a), np.cos(b), np.sin(b)])


def test_single_pair_is_forced():
    g = [CellSegment(BorderPoints1D(0.1, 0.6))]
    p = [Predictor(BorderPoints1D(0.9, 0.2), (), 0.3)]
    assert match(g, p).pairs == ((0, 0),)


def test_greedy_hand_example():
    # rows a, b; columns p1, p2
    d = np.array([[0.1, 0.5], [0.2, 0.3]])
    assert greedy_assign(d) == ((0, 0), (1, 1))


def test_greedy_ties_prefer_low_indices():
    assert greedy_assign(np.zeros((2, 2))) == ((0, 0), (1, 1))
    assert greedy_assign(np.array([[1.0, 0.5, 0.5]])) == ((0, 1),)


def test_more_gt_than_predictors():
    g = [CellSegment(CartesianPoints((0, 0), (1, 1))),
         CellSegment(CartesianPoints((0, 1), (1, 0))),
         CellSegment(CartesianPoints((0.5, 0), (0.5, 1)))]
    p = [Predictor(CartesianPoints((0, 0), (1, 1))), Predictor(CartesianPoints((0, 1), (1, 0)))]
    a = match(g, p)
    assert len(a.pairs) == 2
    assert loss_loc(a, g, p) == 0.0


def test_loss_loc_examples():
    g = [CellSegment(CartesianPoints((0, 0), (1, 1)))]
    p = [Predictor(CartesianPoints((0, 1), (1, 0)))]
    assert loss_loc(match(g, p), g, p) == pytest.approx(2.0)
    assert loss_loc(Assignment(()), [], p) == 0.0


def test_loss_conf_examples():
    preds = [Predictor(CartesianPoints((0, 0), (1, 1)), (), c) for c in (0.5, 0.2, 0.4)]
    resp, noresp = loss_conf(Assignment(((0, 0),)), preds)
    assert resp == pytest.approx(0.25)
    assert noresp == pytest.approx(0.2)
    exact = [Predictor(CartesianPoints((0, 0), (1, 1)), (), c) for c in (1.0, 0.0)]
    assert loss_conf(Assignment(((0, 0),)), exact) == (0.0, 0.0)


def test_loss_class_examples():
    g = [CellSegment(CartesianPoints((0, 0), (1, 1)), class_id=0)]
    half = [Predictor(CartesianPoints((0, 0), (1, 1)), (0.5, 0.5), 1.0)]
    exact = [Predictor(CartesianPoints((0, 0), (1, 1)), (1.0, 0.0), 1.0)]
    a = Assignment(((0, 0),))
    assert loss_class(a, g, half) == pytest.approx(0.5)
    assert loss_class(a, g, exact) == 0.0
    classless = [Predictor(CartesianPoints((0, 0), (1, 1)), (), 1.0)]
    assert loss_class(a, g, classless) == 0.0


def test_match_rejects_mixed_representations():
    with pytest.raises(ValueError):
        match([CellSegment(BorderPoints1D(0.1, 0.5))], [Predictor(CartesianPoints((0, 0), (1, 1)))])
    with pytest.raises(ValueError):
        match([CellSegment(BorderPoints1D(0.1, 0.5))], [Predictor(BorderPoints1D(0.1, 0.5))], metric="euler")


def test_predictor_clamps_confidence():
    assert Predictor(BorderPoints1D(0, 0.5), (), 1.5).c == 1.0
    with pytest.raises(ValueError):
        Predictor(BorderPoints1D(0, 0.5), (-0.1,), 0.5)


def _oracle_setup(rep, cell_px=32, classes=3):
    spec = GridSpec(256, 128, cell_px)
    polys = [Polyline(p.points, class_id=i % classes) for i, p in enumerate(smooth_curves(spec, 6, seed=11))]
    gt = discretize(polys, spec, rep)
    P = max(len(c.segments) for c in gt)
    grid = synth_oracle(gt, spec, rep, P, classes).grid
    return spec, gt, grid


@pytest.mark.parametrize("rep", list(Representation))
def test_closed_form_with_all_confidences_one(rep):
    spec, gt, grid = _oracle_setup(rep)
    grid.confidence[:] = 1.0
    bd = total_loss(gt, grid)
    assert bd.assigned == sum(len(c.segments) for c in gt)
    assert bd.total == pytest.approx(spec.num_cells * grid.P - bd.assigned, abs=1e-9)


def test_empty_ground_truth_zero_confidence():
    grid = PredictorGrid.empty(GridSpec(64, 64, 32), "euler", 4, 2)
    bd = total_loss([], grid)
    assert bd.total == 0.0 and bd.assigned == 0


def test_total_loss_rejects_bad_cells():
    grid = PredictorGrid.empty(GridSpec(64, 64, 32), "border1d", 2)
    with pytest.raises(ValueError):
        total_loss([CellGroundTruth(5, 0, [CellSegment(BorderPoints1D(0, 0.5))])], grid)
    with pytest.raises(ValueError):
        total_loss([CellGroundTruth(0, 0, [CellSegment(EulerAngles.from_angles(0, 1))])], grid)
    with pytest.raises(ValueError):
        total_loss([], grid, metric="euler")


def test_unmatched_ground_truth_is_counted():
    spec = GridSpec(32, 32, 32)
    grid = PredictorGrid.empty(spec, "border1d", 1)
    gt = [CellGroundTruth(0, 0, [CellSegment(BorderPoints1D(0, 0.5)), CellSegment(BorderPoints1D(0.25, 0.75))])]
    bd = total_loss(gt, grid)
    assert (bd.assigned, bd.unmatched_gt) == (1, 1)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(Representation)))
def test_match_agrees_with_oracle(seed, rep):
    rng = np.random.default_rng(seed)
    L, P = rng.integers(0, 7, 2)
    g = [random_vec(rng, rep) for _ in range(L)]
    p = [random_vec(rng, rep) for _ in range(P)]
    segs = [CellSegment(geometry_from_vector(rep, v)) for v in g]
    preds = [Predictor(geometry_from_vector(rep, v)) for v in p]
    a = match(segs, preds)
    gv = [s.geometry.as_vector() for s in segs]
    pv = [q.g.as_vector() for q in preds]
    dist = [[oracles.DIST[rep.value](x, y) for y in pv] for x in gv]
    assert list(a.pairs) == oracles.greedy_pairs(dist)
    assert len(a.pairs) == min(L, P)


def _random_cell_grid(rng, rep, classes=2, P=3):
    spec = GridSpec(64, 64, 32)
    grid = PredictorGrid.empty(spec, rep, P, classes)
    for r, c, k in itertools.product(range(spec.rows), range(spec.cols), range(P)):
        grid.geometry[r, c, k] = random_vec(rng, rep)
    grid.classes[:] = rng.random(grid.classes.shape)
    grid.confidence[:] = rng.random(grid.confidence.shape)
    gt = []
    for r, c in itertools.product(range(spec.rows), range(spec.cols)):
        n = int(rng.integers(0, 4))
        if n:
            gt.append(CellGroundTruth(r, c, [
                CellSegment(geometry_from_vector(rep, random_vec(rng, rep)), int(rng.integers(0, classes)))
                for _ in range(n)]))
    return gt, grid


@pytest.mark.parametrize("rep", list(Representation))
def test_breakdown_matches_oracle(rep):
    rng = np.random.default_rng(21)
    for _ in range(30):
        gt, grid = _random_cell_grid(rng, rep)
        bd = total_loss(gt, grid, LossWeights(0.7, 1.3, 0.4, 2.0))
        want = np.zeros(5)
        covered = set()
        for cell in gt:
            r, c = cell.cell_row, cell.cell_col
            covered.add((r, c))
            want += oracles.cell_loss(
                rep.value,
                [s.geometry.as_vector() for s in cell.segments],
                [s.class_id for s in cell.segments],
                [tuple(v) for v in grid.geometry[r, c]],
                [tuple(v) for v in grid.classes[r, c]],
                list(grid.confidence[r, c]),
                (0.7, 1.3, 0.4, 2.0),
            )
        for r, c in itertools.product(range(grid.spec.rows), range(grid.spec.cols)):
            if (r, c) not in covered:
                extra = float((grid.confidence[r, c] ** 2).sum())
                want[2] += extra
                want[4] += 0.4 * extra
        got = (bd.loc, bd.resp, bd.noresp, bd.class_term, bd.total)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("rep", list(Representation))
def test_total_equals_weighted_sum_and_monotone_in_weights(rep):
    rng = np.random.default_rng(4)
    gt, grid = _random_cell_grid(rng, rep)
    w = LossWeights(0.5, 0.8, 1.1, 0.3)
    bd = total_loss(gt, grid, w)
    assert min(bd.loc, bd.resp, bd.noresp, bd.class_term) >= 0
    assert bd.total == pytest.approx(0.5 * bd.loc + 0.8 * bd.resp + 1.1 * bd.noresp + 0.3 * bd.class_term)
    for field in ("loc", "resp", "noresp", "cls"):
        bigger = LossWeights(**{**w.__dict__, field: getattr(w, field) + 0.5})
        assert total_loss(gt, grid, bigger).total >= bd.total


@pytest.mark.parametrize("rep", list(Representation))
def test_order_invariance(rep):
    rng = np.random.default_rng(8)
    gt, grid = _random_cell_grid(rng, rep)
    base = total_loss(gt, grid)
    for _ in range(10):
        perm_gt = [CellGroundTruth(c.cell_row, c.cell_col, [c.segments[i] for i in rng.permutation(len(c.segments))])
                   for c in gt]
        g2 = grid.copy()
        for r, c in itertools.product(range(grid.spec.rows), range(grid.spec.cols)):
            k = rng.permutation(grid.P)
            g2.geometry[r, c] = grid.geometry[r, c, k]
            g2.classes[r, c] = grid.classes[r, c, k]
            g2.confidence[r, c] = grid.confidence[r, c, k]
        bd = total_loss(perm_gt, g2)
        assert (bd.loc, bd.resp, bd.noresp, bd.class_term, bd.total) == pytest.approx(
            (base.loc, base.resp, base.noresp, base.class_term, base.total), abs=1e-12)


def test_assignments_per_cell():
    rng = np.random.default_rng(2)
    gt, grid = _random_cell_grid(rng, "border1d")
    a = assignments(gt, grid)
    assert set(a) == {(c.cell_row, c.cell_col) for c in gt}
    for c in gt:
        assert len(a[(c.cell_row, c.cell_col)].pairs) == min(len(c.segments), grid.P)


@pytest.mark.parametrize("rep", list(Representation))
def test_gradient_small_example(rep):
    rng = np.random.default_rng(13)
    gt, grid = _random_cell_grid(rng, rep)
    grad = loss_gradient(gt, grid)
    h = 1e-5
    idx = (0, 1, 1)
    for arr_name in ("confidence",):
        arr = getattr(grid, arr_name)
        old = arr[idx]
        arr[idx] = old + h
        up = total_loss(gt, grid).total
        arr[idx] = old - h
        dn = total_loss(gt, grid).total
        arr[idx] = old
        assert getattr(grad, arr_name)[idx] == pytest.approx((up - dn) / (2 * h), rel=1e-4)
    assert grad.breakdown.total == pytest.approx(total_loss(gt, grid).total)
