import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covnet.errors import AssumptionViolation, IncompleteWeightsError, RuntimeDegeneracyError
from covnet.geometry import Simplex, contains_many
from covnet.targets import TargetSet, generate_shape
from covnet.training import (WEIGHT_EPS, DesiredPlan, RuntimeWeightSolver, StaleWeights,
                             actual_centroid, assign_desired_positions, build_weight_matrix,
                             clamped_qp, kkt_residual, kkt_solve, runtime_weights, solve_weights)

from oracles import grid_qp, simplex_grid

EQUILATERAL = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])


def test_plan_positions_are_target_centroids(net26, fan26, ellipse500, plan26):
    p = plan26.p
    for i in net26.followers:
        hull = Simplex([p[j] for j in net26.in_nbrs[i]])
        idx = contains_many(hull, ellipse500.positions)
        assert idx.any()
        assert np.allclose(p[i], ellipse500.positions[idx].mean(axis=0))


def test_desired_weights_are_barycentric(net26, plan26):
    for i in net26.followers:
        nb = net26.in_nbrs[i]
        w = np.array([plan26.varpi[(i, j)] for j in nb])
        assert np.all(w > 0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(w @ np.array([plan26.p[j] for j in nb]), plan26.p[i], atol=1e-9)


def test_weight_matrix_shape(net26, plan26):
    L = plan26.Lbar
    assert L.shape == (26, 26)
    assert np.all(np.diag(L) == -1)
    for i in net26.followers:
        assert L[i - 1].sum() == pytest.approx(0.0, abs=1e-12)
    for i in net26.leaders:
        assert np.count_nonzero(L[i - 1]) == 1
    with pytest.raises(IncompleteWeightsError):
        build_weight_matrix(net26, {})


def test_plan_round_trip(net26, plan26):
    back = DesiredPlan.from_dict(plan26.to_dict(), net26)
    assert np.array_equal(back.Lbar, plan26.Lbar)
    assert all(np.array_equal(back.p[i], plan26.p[i]) for i in plan26.p)


def test_intensity_normalized_mode(net26, fan26):
    ts = generate_shape("ellipse", 500, seed=7, intensity=0.5)
    a = assign_desired_positions(net26, fan26.leader_positions, ts, "eq17")
    b = assign_desired_positions(net26, fan26.leader_positions, ts, "intensity_normalized")
    # layer-1 followers see the same targets, so the two centroids differ by the intensity
    assert np.allclose(a[7], 0.5 * b[7])


def test_missing_targets_name_the_follower(net26, fan26):
    ts = TargetSet([[0.0, -1.0, 0.0]], [1.0])
    with pytest.raises(AssumptionViolation) as info:
        assign_desired_positions(net26, fan26.leader_positions, ts)
    assert info.value.agent is not None


def test_kkt_interior_solution_is_exact(rng):
    for _ in range(50):
        R = rng.uniform(-10, 10, size=(3, 3))
        w0 = rng.dirichlet(np.ones(3))
        w, lam = kkt_solve(R, R @ w0)
        assert np.allclose(w, w0, atol=1e-9)
        assert kkt_residual(R, R @ w0, w, lam) <= 1e-9


def test_clamping_vertex_case():
    """Target far beyond vertex 0: all mass on that vertex, the rest at the floor."""
    R = np.column_stack([EQUILATERAL, np.zeros(3)]).T
    c = np.array([-1.0, -1.0, 0.0])
    w = solve_weights(R, c)
    assert np.allclose(w, [1 - 2 * WEIGHT_EPS, WEIGHT_EPS, WEIGHT_EPS], atol=1e-15)


def test_clamping_edge_case():
    """Below the bottom edge: the projection onto that edge, third vertex at the floor."""
    R = np.column_stack([EQUILATERAL, np.zeros(3)]).T
    c = np.array([0.25, -0.5, 0.0])
    w = solve_weights(R, c)
    assert w[2] == pytest.approx(WEIGHT_EPS, abs=1e-15)
    # closed form: match x on the bottom edge with the apex held at the floor
    assert w[1] == pytest.approx(0.25 - WEIGHT_EPS * EQUILATERAL[2, 0], abs=1e-12)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)


def test_clamped_qp_matches_grid_oracle(rng):
    grid = simplex_grid(3, 2e-3)
    for _ in range(40):
        R = rng.uniform(-5, 5, size=(2, 3))
        c = rng.uniform(-8, 8, size=2)
        w = clamped_qp(R, c, 0.0)
        obj = float(np.sum((R @ w - c) ** 2))
        _, best = grid_qp(R, c, grid=grid)
        assert obj <= best + 1e-9
        assert abs(w.sum() - 1) <= 1e-12 and w.min() >= 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=6, max_size=6), st.floats(-30, 30), st.floats(-30, 30))
def test_solution_is_feasible(coords, cx, cy):
    R = np.array(coords).reshape(2, 3)
    if abs(np.linalg.det(np.vstack([R, np.ones(3)]))) < 1e-3:
        return
    w = solve_weights(R, np.array([cx, cy]))
    assert abs(w.sum() - 1.0) <= 1e-9
    assert w.min() >= WEIGHT_EPS * (1 - 1e-9)


def test_runtime_weights_stale_and_degenerate():
    ts = TargetSet([[10.0, 10.0, 0.0]], [1.0])
    with pytest.raises(StaleWeights):
        runtime_weights(EQUILATERAL, ts)
    with pytest.raises(RuntimeDegeneracyError):
        actual_centroid([[0, 0], [1, 1], [2, 2]], ts)


def test_batched_solver_matches_scalar(net26, fan26, ellipse500, plan26, rng):
    P = plan26.positions_array(26) + rng.normal(0, 0.3, size=(26, 3)) * [1, 1, 0]
    solver = RuntimeWeightSolver(net26, ellipse500)
    prev = np.full((20, 3), 1 / 3)
    w, empty = solver.update(P, prev)
    for f, i in enumerate(net26.followers):
        pts = P[np.array(net26.in_nbrs[i]) - 1]
        try:
            ref = runtime_weights(pts, ellipse500)
        except StaleWeights:
            assert empty[f]
            assert np.array_equal(w[f], prev[f])
            continue
        assert np.allclose(w[f], ref, atol=1e-10)


def test_runtime_weights_at_desired_plan_recover_varpi(net26, ellipse500, plan26):
    P = plan26.positions_array(26)
    w, empty = RuntimeWeightSolver(net26, ellipse500).update(P, np.zeros((20, 3)))
    assert not empty.any()
    vp = np.array([[plan26.varpi[(i, j)] for j in net26.in_nbrs[i]] for i in net26.followers])
    assert np.abs(w - vp).max() <= 1e-9


def test_boundary_optimum_costs_at_most_the_floor(rng):
    """Centroids outside the hull: the floored solution is within the cost of
    moving eps_w of mass, and the unfloored one matches the grid oracle."""
    grid = simplex_grid(3, 1e-3)
    for _ in range(30):
        R = rng.uniform(-10, 10, size=(2, 3))
        if abs(np.linalg.det(np.vstack([R, np.ones(3)]))) < 4.0:
            continue
        c = R.mean(axis=1) + rng.uniform(8, 15) * rng.choice([-1, 1], 2)
        w = solve_weights(R, c)
        w0 = clamped_qp(R, c, 0.0)
        _, best = grid_qp(R, c, grid=grid)
        obj = lambda v: float(np.sum((R @ v - c) ** 2))  # noqa: E731
        assert obj(w0) <= best + 1e-9
        spread = np.abs(R[:, :, None] - R[:, None, :]).max()
        bound = 2 * WEIGHT_EPS * 3 * spread * 2 * np.sqrt(obj(w0) + 1e-12) + 1e-9
        assert obj(w) - obj(w0) <= bound


def test_centroid_target_gives_equal_weights():
    R = np.column_stack([EQUILATERAL, np.zeros(3)]).T
    assert np.allclose(solve_weights(R, R.mean(axis=1)), 1 / 3, atol=1e-12)


def test_position_on_a_vertex_gives_unit_weight():
    R = np.column_stack([EQUILATERAL, np.zeros(3)]).T
    w = solve_weights(R, R[:, 0])
    assert np.allclose(w, [1 - 2 * WEIGHT_EPS, WEIGHT_EPS, WEIGHT_EPS], atol=1e-12)


def test_symmetric_targets_give_equal_runtime_weights():
    tri = np.column_stack([EQUILATERAL, np.zeros(3)])
    ts = TargetSet([tri.mean(axis=0)], [1.0])
    assert np.allclose(runtime_weights(tri, ts), 1 / 3, atol=1e-12)


def test_centroid_uses_target_count():
    # two targets with intensities 1 and 0.5 at (1,0,0) and (0,0,0)
    tri = np.array([[-1.0, -1.0, 0.0], [3.0, -1.0, 0.0], [0.0, 2.0, 0.0]])
    ts = TargetSet([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]], [1.0, 0.5])
    assert np.allclose(actual_centroid(tri, ts), [0.5, 0.0, 0.0])
