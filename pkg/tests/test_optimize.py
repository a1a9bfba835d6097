"""Optimizer layer: cone operator, projection QP, solver, KKT recovery."""

import numpy as np
import pytest

from artifact.functional import ConstraintSpec, EqualityConstraint, FunctionalSpec, Kind, Term
from artifact.optimize import (
    InfeasibleError,
    OptimizerConfig,
    cone_matrix,
    minimize,
    project_feasible,
    recover_multipliers,
    save_history_csv,
)
from artifact.periodic import PeriodicField

from conftest import J01_SQ, grid, random_convex_body, square_gauge

N = 64


def box(lower=None, upper=None, equality=None) -> ConstraintSpec:
    return ConstraintSpec(lower=lower, upper=upper, equality=equality)


# -- cone operator -----------------------------------------------------------------


def test_cone_kernel_is_trigonometric():
    cone = cone_matrix(N)
    theta = grid(N)
    for v in (np.cos(theta), np.sin(theta), 0.7 * np.cos(theta) - 0.2 * np.sin(theta)):
        np.testing.assert_allclose(cone.rows @ v, 0.0, atol=1e-12)
    assert np.all(cone.rows @ np.ones(N) > 0.0)


def test_cone_matrix_is_symmetric_circulant():
    cone = cone_matrix(N)
    np.testing.assert_array_equal(cone.rows, cone.rows.T)
    np.testing.assert_array_equal(cone.rows, np.roll(np.roll(cone.rows, 1, 0), 1, 1))


def test_cone_matrix_validation():
    with pytest.raises(ValueError):
        cone_matrix(7)
    with pytest.raises(ValueError):
        cone_matrix(4)


def test_cone_detects_square_corners():
    n = 128
    masses = cone_matrix(n).rows @ square_gauge(n).samples
    corner_nodes = [n // 8, 3 * n // 8, 5 * n // 8, 7 * n // 8]
    spikes = masses[corner_nodes]
    rest = np.delete(masses, corner_nodes)
    assert np.min(spikes) > 100.0 * np.max(np.abs(rest))


# -- projection --------------------------------------------------------------------


def test_project_returns_feasible_input_unchanged(rng):
    cone = cone_matrix(N)
    body = random_convex_body(N, rng)
    out = project_feasible(body.u, cone, box(lower=0.1))
    assert out is body.u


def test_project_feasibility_and_idempotence(rng):
    cone = cone_matrix(N)
    cons = box(lower=0.4, upper=1.8)
    raw = PeriodicField(1.0 + 0.8 * np.cos(5.0 * grid(N)) + 0.1 * rng.standard_normal(N))
    projected = project_feasible(raw, cone, cons)
    assert float(np.min(cone.rows @ projected.samples)) >= -1e-9
    assert np.all(projected.samples >= 0.4 - 1e-10)
    assert np.all(projected.samples <= 1.8 + 1e-10)
    again = project_feasible(projected, cone, cons)
    np.testing.assert_allclose(again.samples, projected.samples, atol=1e-12)


def test_project_optimality_variational_inequality(rng):
    # x* is the projection iff (raw - x*) . (z - x*) <= 0 for all feasible z.
    cone = cone_matrix(N)
    cons = box(lower=0.3, upper=2.0)
    raw = PeriodicField(1.0 + 0.9 * np.cos(4.0 * grid(N)))
    star = project_feasible(raw, cone, cons).samples
    for _ in range(20):
        z = np.clip(random_convex_body(N, rng).u.samples, 0.3, None)
        z = np.minimum(z, 2.0)  # clipping against constants preserves convexity
        inner = float(np.dot(raw.samples - star, z - star))
        assert inner <= 1e-8 * max(1.0, float(np.linalg.norm(raw.samples - star)))


def test_project_warm_start_agrees(rng):
    cone = cone_matrix(N)
    cons = box(lower=0.5)
    raw = PeriodicField(1.0 + 0.7 * np.cos(6.0 * grid(N)))
    cold, working = project_feasible(raw, cone, cons, return_info=True)
    nudged = PeriodicField(raw.samples + 1e-3 * np.cos(grid(N)))
    warm = project_feasible(nudged, cone, cons, warm_start=working)
    cold2 = project_feasible(nudged, cone, cons)
    np.testing.assert_allclose(warm.samples, cold2.samples, atol=1e-9)


def test_project_roll_equivariance():
    cone = cone_matrix(N)
    cons = box(lower=0.2, upper=3.0)
    raw = 1.0 + 0.8 * np.cos(3.0 * grid(N) + 0.37)
    shift = 11
    direct = project_feasible(PeriodicField(np.roll(raw, shift)), cone, cons).samples
    rolled = np.roll(project_feasible(PeriodicField(raw), cone, cons).samples, shift)
    np.testing.assert_allclose(direct, rolled, atol=1e-9)


def test_project_infeasible_raises():
    cone = cone_matrix(N)
    pinned = PeriodicField(1.0 + 0.9 * np.cos(6.0 * grid(N)))
    cons = box(lower=pinned, upper=pinned)  # forces a nonconvex gauge
    with pytest.raises(InfeasibleError):
        project_feasible(PeriodicField(np.ones(N)), cone, cons)


def test_project_resolution_mismatch():
    with pytest.raises(ValueError):
        project_feasible(PeriodicField(np.ones(32)), cone_matrix(N), box())


# -- minimization: geometric problems (exact gradients) ------------------------------


def perimeter_area_problem():
    spec = FunctionalSpec(terms=(Term(Kind.PERIMETER),))
    cons = box(lower=1.0 / 3.0, upper=3.0, equality=EqualityConstraint(Kind.AREA, np.pi))
    return spec, cons


def test_minimize_isoperimetric_finds_disk():
    spec, cons = perimeter_area_problem()
    u0 = PeriodicField(1.0 + 0.2 * np.cos(3.0 * grid(N)))
    result = minimize(spec, cons, OptimizerConfig(), u0)
    assert result.success, result.message
    np.testing.assert_allclose(result.u_star.u.samples, 1.0, atol=1e-3)
    assert result.objective == pytest.approx(2.0 * np.pi, rel=1e-6)
    # Stationarity is carried by the equality multiplier: grad P = mu * grad A
    # at the unit disk gives mu = 1.
    assert result.kkt.mu_eq == pytest.approx(1.0, abs=1e-2)


def test_minimize_kkt_invariants():
    spec, cons = perimeter_area_problem()
    result = minimize(spec, cons, OptimizerConfig(), PeriodicField(np.full(N, 1.2)))
    kkt = result.kkt
    assert np.all(kkt.eta >= -1e-10)
    assert abs(kkt.complementarity_residual) <= 1e-6
    assert kkt.stationarity_residual <= 1e-4
    assert kkt.zeta0.shape == (N,)
    np.testing.assert_allclose(kkt.zeta0, kkt.eta * (2.0 * np.pi / N), rtol=1e-15)
    # Equality restoration holds the constraint to near round-off.
    final_area = np.pi  # target
    from artifact.body import area

    assert area(result.u_star) == pytest.approx(final_area, abs=1e-8)


def test_minimize_box_active_upper():
    # Minimizing the area drives u up to the box ceiling everywhere.
    spec = FunctionalSpec(terms=(Term(Kind.AREA),))
    cons = box(lower=0.75, upper=1.25)
    result = minimize(spec, cons, OptimizerConfig(), PeriodicField(np.ones(N)))
    assert result.success
    np.testing.assert_allclose(result.u_star.u.samples, 1.25, atol=1e-9)
    assert np.all(result.kkt.box_mult <= 1e-12)  # upper bound: negative multipliers
    assert result.kkt.stationarity_residual <= 1e-6


def test_minimize_history_and_evaluations():
    spec, cons = perimeter_area_problem()
    result = minimize(spec, cons, OptimizerConfig(), PeriodicField(np.full(N, 0.9)))
    assert result.evaluations >= result.iterations
    assert len(result.history) >= 1
    row = result.history[0]
    assert {"iter", "objective", "merit", "eq_residual", "cone_min", "step", "stationarity"} <= set(
        row
    )


def test_recover_multipliers_matches_result():
    spec, cons = perimeter_area_problem()
    result = minimize(spec, cons, OptimizerConfig(), PeriodicField(np.full(N, 1.1)))
    cone = cone_matrix(N)
    kkt = recover_multipliers(result, spec, cone, cons)
    assert kkt.mu_eq == pytest.approx(result.kkt.mu_eq, abs=1e-6)
    assert kkt.stationarity_residual <= 1e-4


def test_minimize_rejects_empty_box():
    spec, cons = perimeter_area_problem()
    bad = ConstraintSpec(lower=2.0, upper=1.0, equality=cons.equality)
    with pytest.raises(InfeasibleError):
        minimize(spec, bad, OptimizerConfig(), PeriodicField(np.ones(N)))


def test_save_history_csv_roundtrip(tmp_path):
    spec, cons = perimeter_area_problem()
    result = minimize(spec, cons, OptimizerConfig(), PeriodicField(np.ones(N)))
    path = tmp_path / "history.csv"
    save_history_csv(result.history, path)
    table = np.genfromtxt(path, delimiter=",", names=True)
    assert table.dtype.names == (
        "iter",
        "objective",
        "merit",
        "eq_residual",
        "cone_min",
        "step",
        "stationarity",
    )
    assert table.shape[0] == len(result.history)
    assert np.isfinite(table["objective"]).all()


# -- minimization with a PDE term -----------------------------------------------------


def test_minimize_lambda_plus_perimeter_ball():
    # Free optimum: the ball of radius (j01^2/pi)^(1/3); run on a coarse mesh
    # with the tolerance set at that mesh's gradient noise floor.
    n = 32
    spec = FunctionalSpec(terms=(Term(Kind.LAMBDA1), Term(Kind.PERIMETER)), mesh_h=0.3)
    cons = box(lower=0.5, upper=2.0)
    config = OptimizerConfig(tol_kkt=1e-2, max_inner=120)
    result = minimize(spec, cons, config, PeriodicField(np.full(n, 1.0)))
    assert result.success, result.status
    u_target = (np.pi / J01_SQ) ** (1.0 / 3.0)
    assert np.mean(result.u_star.u.samples) == pytest.approx(u_target, rel=2e-2)
    assert np.max(np.abs(result.u_star.u.samples - np.mean(result.u_star.u.samples))) < 5e-3
    assert np.all(result.kkt.eta == 0.0)  # cone inactive at a round optimum
