import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.periodic import (
    CurvatureMeasure,
    PeriodicField,
    curvature_measure,
    dirichlet_integral,
    poincare_ratio,
    refine_field,
    sobolev_norm,
    sobolev_seminorm,
    spectral_coeffs,
    support_arc_length,
)

from conftest import grid, square_gauge


# -- fields and coefficients ---------------------------------------------------


def test_field_validation():
    with pytest.raises(ValueError):
        PeriodicField(np.ones(7))  # odd
    with pytest.raises(ValueError):
        PeriodicField(np.ones(4))  # too small
    with pytest.raises(ValueError):
        PeriodicField(np.array([1.0, np.inf] * 8))
    with pytest.raises(ValueError):
        PeriodicField(np.ones((8, 2)))


def test_field_is_read_only():
    field = PeriodicField(np.ones(16))
    with pytest.raises(ValueError):
        field.samples[0] = 2.0


def test_spectral_roundtrip():
    theta = grid(64)
    field = PeriodicField(1.0 + 0.5 * np.cos(3 * theta) - 0.25 * np.sin(7 * theta))
    back = spectral_coeffs(field).to_field()
    assert np.max(np.abs(back.samples - field.samples)) <= 1e-12


def test_spectral_single_mode_coefficients():
    theta = grid(32)
    field = PeriodicField(np.cos(2 * theta))
    coeffs = spectral_coeffs(field)
    assert coeffs.coeff(2) == pytest.approx(0.5, abs=1e-12)
    assert coeffs.coeff(-2) == pytest.approx(0.5, abs=1e-12)
    assert abs(coeffs.coeff(0)) <= 1e-14
    assert abs(coeffs.coeff(5)) <= 1e-14


def test_parseval():
    rng = np.random.default_rng(20260815)
    u = rng.normal(size=128)
    field = PeriodicField(u)
    coeffs = spectral_coeffs(field)
    assert np.mean(u * u) == pytest.approx(
        float(np.sum(np.abs(coeffs.coeffs) ** 2)), abs=1e-10
    )


# -- seminorms -----------------------------------------------------------------


def test_seminorm_cos_h1():
    field = PeriodicField(np.cos(grid(64)))
    assert sobolev_seminorm(field, 1.0) == pytest.approx(np.sqrt(0.5), abs=1e-12)


@pytest.mark.parametrize("s", [0.0, 0.25, 0.5, 1.0])
def test_seminorm_kills_constants(s):
    field = PeriodicField(np.full(32, 4.7))
    assert sobolev_seminorm(field, s) == pytest.approx(0.0, abs=1e-13)


def test_seminorm_cos3_half():
    field = PeriodicField(np.cos(3 * grid(128)))
    # |n|^(2s) |u_hat|^2 summed over n = +-3: 2 * 3 * 1/4 = 3/2.
    assert sobolev_seminorm(field, 0.5) == pytest.approx(np.sqrt(1.5), abs=1e-12)


def test_sobolev_norm_combines_l2():
    theta = grid(64)
    field = PeriodicField(2.0 + np.cos(theta))
    l2_sq = 4.0 + 0.5
    semi_sq = 0.5
    assert sobolev_norm(field, 1.0) == pytest.approx(np.sqrt(l2_sq + semi_sq), abs=1e-12)


def test_seminorm_interpolation_bound():
    """|u|_{H^s} <= |u|_{H^1}^s * ||u||_{L^2}^(1-s) (Hoelder in frequency)."""
    rng = np.random.default_rng(7)
    for _ in range(20):
        field = PeriodicField(rng.normal(size=64))
        l2 = np.sqrt(np.mean(field.samples**2))
        h1 = sobolev_seminorm(field, 1.0)
        for s in (0.25, 0.5, 0.75):
            assert sobolev_seminorm(field, s) <= (h1**s) * (l2 ** (1 - s)) * (1 + 1e-12)


def test_seminorm_rejects_bad_s():
    field = PeriodicField(np.ones(16))
    with pytest.raises(ValueError):
        sobolev_seminorm(field, -0.1)
    with pytest.raises(ValueError):
        sobolev_seminorm(field, 1.5)


# -- curvature measure ----------------------------------------------------------


def test_curvature_constant_gauge():
    n = 64
    measure = curvature_measure(PeriodicField(np.ones(n)))
    dtheta = 2 * np.pi / n
    assert np.allclose(measure.node_masses, dtheta, atol=1e-12)
    assert measure.total_mass == pytest.approx(2 * np.pi, rel=1e-12)
    assert np.allclose(measure.density, 1.0, atol=1e-12)


def test_curvature_total_is_integral_of_u():
    """Second differences telescope: total mass = dtheta * sum(u) exactly."""
    rng = np.random.default_rng(3)
    u = 1.0 + 0.2 * rng.normal(size=128)
    measure = curvature_measure(PeriodicField(u))
    dtheta = 2 * np.pi / 128
    assert measure.total_mass == pytest.approx(dtheta * float(np.sum(u)), abs=1e-12)


def test_curvature_square_corner_masses():
    n = 512
    measure = curvature_measure(square_gauge(n))
    assert measure.total_mass == pytest.approx(4 * np.sqrt(2), rel=1e-3)
    # Mass concentrates at the four diagonal directions.
    corner_cells = []
    dtheta = 2 * np.pi / n
    for corner in (np.pi / 4, 3 * np.pi / 4, 5 * np.pi / 4, 7 * np.pi / 4):
        j = int(round(corner / dtheta)) % n
        window = measure.node_masses[[(j - 1) % n, j, (j + 1) % n]]
        corner_cells.append(float(np.sum(window)))
    assert np.allclose(corner_cells, np.sqrt(2), rtol=1e-2)


def test_curvature_smooth_gauge_mass():
    n = 256
    theta = grid(n)
    measure = curvature_measure(PeriodicField(1.0 + 0.5 * np.cos(theta)))
    # u'' + u = 1 for this gauge: uniform unit density.
    assert measure.total_mass == pytest.approx(2 * np.pi, rel=1e-10)
    assert np.allclose(measure.density, 1.0, atol=1e-3)


def test_curvature_measure_atom_validation():
    with pytest.raises(ValueError):
        CurvatureMeasure(
            node_masses=np.ones(16),
            density=np.ones(16),
            total_mass=16.0,
            atoms=((0.5, -1.0),),
        )
    with pytest.raises(ValueError):
        CurvatureMeasure(
            node_masses=np.ones(16),
            density=np.ones(16),
            total_mass=16.0,
            atoms=((2.0, 1.0), (1.0, 1.0)),
        )


# -- Poincare ratio ---------------------------------------------------------------


def half_sine_field(n: int, eps: float, start: float = 0.0) -> PeriodicField:
    theta = grid(n)
    rel = np.mod(theta - start, 2 * np.pi)
    v = np.where(rel < eps, np.sin(np.pi * rel / eps), 0.0)
    return PeriodicField(v)


def test_poincare_half_sine_equality():
    n = 1024
    eps = np.pi / 2
    ratio = poincare_ratio(half_sine_field(n, eps), 0.0)
    assert ratio == pytest.approx(eps / np.pi, abs=1e-4)


def test_poincare_hat_function():
    n = 1024
    eps = np.pi / 2
    theta = grid(n)
    rel = np.mod(theta, 2 * np.pi)
    hat = np.where(
        rel < eps, np.minimum(rel, eps - rel) * 2 / eps, 0.0
    )
    ratio = poincare_ratio(PeriodicField(hat), 0.0)
    # ||hat||_L2 / |hat|_H1 for the unit hat on (0, eps): sqrt(eps^2/12).
    assert ratio == pytest.approx(eps / np.sqrt(12), rel=1e-3)


def test_poincare_requires_zero_run():
    field = PeriodicField(1.0 + 0.1 * np.cos(grid(64)))
    with pytest.raises(ValueError):
        poincare_ratio(field, 0.0)
    # Support longer than pi (zero run shorter than pi) is rejected too.
    wide = half_sine_field(1024, 3.5)
    with pytest.raises(ValueError):
        poincare_ratio(wide, 0.0)


def test_poincare_fractional_bound():
    """ratio <= pi^(s-1) * eps^(1-s) with eps the discrete support length."""
    n = 1024
    for s in (0.0, 0.5):
        for eps in (1.5, 0.75, 0.375):
            field = half_sine_field(n, eps)
            eps_eff = support_arc_length(field)
            ratio = poincare_ratio(field, s)
            bound = np.pi ** (s - 1) * eps_eff ** (1 - s)
            assert ratio <= bound * (1 + 1e-6)


@settings(max_examples=30, deadline=None)
@given(
    eps=st.floats(min_value=0.3, max_value=3.0),
    start=st.floats(min_value=0.0, max_value=2 * np.pi),
    mode=st.integers(min_value=1, max_value=3),
    s=st.sampled_from([0.0, 0.5]),
)
def test_poincare_bound_property(eps, start, mode, s):
    n = 512
    theta = grid(n)
    rel = np.mod(theta - start, 2 * np.pi)
    v = np.where(rel < eps, np.sin(mode * np.pi * rel / eps), 0.0)
    field = PeriodicField(v)
    if np.max(np.abs(v)) < 0.1:  # degenerate sampling of a narrow bump
        return
    eps_eff = support_arc_length(field)
    ratio = poincare_ratio(field, s)
    assert ratio <= np.pi ** (s - 1) * eps_eff ** (1 - s) * (1 + 1e-6)


# -- misc -----------------------------------------------------------------------


def test_dirichlet_integral_cos():
    field = PeriodicField(np.cos(grid(512)))
    # integral of sin^2 = pi; the forward-difference quadrature is O(dtheta^2).
    assert dirichlet_integral(field) == pytest.approx(np.pi, rel=1e-4)


def test_refine_field_doubles_and_interpolates():
    field = PeriodicField(np.cos(grid(64)))
    fine = refine_field(field)
    assert fine.n == 128
    assert np.allclose(fine.samples[0::2], field.samples)
    mid = 0.5 * (field.samples + np.roll(field.samples, -1))
    assert np.allclose(fine.samples[1::2], mid)
