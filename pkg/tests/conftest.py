import numpy as np
import pytest

from artifact.periodic import PeriodicField
from artifact.body import GaugeBody

SEED = 20260815

J01 = 2.404825557695773  # first zero of the Bessel function J0
J01_SQ = J01 * J01


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


def grid(n: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


def disk_body(n: int = 128, radius: float = 1.0) -> GaugeBody:
    return GaugeBody(PeriodicField(np.full(n, 1.0 / radius)))


def square_gauge(n: int, half_width: float = 1.0) -> PeriodicField:
    """Gauge of the square [-w, w]^2: u = max(|cos|, |sin|) / w."""
    theta = grid(n)
    return PeriodicField(np.maximum(np.abs(np.cos(theta)), np.abs(np.sin(theta))) / half_width)


def square_body(n: int = 128, half_width: float = 1.0) -> GaugeBody:
    # The square's gauge is piecewise trig; the sampled second difference can
    # dip a hair below zero next to the corners, hence the loose cone tol.
    return GaugeBody(square_gauge(n, half_width), tol_cone=1e-6)


def smooth_body(n: int = 128) -> GaugeBody:
    """Ellipse-like smooth convex body (gauge 1 + 0.3 cos(2 theta) is convex)."""
    theta = grid(n)
    return GaugeBody(PeriodicField(1.0 + 0.3 * np.cos(2.0 * theta)), tol_cone=1e-6)


def kgon_gauge(k: int, n: int, circumradius: float = 1.0) -> PeriodicField:
    """Gauge of the regular k-gon with a vertex at angle 0."""
    theta = grid(n)
    half = np.pi / k
    # Vertices at angles 2j*pi/k, edge normals halfway between; the distance
    # from the origin to each edge is cos(half) * circumradius.
    rel = np.mod(theta, 2.0 * half) - half
    u = np.cos(rel) / (np.cos(half) * circumradius)
    return PeriodicField(u)


def random_convex_body(n: int, rng: np.random.Generator) -> GaugeBody:
    """Smooth random convex body: positive curvature measure by construction."""
    theta = grid(n)
    u = np.ones(n)
    # Mode m contributes (m^2 - 1) * amp to the curvature deficit; keep the
    # total strictly below 1 so u'' + u > 0 for every draw.
    for mode in range(2, 6):
        amp = rng.uniform(-1.0, 1.0) * 0.2 / (mode * mode - 1)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        u += amp * np.cos(mode * theta + phase)
    return GaugeBody(PeriodicField(u), tol_cone=1e-8)
