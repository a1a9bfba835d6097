"""Periodic scalar fields on the circle and their spectral analysis.

Everything downstream (convex bodies, shape functionals, cone-constrained
optimization) works with real 2*pi-periodic functions sampled on the uniform
grid ``theta_j = 2*pi*j/N``.  This module provides the sampled-field value
type, Fourier coefficients in the ``(1/2*pi) * integral(u * exp(-i*n*theta))``
convention, fractional Sobolev seminorms, a Poincare-type ratio for fields
supported on a short arc, and the discrete curvature measure ``u'' + u`` whose
atoms mark the corners of the associated convex body.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "PeriodicField",
    "SpectralCoeffs",
    "CurvatureMeasure",
    "spectral_coeffs",
    "sobolev_seminorm",
    "sobolev_norm",
    "curvature_measure",
    "poincare_ratio",
    "dirichlet_integral",
    "refine_field",
]

#: Smallest admissible grid size.  Sizes below this cannot resolve the
#: cos/sin kernel of d^2/dtheta^2 + 1 reliably.
MIN_GRID = 8


@dataclass(frozen=True)
class PeriodicField:
    """Real 2*pi-periodic function sampled at ``theta_j = 2*pi*j/N``.

    Parameters
    ----------
    samples : array_like
        Real samples, one per grid node.  The length must be an even
        integer >= 8 and every entry finite.  Index arithmetic is modulo N
        (implicit periodic extension).
    """

    samples: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.samples, dtype=float)
        if values.ndim != 1:
            raise ValueError("samples must be a one-dimensional array")
        n = values.shape[0]
        if n < MIN_GRID or n % 2 != 0:
            raise ValueError(f"grid size must be even and >= {MIN_GRID}, got {n}")
        if not np.all(np.isfinite(values)):
            raise ValueError("samples must be finite")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "samples", values)

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], n: int) -> "PeriodicField":
        """Sample ``func(theta)`` on the uniform grid with ``n`` nodes."""
        theta = 2.0 * np.pi * np.arange(n) / n
        return cls(np.asarray(func(theta), dtype=float))

    @property
    def n(self) -> int:
        """Number of grid nodes."""
        return self.samples.shape[0]

    @property
    def dtheta(self) -> float:
        """Grid spacing 2*pi/N."""
        return 2.0 * np.pi / self.n

    @property
    def theta(self) -> np.ndarray:
        """Grid angles theta_j = 2*pi*j/N."""
        return 2.0 * np.pi * np.arange(self.n) / self.n

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class SpectralCoeffs:
    """Fourier coefficients of a real periodic field.

    Coefficients follow the convention
    ``u_hat(n) = (1/2*pi) * integral(u(theta) * exp(-i*n*theta) dtheta)``
    evaluated by the (here exact) trapezoid rule, i.e. ``fft(samples)/N``.
    They are stored for ``n = -N/2 .. N/2-1`` in increasing order of ``n``.

    Attributes
    ----------
    ns : ndarray of int
        Frequencies, ``-N/2 .. N/2 - 1``.
    coeffs : ndarray of complex
        ``u_hat(n)`` aligned with `ns`.
    """

    ns: np.ndarray
    coeffs: np.ndarray

    @classmethod
    def from_field(cls, field: PeriodicField) -> "SpectralCoeffs":
        n = field.n
        raw = np.fft.fft(field.samples) / n
        coeffs = np.fft.fftshift(raw)
        ns = np.fft.fftshift(np.fft.fftfreq(n, d=1.0 / n)).astype(int)
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        ns.flags.writeable = False
        return cls(ns=ns, coeffs=coeffs)

    def coeff(self, n: int) -> complex:
        """Return ``u_hat(n)``; frequencies outside the stored band are 0."""
        size = self.ns.shape[0]
        if n < -size // 2 or n > size // 2 - 1:
            return 0.0 + 0.0j
        return complex(self.coeffs[n + size // 2])

    def to_field(self) -> PeriodicField:
        """Invert the transform back to samples (roundtrip <= 1e-12)."""
        n = self.ns.shape[0]
        raw = np.fft.ifftshift(self.coeffs) * n
        return PeriodicField(np.fft.ifft(raw).real)


@dataclass(frozen=True)
class CurvatureMeasure:
    """Discretization of the measure ``mu = u'' + u`` on the grid.

    ``node_masses[j]`` approximates the mass of ``mu`` in the cell around
    ``theta_j``; a corner of the body (a Dirac atom of ``mu``) shows up as a
    single node carrying an O(1) mass, while a smooth boundary arc spreads
    mass O(dtheta) per node.  ``atoms`` stays empty until a caller runs the
    thresholding splitter (see :func:`artifact.analyze.split_atoms`).

    Attributes
    ----------
    node_masses : ndarray
        Mass of ``mu`` attributed to each grid node.
    atoms : tuple of (theta, mass)
        Detected Dirac atoms, strictly increasing angles, positive masses.
    density : ndarray
        Absolutely continuous part per ``dtheta`` (``node_masses/dtheta``
        when no atoms were split off).
    total_mass : float
        Sum of node masses; equals ``dtheta * sum(u)`` up to roundoff.
    """

    node_masses: np.ndarray
    density: np.ndarray
    total_mass: float
    atoms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        masses = np.asarray(self.node_masses, dtype=float)
        dens = np.asarray(self.density, dtype=float)
        if masses.shape != dens.shape or masses.ndim != 1:
            raise ValueError("node_masses and density must be 1-d arrays of equal length")
        angles = [a for a, _ in self.atoms]
        if any(m <= 0 for _, m in self.atoms):
            raise ValueError("atom masses must be positive")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            raise ValueError("atom angles must be strictly increasing")
        masses = masses.copy()
        dens = dens.copy()
        masses.flags.writeable = False
        dens.flags.writeable = False
        object.__setattr__(self, "node_masses", masses)
        object.__setattr__(self, "density", dens)
        object.__setattr__(self, "atoms", tuple(self.atoms))

    @property
    def n(self) -> int:
        return self.node_masses.shape[0]


def spectral_coeffs(field: PeriodicField) -> SpectralCoeffs:
    """Fourier coefficients of `field` (see :class:`SpectralCoeffs`)."""
    return SpectralCoeffs.from_field(field)


def _validate_s(s: float, upper: float) -> float:
    s = float(s)
    if not 0.0 <= s <= upper:
        raise ValueError(f"s must lie in [0, {upper}], got {s}")
    return s


def sobolev_seminorm(field: PeriodicField, s: float) -> float:
    """Fractional Sobolev seminorm ``(sum_{n != 0} |n|^{2s} |u_hat(n)|^2)^{1/2}``.

    Constants have seminorm zero for every ``s``.  For ``s = 1`` this is the
    spectral H^1 seminorm ``((1/2*pi) * integral(u'^2))^{1/2}`` of the
    band-limited interpolant.

    Parameters
    ----------
    field : PeriodicField
    s : float
        Smoothness order in [0, 1].
    """
    s = _validate_s(s, 1.0)
    spec = SpectralCoeffs.from_field(field)
    mask = spec.ns != 0
    weights = np.abs(spec.ns[mask]).astype(float) ** (2.0 * s)
    return float(np.sqrt(np.sum(weights * np.abs(spec.coeffs[mask]) ** 2)))


def sobolev_norm(field: PeriodicField, s: float) -> float:
    """Full Sobolev norm ``(||u||_{L^2}^2 + |u|_{H^s}^2)^{1/2}``.

    The L^2 norm uses the same ``1/(2*pi)`` convention as the coefficients,
    ``||u||_{L^2}^2 = sum_n |u_hat(n)|^2``.
    """
    s = _validate_s(s, 1.0)
    spec = SpectralCoeffs.from_field(field)
    l2_sq = float(np.sum(np.abs(spec.coeffs) ** 2))
    return float(np.sqrt(l2_sq + sobolev_seminorm(field, s) ** 2))


def curvature_measure(field: PeriodicField) -> CurvatureMeasure:
    """Discrete curvature measure of ``u`` as node masses of ``u'' + u``.

    Node mass ``m_j = (u_{j-1} - 2 u_j + u_{j+1})/dtheta + u_j * dtheta``
    combines the centered second difference (scaled so an atom of mass m
    lands on a single node with mass ~ m) with the cell mass of ``u``.  The
    second differences telescope around the circle, so
    ``sum(m) = dtheta * sum(u)`` exactly.

    The returned measure carries no atoms; thresholding into atoms plus an
    absolutely continuous density is a diagnostic step performed on request
    (:func:`artifact.analyze.split_atoms`).
    """
    u = field.samples
    dtheta = field.dtheta
    second = np.roll(u, 1) - 2.0 * u + np.roll(u, -1)
    masses = second / dtheta + u * dtheta
    return CurvatureMeasure(
        node_masses=masses,
        density=masses / dtheta,
        total_mass=float(masses.sum()),
    )


def dirichlet_integral(field: PeriodicField) -> float:
    """``integral(u'^2 dtheta)`` of the piecewise-linear interpolant.

    Equals ``sum_j ((u_{j+1} - u_j)/dtheta)^2 * dtheta``.  Used as the H^1
    energy of kinked fields (hat functions, cut-off sine bumps), where
    spectral differentiation rings.
    """
    du = np.diff(field.samples, append=field.samples[:1])
    return float(np.sum(du * du) / field.dtheta)


def _longest_zero_run(mask: np.ndarray) -> int:
    """Length of the longest circular run of True in `mask`."""
    if mask.all():
        return mask.shape[0]
    if not mask.any():
        return 0
    # Unroll the circle at a False position, then scan linearly.
    start = int(np.argmin(mask))
    rolled = np.roll(mask, -start)
    best = run = 0
    for flag in rolled:
        run = run + 1 if flag else 0
        best = max(best, run)
    return best


def support_arc_length(field: PeriodicField) -> float:
    """Arc length of the support of the piecewise-linear interpolant.

    A circular run of R nonzero nodes spans R + 1 grid cells (the interpolant
    only vanishes beyond the zero nodes flanking the run).  Bounds stated in
    terms of the support length hold for the sampled field with this
    effective length, not the nominal bump width.
    """
    zero_run = _longest_zero_run(field.samples == 0.0)
    if zero_run == field.n:
        return 0.0
    if zero_run == 0:
        return 2.0 * np.pi
    return 2.0 * np.pi - (zero_run - 1) * field.dtheta


def poincare_ratio(field: PeriodicField, s: float) -> float:
    """Poincare quotient for a field supported on a short arc.

    Returns ``||u||_{L^2} / |u|_{H^1}`` for ``s = 0`` and
    ``|u|_{H^s} / |u|_{H^1}`` for ``s in (0, 1)``, where the denominator is
    the Dirichlet energy of the piecewise-linear interpolant (in the same
    ``1/(2*pi)`` normalization).  For a field supported on an arc of length
    ``eps < pi`` the quotient is bounded by ``pi^(s-1) * eps^(1-s)``, with
    equality (at ``s = 0``) for the half-sine bump.

    The support is identified from the longest circular run of exact zeros,
    which must cover an arc of length >= pi; fields constructed as localized
    probes have exact zero tails by construction.

    Raises
    ------
    ValueError
        If ``s`` is outside [0, 1) or no zero run of length >= pi exists.
    """
    s = _validate_s(s, 1.0)
    if s >= 1.0:
        raise ValueError("s must lie in [0, 1) for the Poincare ratio")
    u = field.samples
    zero_run = _longest_zero_run(u == 0.0)
    if zero_run * field.dtheta < np.pi:
        raise ValueError(
            "support arc not identifiable: need a circular run of exact zeros "
            "covering at least half the circle"
        )
    denom_sq = dirichlet_integral(field) / (2.0 * np.pi)
    if denom_sq == 0.0:
        raise ValueError("field has vanishing H^1 seminorm")
    if s == 0.0:
        num_sq = float(np.mean(u * u))  # == sum |u_hat|^2 by Parseval
    else:
        num_sq = sobolev_seminorm(field, s) ** 2
    return float(np.sqrt(num_sq / denom_sq))


def refine_field(field: PeriodicField) -> PeriodicField:
    """Resample to twice the resolution by inserting edge midpoints.

    Piecewise-linear in theta: existing nodes are kept, new nodes take the
    average of their neighbours.  Gauge functions of polygons stay gauges of
    (nearly) the same polygon, which is what resolution-stability checks of
    the corner detector need.
    """
    u = field.samples
    mid = 0.5 * (u + np.roll(u, -1))
    out = np.empty(2 * u.shape[0])
    out[0::2] = u
    out[1::2] = mid
    return PeriodicField(out)
