"""Convex planar bodies through their gauge and support functions.

A body containing the origin is encoded by its gauge function ``u``: in polar
coordinates the body is ``{r < 1/u(theta)}``, and it is convex exactly when
``u'' + u >= 0`` as a measure.  This module provides the gauge/support/polygon
value types, the duality maps between them, and the area and perimeter
functionals together with their first and second derivatives with respect to
nodal perturbations of ``u``.

All quadratures are fixed once and for all: the area uses the trapezoid rule
(exact-order on the periodic grid), while the perimeter and the support-side
area use a midpoint rule per grid cell, with the slope taken as the cell's
difference quotient.  Gradients and Hessian forms below are the *exact*
derivatives of these discrete quadratures, so finite differences of the
functionals reproduce them to roundoff.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass

import numpy as np

from .periodic import CurvatureMeasure, PeriodicField, curvature_measure

__all__ = [
    "DomainError",
    "GaugeBody",
    "SupportBody",
    "PolygonBody",
    "area",
    "perimeter",
    "area_gradient",
    "perimeter_gradient",
    "area_hessian_form",
    "perimeter_hessian_form",
    "support_functionals",
    "gauge_to_support",
    "polar_dual",
    "gauge_to_polygon",
    "polygon_to_gauge",
    "load_polygon_csv",
    "save_polygon_csv",
]

#: Gauge functions below this threshold describe bodies reaching out to
#: 1/U_MIN from the origin; treat them as degenerate.
U_MIN = 1e-6

#: Default tolerance on negative node masses of u'' + u when validating
#: convexity of a gauge or support function.
TOL_CONE = 1e-8


class DomainError(ValueError):
    """A body is degenerate or outside an operation's domain."""


def _validate_positive(field: PeriodicField, u_min: float, what: str) -> None:
    if float(field.samples.min()) < u_min:
        raise DomainError(f"{what} must stay >= {u_min}: min sample {field.samples.min()}")


def _validate_convex(field: PeriodicField, tol_cone: float, what: str) -> None:
    worst = float(curvature_measure(field).node_masses.min())
    if worst < -tol_cone:
        raise DomainError(f"{what} violates convexity: min node mass {worst} < -{tol_cone}")


@dataclass(frozen=True)
class GaugeBody:
    """Convex body ``{r < 1/u(theta)}`` given by its gauge function.

    Parameters
    ----------
    u : PeriodicField
        Strictly positive gauge samples (units 1/length).
    require_convex : bool, optional
        Check ``u'' + u >= -tol`` on construction.  Finite-difference probes
        evaluate functionals on slightly non-convex perturbations ``u + h*v``
        and pass False; everything user-facing keeps the default.
    u_min, tol_cone : float, optional
        Degeneracy and convexity tolerances.
    """

    u: PeriodicField
    require_convex: InitVar[bool] = True
    u_min: InitVar[float] = U_MIN
    tol_cone: InitVar[float] = TOL_CONE

    def __post_init__(self, require_convex, u_min, tol_cone):
        _validate_positive(self.u, u_min, "gauge function")
        if require_convex:
            _validate_convex(self.u, tol_cone, "gauge function")

    @property
    def n(self) -> int:
        return self.u.n

    def gauge_at(self, theta) -> np.ndarray:
        """Gauge value at arbitrary angles (piecewise-linear in theta)."""
        grid = np.append(self.u.theta, 2.0 * np.pi)
        vals = np.append(self.u.samples, self.u.samples[0])
        return np.interp(np.mod(theta, 2.0 * np.pi), grid, vals)

    def radius(self, theta) -> np.ndarray:
        """Boundary radius ``1/u`` at arbitrary angles."""
        return 1.0 / self.gauge_at(theta)

    def boundary_points(self) -> np.ndarray:
        """Boundary vertices ``(1/u_j) * (cos theta_j, sin theta_j)``, shape (N, 2)."""
        r = 1.0 / self.u.samples
        t = self.u.theta
        return np.column_stack((r * np.cos(t), r * np.sin(t)))


@dataclass(frozen=True)
class SupportBody:
    """Convex body given by its support function ``h(theta) = max_x x . e_theta``."""

    h: PeriodicField
    require_convex: InitVar[bool] = True
    h_min: InitVar[float] = U_MIN
    tol_cone: InitVar[float] = TOL_CONE

    def __post_init__(self, require_convex, h_min, tol_cone):
        _validate_positive(self.h, h_min, "support function")
        if require_convex:
            _validate_convex(self.h, tol_cone, "support function")

    @property
    def n(self) -> int:
        return self.h.n


@dataclass(frozen=True)
class PolygonBody:
    """Convex polygon with vertices in counterclockwise order, origin inside."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise ValueError("vertices must be an (M, 2) array with M >= 3")
        edges = np.roll(verts, -1, axis=0) - verts
        cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if not np.all(cross > 0.0):
            raise ValueError("vertex sequence must be strictly convex and counterclockwise")
        # Origin strictly inside <=> every edge line has positive offset.
        normals = np.column_stack((edges[:, 1], -edges[:, 0]))
        offsets = np.einsum("ij,ij->i", normals, verts)
        if not np.all(offsets > 0.0):
            raise DomainError("origin must lie strictly inside the polygon")
        verts = verts.copy()
        verts.flags.writeable = False
        object.__setattr__(self, "vertices", verts)

    @property
    def m(self) -> int:
        return self.vertices.shape[0]

    def shoelace_area(self) -> float:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - v[:, 1] * w[:, 0]))


# -- geometric functionals ---------------------------------------------------


def area(body: GaugeBody) -> float:
    """Area ``integral(1/(2 u^2) dtheta)`` by the trapezoid rule."""
    u = body.u.samples
    return float(body.u.dtheta * np.sum(0.5 / (u * u)))


def _cell_midpoint_slope(values: np.ndarray, dtheta: float):
    nxt = np.roll(values, -1)
    return 0.5 * (values + nxt), (nxt - values) / dtheta


def perimeter(body: GaugeBody) -> float:
    """Perimeter ``integral(sqrt(u^2 + u'^2)/u^2 dtheta)``, midpoint rule.

    Each cell contributes with the cell-midpoint value and the difference
    quotient as slope; on straight boundary pieces (polygon sides) this is
    second-order like everywhere else but with a constant whose kink error
    vanishes when corners sit on grid nodes.
    """
    a, b = _cell_midpoint_slope(body.u.samples, body.u.dtheta)
    return float(body.u.dtheta * np.sum(np.sqrt(a * a + b * b) / (a * a)))


def area_gradient(body: GaugeBody) -> PeriodicField:
    """Nodal gradient of :func:`area`: ``g = -1/u^3``.

    The pairing convention everywhere is
    ``d/dt J(u + t v)|_0 = dtheta * sum_j g_j v_j``.
    """
    g = -1.0 / body.u.samples**3
    if not np.all(np.isfinite(g)):
        raise DomainError("area gradient overflowed; gauge nearly vanishes")
    return PeriodicField(g)


def _perimeter_first_partials(a: np.ndarray, b: np.ndarray):
    r = np.sqrt(a * a + b * b)
    la = -(a * a + 2.0 * b * b) / (a**3 * r)
    lb = b / (a * a * r)
    return la, lb


def perimeter_gradient(body: GaugeBody) -> PeriodicField:
    """Exact nodal gradient of the discrete :func:`perimeter`."""
    dtheta = body.u.dtheta
    a, b = _cell_midpoint_slope(body.u.samples, dtheta)
    la, lb = _perimeter_first_partials(a, b)
    # Node j touches cell j (left endpoint) and cell j-1 (right endpoint).
    g = 0.5 * (la + np.roll(la, 1)) + (np.roll(lb, 1) - lb) / dtheta
    if not np.all(np.isfinite(g)):
        raise DomainError("perimeter gradient overflowed; gauge nearly vanishes")
    return PeriodicField(g)


def area_hessian_form(body: GaugeBody, v: PeriodicField) -> float:
    """Second derivative of :func:`area` along ``v``: ``integral(3 v^2/u^4)``."""
    u = body.u.samples
    return float(body.u.dtheta * np.sum(3.0 * v.samples**2 / u**4))


def perimeter_hessian_form(body: GaugeBody, v: PeriodicField) -> float:
    """Exact second derivative of the discrete :func:`perimeter` along ``v``.

    At the unit disk this reduces to ``integral(2 v^2 + v'^2)``, the
    two-sided-coercive quadratic form behind the smooth/polygonal dichotomy.
    """
    dtheta = body.u.dtheta
    a, b = _cell_midpoint_slope(body.u.samples, dtheta)
    av, bv = _cell_midpoint_slope(v.samples, dtheta)
    r = np.sqrt(a * a + b * b)
    r3 = r**3
    laa = (2.0 * a**4 + 9.0 * a * a * b * b + 6.0 * b**4) / (a**4 * r3)
    lab = -b * (3.0 * a * a + 2.0 * b * b) / (a**3 * r3)
    lbb = 1.0 / r3
    return float(dtheta * np.sum(laa * av * av + 2.0 * lab * av * bv + lbb * bv * bv))


def support_functionals(body: SupportBody) -> tuple:
    """(area, perimeter) of the body with support function ``h``.

    Perimeter is ``integral(h dtheta)`` (trapezoid); area is
    ``(1/2) integral(h^2 - h'^2 dtheta)`` with the same midpoint/difference-
    quotient rule as the gauge-side perimeter.
    """
    dtheta = body.h.dtheta
    perim = float(dtheta * np.sum(body.h.samples))
    a, b = _cell_midpoint_slope(body.h.samples, dtheta)
    ar = float(0.5 * dtheta * np.sum(a * a - b * b))
    return ar, perim


# -- duality and polygons ----------------------------------------------------


def gauge_to_support(body: GaugeBody) -> SupportBody:
    """Support function ``h(theta) = max_j cos(theta - theta_j)/u_j``.

    Discrete maximization over the sampled boundary points; the result is the
    support function of the inscribed polygon through those points, accurate
    to O(dtheta^2) for smooth strictly convex bodies.
    """
    t = body.u.theta
    cosines = np.cos(t[:, None] - t[None, :])
    h = np.max(cosines / body.u.samples[None, :], axis=1)
    return SupportBody(PeriodicField(h), tol_cone=1e-6)


def polar_dual(body: GaugeBody) -> GaugeBody:
    """Polar-dual body: the gauge of the dual is the support function of the primal."""
    return GaugeBody(gauge_to_support(body).h, tol_cone=1e-6)


def gauge_to_polygon(body: GaugeBody, atoms: CurvatureMeasure) -> PolygonBody:
    """Polygon whose vertices sit at the atom angles of ``u'' + u``.

    Requires at least 3 detected atoms (see :func:`artifact.analyze.split_atoms`);
    each vertex is the boundary point of `body` on the atom's ray.
    """
    if len(atoms.atoms) < 3:
        raise DomainError("need at least 3 curvature atoms to form a polygon")
    angles = np.array([a for a, _ in atoms.atoms])
    r = body.radius(angles)
    return PolygonBody(np.column_stack((r * np.cos(angles), r * np.sin(angles))))


def polygon_to_gauge(poly: PolygonBody, n: int) -> GaugeBody:
    """Gauge function of a polygon: ``u(theta) = max_edges (n_e . e_theta)/d_e``.

    The polygon is the intersection of its edge half-planes
    ``{x : n_e . x <= d_e}``, so its gauge is the max of the supporting
    half-plane gauges; between vertex angles this is a pure cosine, i.e.
    ``u'' + u = 0`` there.
    """
    verts = poly.vertices
    edges = np.roll(verts, -1, axis=0) - verts
    normals = np.column_stack((edges[:, 1], -edges[:, 0]))
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    offsets = np.einsum("ij,ij->i", normals, verts)
    theta = 2.0 * np.pi * np.arange(n) / n
    rays = np.column_stack((np.cos(theta), np.sin(theta)))
    u = np.max((rays @ normals.T) / offsets[None, :], axis=1)
    return GaugeBody(PeriodicField(u), tol_cone=1e-6)


def load_polygon_csv(path) -> PolygonBody:
    """Read a polygon from a CSV of ``x,y`` lines (counterclockwise)."""
    verts = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    return PolygonBody(verts)


def save_polygon_csv(poly: PolygonBody, path) -> None:
    """Write a polygon as CSV ``x,y`` lines."""
    np.savetxt(path, poly.vertices, delimiter=",", fmt="%.17g")
