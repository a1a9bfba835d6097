"""P1 finite elements on gauge-parametrized convex bodies.

Solves the Dirichlet problem ``-Laplace(U) = f, U = 0 on the boundary`` and
the first Dirichlet eigenvalue problem on ``{r < 1/u(theta)}``, and recovers
the boundary trace of ``|grad U|^2`` per angular grid cell — the quantity the
shape-gradient formulas of the area-type functionals pair against ``v/u^3``.

Meshes are built deterministically: the polygon through the boundary samples
is fanned from its centroid, then uniformly red-refined (each triangle into
four) until the longest edge is below ``target_h``; midpoints of boundary
edges are projected back onto the boundary curve after every split.  Passing
an explicit ``levels`` freezes the topology, which keeps functional values
smooth along line searches and finite-difference probes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .body import DomainError, GaugeBody
from .periodic import PeriodicField

__all__ = [
    "Mesh",
    "FemSolution",
    "EigenPair",
    "refinement_levels",
    "mesh_convex",
    "dirichlet_energy",
    "lambda1",
    "energy_shape_gradient",
    "lambda1_shape_gradient",
    "save_mesh_off",
]

#: Hard cap on uniform refinement depth (4^level growth).
MAX_LEVELS = 8

#: Relative eigenvalue increment at which inverse iteration stops.
EIG_RTOL = 1e-13

EIG_MAX_ITER = 400


@dataclass(frozen=True)
class Mesh:
    """Triangulation of a gauge body.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, positively oriented
    boundary_edges : (nb, 2) int array
        Vertex pairs on the boundary loop.
    boundary_theta : (nb,) float array
        Angle of each boundary edge midpoint.
    boundary_map : (N,) int array
        For each angular grid node, the index of the boundary vertex sitting
        at that angle (the original polygon vertices).
    n_theta : int
        Angular grid size of the generating body.
    levels : int
        Number of uniform refinements applied to the fan mesh.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_theta: np.ndarray
    boundary_map: np.ndarray
    n_theta: int
    levels: int

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    def triangle_areas(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        d1 = v[t[:, 1]] - v[t[:, 0]]
        d2 = v[t[:, 2]] - v[t[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_vertex_indices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def max_edge(self) -> float:
        v = self.vertices
        t = self.triangles
        lengths = [
            np.linalg.norm(v[t[:, a]] - v[t[:, b]], axis=1) for a, b in ((0, 1), (1, 2), (2, 0))
        ]
        return float(np.max(lengths))


@dataclass(frozen=True)
class FemSolution:
    """Nodal P1 solution with energy and boundary gradient trace.

    ``energy`` is ``-1/2 * integral(|grad U|^2)`` (negative), and
    ``boundary_grad_sq[j]`` is the recovered ``|grad U|^2`` averaged over the
    boundary piece belonging to the j-th angular grid cell.
    """

    mesh: Mesh
    nodal_values: np.ndarray
    energy: float
    boundary_grad_sq: np.ndarray


@dataclass(frozen=True)
class EigenPair:
    """First Dirichlet eigenvalue ``lam > 0`` and its normalized eigenfunction.

    The eigenfunction is positive in the interior and scaled so that
    ``integral(U^2) = 1`` in the P1 mass-matrix inner product.
    """

    lam: float
    eigenfunction: FemSolution


def _fan_mesh(body: GaugeBody):
    pts = body.boundary_points()
    n = pts.shape[0]
    # Area centroid of the boundary polygon.
    nxt = np.roll(pts, -1, axis=0)
    cross = pts[:, 0] * nxt[:, 1] - pts[:, 1] * nxt[:, 0]
    area6 = 3.0 * np.sum(cross)
    centroid = np.sum((pts + nxt) * cross[:, None], axis=0) / area6
    vertices = np.vstack([centroid[None, :], pts])
    idx = np.arange(n)
    triangles = np.column_stack([np.zeros(n, dtype=int), 1 + idx, 1 + (idx + 1) % n])
    return vertices, triangles


def _refine_once(vertices, triangles, body: GaugeBody):
    nt = triangles.shape[0]
    nv = vertices.shape[0]
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    edges_sorted = np.sort(edges, axis=1)
    uniq, inverse, counts = np.unique(
        edges_sorted, axis=0, return_inverse=True, return_counts=True
    )
    midpoints = 0.5 * (vertices[uniq[:, 0]] + vertices[uniq[:, 1]])
    on_boundary = counts == 1
    if np.any(on_boundary):
        phi = np.mod(np.arctan2(midpoints[on_boundary, 1], midpoints[on_boundary, 0]), 2 * np.pi)
        r = body.radius(phi)
        midpoints[on_boundary] = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    mid_idx = nv + np.arange(uniq.shape[0])
    m01 = mid_idx[inverse[:nt]]
    m12 = mid_idx[inverse[nt : 2 * nt]]
    m20 = mid_idx[inverse[2 * nt :]]
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    new_triangles = np.concatenate(
        [
            np.column_stack([a, m01, m20]),
            np.column_stack([b, m12, m01]),
            np.column_stack([c, m20, m12]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    return np.vstack([vertices, midpoints]), new_triangles


def _boundary_edges(triangles):
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    edges_sorted = np.sort(edges, axis=1)
    uniq, counts = np.unique(edges_sorted, axis=0, return_counts=True)
    return uniq[counts == 1]


def _check_boundary_loop(boundary_edges):
    verts, counts = np.unique(boundary_edges, return_counts=True)
    if not np.all(counts == 2) or verts.shape[0] != boundary_edges.shape[0]:
        raise RuntimeError("boundary edges do not form a single closed loop")


def refinement_levels(body: GaugeBody, target_h: float) -> int:
    """Refinement depth the automatic rule would pick for this body.

    Computed from the longest edge of the unrefined fan mesh; pass the result
    as ``levels=`` to freeze mesh topology across nearby bodies.
    """
    if target_h <= 0:
        raise ValueError("target_h must be positive")
    vertices, triangles = _fan_mesh(body)
    lengths = [
        np.linalg.norm(vertices[triangles[:, a]] - vertices[triangles[:, b]], axis=1)
        for a, b in ((0, 1), (1, 2), (2, 0))
    ]
    max_edge = float(np.max(lengths))
    levels = max(0, int(np.ceil(np.log2(max_edge / target_h))))
    if levels > MAX_LEVELS:
        raise DomainError(
            f"target_h={target_h} needs {levels} refinement levels (cap {MAX_LEVELS})"
        )
    return levels


def mesh_convex(body: GaugeBody, target_h: float, levels: Optional[int] = None) -> Mesh:
    """Triangulate a gauge body with maximum edge length ``target_h``.

    Parameters
    ----------
    body : GaugeBody
    target_h : float
        Edge-length target driving the refinement depth.
    levels : int, optional
        Explicit refinement depth overriding the automatic choice.  Use this
        to keep the mesh topology identical across perturbed copies of the
        same body.
    """
    if target_h <= 0:
        raise ValueError("target_h must be positive")
    if levels is None:
        levels = refinement_levels(body, target_h)
    vertices, triangles = _fan_mesh(body)
    for _ in range(levels):
        vertices, triangles = _refine_once(vertices, triangles, body)
    v, t = vertices, triangles
    d1 = v[t[:, 1]] - v[t[:, 0]]
    d2 = v[t[:, 2]] - v[t[:, 0]]
    areas_signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if np.any(areas_signed <= 0.0):
        raise RuntimeError("mesh contains non-positively-oriented triangles")
    boundary = _boundary_edges(triangles)
    _check_boundary_loop(boundary)
    mids = 0.5 * (vertices[boundary[:, 0]] + vertices[boundary[:, 1]])
    boundary_theta = np.mod(np.arctan2(mids[:, 1], mids[:, 0]), 2 * np.pi)
    n = body.n
    boundary_map = 1 + np.arange(n)  # fan construction: vertex 1+j sits at theta_j
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=boundary,
        boundary_theta=boundary_theta,
        boundary_map=boundary_map,
        n_theta=n,
        levels=levels,
    )


def _assemble(mesh: Mesh):
    """P1 stiffness and mass matrices (CSC), vectorized over triangles."""
    v = mesh.vertices
    t = mesh.triangles
    p1, p2, p3 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    e1 = p3 - p2  # edge opposite vertex 1, etc.
    e2 = p1 - p3
    e3 = p2 - p1
    areas = 0.5 * (e3[:, 0] * (-e2[:, 1]) - e3[:, 1] * (-e2[:, 0]))
    inv4a = 1.0 / (4.0 * areas)
    edges = (e1, e2, e3)
    k_local = np.empty((t.shape[0], 3, 3))
    for i in range(3):
        for j in range(3):
            k_local[:, i, j] = np.einsum("ij,ij->i", edges[i], edges[j]) * inv4a
    m_local = np.empty((t.shape[0], 3, 3))
    m_local[:] = (areas / 12.0)[:, None, None]
    for i in range(3):
        m_local[:, i, i] = areas / 6.0
    rows = np.repeat(t, 3, axis=1).reshape(-1)
    cols = np.tile(t, (1, 3)).reshape(-1)
    nv = mesh.num_vertices
    stiffness = sparse.csc_matrix((k_local.reshape(-1), (rows, cols)), shape=(nv, nv))
    mass = sparse.csc_matrix((m_local.reshape(-1), (rows, cols)), shape=(nv, nv))
    return stiffness, mass, areas


def _load_vector(mesh: Mesh, f: Callable, areas: np.ndarray) -> np.ndarray:
    """Right-hand side with ``f`` sampled at triangle centroids."""
    v = mesh.vertices
    t = mesh.triangles
    cx = (v[t[:, 0], 0] + v[t[:, 1], 0] + v[t[:, 2], 0]) / 3.0
    cy = (v[t[:, 0], 1] + v[t[:, 1], 1] + v[t[:, 2], 1]) / 3.0
    fc = np.asarray(f(cx, cy), dtype=float)
    if fc.shape != cx.shape:
        fc = np.broadcast_to(fc, cx.shape).astype(float)
    contrib = fc * areas / 3.0
    load = np.zeros(mesh.num_vertices)
    for k in range(3):
        np.add.at(load, t[:, k], contrib)
    return load


def _boundary_trace(mesh: Mesh, residual: np.ndarray) -> np.ndarray:
    """Recover ``|grad U|^2`` per angular cell from the Galerkin flux.

    ``residual = K U - F`` restricted to boundary vertices is the weak normal
    flux ``integral(dU/dn * phi_i)``; dividing by the boundary-lump length of
    the hat function gives a superconvergent pointwise ``dU/dn``.  Values are
    averaged (length-weighted) over each angular grid cell.
    """
    bverts = np.unique(mesh.boundary_edges)
    pos = mesh.vertices[bverts]
    edge_vec = mesh.vertices[mesh.boundary_edges[:, 0]] - mesh.vertices[mesh.boundary_edges[:, 1]]
    edge_len = np.linalg.norm(edge_vec, axis=1)
    lump = np.zeros(mesh.num_vertices)
    np.add.at(lump, mesh.boundary_edges[:, 0], 0.5 * edge_len)
    np.add.at(lump, mesh.boundary_edges[:, 1], 0.5 * edge_len)
    ell = lump[bverts]
    flux = residual[bverts] / ell
    n = mesh.n_theta
    dtheta = 2.0 * np.pi / n
    phi = np.mod(np.arctan2(pos[:, 1], pos[:, 0]), 2.0 * np.pi)
    cell = np.mod(np.rint(phi / dtheta).astype(int), n)
    num = np.zeros(n)
    den = np.zeros(n)
    np.add.at(num, cell, ell * flux * flux)
    np.add.at(den, cell, ell)
    if np.any(den == 0.0):
        raise RuntimeError("empty angular cell in boundary trace binning")
    return num / den


def dirichlet_energy(
    body: GaugeBody, f: Callable, target_h: float, levels: Optional[int] = None
) -> FemSolution:
    """Solve ``-Laplace(U) = f`` with zero boundary data; return the energy.

    Parameters
    ----------
    body : GaugeBody
    f : callable
        Vectorized source ``f(x, y)``, locally bounded.
    target_h, levels
        Mesh resolution controls, see :func:`mesh_convex`.

    Returns
    -------
    FemSolution
        With ``energy = -1/2 integral(|grad U|^2)`` (equal to
        ``-1/2 integral(U f)`` by the Galerkin identity) and the recovered
        boundary trace of ``|grad U|^2``.
    """
    mesh = mesh_convex(body, target_h, levels)
    stiffness, _, areas = _assemble(mesh)
    load = _load_vector(mesh, f, areas)
    boundary = np.unique(mesh.boundary_edges)
    interior = np.setdiff1d(np.arange(mesh.num_vertices), boundary, assume_unique=False)
    k_ii = stiffness[interior][:, interior].tocsc()
    solver = splu(k_ii)
    values = np.zeros(mesh.num_vertices)
    values[interior] = solver.solve(load[interior])
    energy = -0.5 * float(values @ (stiffness @ values))
    residual = stiffness @ values - load
    bgs = _boundary_trace(mesh, residual)
    return FemSolution(mesh=mesh, nodal_values=values, energy=energy, boundary_grad_sq=bgs)


def lambda1(body: GaugeBody, target_h: float, levels: Optional[int] = None) -> EigenPair:
    """First Dirichlet eigenvalue by inverse iteration on ``K x = lam M x``.

    The stiffness factorization is reused across iterations (shift 0 — the
    target is the smallest mode); iteration stops when the Rayleigh quotient
    moves by less than ``EIG_RTOL`` relatively.
    """
    mesh = mesh_convex(body, target_h, levels)
    stiffness, mass, _ = _assemble(mesh)
    boundary = np.unique(mesh.boundary_edges)
    interior = np.setdiff1d(np.arange(mesh.num_vertices), boundary, assume_unique=False)
    k_ii = stiffness[interior][:, interior].tocsc()
    m_ii = mass[interior][:, interior].tocsc()
    solver = splu(k_ii)
    x = np.ones(interior.shape[0])
    x /= np.sqrt(x @ (m_ii @ x))
    lam_old = np.inf
    lam = 0.0
    for iteration in range(EIG_MAX_ITER):
        y = solver.solve(m_ii @ x)
        y /= np.sqrt(y @ (m_ii @ y))
        lam = float(y @ (k_ii @ y))
        if abs(lam - lam_old) <= EIG_RTOL * abs(lam):
            x = y
            break
        lam_old = lam
        x = y
    else:
        res = np.linalg.norm(k_ii @ x - lam * (m_ii @ x))
        raise RuntimeError(
            f"inverse iteration did not converge in {EIG_MAX_ITER} iterations; residual {res:.3e}"
        )
    if x.sum() < 0:
        x = -x
    values = np.zeros(mesh.num_vertices)
    values[interior] = x
    residual = stiffness @ values - lam * (mass @ values)
    bgs = _boundary_trace(mesh, residual)
    solution = FemSolution(
        mesh=mesh, nodal_values=values, energy=-0.5 * lam, boundary_grad_sq=bgs
    )
    return EigenPair(lam=lam, eigenfunction=solution)


def energy_shape_gradient(
    body: GaugeBody, f: Callable, target_h: float, levels: Optional[int] = None
) -> PeriodicField:
    """Nodal shape gradient of the Dirichlet energy: ``(1/2) |grad U|^2 / u^3``.

    Pairing convention: ``d/dt E_f(u + t v)|_0 = dtheta * sum_j g_j v_j``.
    """
    sol = dirichlet_energy(body, f, target_h, levels)
    return PeriodicField(0.5 * sol.boundary_grad_sq / body.u.samples**3)


def lambda1_shape_gradient(
    body: GaugeBody, target_h: float, levels: Optional[int] = None
) -> PeriodicField:
    """Nodal shape gradient of the first eigenvalue: ``|grad U|^2 / u^3``."""
    pair = lambda1(body, target_h, levels)
    return PeriodicField(pair.eigenfunction.boundary_grad_sq / body.u.samples**3)


def save_mesh_off(mesh: Mesh, path) -> None:
    """Write the mesh as OFF text (vertex count, coordinates, triangles)."""
    lines = ["OFF", f"{mesh.num_vertices} {mesh.triangles.shape[0]} 0"]
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g} 0")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    with open(path, "w", encoding="ascii") as handle:
        handle.write("\n".join(lines) + "\n")
