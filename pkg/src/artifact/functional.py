"""Composite shape functionals ``J = sum_i c_i * X_i^(p_i)`` and constraints.

The bases ``X_i`` are the area, the Dirichlet energy ``E_f``, the first
Dirichlet eigenvalue and the perimeter of a gauge body.  Values come with
chain-rule nodal gradients in the common pairing convention
``d/dt J(u + t v)|_0 = dtheta * sum_j g_j v_j``; energies are negative, so
powers act on ``|X|`` with the sign tracked (``c * sign(X) * |X|^p``).

Second derivatives along a direction combine the closed-form Hessians of the
geometric terms with Richardson-corrected central second differences for the
PDE terms, evaluated on a frozen mesh topology.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from . import body as body_mod
from . import pde
from .body import DomainError, GaugeBody
from .periodic import PeriodicField

__all__ = [
    "Kind",
    "Term",
    "FunctionalSpec",
    "EqualityConstraint",
    "ConstraintSpec",
    "EvalReport",
    "evaluate",
    "constraint_eval",
    "second_form",
    "pairing",
    "source_callable",
]


class Kind(enum.Enum):
    """Base quantity of a functional term."""

    AREA = "Area"
    ENERGY = "Energy"
    LAMBDA1 = "Lambda1"
    PERIMETER = "Perimeter"


_GEOMETRIC = (Kind.AREA, Kind.PERIMETER)


@dataclass(frozen=True)
class Term:
    """One functional term ``coefficient * X^exponent``."""

    kind: Kind
    coefficient: float = 1.0
    exponent: float = 1.0


@dataclass(frozen=True)
class FunctionalSpec:
    """Objective ``J = sum of terms`` plus the PDE discretization knobs.

    Parameters
    ----------
    terms : tuple of Term
        At least one term.
    f_source : str
        Source descriptor for Energy terms; a decimal constant such as "1".
    mesh_h : float
        Target FEM edge length for PDE terms.
    mesh_levels : int, optional
        Frozen refinement depth; when set, every evaluation uses exactly this
        depth regardless of the body (smooth line searches, clean finite
        differences).
    """

    terms: tuple
    f_source: str = "1"
    mesh_h: float = 0.1
    mesh_levels: Optional[int] = None

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("functional needs at least one term")
        if any(not isinstance(t, Term) for t in terms):
            raise TypeError("terms must be Term instances")
        if self.mesh_h <= 0:
            raise ValueError("mesh_h must be positive")
        object.__setattr__(self, "terms", terms)

    @property
    def has_pde_terms(self) -> bool:
        return any(t.kind not in _GEOMETRIC for t in self.terms)

    @property
    def perimeter_sign(self) -> float:
        """Net sign of the perimeter coefficient (0 when absent).

        The sign of the perimeter term drives the smooth-versus-polygonal
        behaviour of minimizers, so it is tracked explicitly in reports.
        """
        total = sum(t.coefficient for t in self.terms if t.kind is Kind.PERIMETER)
        return float(np.sign(total))

    def locked(self, body: GaugeBody) -> "FunctionalSpec":
        """Copy of this spec with the refinement depth frozen for `body`."""
        if not self.has_pde_terms or self.mesh_levels is not None:
            return self
        return replace(self, mesh_levels=pde.refinement_levels(body, self.mesh_h))


@dataclass(frozen=True)
class EqualityConstraint:
    """Equality ``m(u) = target`` with ``m`` the area or the perimeter."""

    kind: Kind
    target: float

    def __post_init__(self):
        if self.kind not in _GEOMETRIC:
            raise ValueError("equality constraints support Area and Perimeter only")
        if self.target <= 0:
            raise ValueError("equality target must be positive")


BoundLike = Union[None, float, PeriodicField]


@dataclass(frozen=True)
class ConstraintSpec:
    """Box bounds ``k1 <= u <= k2`` plus an optional equality constraint.

    Bounds may be scalars, periodic fields, or None (unbounded on that side).
    """

    lower: BoundLike = None
    upper: BoundLike = None
    equality: Optional[EqualityConstraint] = None

    def bounds(self, n: int) -> tuple:
        """Materialize the bounds as arrays of length `n` (+-inf when absent)."""
        lo = self._materialize(self.lower, n, -np.inf)
        hi = self._materialize(self.upper, n, np.inf)
        finite = np.isfinite(lo) & np.isfinite(hi)
        if np.any(lo[finite] > hi[finite]):
            raise ValueError("lower bound exceeds upper bound somewhere")
        return lo, hi

    @staticmethod
    def _materialize(bound: BoundLike, n: int, default: float) -> np.ndarray:
        if bound is None:
            return np.full(n, default)
        if isinstance(bound, PeriodicField):
            if bound.n != n:
                raise ValueError("bound field resolution does not match")
            return bound.samples.copy()
        return np.full(n, float(bound))


@dataclass(frozen=True)
class EvalReport:
    """Value, nodal gradient, and the per-term breakdown of a functional."""

    value: float
    gradient: PeriodicField
    per_term_values: dict


def pairing(gradient: PeriodicField, v: PeriodicField) -> float:
    """Directional derivative ``dtheta * sum_j g_j v_j``."""
    return float(gradient.dtheta * np.dot(gradient.samples, v.samples))


def source_callable(descriptor: str) -> Callable:
    """Turn an ``f_source`` descriptor into a vectorized ``f(x, y)``.

    Supported descriptors are decimal constants ("1", "2.5", ...).
    """
    try:
        value = float(str(descriptor).strip())
    except ValueError as exc:
        raise ValueError(f"unsupported source descriptor {descriptor!r}") from exc

    def f(x, y, _c=value):
        return np.full(np.shape(x), _c, dtype=float)

    return f


def _base_values(spec: FunctionalSpec, body: GaugeBody):
    """Evaluate each distinct base kind once; return {kind: (value, gradient)}."""
    out = {}
    kinds = {t.kind for t in spec.terms}
    if Kind.AREA in kinds:
        out[Kind.AREA] = (body_mod.area(body), body_mod.area_gradient(body))
    if Kind.PERIMETER in kinds:
        out[Kind.PERIMETER] = (body_mod.perimeter(body), body_mod.perimeter_gradient(body))
    if Kind.ENERGY in kinds:
        sol = pde.dirichlet_energy(
            body, source_callable(spec.f_source), spec.mesh_h, spec.mesh_levels
        )
        grad = PeriodicField(0.5 * sol.boundary_grad_sq / body.u.samples**3)
        out[Kind.ENERGY] = (sol.energy, grad)
    if Kind.LAMBDA1 in kinds:
        pair = pde.lambda1(body, spec.mesh_h, spec.mesh_levels)
        grad = PeriodicField(pair.eigenfunction.boundary_grad_sq / body.u.samples**3)
        out[Kind.LAMBDA1] = (pair.lam, grad)
    return out


def _signed_power(x: float, p: float):
    """``(sign(x)|x|^p, d/dx)``; the derivative of sign(x)|x|^p is p|x|^(p-1)."""
    if p == 1.0:
        return x, 1.0
    ax = abs(x)
    if ax == 0.0:
        raise DomainError("zero base under a non-unit exponent")
    return float(np.sign(x) * ax**p), float(p * ax ** (p - 1.0))


def evaluate(spec: FunctionalSpec, body: GaugeBody) -> EvalReport:
    """Value and chain-rule nodal gradient of the composite functional.

    Each distinct base (area, perimeter, energy, eigenvalue) is evaluated
    once — a single FEM solve serves both the value and the gradient of a PDE
    term.
    """
    bases = _base_values(spec, body)
    total = 0.0
    grad = np.zeros(body.n)
    per_term = {}
    for i, term in enumerate(spec.terms):
        base_value, base_grad = bases[term.kind]
        powered, slope = _signed_power(base_value, term.exponent)
        contribution = term.coefficient * powered
        total += contribution
        grad += term.coefficient * slope * base_grad.samples
        per_term[f"{i}:{term.kind.value}"] = contribution
    return EvalReport(value=total, gradient=PeriodicField(grad), per_term_values=per_term)


def constraint_eval(cons: ConstraintSpec, body: GaugeBody):
    """Equality residual, its gradient, and the worst box violation.

    Returns
    -------
    (value, gradient, box_violation)
        ``value = m(u) - target`` (0 when no equality constraint),
        ``gradient`` the nodal gradient of ``m``, and ``box_violation`` the
        max of ``k1 - u`` and ``u - k2`` clipped at zero.
    """
    if cons.equality is None:
        value = 0.0
        gradient = PeriodicField(np.zeros(body.n))
    elif cons.equality.kind is Kind.AREA:
        value = body_mod.area(body) - cons.equality.target
        gradient = body_mod.area_gradient(body)
    else:
        value = body_mod.perimeter(body) - cons.equality.target
        gradient = body_mod.perimeter_gradient(body)
    lo, hi = cons.bounds(body.n)
    u = body.u.samples
    violation = float(max(np.max(lo - u, initial=0.0), np.max(u - hi, initial=0.0), 0.0))
    return value, gradient, violation


def _default_step(body: GaugeBody, v: PeriodicField) -> float:
    vmax = float(np.max(np.abs(v.samples)))
    if vmax == 0.0:
        raise ValueError("direction must be nonzero")
    return 1e-3 * float(np.max(np.abs(body.u.samples))) / vmax


def _perturbed(body: GaugeBody, v: PeriodicField, t: float) -> GaugeBody:
    u_new = body.u.samples + t * v.samples
    if float(u_new.min()) <= body_mod.U_MIN:
        raise DomainError("infeasible perturbation: gauge would vanish")
    return GaugeBody(PeriodicField(u_new), require_convex=False)


def _pde_value(spec: FunctionalSpec, body: GaugeBody) -> float:
    """Sum of the PDE terms only (used by the FD second form)."""
    pde_terms = tuple(t for t in spec.terms if t.kind not in _GEOMETRIC)
    sub = replace(spec, terms=pde_terms)
    bases = _base_values(sub, body)
    total = 0.0
    for term in pde_terms:
        powered, _ = _signed_power(bases[term.kind][0], term.exponent)
        total += term.coefficient * powered
    return total


def second_form(
    spec: FunctionalSpec, body: GaugeBody, v: PeriodicField, step: Optional[float] = None
) -> float:
    """Second derivative ``d^2/dt^2 J(u + t v)|_0``.

    Geometric terms use their closed-form Hessians chained through the power:
    ``d^2(c X^p) = c p (p-1)|X|^(p-2) sign(X) (dX)^2 + c p |X|^(p-1) X''``.
    PDE terms use a central second difference on a frozen mesh topology,
    Richardson-corrected with a half step.

    Parameters
    ----------
    step : float, optional
        FD step for the PDE part; default ``1e-3 * max|u| / max|v|``.
    """
    total = 0.0
    for term in spec.terms:
        if term.kind not in _GEOMETRIC:
            continue
        if term.kind is Kind.AREA:
            base = body_mod.area(body)
            first = pairing(body_mod.area_gradient(body), v)
            quad = body_mod.area_hessian_form(body, v)
        else:
            base = body_mod.perimeter(body)
            first = pairing(body_mod.perimeter_gradient(body), v)
            quad = body_mod.perimeter_hessian_form(body, v)
        p = term.exponent
        if p == 1.0:
            total += term.coefficient * quad
        else:
            _, slope = _signed_power(base, p)
            curvature = p * (p - 1.0) * abs(base) ** (p - 2.0) * np.sign(base)
            total += term.coefficient * (curvature * first * first + slope * quad)
    if spec.has_pde_terms:
        locked = spec.locked(body)
        if step is None:
            step = _default_step(body, v)
        center = _pde_value(locked, body)

        def fd(h: float) -> float:
            plus = _pde_value(locked, _perturbed(body, v, h))
            minus = _pde_value(locked, _perturbed(body, v, -h))
            return (plus + minus - 2.0 * center) / (h * h)

        coarse = fd(step)
        fine = fd(0.5 * step)
        total += (4.0 * fine - coarse) / 3.0
    return float(total)
