"""Minimization over the discrete convexity cone with multiplier recovery.

The feasible set is ``{D u >= 0} ∩ {k1 <= u <= k2} ∩ {m(u) = M0}`` where
``D`` is a circulant second-difference-plus-identity operator whose kernel
contains the sampled cosine and sine exactly (translations of the body are
exactly feasible directions).  Minimization runs projected gradient descent
with Barzilai-Borwein steps and a monotone Armijo line search, wrapped in an
augmented-Lagrangian loop for the equality constraint; every accepted iterate
is the Euclidean projection of a gradient step onto the cone-box set, computed
by a primal active-set QP with Bland's anti-cycling rule.

At (near-)stationary points the objective gradient decomposes as
``g = D^T eta + box multipliers + mu_eq * m'(u)`` with ``eta >= 0`` supported
on the active cone rows; the decomposition is recovered by nonnegative least
squares and reported with its stationarity and complementarity residuals.
``eta`` samples the continuous cone multiplier as a per-node measure density:
``eta * dtheta`` is the function the complementarity structure speaks about
(zero wherever ``u'' + u`` carries mass).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.optimize

from .body import GaugeBody
from .functional import (
    ConstraintSpec,
    FunctionalSpec,
    Kind,
    constraint_eval,
    evaluate,
    pairing,
)
from .periodic import PeriodicField

__all__ = [
    "ConeConstraint",
    "OptimizerConfig",
    "KKTReport",
    "OptimizationResult",
    "InfeasibleError",
    "cone_matrix",
    "project_feasible",
    "minimize",
    "recover_multipliers",
    "save_history_csv",
]


class InfeasibleError(Exception):
    """The constraint set is empty or no feasible start could be built."""


@dataclass(frozen=True)
class ConeConstraint:
    """Discrete convexity cone ``{u : D u >= 0}``.

    ``rows[j]`` carries ``(u_{j-1} - 2 cos(dtheta) u_j + u_{j+1}) / dtheta``,
    the mass of ``u'' + u`` near node j up to O(dtheta^3); the cosine-corrected
    diagonal puts grid samples of ``cos`` and ``sin`` exactly in the kernel.
    """

    rows: np.ndarray
    tol_cone: float = 1e-10

    @property
    def n(self) -> int:
        return self.rows.shape[0]


def cone_matrix(n: int, tol_cone: float = 1e-10) -> ConeConstraint:
    """Build the N x N cone operator (symmetric circulant).

    Parameters
    ----------
    n : int
        Grid size, even and >= 8.
    """
    if n < 8 or n % 2:
        raise ValueError("grid size must be even and >= 8")
    dtheta = 2.0 * np.pi / n
    rows = np.zeros((n, n))
    idx = np.arange(n)
    rows[idx, idx] = -2.0 * np.cos(dtheta) / dtheta
    rows[idx, (idx + 1) % n] = 1.0 / dtheta
    rows[idx, (idx - 1) % n] = 1.0 / dtheta
    return ConeConstraint(rows=rows, tol_cone=tol_cone)


# -- projection onto the cone-box set ----------------------------------------


def _constraint_rows(cone: ConeConstraint, lo: np.ndarray, hi: np.ndarray):
    """Stack [D; +I on finite lower; -I on finite upper] with offsets."""
    n = cone.n
    blocks = [cone.rows]
    offsets = [np.zeros(n)]
    eye = np.eye(n)
    lo_idx = np.where(np.isfinite(lo))[0]
    hi_idx = np.where(np.isfinite(hi))[0]
    if lo_idx.size:
        blocks.append(eye[lo_idx])
        offsets.append(lo[lo_idx])
    if hi_idx.size:
        blocks.append(-eye[hi_idx])
        offsets.append(-hi[hi_idx])
    return np.vstack(blocks), np.concatenate(offsets)


def _feasible_start(u_raw: np.ndarray, cone: ConeConstraint, lo: np.ndarray, hi: np.ndarray):
    lo_max = float(np.max(lo)) if np.any(np.isfinite(lo)) else -np.inf
    hi_min = float(np.min(hi)) if np.any(np.isfinite(hi)) else np.inf
    if lo_max <= hi_min:
        c = float(np.clip(np.mean(u_raw), max(lo_max, 1e-3), min(hi_min, 1e6)))
        if c > 0:
            return np.full(u_raw.shape[0], c)
    if np.all(np.isfinite(lo)) and np.min(cone.rows @ lo) >= -cone.tol_cone:
        return lo.copy()
    raise InfeasibleError("could not construct a feasible starting point for the projection")


def _project_active_set(
    target: np.ndarray,
    rows: np.ndarray,
    offsets: np.ndarray,
    x0: np.ndarray,
    working: list,
) -> tuple:
    """Primal active-set walk for the projection QP from a feasible ``x0``.

    Ties are broken by Bland's smallest-index rule.  Raises ``RuntimeError``
    when the iteration budget is exhausted or a degenerate working set stops
    certifying its own equalities (the caller retries cold or falls back to
    the least-distance solve).
    """
    x = x0.copy()
    scale = max(1.0, float(np.max(np.abs(target))))
    max_iter = 60 * target.shape[0]
    for _ in range(max_iter):
        if working:
            g_w = rows[working]
            gram = g_w @ g_w.T
            rhs = offsets[working] - g_w @ target
            try:
                lam = np.linalg.solve(gram, rhs)
            except np.linalg.LinAlgError:
                lam = np.linalg.lstsq(gram, rhs, rcond=None)[0]
            z = target + g_w.T @ lam
            if float(np.max(np.abs(g_w @ z - offsets[working]))) > 1e-8 * scale:
                # Dependent working rows with an inconsistent equality system:
                # z is no longer the projection onto the working set and the
                # walk would chase garbage.
                raise RuntimeError("projection QP working set became degenerate")
        else:
            lam = np.empty(0)
            z = target.copy()
        p = z - x
        if float(np.max(np.abs(p))) <= 1e-13 * max(1.0, float(np.max(np.abs(x)))):
            if lam.size == 0 or float(lam.min()) >= -1e-11:
                return x, working
            drop = min(i for i, l in zip(working, lam) if l < -1e-11)
            working.remove(drop)
            continue
        gp = rows @ p
        sx = rows @ x - offsets
        candidates = np.where(gp < -1e-14)[0]
        candidates = np.array([i for i in candidates if i not in working], dtype=int)
        alpha = 1.0
        block = -1
        if candidates.size:
            steps = -sx[candidates] / gp[candidates]
            steps = np.maximum(steps, 0.0)
            best = float(np.min(steps))
            if best < 1.0:
                alpha = best
                hits = candidates[np.abs(steps - best) <= 1e-12 + 1e-9 * best]
                block = int(np.min(hits))  # Bland: smallest index
        x = x + alpha * p
        if block >= 0:
            working.append(block)
            working.sort()
    raise RuntimeError("projection QP exceeded its iteration budget (possible cycling)")


def _project_ldp(target: np.ndarray, rows: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Projection via the least-distance-programming reduction to NNLS.

    ``min |x - target|  s.t.  rows x >= offsets`` becomes, for
    ``w = x - target``, the classic LDP problem ``min |w|`` subject to
    ``rows w >= offsets - rows target``, solved through one nonnegative
    least-squares call; slower than the active-set walk but free of
    working-set bookkeeping, so it serves as the robust fallback.
    """
    h = offsets - rows @ target
    m, n = rows.shape
    e = np.vstack([rows.T, h[None, :]])
    f = np.zeros(n + 1)
    f[n] = 1.0
    lam, _ = scipy.optimize.nnls(e, f, maxiter=30 * m)
    r = e @ lam - f
    if abs(r[n]) < 1e-12:
        raise RuntimeError("least-distance fallback found the constraints infeasible")
    return target + r[:n] / (-r[n])


def project_feasible(
    u_raw: PeriodicField,
    cone: ConeConstraint,
    cons: ConstraintSpec,
    *,
    warm_start: Optional[list] = None,
    start: Optional[PeriodicField] = None,
    return_info: bool = False,
):
    """Euclidean projection of ``u_raw`` onto ``{D u >= 0, k1 <= u <= k2}``.

    Primal active-set method for the projection QP, warm-started from a
    feasible ``start`` point and its active rows when provided; degenerate
    or cycling walks are retried cold and, as a last resort, handed to the
    least-distance reduction.  An already feasible input is returned
    unchanged.

    Parameters
    ----------
    warm_start : list of int, optional
        Working set (constraint row indices) from a previous projection.
    start : PeriodicField, optional
        Feasible point to open the walk at (e.g. the current iterate); rows
        from ``warm_start`` are kept only where active at this point.
    return_info : bool
        Also return the final working set for warm starting.
    """
    n = u_raw.n
    if cone.n != n:
        raise ValueError("cone resolution does not match the field")
    try:
        lo, hi = cons.bounds(n)
    except ValueError as exc:  # empty box: infeasible, not a usage bug
        raise InfeasibleError(str(exc)) from exc
    target = u_raw.samples.astype(float)
    rows, offsets = _constraint_rows(cone, lo, hi)
    slack = rows @ target - offsets
    if float(slack.min()) >= -cone.tol_cone:
        return (u_raw, []) if return_info else u_raw

    attempts = []
    if start is not None and start.n == n:
        x0 = start.samples.astype(float)
        s0 = rows @ x0 - offsets
        if float(s0.min()) >= -1e-9:
            active0 = [i for i in (warm_start or []) if i < rows.shape[0] and s0[i] <= 1e-9]
            attempts.append((x0, active0))
    cold = _feasible_start(target, cone, lo, hi)
    attempts.append((cold, []))

    x = None
    working = []
    for x0, w0 in attempts:
        try:
            x, working = _project_active_set(target, rows, offsets, x0, list(w0))
            break
        except RuntimeError:
            continue
    if x is None:
        x = _project_ldp(target, rows, offsets)
        working = [int(i) for i in np.where(rows @ x - offsets <= 1e-9)[0]]
    out = PeriodicField(x)
    return (out, working) if return_info else out


# -- KKT recovery ------------------------------------------------------------


@dataclass(frozen=True)
class KKTReport:
    """Recovered multipliers and optimality residuals at a feasible point.

    Attributes
    ----------
    eta : (N,) array, >= 0
        Cone multiplier per node (measure-density scaling; ``eta * dtheta``
        samples the continuous multiplier function).
    mu_eq : float
        Equality-constraint multiplier (0 when no equality constraint).
    box_mult : (N,) array
        Net box multiplier, positive at active lower bounds, negative at
        active upper bounds.
    stationarity_residual : float
        ``||g - D^T eta - box - mu_eq m'||`` over ``max(||g||, g_scale)``,
        where ``g_scale`` is the gradient magnitude at the optimizer's start
        (0 when recovered standalone).  The floor keeps the ratio meaningful
        at free interior optima where ``||g||`` itself tends to zero.
    complementarity_residual : float
        ``sum_j eta_j (D u)_j``.
    inside_set : (N,) bool array
        Nodes strictly between the box bounds.
    """

    eta: np.ndarray
    mu_eq: float
    box_mult: np.ndarray
    stationarity_residual: float
    complementarity_residual: float
    inside_set: np.ndarray

    @property
    def zeta0(self) -> np.ndarray:
        """Cone multiplier as a function sample (eta rescaled by dtheta)."""
        return self.eta * (2.0 * np.pi / self.eta.shape[0])


def _kkt_from_gradient(
    u: np.ndarray,
    gradient: np.ndarray,
    eq_gradient: Optional[np.ndarray],
    cone: ConeConstraint,
    lo: np.ndarray,
    hi: np.ndarray,
    active_tol: float = 1e-8,
    g_scale: float = 0.0,
) -> KKTReport:
    """Recover multipliers at `u` by nonnegative least squares.

    ``g_scale`` floors the normalization of the stationarity residual: at a
    free interior optimum the gradient itself tends to zero and the plain
    ratio ``residual/||g||`` degenerates to 0/0; flooring by the gradient's
    starting magnitude keeps the report meaningful there.
    """
    n = u.shape[0]
    du = cone.rows @ u
    cone_active = np.where(du <= active_tol)[0]
    scale = max(1.0, float(np.max(np.abs(u))))
    lo_active = np.where(u - lo <= active_tol * scale)[0]
    hi_active = np.where(hi - u <= active_tol * scale)[0]
    columns = []
    if cone_active.size:
        columns.append(cone.rows[cone_active].T)  # D symmetric: rows are columns
    if lo_active.size:
        eye = np.zeros((n, lo_active.size))
        eye[lo_active, np.arange(lo_active.size)] = 1.0
        columns.append(eye)
    if hi_active.size:
        eye = np.zeros((n, hi_active.size))
        eye[hi_active, np.arange(hi_active.size)] = -1.0
        columns.append(eye)
    if eq_gradient is not None:
        columns.append(eq_gradient[:, None])
        columns.append(-eq_gradient[:, None])
    gnorm = float(np.linalg.norm(gradient))
    if columns:
        a = np.hstack(columns)
        try:
            coef, _ = scipy.optimize.nnls(a, gradient, maxiter=10 * a.shape[1])
        except RuntimeError as exc:
            raise RuntimeError(f"multiplier recovery failed: {exc}") from exc
        residual = float(np.linalg.norm(gradient - a @ coef))
    else:
        coef = np.empty(0)
        residual = gnorm
    eta = np.zeros(n)
    box_mult = np.zeros(n)
    pos = 0
    if cone_active.size:
        eta[cone_active] = coef[pos : pos + cone_active.size]
        pos += cone_active.size
    if lo_active.size:
        box_mult[lo_active] += coef[pos : pos + lo_active.size]
        pos += lo_active.size
    if hi_active.size:
        box_mult[hi_active] -= coef[pos : pos + hi_active.size]
        pos += hi_active.size
    mu_eq = 0.0
    if eq_gradient is not None:
        mu_eq = float(coef[pos] - coef[pos + 1])
    inside_tol = max(active_tol, 1e-6) * scale
    inside = (u > lo + inside_tol) & (u < hi - inside_tol)
    return KKTReport(
        eta=eta,
        mu_eq=mu_eq,
        box_mult=box_mult,
        stationarity_residual=residual / max(gnorm, g_scale, 1e-300),
        complementarity_residual=float(np.dot(eta, du)),
        inside_set=inside,
    )


# -- minimization ------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs for the augmented-Lagrangian projected-gradient solver."""

    max_outer: int = 12
    max_inner: int = 80
    tol_kkt: float = 1e-4
    tol_eq: float = 1e-8
    tol_cone: float = 1e-10
    step_min: float = 1e-12
    armijo: float = 1e-4
    backtrack: float = 0.5
    bb_low: float = 1e-8
    bb_high: float = 1e4
    mu0: float = 10.0
    mu_growth: float = 5.0
    mu_max: float = 1e7
    eq_shrink: float = 0.25
    kkt_check_every: int = 4


@dataclass
class OptimizationResult:
    """Outcome of :func:`minimize`.

    ``status`` is one of ``converged``, ``max_iter``, ``line_search_failure``;
    anything other than ``converged`` still carries the last iterate and a
    report, never a silent failure.
    """

    u_star: GaugeBody
    objective: float
    iterations: int
    kkt: KKTReport
    history: list = field(default_factory=list)
    status: str = "converged"
    message: str = ""
    evaluations: int = 0
    spec: Optional[FunctionalSpec] = None

    @property
    def success(self) -> bool:
        return self.status == "converged"


def save_history_csv(history: list, path) -> None:
    """Write per-iteration history as CSV."""
    cols = ["iter", "objective", "merit", "eq_residual", "cone_min", "step", "stationarity"]
    lines = [",".join(cols)]
    for row in history:
        lines.append(
            ",".join(str(row[c]) if c == "iter" else repr(float(row[c])) for c in cols)
        )
    with open(path, "w", encoding="ascii") as handle:
        handle.write("\n".join(lines) + "\n")


def minimize(
    spec: FunctionalSpec,
    cons: ConstraintSpec,
    config: OptimizerConfig,
    u_init: PeriodicField,
) -> OptimizationResult:
    """Minimize the functional over the cone-box(-equality) feasible set.

    Projected gradient descent with BB steps and monotone Armijo backtracking
    on the augmented-Lagrangian merit; the equality multiplier and penalty are
    updated between inner rounds.  Terminates as converged as soon as the
    recovered KKT residuals meet their tolerances.
    """
    n = u_init.n
    cone = cone_matrix(n, config.tol_cone)
    try:
        lo, hi = cons.bounds(n)
    except ValueError as exc:  # empty box: infeasible, not a usage bug
        raise InfeasibleError(str(exc)) from exc
    u_field, working = project_feasible(u_init, cone, cons, return_info=True)
    body = GaugeBody(u_field, tol_cone=max(10 * config.tol_cone, 1e-9))
    spec = spec.locked(body)

    evals = 0

    def full_eval(b: GaugeBody):
        nonlocal evals
        evals += 1
        rep = evaluate(spec, b)
        c_val, c_grad, _ = constraint_eval(cons, b)
        return rep, c_val, c_grad

    report, c_val, c_grad = full_eval(body)
    has_eq = cons.equality is not None
    lam_eq = 0.0
    mu = config.mu0 if has_eq else 0.0

    def merit_value(rep_value: float, c: float) -> float:
        return rep_value + lam_eq * c + 0.5 * mu * c * c

    def merit_grad(rep, c, cg) -> np.ndarray:
        return rep.gradient.samples + (lam_eq + mu * c) * cg.samples

    history = []
    status = "max_iter"
    message = ""
    total_iters = 0
    kkt = None
    step = None
    prev_u = None
    prev_g = None
    c_outer_prev = abs(c_val)

    g_scale0 = float(np.linalg.norm(report.gradient.samples))

    def check_kkt() -> KKTReport:
        eqg = c_grad.samples if has_eq else None
        # Partial chord steps approach box faces and curvature roots
        # asymptotically without landing on them exactly, so the active
        # set is read at the stationarity tolerance rather than at
        # feasibility precision: a row within tol_kkt of its face may
        # carry the multiplier that certifies the point.
        return _kkt_from_gradient(
            body.u.samples,
            report.gradient.samples,
            eqg,
            cone,
            lo,
            hi,
            active_tol=max(config.tol_kkt, 1e-8),
            g_scale=g_scale0,
        )

    def eq_satisfied(c: float) -> bool:
        return (not has_eq) or abs(c) <= config.tol_eq * max(1.0, abs(cons.equality.target))

    def restore_equality(b: GaugeBody):
        """Rescale the gauge to meet the equality exactly, then re-project.

        Area and perimeter are homogeneous in the gauge (degree -2 / -1), so
        a multiplicative factor restores the constraint without moving along
        the objective more than O(|c|); projection repairs any box overshoot
        and the loop contracts when the box is not fighting the scaling.
        """
        target = cons.equality.target
        power = 0.5 if cons.equality.kind is Kind.AREA else 1.0
        for _ in range(3):
            c, _, _ = constraint_eval(cons, b)
            if eq_satisfied(c):
                return b
            factor = ((c + target) / target) ** power
            scaled = PeriodicField(factor * b.u.samples)
            fixed, _ = project_feasible(scaled, cone, cons, start=b.u, return_info=True)
            b = GaugeBody(fixed, tol_cone=max(10 * config.tol_cone, 1e-9))
        return b

    def log_row(stat: float):
        du_min = float(np.min(cone.rows @ body.u.samples))
        history.append(
            {
                "iter": total_iters,
                "objective": report.value,
                "merit": merit_value(report.value, c_val),
                "eq_residual": c_val,
                "cone_min": du_min,
                "step": step if step is not None else 0.0,
                "stationarity": stat,
            }
        )

    done = False
    fruitless = 0
    # Without an equality there are no outer updates; keep the total
    # iteration budget comparable by folding it into the single round.
    inner_budget = config.max_inner if has_eq else config.max_inner * config.max_outer
    for outer in range(config.max_outer if has_eq else 1):
        phi = merit_value(report.value, c_val)
        g_phi = merit_grad(report, c_val, c_grad)
        stalled = False
        accepts_in_round = 0
        rejects_in_row = 0
        # Opening fraction for the chord backtracking, carried across
        # iterations: in a narrow valley even the spectral step overshoots
        # the walls, and re-discovering the acceptable fraction from s = 1
        # every iteration costs a dozen solves.
        s_open = 1.0
        for inner in range(inner_budget):
            # BB step length from the previous merit-gradient displacement.
            if prev_u is not None:
                du = body.u.samples - prev_u
                dg = g_phi - prev_g
                sy = float(np.dot(du, dg))
                if sy > 0:
                    step = float(np.dot(du, du) / sy)
                # On sy <= 0 keep the last step; doubling here re-enters the
                # backtracking chain every iteration.
            elif step is None:
                gmax = float(np.max(np.abs(g_phi)))
                step = 0.1 * max(1.0, float(np.max(np.abs(body.u.samples)))) / max(gmax, 1e-12)
            step = float(np.clip(step, config.bb_low, config.bb_high))

            prev_u = body.u.samples.copy()
            prev_g = g_phi.copy()

            # Never displace the raw target by more than half the gauge's own
            # scale: larger moves only feed the projection an absurd point.
            gmax = float(np.max(np.abs(g_phi)))
            t_cap = 0.5 * float(np.max(np.abs(body.u.samples))) / max(gmax, 1e-12)
            t = min(step, t_cap)
            # One projection per iteration: backtrack along the feasible chord
            # u + s*(P(u - t*g) - u), s in (0, 1].  Both endpoints are feasible
            # so every trial is feasible by convexity, rejections cost a solve
            # but no projection, and a full step lands on whatever face the
            # projection of the far target identified -- a backtracked
            # projection arc instead hugs the walls of narrow valleys and
            # crawls exactly where the chord crosses them in one move.
            chord_target = PeriodicField(body.u.samples - t * g_phi)
            chord_field, working = project_feasible(
                chord_target, cone, cons, warm_start=working, start=body.u, return_info=True
            )
            d = chord_field.samples - body.u.samples
            slope = float(np.dot(g_phi, d))
            dmax = float(np.max(np.abs(d)))
            moved = dmax > 1e-13 * max(1.0, float(np.max(np.abs(body.u.samples))))
            accepted = False
            if moved and slope < 0.0:
                s = s_open
                first = True
                for _trial in range(60):
                    if s * dmax < config.step_min:
                        break
                    trial_field = PeriodicField(body.u.samples + s * d)
                    trial_body = GaugeBody(trial_field, tol_cone=max(10 * config.tol_cone, 1e-9))
                    trial_report, trial_c, trial_cg = full_eval(trial_body)
                    trial_phi = merit_value(trial_report.value, trial_c)
                    # Slack at the round-off scale of the merit keeps tiny
                    # steps from being rejected on evaluation noise alone.
                    slack = 1e-12 * max(1.0, abs(phi))
                    if trial_phi <= phi + config.armijo * s * slope + slack:
                        body, report, c_val, c_grad = trial_body, trial_report, trial_c, trial_cg
                        phi, g_phi = trial_phi, merit_grad(trial_report, trial_c, trial_cg)
                        # Regrow the opening fraction only off an untested
                        # first accept; a backtracked accept pins it.
                        s_open = min(1.0, 2.0 * s) if first else s
                        accepted = True
                        accepts_in_round += 1
                        break
                    s *= config.backtrack
                    first = False
            total_iters += 1
            if not accepted:
                rejects_in_row += 1
                kkt = check_kkt()
                log_row(kkt.stationarity_residual)
                if kkt.stationarity_residual <= config.tol_kkt and eq_satisfied(c_val):
                    status = "converged"
                    done = True
                    stalled = True
                    break
                if rejects_in_row < 2:
                    # One rejected iteration is usually a bad spectral step,
                    # not a stationary point: restart the BB memory and retry
                    # from a conservative opening before giving up the round.
                    prev_u = prev_g = None
                    step = None
                    s_open = 1.0
                    continue
                if not has_eq:
                    status = "line_search_failure"
                    message = f"line search stalled at iteration {total_iters}"
                # With an equality constraint a stall is often the merit's
                # fault (stale multiplier), not the geometry's: hand control
                # to the outer update instead of failing outright.
                stalled = True
                break
            rejects_in_row = 0
            do_check = (inner + 1) % config.kkt_check_every == 0
            move = float(np.max(np.abs(body.u.samples - prev_u)))
            no_progress = move <= 1e-12 * max(1.0, float(np.max(np.abs(body.u.samples))))
            if do_check or no_progress or inner == inner_budget - 1:
                kkt = check_kkt()
                log_row(kkt.stationarity_residual)
                if kkt.stationarity_residual <= config.tol_kkt:
                    if eq_satisfied(c_val):
                        status = "converged"
                        done = True
                    # Merit-stationary either way: hand the equality residual
                    # to the outer loop.
                    break
                if no_progress:
                    break
            else:
                log_row(np.nan)
        if done or status == "line_search_failure":
            break
        if has_eq:
            # Two consecutive rounds without a single accepted step means the
            # multiplier updates are no longer changing the merit: a genuine
            # stall, not a stale-multiplier artifact.
            if stalled and accepts_in_round == 0:
                fruitless += 1
                if fruitless >= 2:
                    status = "line_search_failure"
                    message = f"line search stalled at iteration {total_iters}"
                    break
            else:
                fruitless = 0
            c_inner = c_val  # pre-restoration drift drives the updates
            restored = restore_equality(body)
            if restored is not body:
                body = restored
                report, c_val, c_grad = full_eval(body)
                kkt = check_kkt()
                log_row(kkt.stationarity_residual)
                if kkt.stationarity_residual <= config.tol_kkt and eq_satisfied(c_val):
                    status = "converged"
                    done = True
                    break
            # Multiplier from the least-squares fit at the round's endpoint:
            # the first-order ratchet lam += mu*c mis-signs the multiplier
            # whenever a round ends mid-descent, and a merit built on a bad
            # multiplier stalls the line search in a valley of its own making.
            if kkt is not None:
                lam_eq = kkt.mu_eq
            else:
                lam_eq += mu * c_inner
            # Stiffen the penalty only while the within-round drift fails to
            # contract; once restoration keeps it at noise scale the ratio
            # test would otherwise fire every round and stiffen the merit
            # until steps across the constraint manifold collapse.
            if (
                outer > 0
                and not eq_satisfied(c_inner)
                and abs(c_inner) > config.eq_shrink * c_outer_prev
            ):
                mu = min(mu * config.mu_growth, config.mu_max)
            c_outer_prev = max(abs(c_inner), config.tol_eq)
            # Merit changed: restart BB memory and the step length, else the
            # next round opens on the previous endgame's microscopic step and
            # can die instantly on the no-progress check.
            prev_u = prev_g = None
            step = None
        if not has_eq and stalled:
            break

    if has_eq and not eq_satisfied(c_val):
        # Failure exits can leave the round mid-drift; the result contract
        # still promises a feasible iterate, so restore before reporting.
        body = restore_equality(body)
        report, c_val, c_grad = full_eval(body)
        kkt = check_kkt()
        log_row(kkt.stationarity_residual)
    if kkt is None:
        kkt = check_kkt()
    if status == "max_iter":
        message = (
            f"stopped after {total_iters} iterations with stationarity "
            f"{kkt.stationarity_residual:.3e} and equality residual {c_val:.3e}"
        )
    return OptimizationResult(
        u_star=body,
        objective=report.value,
        iterations=total_iters,
        kkt=kkt,
        history=history,
        status=status,
        message=message,
        evaluations=evals,
        spec=spec,
    )


def recover_multipliers(
    result: OptimizationResult,
    spec: FunctionalSpec,
    cone: ConeConstraint,
    cons: ConstraintSpec,
    g_scale: float = 0.0,
) -> KKTReport:
    """Recompute the KKT decomposition at a result's final iterate.

    Reuses the result's frozen mesh depth when available so the gradient
    matches the one the optimizer saw.  ``g_scale`` floors the stationarity
    normalization as in the optimizer's own reports.
    """
    locked = result.spec if result.spec is not None else spec.locked(result.u_star)
    report = evaluate(locked, result.u_star)
    _, c_grad, _ = constraint_eval(cons, result.u_star)
    lo, hi = cons.bounds(result.u_star.n)
    eqg = c_grad.samples if cons.equality is not None else None
    return _kkt_from_gradient(
        result.u_star.u.samples, report.gradient.samples, eqg, cone, lo, hi, g_scale=g_scale
    )
