"""Command-line experiment runner.

Problem documents are JSON (numbers may be decimal strings — reports always
emit them that way so byte-identical reruns don't depend on locale or float
repr quirks).  A run executes minimize -> multiplier recovery -> two-grid
classification -> derivative-check digest, then writes a JSON report, a CSV
iteration history, the final gauge as CSV, and an SVG plot of the body with
its detected corners and the cone multiplier.

Subcommands
-----------
run <file>          full pipeline on a problem document
preset <name>       print (or --emit/--run) one of the built-in problems
verify <file>       derivative checks only, digest to stdout
classify <csv>      Smooth/Polygonal verdict for a gauge sampled as (theta, u)
sweep <file> --param a.b --values ...   fan a parameter over a worker pool

Exit codes: 0 success, 2 schema error, 3 solver non-convergence,
4 infeasible problem.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import json
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import analyze, optimize
from .body import DomainError, GaugeBody
from .functional import (
    ConstraintSpec,
    EqualityConstraint,
    FunctionalSpec,
    Kind,
    Term,
    evaluate,
)
from .optimize import InfeasibleError, OptimizerConfig, cone_matrix, minimize, project_feasible
from .periodic import PeriodicField, curvature_measure, refine_field

__all__ = [
    "SchemaError",
    "PROBLEM_SCHEMA",
    "PRESET_NAMES",
    "preset",
    "validate_problem",
    "run_problem",
    "load_gauge_csv",
    "save_gauge_csv",
    "main",
]


class SchemaError(ValueError):
    """Problem document violates the schema or carries unparseable numbers."""


_NUM = {"type": ["string", "number"]}
_OPT_NUM = {"type": ["string", "number", "null"]}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "objective", "constraints", "discretization", "initial", "seed"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "objective": {
            "type": "object",
            "required": ["terms"],
            "additionalProperties": False,
            "properties": {
                "terms": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["kind"],
                        "additionalProperties": False,
                        "properties": {
                            "kind": {"enum": ["Area", "Energy", "Lambda1", "Perimeter"]},
                            "coefficient": _NUM,
                            "exponent": _NUM,
                        },
                    },
                },
                "f_source": {"type": "string"},
            },
        },
        "constraints": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lower": _OPT_NUM,
                "upper": _OPT_NUM,
                "equality": {
                    "oneOf": [
                        {"type": "null"},
                        {
                            "type": "object",
                            "required": ["kind", "target"],
                            "additionalProperties": False,
                            "properties": {
                                "kind": {"enum": ["Area", "Perimeter"]},
                                "target": _NUM,
                            },
                        },
                    ]
                },
            },
        },
        "discretization": {
            "type": "object",
            "required": ["n"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 8},
                "mesh_h": _NUM,
                "levels": {"oneOf": [{"type": "null"}, {"type": "integer", "minimum": 0}]},
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_outer": {"type": "integer", "minimum": 1},
                "max_inner": {"type": "integer", "minimum": 1},
                "kkt_check_every": {"type": "integer", "minimum": 1},
                "tol_kkt": _NUM,
                "tol_eq": _NUM,
                "tol_cone": _NUM,
                "step_min": _NUM,
                "armijo": _NUM,
                "backtrack": _NUM,
                "mu0": _NUM,
                "mu_growth": _NUM,
            },
        },
        "initial": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["kind", "value"],
                    "additionalProperties": False,
                    "properties": {"kind": {"const": "constant"}, "value": _NUM},
                },
                {
                    "type": "object",
                    "required": ["kind", "base", "amplitude", "mode"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "cosine"},
                        "base": _NUM,
                        "amplitude": _NUM,
                        "mode": {"type": "integer", "minimum": 0},
                    },
                },
                {
                    "type": "object",
                    "required": ["kind", "path"],
                    "additionalProperties": False,
                    "properties": {"kind": {"const": "csv"}, "path": {"type": "string"}},
                },
            ]
        },
        "seed": {"type": "integer"},
        "report_sign_mu_eq": {"type": "boolean"},
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "report": {"type": "string"},
                "history": {"type": "string"},
                "plot": {"type": "string"},
                "gauge": {"type": "string"},
            },
        },
    },
}


def _num(value, where: str) -> float:
    try:
        out = float(str(value).strip())
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: {value!r} is not a number") from None
    if not np.isfinite(out):
        raise SchemaError(f"{where}: {value!r} is not finite")
    return out


def validate_problem(doc: dict) -> None:
    """Schema-check a problem document; raise SchemaError with a field path."""
    validator = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(f"{path}: {err.message}")


# -- presets ------------------------------------------------------------------

_PI = repr(float(np.pi))
_TWO_PI = repr(float(2.0 * np.pi))

PRESET_NAMES = (
    "isoperimetric",
    "ex1",
    "ex2",
    "ex3",
    "ex-prime-1",
    "ex-prime-2",
    "ex-prime-3",
    "maxE",
)


def _term(kind: str, coefficient: float = 1.0) -> dict:
    return {"kind": kind, "coefficient": repr(float(coefficient)), "exponent": "1.0"}


def preset(name: str) -> dict:
    """Built-in problem documents reproducing the reference experiments."""
    lam, per, ene = "Lambda1", "Perimeter", "Energy"
    table = {
        # Minimal perimeter at fixed area: the disk, from a wavy start.
        "isoperimetric": {
            "objective": {"terms": [_term(per)]},
            "constraints": {
                "lower": repr(1.0 / 3.0),
                "upper": "3.0",
                "equality": {"kind": "Area", "target": _PI},
            },
            "initial": {"kind": "cosine", "base": "1.0", "amplitude": "0.2", "mode": 3},
        },
        # lambda_1 + perimeter over an annular box: ball of radius
        # (j_{0,1}^2 / pi)^(1/3).
        "ex1": {
            "objective": {"terms": [_term(lam), _term(per)]},
            "constraints": {"lower": "0.5", "upper": "2.0", "equality": None},
            "initial": {"kind": "constant", "value": "1.0"},
        },
        # lambda_1 + perimeter at fixed area: smooth optimum (disk).
        "ex2": {
            "objective": {"terms": [_term(lam), _term(per)]},
            "constraints": {
                "lower": "0.4",
                "upper": "2.5",
                "equality": {"kind": "Area", "target": _PI},
            },
            "initial": {"kind": "cosine", "base": "1.0", "amplitude": "0.2", "mode": 3},
        },
        # min lambda_1 at fixed perimeter: disk, negative equality multiplier.
        "ex3": {
            "objective": {"terms": [_term(lam)]},
            "constraints": {
                "lower": "0.4",
                "upper": "2.5",
                "equality": {"kind": "Perimeter", "target": _TWO_PI},
            },
            "initial": {"kind": "cosine", "base": "1.0", "amplitude": "0.1", "mode": 2},
            "report_sign_mu_eq": True,
        },
        # lambda_1 - perimeter over the annular box: both terms decrease
        # under growth, so the outer disk wins and the box is active
        # everywhere (no free boundary to classify).
        "ex-prime-1": {
            "objective": {"terms": [_term(lam), _term(per, -1.0)]},
            "constraints": {"lower": "0.5", "upper": "2.0", "equality": None},
            "initial": {"kind": "constant", "value": "1.0"},
        },
        # lambda_1 - perimeter at fixed area: perimeter is rewarded, the
        # free boundary polygonizes.
        "ex-prime-2": {
            "objective": {"terms": [_term(lam), _term(per, -1.0)]},
            "constraints": {
                "lower": "0.4",
                "upper": "2.5",
                "equality": {"kind": "Area", "target": _PI},
            },
            "initial": {"kind": "cosine", "base": "1.0", "amplitude": "0.2", "mode": 3},
            "optimizer": {"max_inner": 150},
        },
        # max lambda_1 at fixed perimeter: sign of the equality multiplier
        # flips against ex3.
        "ex-prime-3": {
            "objective": {"terms": [_term(lam, -1.0)]},
            "constraints": {
                "lower": "0.4",
                "upper": "2.5",
                "equality": {"kind": "Perimeter", "target": _TWO_PI},
            },
            "initial": {"kind": "cosine", "base": "1.0", "amplitude": "0.1", "mode": 2},
            "report_sign_mu_eq": True,
            "optimizer": {"max_inner": 150},
        },
        # max E_f at fixed area inside an outer disk (exploratory problem;
        # no verdict is asserted for it).
        "maxE": {
            "objective": {"terms": [_term(ene, -1.0)], "f_source": "1"},
            "constraints": {
                "lower": "0.5",
                "upper": None,
                "equality": {"kind": "Area", "target": _PI},
            },
            "initial": {"kind": "cosine", "base": "1.0", "amplitude": "0.2", "mode": 3},
            "optimizer": {"max_inner": 150},
        },
    }
    if name not in table:
        raise SchemaError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    doc = {
        "name": name,
        "discretization": {"n": 128, "mesh_h": "0.2", "levels": None},
        "optimizer": {},
        "seed": 20260815,
        "report_sign_mu_eq": False,
        "outputs": {
            "report": f"{name}_report.json",
            "history": f"{name}_history.csv",
            "plot": f"{name}_shape.svg",
            "gauge": f"{name}_gauge.csv",
        },
    }
    doc.update({k: v for k, v in table[name].items() if k != "optimizer"})
    doc["optimizer"] = table[name].get("optimizer", {})
    validate_problem(doc)
    return doc


# -- document -> objects ------------------------------------------------------


def _build_spec(doc: dict) -> FunctionalSpec:
    obj = doc["objective"]
    disc = doc["discretization"]
    terms = tuple(
        Term(
            kind=Kind(t["kind"]),
            coefficient=_num(t.get("coefficient", "1"), "objective/terms/coefficient"),
            exponent=_num(t.get("exponent", "1"), "objective/terms/exponent"),
        )
        for t in obj["terms"]
    )
    return FunctionalSpec(
        terms=terms,
        f_source=obj.get("f_source", "1"),
        mesh_h=_num(disc.get("mesh_h", "0.1"), "discretization/mesh_h"),
        mesh_levels=disc.get("levels"),
    )


def _build_constraints(doc: dict) -> ConstraintSpec:
    cons = doc.get("constraints", {})
    eq = cons.get("equality")
    equality = None
    if eq is not None:
        equality = EqualityConstraint(
            kind=Kind(eq["kind"]), target=_num(eq["target"], "constraints/equality/target")
        )
    lower = cons.get("lower")
    upper = cons.get("upper")
    return ConstraintSpec(
        lower=None if lower is None else _num(lower, "constraints/lower"),
        upper=None if upper is None else _num(upper, "constraints/upper"),
        equality=equality,
    )


def _build_config(doc: dict) -> OptimizerConfig:
    raw = doc.get("optimizer", {})
    ints = {"max_outer", "max_inner", "kkt_check_every"}
    kwargs = {}
    for key, value in raw.items():
        kwargs[key] = int(value) if key in ints else _num(value, f"optimizer/{key}")
    return OptimizerConfig(**kwargs)


def _build_initial(doc: dict, base_dir: Path) -> PeriodicField:
    init = doc["initial"]
    n = doc["discretization"]["n"]
    if init["kind"] == "constant":
        return PeriodicField(np.full(n, _num(init["value"], "initial/value")))
    if init["kind"] == "cosine":
        base = _num(init["base"], "initial/base")
        amp = _num(init["amplitude"], "initial/amplitude")
        mode = int(init["mode"])
        theta = 2.0 * np.pi * np.arange(n) / n
        return PeriodicField(base + amp * np.cos(mode * theta))
    field = load_gauge_csv(base_dir / init["path"])
    if field.n != n:
        raise SchemaError(
            f"initial/path: gauge has {field.n} samples, discretization asks for {n}"
        )
    return field


def _resolved_config(doc: dict, config: OptimizerConfig, levels) -> dict:
    out = copy.deepcopy(doc)
    out["optimizer"] = {
        "max_outer": config.max_outer,
        "max_inner": config.max_inner,
        "kkt_check_every": config.kkt_check_every,
        "tol_kkt": config.tol_kkt,
        "tol_eq": config.tol_eq,
        "tol_cone": config.tol_cone,
        "step_min": config.step_min,
        "armijo": config.armijo,
        "backtrack": config.backtrack,
        "mu0": config.mu0,
        "mu_growth": config.mu_growth,
    }
    out["discretization"]["levels"] = levels
    out.setdefault("report_sign_mu_eq", False)
    return out


def _stringify(obj):
    """Floats to repr strings, numpy scalars to native, recursively."""
    if isinstance(obj, dict):
        return {k: _stringify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_stringify(x) for x in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        return repr(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# -- gauge CSV ----------------------------------------------------------------


def save_gauge_csv(field: PeriodicField, path) -> None:
    """Write (theta_j, u_j) rows with a header."""
    lines = ["theta,u"]
    for t, u in zip(field.theta, field.samples):
        lines.append(f"{float(t)!r},{float(u)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_gauge_csv(path) -> PeriodicField:
    """Read (theta_j, u_j) rows; the grid must be the uniform one."""
    raw = np.genfromtxt(path, delimiter=",", skip_header=1)
    if raw.ndim != 2 or raw.shape[1] != 2:
        raise SchemaError(f"{path}: expected two columns (theta, u)")
    theta, u = raw[:, 0], raw[:, 1]
    n = theta.shape[0]
    expected = 2.0 * np.pi * np.arange(n) / n
    if not np.allclose(theta, expected, atol=1e-9):
        raise SchemaError(f"{path}: theta column is not the uniform grid on [0, 2pi)")
    return PeriodicField(u)


# -- SVG plot -----------------------------------------------------------------


def _svg_polyline(points, stroke, fill="none", width=1.5) -> str:
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    return (
        f'<polyline points="{coords}" fill="{fill}" stroke="{stroke}" '
        f'stroke-width="{width}"/>'
    )


def save_shape_svg(body: GaugeBody, atoms, zeta0: np.ndarray, path) -> None:
    """Two-panel SVG: the body with corner markers, and zeta0 over theta."""
    pts = body.boundary_points()
    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="920" height="480" '
        'viewBox="0 0 920 480">',
        '<rect width="920" height="480" fill="white"/>',
    ]
    # Left panel: the body.
    cx, cy, half = 230.0, 240.0, 200.0
    scale = half / max(float(np.max(np.abs(pts))), 1e-12) * 0.9
    to_px = [(cx + scale * x, cy - scale * y) for x, y in pts]
    to_px.append(to_px[0])
    parts.append(_svg_polyline(to_px, "#2060a0", fill="#e8f0fa"))
    for theta, mass in atoms:
        r = 1.0 / float(body.gauge_at(theta))
        x = cx + scale * r * np.cos(theta)
        y = cy - scale * r * np.sin(theta)
        parts.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="5" fill="#c03030">'
            f"<title>theta={theta:.4f} mass={mass:.4f}</title></circle>"
        )
    parts.append(
        '<text x="230" y="470" text-anchor="middle" font-family="monospace" '
        'font-size="13">shape (corners marked)</text>'
    )
    # Right panel: cone multiplier against theta.
    x0, x1, y0, y1 = 500.0, 900.0, 420.0, 40.0
    zmax = max(float(np.max(zeta0)), 1e-12)
    n = zeta0.shape[0]
    theta = 2.0 * np.pi * np.arange(n) / n
    curve = [
        (x0 + (x1 - x0) * t / (2.0 * np.pi), y0 + (y1 - y0) * z / zmax)
        for t, z in zip(theta, zeta0)
    ]
    parts.append(_svg_polyline([(x0, y0), (x1, y0)], "#555", width=1.0))
    parts.append(_svg_polyline([(x0, y0), (x0, y1)], "#555", width=1.0))
    parts.append(_svg_polyline(curve, "#208050"))
    for theta_atom, _ in atoms:
        x = x0 + (x1 - x0) * (theta_atom % (2.0 * np.pi)) / (2.0 * np.pi)
        parts.append(_svg_polyline([(x, y0), (x, y0 + 6)], "#c03030", width=2.0))
    parts.append(
        '<text x="700" y="470" text-anchor="middle" font-family="monospace" '
        'font-size="13">cone multiplier zeta0(theta), corner angles ticked</text>'
    )
    parts.append(
        f'<text x="505" y="35" font-family="monospace" font-size="11">max {zmax:.3e}</text>'
    )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="ascii")


# -- pipeline -----------------------------------------------------------------


def run_problem(doc: dict, out_dir) -> tuple:
    """Validate, minimize, classify, verify; write outputs.

    Returns
    -------
    (report: dict, exit_code: int)
    """
    validate_problem(doc)
    out_dir = Path(out_dir)
    spec = _build_spec(doc)
    cons = _build_constraints(doc)
    config = _build_config(doc)
    u_init = _build_initial(doc, out_dir)
    seed = doc["seed"]

    timings = {}
    t0 = time.perf_counter()
    result = minimize(spec, cons, config, u_init)
    timings["minimize_s"] = time.perf_counter() - t0
    body = result.u_star
    kkt = result.kkt
    locked = result.spec if result.spec is not None else spec

    t1 = time.perf_counter()
    measure = curvature_measure(body.u)
    measure_fine = curvature_measure(refine_field(body.u))
    try:
        verdict = analyze.classify(measure, measure_fine, kkt.inside_set)
        verdict_block = {
            "kind": verdict.kind,
            "atoms": [[t, m] for t, m in verdict.atoms],
            "max_density": verdict.max_density,
            "stability": verdict.stability,
            "atom_mass_fraction": verdict.atom_mass_fraction,
        }
        atoms = verdict.atoms
    except (ValueError, RuntimeError) as exc:
        verdict_block = {"skipped": str(exc)}
        atoms = ()
    timings["classify_s"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    try:
        digest = analyze.check_gradient(locked, body, directions=3, seed=seed)
        digest_block = {
            "direction_count": digest.direction_count,
            "max_rel_error_grad": digest.max_rel_error_grad,
            "max_rel_error_hess": digest.max_rel_error_hess,
            "refinement_trend": list(digest.refinement_trend),
        }
    except (DomainError, RuntimeError) as exc:
        digest_block = {"skipped": str(exc)}
    timings["check_gradient_s"] = time.perf_counter() - t2

    final_report = evaluate(locked, body)
    eta_max = float(np.max(kkt.eta)) if kkt.eta.size else 0.0
    result_block = {
        "status": result.status,
        "message": result.message,
        "objective": result.objective,
        "iterations": result.iterations,
        "evaluations": result.evaluations,
        "per_term_values": dict(final_report.per_term_values),
        "eq_residual": (
            float(result.history[-1]["eq_residual"]) if result.history else 0.0
        ),
    }
    if doc.get("report_sign_mu_eq", False):
        mu = kkt.mu_eq
        sign = "0" if abs(mu) <= 1e-10 else ("+1" if mu > 0 else "-1")
        result_block["sign_mu_eq"] = sign
        print(f"sign(mu_eq) = {sign}  (mu_eq = {mu!r})")

    outputs = doc.get("outputs", {})
    written = {}
    out_dir.mkdir(parents=True, exist_ok=True)
    if "history" in outputs:
        p = out_dir / outputs["history"]
        optimize.save_history_csv(result.history, p)
        written["history"] = str(p)
    if "gauge" in outputs:
        p = out_dir / outputs["gauge"]
        save_gauge_csv(body.u, p)
        written["gauge"] = str(p)
    if "plot" in outputs:
        p = out_dir / outputs["plot"]
        save_shape_svg(body, atoms, kkt.zeta0, p)
        written["plot"] = str(p)

    report = {
        "name": doc["name"],
        "config": _resolved_config(doc, config, locked.mesh_levels),
        "result": result_block,
        "kkt": {
            "stationarity_residual": kkt.stationarity_residual,
            "complementarity_residual": kkt.complementarity_residual,
            "mu_eq": kkt.mu_eq,
            "eta_min": float(np.min(kkt.eta)) if kkt.eta.size else 0.0,
            "eta_max": eta_max,
            "inside_count": int(np.sum(kkt.inside_set)),
        },
        "verdict": verdict_block,
        "derivative_check": digest_block,
        "outputs": written,
    }
    report = _stringify(report)
    timings["total_s"] = time.perf_counter() - t0
    report["timing"] = _stringify(timings)
    if "report" in outputs:
        p = out_dir / outputs["report"]
        p.write_text(
            json.dumps(report, indent=2, sort_keys=True, ensure_ascii=True) + "\n",
            encoding="ascii",
        )
        written["report"] = str(p)
    return report, (0 if result.status == "converged" else 3)


# -- subcommands ----------------------------------------------------------------


def _load_doc(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    validate_problem(doc)
    return doc


def _cmd_run(args) -> int:
    doc = _load_doc(args.problem_file)
    report, code = run_problem(doc, args.out_dir)
    print(json.dumps(report, indent=2, sort_keys=True))
    return code


def _cmd_preset(args) -> int:
    doc = preset(args.name)
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.emit:
        Path(args.emit).write_text(text + "\n", encoding="ascii")
    if args.run:
        report, code = run_problem(doc, args.out_dir)
        print(json.dumps(report, indent=2, sort_keys=True))
        return code
    if not args.emit:
        print(text)
    return 0


def _cmd_verify(args) -> int:
    doc = _load_doc(args.problem_file)
    spec = _build_spec(doc)
    cons = _build_constraints(doc)
    u_init = _build_initial(doc, Path(args.problem_file).parent)
    cone = cone_matrix(u_init.n)
    u_feas = project_feasible(u_init, cone, cons)
    body = GaugeBody(u_feas, tol_cone=1e-8)
    digest = analyze.check_gradient(spec, body, directions=args.directions, seed=doc["seed"])
    print(
        json.dumps(
            _stringify(
                {
                    "name": doc["name"],
                    "direction_count": digest.direction_count,
                    "max_rel_error_grad": digest.max_rel_error_grad,
                    "max_rel_error_hess": digest.max_rel_error_hess,
                    "refinement_trend": list(digest.refinement_trend),
                }
            ),
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def _cmd_classify(args) -> int:
    field = load_gauge_csv(args.gauge_csv)
    body = GaugeBody(field, tol_cone=1e-6)
    measure = curvature_measure(body.u)
    measure_fine = curvature_measure(refine_field(body.u))
    verdict = analyze.classify(measure, measure_fine, np.ones(field.n, dtype=bool))
    print(
        json.dumps(
            _stringify(
                {
                    "kind": verdict.kind,
                    "atoms": [[t, m] for t, m in verdict.atoms],
                    "max_density": verdict.max_density,
                    "stability": verdict.stability,
                    "atom_mass_fraction": verdict.atom_mass_fraction,
                }
            ),
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def _set_by_path(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise SchemaError(f"--param {dotted}: no such field {key!r}")
        node = node[key]
    if not isinstance(node, dict):
        raise SchemaError(f"--param {dotted}: {keys[-2]!r} is not an object")
    node[keys[-1]] = value


def _sweep_worker(payload: str) -> dict:
    doc, out_dir, value = json.loads(payload)
    try:
        report, code = run_problem(doc, out_dir)
        return {
            "value": value,
            "status": report["result"]["status"],
            "objective": report["result"]["objective"],
            "exit_code": code,
        }
    except (SchemaError, InfeasibleError, DomainError, RuntimeError) as exc:
        return {"value": value, "status": f"error: {exc}", "objective": None, "exit_code": 4}


def _cmd_sweep(args) -> int:
    base = _load_doc(args.problem_file)
    payloads = []
    for value in args.values:
        doc = copy.deepcopy(base)
        _set_by_path(doc, args.param, value)
        doc["name"] = f"{base['name']}_{args.param.replace('.', '_')}_{value}"
        for key in doc.get("outputs", {}):
            doc["outputs"][key] = f"{doc['name']}_{Path(doc['outputs'][key]).name}"
        validate_problem(doc)
        sub_dir = str(Path(args.out_dir) / doc["name"])
        payloads.append(json.dumps([doc, sub_dir, value]))
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_worker, payloads))
    else:
        rows = [_sweep_worker(p) for p in payloads]
    print(json.dumps(_stringify(rows), indent=2, sort_keys=True))
    return 0 if all(r["exit_code"] == 0 for r in rows) else 3


def main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    parser = argparse.ArgumentParser(
        prog="artifact",
        description="Shape optimization over convex planar bodies via gauge functions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a problem document end to end")
    p_run.add_argument("problem_file")
    p_run.add_argument("--out-dir", default=".")
    p_run.set_defaults(func=_cmd_run)

    p_preset = sub.add_parser("preset", help="print or run a built-in problem")
    p_preset.add_argument("name", choices=PRESET_NAMES)
    p_preset.add_argument("--emit", metavar="PATH", help="write the document to PATH")
    p_preset.add_argument("--run", action="store_true", help="run the preset immediately")
    p_preset.add_argument("--out-dir", default=".")
    p_preset.set_defaults(func=_cmd_preset)

    p_verify = sub.add_parser("verify", help="derivative checks for a problem document")
    p_verify.add_argument("problem_file")
    p_verify.add_argument("--directions", type=int, default=5)
    p_verify.set_defaults(func=_cmd_verify)

    p_classify = sub.add_parser("classify", help="classify a gauge CSV as smooth/polygonal")
    p_classify.add_argument("gauge_csv")
    p_classify.set_defaults(func=_cmd_classify)

    p_sweep = sub.add_parser("sweep", help="run a problem over a set of parameter values")
    p_sweep.add_argument("problem_file")
    p_sweep.add_argument("--param", required=True, help="dotted path, e.g. constraints.upper")
    p_sweep.add_argument("--values", required=True, nargs="+")
    p_sweep.add_argument("--out-dir", default=".")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.set_defaults(func=_cmd_sweep)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"infeasible problem: {exc}", file=sys.stderr)
        return 4
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
