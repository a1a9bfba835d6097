"""CLI pipeline: schema gate, presets, gauge CSV, reports, exit codes."""

import copy
import json
import subprocess

import numpy as np
import pytest

from artifact.cli import (
    PRESET_NAMES,
    SchemaError,
    _build_config,
    _build_constraints,
    _build_initial,
    _build_spec,
    load_gauge_csv,
    main,
    preset,
    run_problem,
    save_gauge_csv,
    validate_problem,
)
from artifact.periodic import PeriodicField

from conftest import grid, square_gauge


def geometric_doc(name="geo", n=48):
    """Small perimeter-at-fixed-area problem; no PDE terms, runs in well under a second."""
    return {
        "name": name,
        "objective": {"terms": [{"kind": "Perimeter", "coefficient": "1.0"}]},
        "constraints": {
            "lower": "0.2",
            "upper": "5.0",
            "equality": {"kind": "Area", "target": repr(float(np.pi))},
        },
        "discretization": {"n": n},
        "initial": {"kind": "cosine", "base": "1.0", "amplitude": "0.15", "mode": 3},
        "seed": 7,
        "outputs": {
            "report": "report.json",
            "history": "history.csv",
            "plot": "shape.svg",
            "gauge": "gauge.csv",
        },
    }


# -- schema gate ----------------------------------------------------------------


def test_valid_document_passes():
    validate_problem(geometric_doc())


def test_missing_required_field():
    doc = geometric_doc()
    del doc["objective"]
    with pytest.raises(SchemaError, match="objective"):
        validate_problem(doc)


def test_unknown_term_kind():
    doc = geometric_doc()
    doc["objective"]["terms"][0]["kind"] = "Torsion"
    with pytest.raises(SchemaError):
        validate_problem(doc)


def test_unexpected_field_rejected():
    doc = geometric_doc()
    doc["mesh"] = 0.1
    with pytest.raises(SchemaError):
        validate_problem(doc)


def test_schema_error_names_the_field():
    doc = geometric_doc()
    doc["discretization"]["n"] = 5
    with pytest.raises(SchemaError, match="discretization/n"):
        validate_problem(doc)


def test_bad_number_string_rejected(tmp_path):
    doc = geometric_doc()
    doc["constraints"]["lower"] = "1.2.3"  # passes the schema, fails parsing
    with pytest.raises(SchemaError, match="constraints/lower"):
        run_problem(doc, tmp_path)


def test_unknown_preset():
    with pytest.raises(SchemaError, match="unknown preset"):
        preset("nope")


def test_all_presets_build(tmp_path):
    for name in PRESET_NAMES:
        doc = preset(name)
        validate_problem(doc)
        spec = _build_spec(doc)
        cons = _build_constraints(doc)
        _build_config(doc)
        field = _build_initial(doc, tmp_path)
        assert field.n == doc["discretization"]["n"]
        assert spec.terms
        lo, hi = cons.bounds(field.n)
        assert np.all(lo <= hi)


# -- gauge CSV ------------------------------------------------------------------


def test_gauge_csv_roundtrip(tmp_path):
    field = PeriodicField(1.0 + 0.23 * np.cos(3.0 * grid(96)) + 0.01 * np.sin(grid(96)))
    path = tmp_path / "g.csv"
    save_gauge_csv(field, path)
    back = load_gauge_csv(path)
    np.testing.assert_array_equal(back.samples, field.samples)


def test_gauge_csv_rejects_nonuniform_grid(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("theta,u\n0.0,1.0\n0.5,1.0\n1.0,1.0\n2.0,1.0\n", encoding="ascii")
    with pytest.raises(SchemaError, match="uniform grid"):
        load_gauge_csv(path)


def test_gauge_csv_rejects_wrong_shape(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("u\n1.0\n1.0\n", encoding="ascii")
    with pytest.raises(SchemaError):
        load_gauge_csv(path)


# -- exit codes -----------------------------------------------------------------


def test_malformed_json_exits_2_without_outputs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="ascii")
    out_dir = tmp_path / "out"
    code = main(["run", str(bad), "--out-dir", str(out_dir)])
    assert code == 2
    assert "schema error" in capsys.readouterr().err
    assert not out_dir.exists()


def test_schema_violation_exits_2(tmp_path, capsys):
    doc = geometric_doc()
    del doc["seed"]
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc), encoding="ascii")
    assert main(["run", str(path), "--out-dir", str(tmp_path / "out")]) == 2
    assert "schema error" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_empty_box_exits_4(tmp_path, capsys):
    doc = geometric_doc()
    doc["constraints"]["lower"] = "2.0"
    doc["constraints"]["upper"] = "1.0"
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc), encoding="ascii")
    out_dir = tmp_path / "out"
    assert main(["run", str(path), "--out-dir", str(out_dir)]) == 4
    assert "infeasible" in capsys.readouterr().err
    assert not out_dir.exists()


def test_budget_starved_run_exits_3_with_report(tmp_path, capsys):
    doc = geometric_doc()
    doc["optimizer"] = {"max_outer": 1, "max_inner": 1}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc), encoding="ascii")
    out_dir = tmp_path / "out"
    assert main(["run", str(path), "--out-dir", str(out_dir)]) == 3
    report = json.loads((out_dir / "report.json").read_text())
    assert report["result"]["status"] in ("max_iter", "line_search_failure")
    assert report["result"]["message"]


def test_sweep_bad_param_path_exits_2(tmp_path, capsys):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(geometric_doc()), encoding="ascii")
    code = main(
        ["sweep", str(path), "--param", "no.such.path", "--values", "1", "--out-dir", str(tmp_path)]
    )
    assert code == 2


# -- full pipeline --------------------------------------------------------------


@pytest.fixture(scope="module")
def geo_run(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("geo_run")
    report, code = run_problem(geometric_doc(), out_dir)
    return report, code, out_dir


def test_run_converges_to_disk(geo_run):
    report, code, _ = geo_run
    assert code == 0
    assert report["result"]["status"] == "converged"
    assert report["verdict"]["kind"] == "Smooth"
    # Perimeter at area pi is minimized by the unit disk.
    assert float(report["result"]["objective"]) == pytest.approx(2.0 * np.pi, rel=1e-4)
    assert abs(float(report["result"]["eq_residual"])) < 1e-6


def test_run_report_sections(geo_run):
    report, _, _ = geo_run
    for key in ("name", "config", "result", "kkt", "verdict", "derivative_check", "outputs", "timing"):
        assert key in report
    # Resolved configuration is materialized, not left at document defaults.
    assert report["config"]["optimizer"]["max_inner"] == 80
    assert float(report["kkt"]["stationarity_residual"]) <= 1e-4


def test_run_writes_all_outputs(geo_run):
    report, _, out_dir = geo_run
    history = np.genfromtxt(out_dir / "history.csv", delimiter=",", skip_header=1)
    assert history.ndim == 2 and history.shape[1] == 7
    gauge = load_gauge_csv(out_dir / "gauge.csv")
    assert gauge.n == 48
    svg = (out_dir / "shape.svg").read_text()
    assert svg.startswith("<svg") and "</svg>" in svg
    assert json.loads((out_dir / "report.json").read_text()) == report


def test_run_derivative_digest(geo_run):
    report, _, _ = geo_run
    digest = report["derivative_check"]
    assert digest["direction_count"] == 3
    assert float(digest["max_rel_error_grad"]) < 1e-5


def test_reports_are_deterministic(tmp_path):
    out_dir = tmp_path / "rep"
    first, _ = run_problem(geometric_doc(), out_dir)
    second, _ = run_problem(geometric_doc(), out_dir)
    first.pop("timing")
    second.pop("timing")
    assert first == second


def test_classify_subcommand(tmp_path, capsys):
    path = tmp_path / "square.csv"
    save_gauge_csv(square_gauge(128), path)
    assert main(["classify", str(path)]) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["kind"] == "Polygonal"
    assert len(verdict["atoms"]) == 4


def test_preset_subcommand_prints_document(capsys):
    assert main(["preset", "ex2"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["name"] == "ex2"
    validate_problem(doc)


def test_preset_emit_writes_file(tmp_path, capsys):
    target = tmp_path / "doc.json"
    assert main(["preset", "isoperimetric", "--emit", str(target)]) == 0
    validate_problem(json.loads(target.read_text()))


def test_verify_subcommand(tmp_path, capsys):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(geometric_doc()), encoding="ascii")
    assert main(["verify", str(path), "--directions", "2"]) == 0
    digest = json.loads(capsys.readouterr().out)
    assert digest["direction_count"] == 2
    assert float(digest["max_rel_error_grad"]) < 1e-5


def test_sweep_over_area_targets(tmp_path, capsys):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(geometric_doc()), encoding="ascii")
    out_dir = tmp_path / "sweep"
    code = main(
        [
            "sweep",
            str(path),
            "--param",
            "constraints.equality.target",
            "--values",
            "3.0",
            "4.0",
            "--out-dir",
            str(out_dir),
        ]
    )
    assert code == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["value"] for r in rows] == ["3.0", "4.0"]
    objectives = [float(r["objective"]) for r in rows]
    # Minimal perimeter grows with the area target: 2 sqrt(pi A).
    assert objectives[0] == pytest.approx(2.0 * np.sqrt(np.pi * 3.0), rel=1e-3)
    assert objectives[1] == pytest.approx(2.0 * np.sqrt(np.pi * 4.0), rel=1e-3)
    for row in rows:
        sub = out_dir / f"geo_constraints_equality_target_{row['value']}"
        assert any(sub.glob("*report.json"))


def test_console_script_installed():
    proc = subprocess.run(
        ["artifact", "preset", "isoperimetric"], capture_output=True, text=True, timeout=120
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["name"] == "isoperimetric"
