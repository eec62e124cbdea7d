import json

import jsonschema
import numpy as np
import pytest

from weylhom.algebra import LieAlgebra
from weylhom.cli import RunConfig, load_schema, main, run

SCHEMA = load_schema()


def invoke(tmp_path, *argv):
    out = tmp_path / "report.json"
    code = main([*argv, "--out", str(out)])
    report = json.loads(out.read_text())
    jsonschema.validate(report, SCHEMA)
    assert report["exit_code"] == code
    return code, report


def strip_times(obj):
    if isinstance(obj, dict):
        return {k: strip_times(v) for k, v in obj.items() if k != "wall_time_s"}
    if isinstance(obj, list):
        return [strip_times(v) for v in obj]
    return obj


def test_verify_identities(tmp_path):
    code, rep = invoke(tmp_path, "verify-identities", "--algebra", "su3", "g2")
    assert code == 0 and rep["schema_version"] == "1.0"
    assert [r["algebra"] for r in rep["results"]] == ["su3", "g2"]
    assert all(r["passed"] for r in rep["results"])


def test_verify_identities_reports_corruption(capsys, get_algebra):
    c = get_algebra("su3").structure_tensor.copy()
    # totally antisymmetric perturbation: only the Jacobi identity breaks first
    for (i, j, k), sign in [((1, 2, 5), 1), ((2, 5, 1), 1), ((5, 1, 2), 1),
                            ((2, 1, 5), -1), ((1, 5, 2), -1), ((5, 2, 1), -1)]:
        c[i, j, k] += sign * 1e-4
    report, code = run(RunConfig(command="verify-identities"), algebras=[LieAlgebra("su", 3, c)])
    assert code == 1
    assert report["results"][0]["first_failure"] == "jacobi"
    jsonschema.validate(report, SCHEMA)


def test_tolerance_override_changes_verdict(tmp_path):
    code, rep = invoke(tmp_path, "verify-identities", "--algebra", "su3", "--tol", "casimir=1e-30")
    assert code == 1 and rep["results"][0]["first_failure"] == "casimir"


def test_verify_proposition(tmp_path):
    code, rep = invoke(tmp_path, "verify-proposition", "--algebra", "su3", "su2")
    assert code == 0
    su3, su2 = rep["results"]
    assert su3["status"] == "pass" and su3["unrestricted"]["dimension"] == 64
    assert su3["restricted"]["dimension"] == 0
    assert su2["status"] == "outside_hypothesis"


def test_verify_proposition_restricted_only(tmp_path):
    code, rep = invoke(tmp_path, "verify-proposition", "--algebra", "sp2", "--restricted", "--gram")
    assert code == 0
    r = rep["results"][0]
    assert "unrestricted" not in r and r["restricted"]["method"] == "gram"


def test_resource_abort(tmp_path):
    code, rep = invoke(tmp_path, "verify-proposition", "--algebra", "so7", "--gram", "--mem-cap-gb", "0.05")
    assert code == 2 and rep["results"][0]["status"] == "resource_abort"


def test_table1(tmp_path):
    code, rep = invoke(tmp_path, "table1", "--algebra", "su4", "sp3", "g2")
    assert code == 0
    assert [(r["rank"], r["m"]) for r in rep["results"]] == [(3, 6), (3, 6), (2, 6)]
    assert all(r["match"] for r in rep["results"])


def test_geometry_defaults(tmp_path):
    code, rep = invoke(tmp_path, "geometry", "--samples", "8")
    res = rep["results"]
    assert code == 0 and res["weyl_certificate"] <= 1e-6 and res["obstruction_nonzero"]


def test_geometry_product_obstruction_zero(tmp_path):
    code, rep = invoke(tmp_path, "geometry", "--D", "--samples", "4")
    assert code == 0
    assert all(s["lhs"] == pytest.approx(0, abs=1e-7) for s in rep["results"]["obstruction_samples"])


def test_geometry_negative_eps_notes_exclusions(tmp_path):
    code, rep = invoke(tmp_path, "geometry", "--eps", "-1", "--samples", "30", "--seed", "1")
    assert code == 0
    res = rep["results"]
    assert len(res["points"]) == 30 and res["excluded_points"] >= 1


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate"],
        ["table1", "--algebra", "so4"],
        ["table1", "--algebra", "e8"],
        ["table1", "--tol", "nonsense=1"],
        ["table1", "--tol", "casimir"],
        ["geometry", "--eps", "2"],
        ["geometry", "--D", "1,9=1"],
        ["verify-proposition", "--restricted", "--both"],
        ["table1", "--threads", "0"],
    ],
)
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        code = main(argv)
        raise SystemExit(code)
    assert info.value.code == 3


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"algebra": ["su3"], "seed": 5, "tol": {"jacobi": 1e-11}}))
    code, rep = invoke(tmp_path, "verify-identities", "--config", str(cfg), "--seed", "9")
    assert code == 0
    assert rep["config"]["seed"] == 9 and rep["config"]["algebra"] == ["su3"]
    assert rep["results"][0]["checks"][1]["tol"] == 1e-11
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["table1", "--config", str(cfg)]) == 3


def test_seed_determinism_and_threads(tmp_path):
    _, a = invoke(tmp_path, "verify-proposition", "--algebra", "su3", "sp2")
    _, b = invoke(tmp_path, "verify-proposition", "--algebra", "su3", "sp2", "--threads", "2")
    b["config"]["threads"] = 1
    assert strip_times(a) == strip_times(b)
    _, g1 = invoke(tmp_path, "geometry", "--samples", "3", "--seed", "4")
    _, g2 = invoke(tmp_path, "geometry", "--samples", "3", "--seed", "4")
    assert g1 == g2


def test_stdout_output(capsys):
    assert main(["table1", "--algebra", "su3"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["results"][0]["m"] == 4 and np.isfinite(rep["exit_code"])
