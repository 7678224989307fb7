import csv
import io
import json

import pytest

from epibif import recipes
from epibif.cli import main, read_config, run_captured, UsageError
from epibif.models import get_model


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


SIS = {
    "id": "sis",
    "states": ["S", "I"],
    "params": ["beta", "gamma", "N"],
    "infected": ["I"],
    "rhs": {"S": "-beta*S*I/N + gamma*I", "I": "beta*S*I/N - gamma*I"},
    "dfe": {"S": "N", "I": "0"},
    "new_infections": {"I": "beta*S*I/N"},
    "transitions": {"I": "gamma*I"},
}


def test_r0_json():
    code, out, _ = _run(["r0", "--model", "brauer3d", "--param", "sigma=1"])
    assert code == 0
    d = json.loads(out)
    p = d["params"]
    assert d["schema_version"] == 1
    assert d["r0"] == pytest.approx(p["beta"] * p["Lambda"] / p["mu"] / (p["mu"] + p["gamma"]), rel=1e-12)


def test_coeffs_at_threshold_backward():
    code, out, _ = _run(["coeffs", "--model", "brauer3d", "--alpha1", "beta", "--at-threshold"])
    assert code == 0
    d = json.loads(out)
    assert d["r0"] == pytest.approx(1.0, abs=1e-10)
    assert d["classification"]["label"] == "backward"
    assert d["coefficients"]["a"] > 0


def test_coeffs_away_from_threshold_fails():
    code, _, err = _run(["coeffs", "--model", "hepc3d", "--alpha1", "rho"])
    assert code == 1
    assert "zero eigenvalue absent" in err


def test_coeffs_a_zero_point_reports_e(tmp_path):
    q = recipes.theorem4_base()
    args = ["coeffs", "--model", "hepc3d", "--alpha1", "rho", "--alpha2", "r_I"]
    for k, v in q.items():
        args += ["--param", f"{k}={v!r}"]
    code, out, _ = _run(args)
    assert code == 0
    d = json.loads(out)
    assert d["classification"]["label"] == "unfolded-backward"
    assert d["coefficients"]["e"] > 0 and d["coefficients"]["c"] < 0


def test_states_csv():
    code, out, _ = _run(["states", "--model", "brauer2d", "--format", "csv", "--param", "beta=60"])
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# epibif states csv v1")
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    assert sum(r["positivity"] == "positive" for r in rows) == 2


def test_states_json_has_parity():
    code, out, _ = _run(["states", "--model", "brauer2d", "--param", "beta=60"])
    d = json.loads(out)
    assert code == 0
    assert d["parity"]["count"] == 2 and d["parity"]["parity_ok"]


def test_branch_csv_and_json():
    code, out, _ = _run(["branch", "--model", "brauer2d", "--alpha1", "beta", "--param", "beta=90"])
    assert code == 0
    assert out.startswith("# epibif branch csv v1")
    code, out, _ = _run(["branch", "--model", "brauer2d", "--alpha1", "beta", "--param", "beta=90",
                         "--format", "json"])
    d = json.loads(out)
    assert code == 0
    assert len(d["folds"]) == 1


def test_branch_from_dfe_uses_branch_switching():
    code, out, _ = _run(["branch", "--model", "hepc3d", "--alpha1", "rho", "--range", "0.5:20"])
    assert code == 0
    assert len(out.splitlines()) > 10


def test_output_file(tmp_path):
    path = tmp_path / "r0.json"
    code, out, _ = _run(["r0", "--model", "hepc3d", "--out", str(path)])
    assert code == 0 and out == ""
    assert json.loads(path.read_text())["model"] == "hepc3d"


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# brauer run\nmodel = brauer2d\nalpha1 = beta\nbeta = 60  # below threshold\nformat = json\n")
    code, out, _ = _run(["states", "--config", str(cfg)])
    assert code == 0
    assert json.loads(out)["params"]["beta"] == 60.0
    # flags override the file
    code, out, _ = _run(["states", "--config", str(cfg), "--param", "beta=50"])
    assert json.loads(out)["params"]["beta"] == 50.0


def test_read_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("model brauer2d\n")
    with pytest.raises(UsageError, match="expected key = value"):
        read_config(bad)
    with pytest.raises(UsageError, match="cannot read config"):
        read_config(tmp_path / "missing.cfg")


def test_model_file_missing_parameter(tmp_path):
    path = tmp_path / "sis.json"
    path.write_text(json.dumps(SIS))
    code, _, err = _run(["r0", "--model", str(path), "--param", "beta=0.3", "--param", "gamma=0.1"])
    assert code == 2
    assert "N" in err


def test_model_file_r0(tmp_path):
    path = tmp_path / "sis.json"
    path.write_text(json.dumps(SIS))
    code, out, _ = _run(["r0", "--model", str(path), "--param", "beta=0.3", "--param", "gamma=0.1",
                         "--param", "N=1"])
    assert code == 0
    assert json.loads(out)["r0"] == pytest.approx(3.0, rel=1e-12)


@pytest.mark.parametrize("argv", [
    ["r0"],
    ["r0", "--model", "nope"],
    ["r0", "--model", "brauer2d", "--param", "zeta=1"],
    ["r0", "--model", "brauer2d", "--param", "beta=abc"],
    ["r0", "--model", "brauer2d", "--param", "sigma=2"],
    ["r0", "--model", "brauer2d", "--format", "csv"],
    ["coeffs", "--model", "brauer2d"],
    ["branch", "--model", "brauer2d", "--alpha1", "beta", "--range", "5:1"],
    ["verify", "nope"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv):
    code, _, _ = _run(argv)
    assert code == 2


def test_models_lists_catalog():
    code, out, _ = _run(["models"])
    assert code == 0
    for mid in ("brauer2d", "brauer3d", "martcheva5d", "hepc3d", "hepc3d-truncated"):
        assert mid + ":" in out


def test_verify_suite_pass_and_fail():
    code, out, _ = _run(["verify", "r0"])
    assert code == 0 and "r0: PASS" in out
    code, out, _ = _run(["verify", "continuum", "--format", "json"])
    assert code == 1
    assert json.loads(out)["passed"] is False


@pytest.mark.parametrize("argv", [
    ["coeffs", "--model", "brauer3d", "--alpha1", "beta", "--at-threshold"],
    ["states", "--model", "martcheva5d", "--format", "csv"],
    ["sweep", "--n", "4", "--seed", "3"],
])
def test_reruns_are_byte_identical(argv):
    first = run_captured(argv)
    second = run_captured(argv)
    assert first == second
    assert first[0] == 0


def test_sweep_csv_header():
    code, out, _ = _run(["sweep", "--n", "3", "--seed", "2"])
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# epibif sweep csv v1")
    assert lines[1].split(",")[-3:] == ["c", "e", "class"]
    assert list(get_model("hepc3d").param_names) == lines[1].split(",")[:-3]
