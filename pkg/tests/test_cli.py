import json

import pytest

import main

SAMPLES = ("make_slice", "family", "holonomy", "wkb_sweep", "secondary", "contradiction")


def sample(project_root, name):
    return str(project_root / "configs" / "samples" / f"{name}.jsonc")


def write_config(tmp_path, data):
    path = tmp_path / "run.jsonc"
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def read_manifest(root):
    return json.loads((root / "manifest.json").read_text(encoding="utf-8"))


def test_solve_hitchin_sample(tmp_path, project_root):
    code = main.main(["solve-hitchin", "--config", sample(project_root, "solve_hitchin"), "--out", str(tmp_path)])
    assert code == 0
    root = tmp_path / "solve-hitchin"
    assert (root / "hitchin_history.csv").is_file()
    assert (root / "fields" / "u.csv").is_file()
    manifest = read_manifest(root)
    assert manifest["status"] == "ok"
    assert manifest["summary"]["sup_error_over_h2"] <= 5.0
    assert manifest["sign_conventions"]["holonomy"].startswith("Y'(t) = C(t) Y(t)")


@pytest.mark.parametrize("name", SAMPLES)
def test_sample_configs_run(tmp_path, project_root, name):
    assert main.main(["--config", sample(project_root, name), "--out", str(tmp_path)]) == 0
    manifests = list(tmp_path.glob("*/manifest.json"))
    assert len(manifests) == 1
    assert json.loads(manifests[0].read_text(encoding="utf-8"))["tables"]


def test_missing_field_file_exits_with_config_code(tmp_path):
    config = write_config(tmp_path, {
        "domain": {"nx": 16, "ny": 16, "x_period": 1.0, "y_min": 0.5, "y_max": 1.5},
        "fields": {"phi1": "1", "u": {"file": "absent.csv"}},
    })
    code = main.main(["make-slice", "--config", config, "--out", str(tmp_path / "out")])
    assert code == 2
    diagnostic = json.loads((tmp_path / "out" / "make-slice" / "diagnostic.json").read_text(encoding="utf-8"))
    assert diagnostic["kind"] == "missing_file"
    assert diagnostic["exit_code"] == 2


def test_missing_config_file(tmp_path):
    assert main.main(["solve-hitchin", "--config", str(tmp_path / "none.jsonc"), "--out", str(tmp_path)]) == 2


def test_gate_failure_exits_with_gate_code(tmp_path):
    # 固定点の Higgs 場は冪零なので WKB 曲線が存在しない
    config = write_config(tmp_path, {
        "domain": {"nx": 16, "ny": 16, "x_period": 1.0, "y_min": 0.5, "y_max": 1.5},
        "fields": {"phi1": "1", "boundary_u": "log(2*y)"},
        "wkb": {"source": "slice"},
    })
    assert main.main(["holonomy", "--config", config, "--out", str(tmp_path / "out")]) == 3
    diagnostic = json.loads((tmp_path / "out" / "holonomy" / "diagnostic.json").read_text(encoding="utf-8"))
    assert diagnostic["error"] == "DegeneracyError"


def test_divergence_exits_with_divergence_code(tmp_path):
    config = write_config(tmp_path, {
        "domain": {"nx": 16, "ny": 16, "x_period": 1.0, "y_min": 0.5, "y_max": 1.5},
        "fields": {"phi1": "1", "boundary_u": "log(2*y)"},
        "solver": {"tol": 1e-30, "max_iter": 2},
    })
    assert main.main(["solve-hitchin", "--config", config, "--out", str(tmp_path / "out")]) == 4


def test_closedness_is_reproducible(tmp_path, project_root):
    config = sample(project_root, "closedness")
    for name in ("a", "b"):
        assert main.main(["closedness", "--config", config, "--out", str(tmp_path / name), "--threads", "2"]) == 0
    first, second = tmp_path / "a" / "closedness", tmp_path / "b" / "closedness"
    for table in ("wkb_sweep.csv", "secondary_sweep.csv", "loop.csv"):
        assert (first / table).read_bytes() == (second / table).read_bytes()
    summary = read_manifest(first)["summary"]
    assert summary["growth_relative_error"] <= 0.05
    assert summary["kernel_min"] > 0.0
    assert summary["det_min"] > 0.0
    assert read_manifest(first)["seed"] == 7
