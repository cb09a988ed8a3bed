import json

import numpy as np
import pytest

from lensforge.cli import main, run
from lensforge.config import ExperimentConfig, config_hash, load_config
from lensforge.exceptions import ConfigError, ProvenanceError
from lensforge.report import emit_report, load_reports

FAST = {
    "schema_version": 1,
    "inject": {"samples": 20, "invariance_starts": 20, "invariance_iterates": 50},
    "diagnostics": {"samples": 20, "iterates": 200, "transient": 10},
    "realize": {"map": {"type": "identity", "params": {"m": 1}}, "grid": [4, 4, 2], "tol": 1e-8},
    "scan": {"amplitude": [0.045], "N": [8], "samples": 10, "iterates": 50, "transient": 5},
    "family": {"samples": 2},
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _run(capsys, *argv):
    code = main(list(argv))
    return code, json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_config_round_trip_and_hash():
    cfg = ExperimentConfig.from_dict(FAST)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and config_hash(again) == config_hash(cfg)
    assert config_hash(cfg.with_seed(3)) != config_hash(cfg)


@pytest.mark.parametrize("bad", [
    {},
    {"schema_version": 99},
    {"schema_version": 1, "extra": 1},
    {"schema_version": 1, "numerics": {"dt": -1.0}},
    {"schema_version": 1, "injection": {"N": 1}},
    {"schema_version": 1, "injection": {"bogus": 1}},
    {"schema_version": 1, "system": [[1.0, [2, 0]]]},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_exit_code_two_with_json_body(tmp_path, capsys):
    code, body = _run(capsys, "inject", "--config", str(tmp_path / "none.json"))
    assert code == 2 and body["error"]["type"] == "ConfigError"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, body = _run(capsys, "inject", "--config", str(bad))
    assert code == 2


def test_inject_without_perturbation(tmp_path, capsys):
    path = _write(tmp_path, {"schema_version": 1, "injection": {"N": 0, "amplitude": 0.0}})
    code, body = _run(capsys, "inject", "--config", path, "--out", str(tmp_path / "o"))
    assert code == 0
    summary = json.loads(open(body["json"]).read())["summary"]
    assert summary["max_difference_from_unperturbed"] == 0.0


def test_realize_identity_and_failure_exit(tmp_path, capsys):
    path = _write(tmp_path, FAST)
    code, body = _run(capsys, "realize", "--config", path, "--out", str(tmp_path / "o"))
    assert code == 0
    assert json.loads(open(body["json"]).read())["summary"]["max_defect"] <= 1e-8
    cfg = json.loads(json.dumps(FAST))
    cfg["scan"]["N"] = [8, 1]
    code, body = _run(capsys, "scan", "--config", _write(tmp_path, cfg, "s.json"), "--out", str(tmp_path / "s"))
    assert code == 1 and body["failed_checks"] == ["a=0.045,N=1,h=0"]


def test_lyapunov_report_and_determinism(tmp_path, capsys):
    path = _write(tmp_path, FAST)
    outs = []
    for d in ("a", "b"):
        code, body = _run(capsys, "lyapunov", "--config", path, "--out", str(tmp_path / d), "--seed", "5")
        assert code in (0, 1)
        outs.append(body)
    assert open(outs[0]["csv"], "rb").read() == open(outs[1]["csv"], "rb").read()
    rows = load_reports([outs[0]["csv"]])[0]
    assert len(rows) == FAST["diagnostics"]["samples"]
    js = json.loads(open(outs[0]["json"]).read())
    assert js["schema_version"] == 1 and js["seed"] == 5
    assert "heuristic" in js["summary"]["entropy_indicator_note"]


def test_cat_map_calibration_row_count(tmp_path, capsys):
    cfg = json.loads(json.dumps(FAST))
    cfg["diagnostics"] |= {"system": "cat", "iterates": 2000, "samples": 7}
    code, body = _run(capsys, "lyapunov", "--config", _write(tmp_path, cfg), "--out", str(tmp_path))
    assert code == 0
    assert len(load_reports([body["csv"]])[0]) == 7


def test_family_subcommand(tmp_path, capsys):
    code, body = _run(capsys, "family", "--config", _write(tmp_path, FAST), "--out", str(tmp_path))
    assert code == 0


def test_empty_report_and_provenance(tmp_path):
    a = ExperimentConfig.from_dict(FAST)
    b = a.with_seed(1)
    ja, ca = emit_report("x", {}, a, tmp_path / "a")
    jb, cb = emit_report("x", {}, b, tmp_path / "b")
    assert json.loads(ja.read_text())["summary"] == {}
    assert load_reports([ca])[0] == []
    load_reports([ja, ca])
    with pytest.raises(ProvenanceError):
        load_reports([ja, jb])


def test_load_config_file(tmp_path):
    cfg = load_config(_write(tmp_path, FAST))
    assert cfg.realize["grid"] == [4, 4, 2]
    assert np.isclose(cfg.params().epsilon, np.pi**2 / 64)
