import copy
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from phaseflow import _accel
from phaseflow import cli

CONFIGS = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.json"))


def _load(name):
    return json.loads((CONFIGS[0].parent / name).read_text())


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_sample_configs_validate(path):
    assert cli.validate(path) == []


def test_zero_epsilon_is_rejected():
    d = _load("gradient_check.json")
    d["numeric"]["epsilon"] = [0.0, 0.1]
    assert any(v.startswith("numeric.epsilon") for v in cli.validate(d))


def test_gradient_check_requires_epsilon():
    d = _load("gradient_check.json")
    del d["numeric"]["epsilon"]
    assert any("epsilon" in v for v in cli.validate(d))


@pytest.mark.parametrize("mutate,prefix", [
    (lambda d: d["symbol"].pop("name"), "symbol.name"),
    (lambda d: d["symbol"].update(name="no_such_symbol"), "symbol.name"),
    (lambda d: d["manifold"].update(R=-1.0), "manifold.R"),
    (lambda d: d.update(bogus=1), "bogus"),
    (lambda d: d.update(experiment="nope"), "experiment"),
], ids=["missing-name", "unknown-name", "negative-R", "unknown-field", "unknown-experiment"])
def test_violation_paths(mutate, prefix):
    d = _load("functional.json")
    mutate(d)
    violations = cli.validate(d)
    assert violations and any(v.startswith(prefix) for v in violations)


def test_config_error_lists_violations():
    d = _load("functional.json")
    d["manifold"]["R"] = 0
    with pytest.raises(cli.ConfigError) as info:
        cli.ExperimentConfig.from_dict(d)
    assert info.value.violations


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_round_trip(path):
    d = json.loads(path.read_text())
    cfg = cli.ExperimentConfig.from_dict(d)
    assert cli.ExperimentConfig.from_dict(copy.deepcopy(cfg.to_dict())) == cfg


def test_run_trivial_functional(tmp_path):
    runner = CliRunner()
    res = runner.invoke(cli.main, ["run", str(CONFIGS[0].parent / "functional_trivial.json"), "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["pass"] and summary["schema"] == cli.SCHEMA
    assert abs(summary["results"]["I"]) < 1e-12
    assert (tmp_path / "results.csv").read_bytes().count(b"\r\n") >= 2


def test_csv_is_deterministic(tmp_path):
    cfg = cli.ExperimentConfig.from_dict(_load("functional_trivial.json"))
    cli.run_config(cfg, tmp_path / "a")
    cli.run_config(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_invalid_config_exit_code(tmp_path):
    d = _load("functional.json")
    d["manifold"]["R"] = -2
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    runner = CliRunner()
    assert runner.invoke(cli.main, ["run", str(path)]).exit_code == 2
    res = runner.invoke(cli.main, ["validate", str(path)])
    assert res.exit_code == 1 and "manifold.R" in res.output


def test_validate_ok():
    res = CliRunner().invoke(cli.main, ["validate", str(CONFIGS[0])])
    assert res.exit_code == 0 and res.output.strip() == "ok"


def test_catalog_lists_symbols_and_experiments():
    res = CliRunner().invoke(cli.main, ["catalog"])
    assert res.exit_code == 0
    for name in ("ring_zero", "shifted_ring", "elliptic_gauss", "torus_codim2"):
        assert name in res.output
    for exp in cli.EXPERIMENTS:
        assert exp in res.output


def test_threads_env_overrides_workers(tmp_path, monkeypatch):
    monkeypatch.setenv("PHASEFLOW_THREADS", "1")
    d = _load("functional_trivial.json")
    d["numeric"] = {"workers": 4}
    summary = cli.run_config(cli.ExperimentConfig.from_dict(d), tmp_path)
    assert summary["workers_requested"] == 1
    assert summary["workers"] == _accel.configure_threads()
