import json
import os

import numpy as np
import pytest

from wfens import cli
from wfens.config import ConfigError, load_config, parse_config
from wfens.errors import IntegrationError


def write(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


JARZ = {"experiment": "jarzynski", "M": 5000, "steps": 512,
        "ensemble": {"kind": "canonical", "beta": 1.0}, "protocol": {"type": "lz_half_sweep"}}


def test_validate_ok(tmp_path, capsys):
    assert cli.main(["validate", "--config", write(tmp_path, "c.json", JARZ)]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_schema_errors_name_the_field(tmp_path, capsys):
    bad = dict(JARZ, ensemble={"kind": "canonical", "beta": -1.0})
    assert cli.main(["validate", "--config", write(tmp_path, "c.json", bad)]) == 2
    assert "ensemble.beta" in capsys.readouterr().err
    extra = dict(JARZ, colour="red")
    assert cli.main(["run", "--config", write(tmp_path, "d.json", extra)]) == 2
    assert "colour" in capsys.readouterr().err


def test_malformed_json_reports_position(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text('{"experiment": "fig1a",\n "M": }')
    assert cli.main(["run", "--config", str(path)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_domain_errors_are_config_errors(tmp_path, capsys):
    cfg = {"experiment": "sample-ensemble", "ensemble": {"kind": "microcanonical", "energy": 5.0, "lam": 0.0}}
    assert cli.main(["validate", "--config", write(tmp_path, "c.json", cfg)]) == 2
    assert "ensemble.energy" in capsys.readouterr().err
    fr = {"experiment": "micro-fr", "energy": 0.0, "w_targets": [2.0], "protocol": {"type": "lz_half_sweep"}}
    assert cli.main(["validate", "--config", write(tmp_path, "f.json", fr)]) == 2
    assert "w_targets.0" in capsys.readouterr().err


def test_missing_required_field(tmp_path):
    with pytest.raises(ConfigError):
        parse_config({"experiment": "micro-fr", "protocol": {"type": "lz_half_sweep"}})


def test_run_writes_only_into_output_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write(tmp_path, "c.json", JARZ)
    before = set(os.listdir(tmp_path))
    assert cli.main(["jarzynski", "--config", cfg, "--out", "res"]) == 0
    assert set(os.listdir(tmp_path)) - before == {"res"}
    assert sorted(os.listdir(tmp_path / "res")) == ["manifest.json", "results.csv"]
    header, row = (tmp_path / "res" / "results.csv").read_text().splitlines()
    assert header.startswith("M,beta,estimate,stderr")
    values = dict(zip(header.split(","), row.split(",")))
    assert float(values["predicted"]) == pytest.approx(0.43046016, abs=1e-8)


def test_seed_precedence(tmp_path, monkeypatch):
    cfg = write(tmp_path, "c.json", dict(JARZ, seed=5))
    monkeypatch.setenv("WFENS_SEED", "7")
    monkeypatch.setenv("WFENS_WORKERS", "2")
    cli.main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert (man["seed"], man["workers"]) == (7, 2)
    cli.main(["run", "--config", cfg, "--seed", "9", "--out", str(tmp_path / "b")])
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 9


def test_manifest_is_a_config(tmp_path):
    cfg = write(tmp_path, "c.json", JARZ)
    cli.main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    again = load_config(tmp_path / "a" / "manifest.json", {"output": str(tmp_path / "b")})
    status, _ = cli.run(again)
    assert status == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_alias_must_match_experiment(tmp_path):
    assert cli.main(["crooks", "--config", write(tmp_path, "c.json", JARZ), "--out", str(tmp_path / "o")]) == 2


def test_inconclusive_exit(tmp_path):
    cfg = {"experiment": "crooks", "M": 200, "steps": 128, "protocol": {"type": "lz_half_sweep"}, "min_count": 100}
    out = tmp_path / "o"
    assert cli.main(["run", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)]) == 4
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_status"] == 4
    assert "overlap" in man["diagnostics"]["inconclusive"]


def test_numerical_failure_exit(tmp_path, monkeypatch):
    def broken(run):
        raise IntegrationError("propagator has non-finite entries")

    monkeypatch.setitem(cli.RUNNERS, "jarzynski", broken)
    out = tmp_path / "o"
    assert cli.main(["run", "--config", write(tmp_path, "c.json", JARZ), "--out", str(out)]) == 3
    assert "IntegrationError" in json.loads((out / "manifest.json").read_text())["diagnostics"]["failure"]


def test_csv_values_round_trip(tmp_path):
    cfg = {"experiment": "sample-ensemble", "M": 50,
           "ensemble": {"kind": "canonical", "beta": 2.0, "lam": 0.3}}
    out = tmp_path / "o"
    assert cli.main(["run", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)]) == 0
    data = np.loadtxt(out / "results.csv", delimiter=",", skiprows=1)
    x, p = data[:, 3:5], data[:, 5:7]
    assert np.allclose((x**2 + p**2).sum(axis=1), 1.0, atol=1e-15)
    h = 0.3 * (x[:, 0] ** 2 + p[:, 0] ** 2 - x[:, 1] ** 2 - p[:, 1] ** 2) + 2 * (x[:, 0] * x[:, 1] + p[:, 0] * p[:, 1])
    assert np.allclose(h, data[:, 2], atol=1e-14)


def test_matrix_model_thermo_scan(tmp_path):
    cfg = {"experiment": "thermo-scan", "M": 20000,
           "model": {"type": "matrices", "h0": {"re": [[-1, 0, 0], [0, 0, 0], [0, 0, 1]]},
                     "terms": [{"re": [[0, 1, 0], [1, 0, 0], [0, 0, 0]]}]},
           "beta_grid": [1.0], "lambda_grid": [0.0, 0.5]}
    out = tmp_path / "o"
    assert cli.main(["run", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)]) == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == "beta,lambda,E,F,S,lnZ"
    assert len(lines) == 3
