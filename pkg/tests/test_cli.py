"""Command line front end, exercised through main(argv)."""

import json

import numpy as np
import pytest

from driftlab import cli, theory
from driftlab.errors import FormatError

TINY_TOML = """\
experiment = "random_mse"
steps = 3
seeds = [0, 1]

[network]
input_dim = 8
hidden_dim = 8
output_dim = 8
depth = 2

[dataset]
kind = "random"
batch = 4

[metrics]
dense_until = 1
every = 2
"""


def test_load_config_by_extension(tmp_path):
    t = tmp_path / "c.toml"
    t.write_text("steps = 3\n")
    assert cli.load_config(str(t)) == {"steps": 3}
    j = tmp_path / "c.json"
    j.write_text('{"steps": 4}')
    assert cli.load_config(str(j)) == {"steps": 4}


def test_load_config_sniffs_unknown_extension(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text('{"steps": 5}')
    assert cli.load_config(str(p)) == {"steps": 5}
    p.write_text("steps = 6\n")
    assert cli.load_config(str(p)) == {"steps": 6}
    p.write_text("{steps: nope")
    with pytest.raises(FormatError):
        cli.load_config(str(p))


def test_parse_override_types():
    assert cli.parse_override("steps=5") == ("steps", 5)
    assert cli.parse_override("optimizer.lr=0.01") == ("optimizer.lr", 0.01)
    assert cli.parse_override("network.norm=rms") == ("network.norm", "rms")
    assert cli.parse_override('seeds=[1,2]') == ("seeds", [1, 2])
    assert cli.parse_override("flag=true") == ("flag", True)
    with pytest.raises(ValueError):
        cli.parse_override("no-equals-sign")


def test_apply_overrides_builds_nested_tables():
    cfg = {"steps": 5}
    cli.apply_overrides(cfg, ["network.depth=3", "steps=9"])
    assert cfg == {"steps": 9, "network": {"depth": 3}}
    with pytest.raises(ValueError):
        cli.apply_overrides({"steps": 5}, ["steps.inner=1"])


def test_run_writes_metrics_and_sidecar(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(TINY_TOML)
    out = tmp_path / "out"
    rc = cli.main(["run", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    assert (out / "metrics.csv").exists()
    meta = json.loads((out / "metrics.json").read_text())
    assert meta["schema"] == "driftlab-run-v1"
    assert meta["config"]["steps"] == 3
    assert "wrote" in capsys.readouterr().out


def test_run_flag_overrides_beat_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(TINY_TOML)
    out = tmp_path / "out"
    rc = cli.main(["run", "--config", str(cfg), "--out", str(out),
                   "--override", "steps=1", "--seeds", "3"])
    assert rc == 0
    meta = json.loads((out / "metrics.json").read_text())
    assert meta["config"]["steps"] == 1
    assert meta["config"]["seeds"] == [3]
    assert set(meta["final"]) == {"3"}


def test_run_from_named_experiment(tmp_path):
    out = tmp_path / "out"
    rc = cli.main(["run", "--experiment", "random_mse", "--out", str(out),
                   "--seeds", "0",
                   "--override", "steps=2",
                   "--override", "network.input_dim=8",
                   "--override", "network.hidden_dim=8",
                   "--override", "network.output_dim=8",
                   "--override", "network.depth=2",
                   "--override", "dataset.batch=4"])
    assert rc == 0
    assert (out / "metrics.csv").exists()


def test_verify_theorems_prints_one_line_per_check(tmp_path, capsys, monkeypatch):
    def fake_report(seed, n):
        return {"seed": seed, "n": n, "all_pass": False, "checks": [
            {"name": "alpha", "pass": True},
            {"name": "beta", "pass": False},
        ]}

    monkeypatch.setattr(theory, "verification_report", fake_report)
    rc = cli.main(["verify-theorems", "--out", str(tmp_path / "t"),
                   "--seed", "3", "--n", "50"])
    assert rc == 1
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "pass  alpha"
    assert lines[1] == "FAIL  beta"
    report = json.loads((tmp_path / "t" / "report.json").read_text())
    assert report["seed"] == 3 and report["n"] == 50


def test_fit_recovers_curve_from_points(tmp_path, capsys):
    s = np.linspace(0.0, 1.0, 25)
    a = 0.978 - 0.635 * np.power(s, 16.72)
    pts = tmp_path / "points.csv"
    with open(pts, "w") as fh:
        fh.write("s,a\n")
        for si, ai in zip(s, a):
            fh.write(f"{float(si)!r},{float(ai)!r}\n")
    rc = cli.main(["fit", "--points", str(pts), "--out", str(tmp_path / "f")])
    assert rc == 0
    fit = json.loads((tmp_path / "f" / "fit.json").read_text())
    assert fit["A"] == pytest.approx(0.978, abs=1e-4)
    assert fit["B"] == pytest.approx(0.635, abs=1e-4)
    assert fit["N"] == pytest.approx(16.72, abs=1e-3)
    assert fit["r2"] > 0.999


def test_fit_rejects_malformed_points(tmp_path):
    pts = tmp_path / "points.csv"
    pts.write_text("x,y\n0.1,0.9\n")
    with pytest.raises(FormatError):
        cli.main(["fit", "--points", str(pts), "--out", str(tmp_path / "f")])


def test_plot_data_aggregates_metrics(tmp_path):
    m = tmp_path / "metrics.csv"
    m.write_text("step,seed,layer,metric,value\n"
                 "0,0,1,loss,1.0\n0,1,1,loss,3.0\n")
    rc = cli.main(["plot-data", "--metrics", str(m), "--out", str(tmp_path / "p")])
    assert rc == 0
    lines = (tmp_path / "p" / "aggregate.csv").read_text().splitlines()
    assert lines[0] == "step,layer,metric,mean,std,n"
    assert lines[1] == "0,1,loss,2.0,1.0,2"


def test_relufy_prints_accuracy_progression(tmp_path, capsys):
    cfg = tmp_path / "r.json"
    cfg.write_text(json.dumps({
        "experiment": "relufication", "steps": 3, "seeds": [0],
        "network": {"input_dim": 8, "hidden_dim": 8, "output_dim": 4,
                    "depth": 2, "activation": "gelu"},
        "dataset": {"kind": "synthetic_classes", "batch": 8, "n": 64,
                    "classes": 4, "margin": 3.0},
        "metrics": {"dense_until": 0, "every": 100},
        "ft_steps": 2,
    }))
    rc = cli.main(["relufy", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "seed 0: accuracy" in out
    meta = json.loads((tmp_path / "o" / "metrics.json").read_text())
    assert meta["config"]["relufy_to"] == "relu"


def test_relufy_refuses_other_experiments(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(TINY_TOML)
    with pytest.raises(SystemExit):
        cli.main(["relufy", "--config", str(cfg), "--out", str(tmp_path / "o")])


def test_run_needs_config_or_experiment(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["run", "--out", str(tmp_path / "o")])
