"""Spec parsing, validation, and reader checks against golden fixtures."""

import json
import os

import pytest

from driftlab_figures.spec import (FigureSpec, MetricRow, SchemaError,
                                   read_config_hash, read_fit_json,
                                   read_metrics_csv, read_points_csv,
                                   resolve_sidecar)

FIX = os.path.join(os.path.dirname(__file__), "fixtures")
DRIFT_CSV = os.path.join(FIX, "drift", "metrics.csv")
POINTS_CSV = os.path.join(FIX, "cliff", "points.csv")
FIT_JSON = os.path.join(FIX, "cliff", "fit.json")
SIDECAR = os.path.join(FIX, "cliff", "sidecar.json")
BAD_CSV = os.path.join(FIX, "bad", "metrics.csv")
EMPTY_CSV = os.path.join(FIX, "empty", "metrics.csv")


def _spec(**over):
    d = {"kind": "drift", "csv": DRIFT_CSV, "out": "fig.png"}
    d.update(over)
    return FigureSpec.from_dict(d)


def test_from_dict_defaults():
    s = _spec()
    assert s.csv == (DRIFT_CSV,)
    assert s.group_by == ("layer",)
    assert s.plotted_metric() == "zscore_drift"
    assert s.take_absolute() is True


def test_non_drift_defaults_signed():
    s = _spec(kind="gradient_bias")
    assert s.plotted_metric() == "pre_grad_mean"
    assert s.take_absolute() is False


def test_absolute_override():
    assert _spec(absolute=False).take_absolute() is False
    assert _spec(kind="ranges", absolute=True).take_absolute() is True


def test_unknown_field_rejected():
    with pytest.raises(ValueError, match="colour"):
        _spec(colour="red")


def test_missing_required_field():
    with pytest.raises(ValueError, match="'out'"):
        FigureSpec.from_dict({"kind": "drift", "csv": DRIFT_CSV})


def test_unknown_kind():
    with pytest.raises(ValueError, match="scatter3d"):
        _spec(kind="scatter3d")


def test_missing_inputs_are_listed():
    with pytest.raises(FileNotFoundError, match="no/such/run.csv"):
        _spec(csv=[DRIFT_CSV, "no/such/run.csv"])
    with pytest.raises(FileNotFoundError, match="no/such/fit.json"):
        _spec(fit="no/such/fit.json")


def test_out_must_be_png():
    with pytest.raises(ValueError, match="png"):
        _spec(out="fig.svg")


def test_bad_group_by():
    with pytest.raises(ValueError, match="epoch"):
        _spec(group_by=["epoch"])


def test_from_json_bad_json(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text("{not json")
    with pytest.raises(SchemaError, match="not valid JSON"):
        FigureSpec.from_json(str(p))


def test_from_json_non_object(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text("[1, 2]")
    with pytest.raises(SchemaError, match="JSON object"):
        FigureSpec.from_json(str(p))


def test_metrics_rows_typed():
    rows = read_metrics_csv(DRIFT_CSV)
    assert rows and isinstance(rows[0], MetricRow)
    r = rows[0]
    assert (type(r.step), type(r.seed), type(r.layer)) == (int, int, int)
    assert isinstance(r.value, float)
    assert sorted({r.layer for r in rows}) == [1, 2]
    assert sorted({r.seed for r in rows}) == [0, 1]


def test_header_only_csv_reads_empty():
    assert read_metrics_csv(EMPTY_CSV) == []


def test_bad_header_names_missing_column():
    with pytest.raises(SchemaError, match="'layer'"):
        read_metrics_csv(BAD_CSV)


def test_column_order_enforced(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("seed,step,layer,metric,value\n")
    with pytest.raises(SchemaError, match="order"):
        read_metrics_csv(str(p))


def test_points_read():
    pts = read_points_csv(POINTS_CSV)
    assert len(pts) == 20
    assert all(isinstance(s, float) and isinstance(a, float) for s, a in pts)
    assert pts[0][1] == pytest.approx(0.978)


def test_fit_json_missing_keys(tmp_path):
    p = tmp_path / "fit.json"
    p.write_text(json.dumps({"A": 1.0, "B": 0.5}))
    with pytest.raises(SchemaError, match="'N'"):
        read_fit_json(str(p))
    fit = read_fit_json(FIT_JSON)
    assert fit["A"] == pytest.approx(0.978)


def test_sidecar_guessed_next_to_csv():
    s = _spec()
    assert resolve_sidecar(s) == os.path.join(FIX, "drift", "metrics.json")


def test_sidecar_explicit_or_error():
    bare = _spec(kind="sparsity_cliff", csv=POINTS_CSV)
    with pytest.raises(FileNotFoundError, match="sidecar"):
        resolve_sidecar(bare)
    s = _spec(kind="sparsity_cliff", csv=POINTS_CSV, sidecar=SIDECAR)
    assert resolve_sidecar(s) == SIDECAR


def test_config_hash_is_sha256_hex():
    h = read_config_hash(os.path.join(FIX, "drift", "metrics.json"))
    assert len(h) == 64
    int(h, 16)


def test_sidecar_without_hash_rejected(tmp_path):
    p = tmp_path / "metrics.json"
    p.write_text(json.dumps({"schema": "driftlab-run-v1"}))
    with pytest.raises(SchemaError, match="config_hash"):
        read_config_hash(str(p))
