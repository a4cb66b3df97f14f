"""Figure specs and readers for the emitted CSV/JSON formats."""

import csv
import json
import os
from dataclasses import dataclass

KINDS = ("drift", "sparsity_cliff", "ranges", "gradient_bias")

METRICS_COLUMNS = ("step", "seed", "layer", "metric", "value")
POINTS_COLUMNS = ("s", "a")
FIT_KEYS = ("A", "B", "N")

# kind -> metric plotted by default; ranges draws its fixed metric pair
DEFAULT_METRIC = {"drift": "zscore_drift", "gradient_bias": "pre_grad_mean"}


class SchemaError(ValueError):
    """Input file does not match the expected emitted format."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    csv: tuple
    out: str
    fit: str | None = None
    sidecar: str | None = None
    group_by: tuple = ("layer",)
    metric: str | None = None
    absolute: bool | None = None  # drift defaults to |value|, others signed

    @classmethod
    def from_dict(cls, d: dict) -> "FigureSpec":
        d = dict(d)
        unknown = set(d) - {"kind", "csv", "out", "fit", "sidecar",
                            "group_by", "metric", "absolute"}
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        for key in ("kind", "csv", "out"):
            if key not in d:
                raise ValueError(f"spec is missing required field {key!r}")
        paths = d["csv"]
        if isinstance(paths, str):
            paths = (paths,)
        d["csv"] = tuple(paths)
        if "group_by" in d:
            d["group_by"] = tuple(d["group_by"])
        return cls(**d).validated()

    @classmethod
    def from_json(cls, path: str) -> "FigureSpec":
        with open(path) as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as e:
                raise SchemaError(f"spec file {path} is not valid JSON: {e}") from e
        if not isinstance(payload, dict):
            raise SchemaError(f"spec file {path} must hold a JSON object")
        return cls.from_dict(payload)

    def validated(self) -> "FigureSpec":
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; one of {KINDS}")
        if not self.csv:
            raise ValueError("spec needs at least one input CSV")
        missing = [p for p in self.csv if not os.path.isfile(p)]
        if self.fit is not None and not os.path.isfile(self.fit):
            missing.append(self.fit)
        if self.sidecar is not None and not os.path.isfile(self.sidecar):
            missing.append(self.sidecar)
        if missing:
            raise FileNotFoundError(f"referenced inputs missing: {missing}")
        if not self.out.endswith(".png"):
            raise ValueError(f"output must be a .png raster path, got {self.out!r}")
        bad = [g for g in self.group_by if g not in ("layer", "seed")]
        if bad:
            raise ValueError(f"group_by supports layer/seed, got {bad}")
        return self

    def plotted_metric(self) -> str | None:
        if self.metric is not None:
            return self.metric
        return DEFAULT_METRIC.get(self.kind)

    def take_absolute(self) -> bool:
        if self.absolute is not None:
            return self.absolute
        return self.kind == "drift"


@dataclass
class MetricRow:
    step: int
    seed: int
    layer: int
    metric: str
    value: float


def _check_header(found, required, path):
    missing = [c for c in required if c not in found]
    if missing:
        raise SchemaError(
            f"{path}: missing required columns {missing} (found {list(found)})")
    if list(found) != list(required):
        raise SchemaError(
            f"{path}: column order must be {list(required)}, found {list(found)}")


def read_metrics_csv(path: str) -> list:
    """Rows of the harness metrics format, typed."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row")
        _check_header(header, METRICS_COLUMNS, path)
        out = []
        for row in reader:
            if len(row) != 5:
                raise SchemaError(f"{path}: malformed row {row!r}")
            out.append(MetricRow(int(row[0]), int(row[1]), int(row[2]),
                                 row[3], float(row[4])))
    return out


def read_points_csv(path: str) -> list:
    """(s, a) float pairs from a sweep points file."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row")
        _check_header(header, POINTS_COLUMNS, path)
        return [(float(r[0]), float(r[1])) for r in reader]


def read_fit_json(path: str) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    missing = [k for k in FIT_KEYS if k not in payload]
    if missing:
        raise SchemaError(f"{path}: fit JSON missing keys {missing}")
    return payload


def resolve_sidecar(spec: FigureSpec) -> str:
    """The JSON sidecar carrying the config echo for the first input CSV."""
    if spec.sidecar is not None:
        return spec.sidecar
    base, _ = os.path.splitext(spec.csv[0])
    guesses = [base + ".json",
               os.path.join(os.path.dirname(spec.csv[0]), "metrics.json")]
    for guess in guesses:
        if os.path.isfile(guess):
            return guess
    raise FileNotFoundError(
        f"no sidecar next to {spec.csv[0]} (tried {guesses}); "
        "set the spec's 'sidecar' field")


def read_config_hash(path: str) -> str:
    with open(path) as fh:
        payload = json.load(fh)
    if "config_hash" not in payload:
        raise SchemaError(f"{path}: sidecar has no config_hash field")
    return str(payload["config_hash"])
