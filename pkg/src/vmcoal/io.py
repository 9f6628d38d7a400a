"""JSON run configs and CSV/JSON result files."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compositions import format_composition, parse_composition
from .errors import ValidationError
from .linalg import WeightMatrix, as_mass_vector

INT_FIELDS = ("n", "n_max", "replicas", "replica", "seed", "threads")
FLOAT_FIELDS = ("t", "t_max", "tol", "tail_tol", "ode_tol", "p")
LIST_FIELDS = ("t_grid", "record_times", "z")


@dataclass
class RunConfig:
    """``V`` and ``alpha`` plus command-specific scalar and list fields."""

    V: np.ndarray | None = None
    alpha: np.ndarray | None = None
    fields: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.fields.get(key, default)

    def require(self, key):
        if key == "V":
            if self.V is None:
                raise ValidationError("config needs a weight matrix V")
            return self.V
        if key == "alpha":
            if self.alpha is None:
                raise ValidationError("config needs alpha")
            return self.alpha
        if key not in self.fields:
            raise ValidationError(f"config needs field {key!r}")
        return self.fields[key]

    def merged(self, overrides: dict) -> "RunConfig":
        """Copy with non-``None`` overrides taking precedence."""
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return from_dict(data)

    def to_dict(self) -> dict:
        d = {}
        if self.V is not None:
            d["V"] = np.asarray(self.V).tolist()
        if self.alpha is not None:
            d["alpha"] = np.asarray(self.alpha).tolist()
        for k, v in self.fields.items():
            d[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return d


def _positive_int(key, v):
    if isinstance(v, bool) or int(v) != v:
        raise ValidationError(f"{key} must be an integer, got {v!r}")
    v = int(v)
    if key == "seed":
        if not 0 <= v < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
    elif key == "replica":
        if v < 0:
            raise ValidationError("replica must be nonnegative")
    elif v < 1:
        raise ValidationError(f"{key} must be positive, got {v}")
    return v


def from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    data = dict(data)
    V = data.pop("V", None)
    alpha = data.pop("alpha", None)
    if V is not None:
        V = WeightMatrix(V).v
    if alpha is not None:
        alpha = as_mass_vector(alpha, None if V is None else V.shape[0], "alpha")
    fields = {}
    for k, v in data.items():
        if v is None:
            continue
        if k in INT_FIELDS:
            fields[k] = _positive_int(k, v)
        elif k in FLOAT_FIELDS:
            try:
                v = float(v)
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{k} must be a number") from exc
            if not math.isfinite(v):
                raise ValidationError(f"{k} must be finite")
            if k.endswith("tol") and v <= 0:
                raise ValidationError(f"tolerance {k} must be positive")
            fields[k] = v
        elif k in LIST_FIELDS:
            arr = [float(u) for u in np.atleast_1d(v)]
            if not all(math.isfinite(u) for u in arr):
                raise ValidationError(f"{k} must hold finite numbers")
            fields[k] = arr
        elif k == "x":
            fields[k] = list(parse_composition(v) if isinstance(v, str) else [int(u) for u in v])
        else:
            fields[k] = v
    return RunConfig(V, alpha, fields)


def parse_config(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from exc
    return from_dict(data)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- results


def format_value(v) -> str:
    """Reals with 17 significant digits, ints and strings verbatim."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, tuple):
        return format_composition(v)
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def json_text(header, rows, meta: dict | None = None) -> str:
    def plain(v):
        if isinstance(v, (np.integer,)):
            return int(v)
        if isinstance(v, (np.floating,)):
            return float(v)
        if isinstance(v, (np.bool_,)):
            return bool(v)
        if isinstance(v, tuple):
            return format_composition(v)
        return v

    doc = {"columns": list(header), "rows": [[plain(v) for v in row] for row in rows]}
    if meta:
        doc["meta"] = meta
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"


def write_table(path, header, rows, fmt: str = "csv", meta: dict | None = None):
    rows = list(rows)
    text = csv_text(header, rows) if fmt == "csv" else json_text(header, rows, meta)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
