"""Artifacts stamped with the config hash: CSV tables, JSON reports, binary fields, run records."""
from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from ..spectral import read_field, write_field

HASH_PREFIX = "# config_hash: "


def to_jsonable(x):
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return {f.name: to_jsonable(getattr(x, f.name)) for f in dataclasses.fields(x)}
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, np.generic):
        return to_jsonable(x.item())
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)  # JSON has no inf/nan
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_csv(path, config_hash: str, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"{HASH_PREFIX}{config_hash}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path):
    """(config_hash, columns, rows as lists of strings)."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith(HASH_PREFIX):
            raise ValueError(f"{path}: missing config hash line")
        rows = list(csv.reader(fh))
    return first[len(HASH_PREFIX):].strip(), rows[0], rows[1:]


def write_json(path, config_hash: str, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"config_hash": config_hash}
    body.update(to_jsonable(payload))
    path.write_text(json.dumps(body, indent=2) + "\n")
    return path


def write_binary_field(path, config_hash: str, f, s_tag: float = float("nan")) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_field(path, f, s_tag, config_hash)
    return path


def file_hash(path) -> str:
    """The config hash an artifact carries in its header."""
    path = Path(path)
    if path.suffix == ".csv":
        return read_csv(path)[0]
    if path.suffix == ".json":
        return json.loads(path.read_text())["config_hash"]
    if path.suffix == ".tfld":
        return read_field(path)[1]["config_hash"]
    raise ValueError(f"{path}: unknown artifact type")
