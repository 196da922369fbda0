"""Versioned YAML run configs: validation with line-precise errors, defaults, hashing, sweeps."""
from __future__ import annotations

import copy
import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .defaults import CHOICES, DEFAULTS

CONFIG_VERSION = 1
TOP_KEYS = ("version", "experiment", "seed", "measure", "params", "sweep", "output")
MEASURE_TYPES = {"d": int, "s": float, "k": int, "N": int, "q": (int, type(None)), "variant": str}
OUTPUT_TYPES = {"dir": str, "fields": bool, "raw": bool}


class ConfigError(ValueError):
    """Invalid config; str() is 'source:line:col: message' when a position is known."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None, col: int | None = None):
        self.message, self.source, self.line, self.col = message, source, line, col
        where = source if line is None else f"{source}:{line}:{col}"
        super().__init__(f"{where}: {message}")


@dataclass
class RunConfig:
    experiment: str
    seed: int
    measure: dict
    params: dict
    sweep: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    version: int = CONFIG_VERSION

    def to_dict(self) -> dict:
        return {"version": self.version, "experiment": self.experiment, "seed": self.seed,
                "measure": dict(self.measure), "params": copy.deepcopy(self.params),
                "sweep": copy.deepcopy(self.sweep), "output": dict(self.output)}

    def hashed_part(self) -> dict:
        # output location and artifact switches do not change any number
        d = self.to_dict()
        d.pop("output")
        return d

    @property
    def hash(self) -> str:
        return config_hash(self.hashed_part())

    def measure_spec(self):
        from ..gaussian import MeasureSpec

        return MeasureSpec(**self.measure)

    def points(self) -> list["RunConfig"]:
        """One config per sweep point (cartesian product in key order); [self] without a sweep."""
        if not self.sweep:
            return [self]
        keys = list(self.sweep)
        out = []
        for combo in itertools.product(*(self.sweep[k] for k in keys)):
            c = RunConfig(self.experiment, self.seed, dict(self.measure), copy.deepcopy(self.params), {},
                          dict(self.output), self.version)
            for key, value in zip(keys, combo):
                block, name = key.split(".", 1)
                getattr(c, block)[name] = value
            out.append(c)
        return out


def config_hash(data: dict) -> str:
    text = json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()[:32]


def default_config(experiment: str) -> RunConfig:
    if experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(DEFAULTS)}")
    d = copy.deepcopy(DEFAULTS[experiment])
    return RunConfig(experiment, d["seed"], d["measure"], d["params"], d.get("sweep", {}),
                     {"dir": f"runs/{experiment}", "fields": False, "raw": False})


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


# ---------------------------------------------------------------- loading

def _marks(node, path=(), out=None):
    """Map key paths to (line, col) of the key (mappings) or item (sequences), 1-based."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (k.value,)
            out[p] = (k.start_mark.line + 1, k.start_mark.column + 1)
            out[p + ("=",)] = (v.start_mark.line + 1, v.start_mark.column + 1)
            _marks(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            out[path + (i,)] = (v.start_mark.line + 1, v.start_mark.column + 1)
            _marks(v, path + (i,), out)
    return out


def _kind(x):
    if isinstance(x, bool):
        return "bool"
    if isinstance(x, (int, float)):
        return "number"
    return type(x).__name__


class _Checker:
    def __init__(self, source, marks):
        self.source, self.marks = source, marks

    def fail(self, path, message, value=False):
        pos = self.marks.get(tuple(path) + ("=",)) if value else None
        pos = pos or self.marks.get(tuple(path))
        # fall back to the closest enclosing key
        p = tuple(path)
        while pos is None and p:
            p = p[:-1]
            pos = self.marks.get(p)
        line, col = pos if pos else (None, None)
        raise ConfigError(message, self.source, line, col)

    def mapping(self, path, value):
        if not isinstance(value, dict):
            self.fail(path, f"'{'.'.join(map(str, path))}' must be a mapping", True)
        return value

    def unknown(self, path, value: dict, allowed):
        for key in value:
            if key not in allowed:
                self.fail(tuple(path) + (key,), f"unknown key '{key}' in {'.'.join(map(str, path)) or 'top level'}"
                          f" (allowed: {', '.join(map(str, allowed))})")

    def typed(self, path, value, kind):
        name = ".".join(map(str, path))
        kinds = kind if isinstance(kind, tuple) else (kind,)
        for k in kinds:
            if k is bool and isinstance(value, bool):
                return value
            if k is int and isinstance(value, int) and not isinstance(value, bool):
                return value
            if k is float and isinstance(value, (int, float)) and not isinstance(value, bool):
                return float(value)
            if k is str and isinstance(value, str):
                return value
            if k is type(None) and value is None:
                return None
        want = " or ".join("null" if k is type(None) else k.__name__ for k in kinds)
        self.fail(path, f"'{name}' must be {want}, got {type(value).__name__} {value!r}", True)

    def like(self, path, value, template):
        """Check value against the type of a default value."""
        name = ".".join(map(str, path))
        if template is None:
            return self.typed(path, value, (int, float, type(None)))
        if isinstance(template, (list, tuple)):
            if not isinstance(value, list):
                self.fail(path, f"'{name}' must be a list", True)
            if len({_kind(t) for t in template}) > 1:
                # a record such as ["u", 0.0, 6.25, "le"]: checked position by position
                if len(value) != len(template):
                    self.fail(path, f"'{name}' must have {len(template)} entries like {template}", True)
                return [self.like(tuple(path) + (i,), v, t) for i, (v, t) in enumerate(zip(value, template))]
            if template:
                return [self.like(tuple(path) + (i,), v, template[0]) for i, v in enumerate(value)]
            return value
        kind = bool if isinstance(template, bool) else type(template)
        out = self.typed(path, value, kind)
        key = next((p for p in reversed(path) if isinstance(p, str)), None)
        choices = CHOICES.get(key)
        if choices and out not in choices:
            self.fail(path, f"'{name}' must be one of {', '.join(choices)}, got {out!r}", True)
        return out


def parse_config(text: str, experiment: str | None = None, source: str = "<config>") -> RunConfig:
    """Validate a YAML document against the schema of its experiment; missing keys take defaults."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        m = e.problem_mark or e.context_mark
        raise ConfigError(f"YAML syntax error: {e.problem}", source,
                          m.line + 1 if m else None, m.column + 1 if m else None) from None
    except yaml.YAMLError as e:
        raise ConfigError(f"YAML error: {e}", source) from None
    ck = _Checker(source, _marks(node) if node is not None else {})
    if data is None:
        data = {}
    ck.mapping((), data)
    ck.unknown((), data, TOP_KEYS)
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION or isinstance(version, bool):
        ck.fail(("version",), f"unsupported config version {version!r} (this build reads version {CONFIG_VERSION})",
                True)
    name = data.get("experiment", experiment)
    if name is None:
        raise ConfigError("no experiment given (set 'experiment' or pass a subcommand)", source)
    if not isinstance(name, str) or name not in DEFAULTS:
        ck.fail(("experiment",), f"unknown experiment {name!r}; choose from {', '.join(DEFAULTS)}", True)
    if experiment is not None and name != experiment:
        ck.fail(("experiment",), f"config is for '{name}' but the subcommand is '{experiment}'", True)
    cfg = default_config(name)
    if "seed" in data:
        cfg.seed = ck.typed(("seed",), data["seed"], int)
        if cfg.seed < 0:
            ck.fail(("seed",), "'seed' must be nonnegative", True)
    if "measure" in data:
        m = ck.mapping(("measure",), data["measure"])
        ck.unknown(("measure",), m, MEASURE_TYPES)
        for key, value in m.items():
            cfg.measure[key] = ck.typed(("measure", key), value, MEASURE_TYPES[key])
    if "params" in data:
        p = ck.mapping(("params",), data["params"])
        ck.unknown(("params",), p, cfg.params)
        for key, value in p.items():
            cfg.params[key] = ck.like(("params", key), value, cfg.params[key])
    if "sweep" in data:
        sw = data["sweep"]
        cfg.sweep = {}
        if sw is not None:
            ck.mapping(("sweep",), sw)
            for key, values in sw.items():
                path = ("sweep", key)
                block, _, sub = str(key).partition(".")
                if block not in ("measure", "params") or not sub:
                    ck.fail(path, f"sweep key '{key}' must look like measure.<name> or params.<name>")
                table = MEASURE_TYPES if block == "measure" else cfg.params
                if sub not in table:
                    ck.fail(path, f"sweep key '{key}' names an unknown {block} entry")
                if not isinstance(values, list) or not values:
                    ck.fail(path, f"sweep '{key}' must be a nonempty list", True)
                if block == "measure":
                    cfg.sweep[key] = [ck.typed(path + (i,), v, MEASURE_TYPES[sub]) for i, v in enumerate(values)]
                else:
                    cfg.sweep[key] = [ck.like(path + (i,), v, cfg.params[sub]) for i, v in enumerate(values)]
    if "output" in data:
        o = ck.mapping(("output",), data["output"])
        ck.unknown(("output",), o, OUTPUT_TYPES)
        for key, value in o.items():
            cfg.output[key] = ck.typed(("output", key), value, OUTPUT_TYPES[key])
    from .experiments import validate

    for point in cfg.points():
        try:
            point.measure_spec()
        except (ValueError, TypeError) as e:
            ck.fail(("measure",), f"invalid measure: {e}")
        bad = validate(point)
        if bad:
            ck.fail(bad[0], bad[1])
    return cfg


def load_config(path, experiment: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(path)) from None
    return parse_config(text, experiment, str(path))
