"""Parser for the sectioned ``key = value`` config files read by the CLI.

Grammar (one item per line; ``#`` starts a comment)::

    [problem]
    M = 2                 # number of agents
    N = 1                 # number of constraints
    utility.1.a = 1       # 1-based agent index; a > 0 required
    utility.1.c = 0       # optional, default 0
    utility.1.f = 0       # optional, default 0
    utility.2.a = 1
    A = 1 1               # N*M reals, row-major, separated by spaces or commas
    b = 2                 # N reals

    [experiment]          # optional; keys mirror the CLI flags
    scheme = qa
    mu = 0.1

Unknown sections, unknown keys, duplicate keys and missing required keys are
errors reported with their line number.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .problem import NumProblem, Quadratic

EXPERIMENT_KEYS = {
    "seed": int,
    "trials": int,
    "steps": int,
    "scheme": str,
    "bits": int,
    "range": float,
    "alpha": float,
    "L": int,
    "mu": float,
    "out": str,
    "count_offset_bits": "bool",
    "workers": int,
    "rate_x": float,
    "rate_lambda": float,
}

_UTILITY_RE = re.compile(r"^utility\.(\d+)\.(a|c|f)$")


@dataclass
class ConfigFile:
    problem: dict = field(default_factory=dict)      # key -> (value string, line)
    experiment: dict = field(default_factory=dict)


def parse_text(text: str) -> ConfigFile:
    cfg = ConfigFile()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            name = line[1:-1].strip()
            if name not in ("problem", "experiment"):
                raise ConfigError(f"unknown section [{name}]", lineno)
            section = getattr(cfg, name)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if section is None:
            raise ConfigError("key outside of any section", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if key in section:
            raise ConfigError(f"duplicate key {key!r} (first on line {section[key][1]})", lineno)
        section[key] = (value, lineno)
    return cfg


def read_config(path) -> ConfigFile:
    with open(path) as fh:
        return parse_text(fh.read())


def _reals(value: str, key: str, line: int) -> list[float]:
    parts = [p for p in re.split(r"[\s,]+", value) if p]
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}", line) from None


def _int(value: str, key: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}", line) from None


def build_problem(cfg: ConfigFile) -> NumProblem:
    sec = cfg.problem
    if not sec:
        raise ConfigError("missing [problem] section")
    for req in ("M", "N"):
        if req not in sec:
            raise ConfigError(f"missing required key {req!r} in [problem]")
    M = _int(sec["M"][0], "M", sec["M"][1])
    N = _int(sec["N"][0], "N", sec["N"][1])
    if M < 1 or N < 1:
        raise ConfigError("M and N must be positive", sec["M"][1])
    util: dict[int, dict[str, float]] = {}
    for key, (value, line) in sec.items():
        if key in ("M", "N", "A", "b"):
            continue
        m = _UTILITY_RE.match(key)
        if not m:
            raise ConfigError(f"unknown key {key!r} in [problem]", line)
        i = int(m.group(1))
        if not 1 <= i <= M:
            raise ConfigError(f"{key}: agent index must lie in 1..{M}", line)
        vals = _reals(value, key, line)
        if len(vals) != 1:
            raise ConfigError(f"{key} needs exactly one real", line)
        util.setdefault(i, {})[m.group(2)] = vals[0]
    for i in range(1, M + 1):
        if "a" not in util.get(i, {}):
            raise ConfigError(f"missing required key 'utility.{i}.a'")
    for req in ("A", "b"):
        if req not in sec:
            raise ConfigError(f"missing required key {req!r} in [problem]")
    A_vals = _reals(sec["A"][0], "A", sec["A"][1])
    if len(A_vals) != N * M:
        raise ConfigError(f"A needs N*M = {N * M} reals, got {len(A_vals)}", sec["A"][1])
    b_vals = _reals(sec["b"][0], "b", sec["b"][1])
    if len(b_vals) != N:
        raise ConfigError(f"b needs N = {N} reals, got {len(b_vals)}", sec["b"][1])
    utilities = [Quadratic(util[i]["a"], util[i].get("c", 0.0), util[i].get("f", 0.0)) for i in range(1, M + 1)]
    return NumProblem(utilities, np.array(A_vals).reshape(N, M), np.array(b_vals))


def experiment_settings(cfg: ConfigFile, overrides: dict | None = None) -> dict:
    """Typed experiment settings: file values first, then ``overrides`` on top."""
    out = {}
    for key, (value, line) in cfg.experiment.items():
        out[key] = _coerce(key, value, line)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        out[key] = _coerce(key, value, None) if isinstance(value, str) else value
    return out


def _coerce(key, value, line):
    if key not in EXPERIMENT_KEYS:
        raise ConfigError(f"unknown key {key!r} in [experiment]", line)
    kind = EXPERIMENT_KEYS[key]
    if kind == "bool":
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} must be a boolean, got {value!r}", line)
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind.__name__}", line) from None


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = (s.strip() for s in item.split("=", 1))
        out[k] = v
    return out
