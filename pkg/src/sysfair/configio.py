"""Flat ``key=value`` config files.

Scalars are written as-is, vectors as comma-separated decimals and per-group
matrices as comma-separated rows joined by ``;``::

    group_prevalence = 0.8, 0.2
    true_prefs = 0.9, 0.1; 0.1, 0.9

Blank lines and ``#`` comments are ignored.
"""
from pathlib import Path

from .errors import ConfigError


def parse_kv(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        if key in out:
            raise ConfigError(key, f"duplicate key on line {lineno}")
        out[key] = value
    return out


def read_kv(path):
    return parse_kv(Path(path).read_text())


def write_kv(path, items):
    lines = [f"{k} = {v}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def fmt_float(x):
    return repr(float(x))


def fmt_vector(v):
    return ", ".join(fmt_float(x) for x in v)


def fmt_matrix(rows):
    return "; ".join(fmt_vector(r) for r in rows)


def parse_int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {value!r}") from None


def parse_float(key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {value!r}") from None


def parse_vector(key, value, cast=float):
    try:
        return tuple(cast(s) for s in value.split(",") if s.strip())
    except ValueError:
        raise ConfigError(key, f"expected comma-separated numbers, got {value!r}") from None


def parse_matrix(key, value):
    return tuple(parse_vector(key, row) for row in value.split(";") if row.strip())
