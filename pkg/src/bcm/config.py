"""Flat ``key = value`` run configuration files.

Blank lines and ``#`` comments are ignored.  Values are converted to the
type of the matching dataclass field: numbers, booleans
(``true/false/yes/no/1/0``), comma-separated tuples, strings, or ``none``
for optional fields.
"""
from __future__ import annotations

import dataclasses
from typing import Any, Mapping

from .errors import ConfigError

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def load_config(path) -> dict[str, str]:
    try:
        with open(path) as fh:
            return parse_config(fh.read(), str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _scalar(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def _convert(key: str, value: str, annotation: str, default: Any):
    ann = annotation.replace(" ", "")
    optional = "None" in ann.split("|")
    if optional and value.lower() == "none":
        return None
    try:
        if ann.startswith("bool"):
            low = value.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(value)
        if ann.startswith("int"):
            return int(value)
        if ann.startswith("float"):
            return float(value)
        if ann.startswith("tuple"):
            items = [v.strip() for v in value.split(",") if v.strip()]
            return tuple(_scalar(v) for v in items)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {value!r} as {annotation}") from exc
    return value


def build(cls, values: Mapping[str, Any]):
    """Instantiate dataclass ``cls`` from string (or already typed) values.

    Unknown keys are rejected so typos do not pass silently.
    """
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}; valid keys: {sorted(fields)}")
    kwargs = {}
    for key, value in values.items():
        f = fields[key]
        if isinstance(value, str):
            ann = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
            value = _convert(key, value, ann, f.default)
        kwargs[key] = value
    return cls(**kwargs)


def resolved(cfg) -> dict[str, Any]:
    """Field values of a config dataclass, tuples flattened for metadata."""
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = ",".join(str(x) for x in v) if isinstance(v, tuple) else v
    return out
