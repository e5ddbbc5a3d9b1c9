"""Plain-text run configuration: ``key = value`` lines, ``#`` starts a comment."""
from __future__ import annotations

import dataclasses
import os

from .trainer import TrainConfig

PATH_KEYS = ("edges", "features", "labels", "spectral_cache")


class ConfigError(ValueError):
    """Unknown key, unparsable value or an invalid combination of settings."""


def _field_types() -> dict:
    return {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _convert(key: str, raw: str):
    kind = _field_types()[key]
    raw = raw.strip()
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
        if kind in ("bool", bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_pairs(lines, source: str = "<config>") -> dict:
    out = {}
    known = _field_types()
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def parse_overrides(items) -> dict:
    """``["alpha=0.3", ...]`` from repeated ``--set`` flags."""
    return parse_pairs(items or [], source="--set")


def load_config(path=None, overrides=None, **extra) -> TrainConfig:
    """Build a :class:`TrainConfig` from a file, then ``--set`` overrides, then ``extra``.

    Relative dataset paths are resolved against the config file's directory.
    """
    values = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path} does not exist")
        with open(path) as fh:
            values = parse_pairs(fh, str(path))
        base = os.path.dirname(os.path.abspath(path))
        for key in PATH_KEYS:
            if values.get(key) and not os.path.isabs(values[key]):
                values[key] = os.path.normpath(os.path.join(base, values[key]))
    values.update(parse_overrides(overrides))
    values.update({k: v for k, v in extra.items() if v is not None})
    try:
        return TrainConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def dump_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
