"""Flat `key = value` run configuration with typed coercion.

Unknown keys are a hard error so a typo like `learing_rate` can't silently
train with defaults.
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


# keys mirror TrainConfig / SynthConfig / the model switches on the CLI
SCHEMA = {
    "model": str,
    "pooling": str,
    "fusion": str,
    "learning_rate": float,
    "batch_size": int,
    "max_epochs": int,
    "patience": int,
    "seed": int,
    "class_weights": _parse_bool,
    "max_len": int,
    "out_dir": str,
    "n_train": int,
    "n_dev": int,
    "n_test": int,
    "pilot_fraction": float,
    "dfg_rate": float,
    "oov_rate": float,
    "channel_swap_rate": float,
    "cjk": _parse_bool,
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = SCHEMA[key](value)
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {e}") from None
    return values


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(p.read_text(encoding="utf-8"), source=str(path))
