"""One declarative JSON config for the whole toolchain.

Defaults live here; a config file overrides them section by section, and
environment variables override the file (prefix SCRIPTDRIFT_, double
underscore between section and key, values parsed as JSON when they parse:
``SCRIPTDRIFT_EVM__TAIL_SIZE=500``, ``SCRIPTDRIFT_SEED=7``). Unknown sections
or keys are errors, not warnings; a typo that silently falls back to a
default is the worst failure mode a config system can have.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

__all__ = ["ConfigError", "SCHEMA_VERSION", "DEFAULTS", "Config", "load_config"]

SCHEMA_VERSION = 1

ENV_PREFIX = "SCRIPTDRIFT_"

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "binning": {
        "pen_pressure": 3,
        "slant_angle": 4,
        "word_spacing": 3,
        "character_size": 3,
    },
    "features": {
        "extractor": "mean-hog",
    },
    "evm": {
        "tail_size": 1000,
        "cover_threshold": 0.5,
        "distance": "cosine",
        "distance_multiplier": 0.5,
    },
    "testgen": {
        "introduction_points": [0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        "densities": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        "novelty_types": ["Writer", "Letter/Style", "Background"],
        "difficulties": ["Easy", "Medium", "Hard"],
        "distributions": ["High", "Low", "Mid", "Flat"],
        "lengths": [512, 768, 1024],
        "jitter": 0.05,
        "max_reorders": 9,
    },
    "runner": {
        "batch_size": 16,
        "prior_window": 64,
        "slack_sigmas": 0.5,
        "alarm_sigmas": 5.0,
        "w_pre": 0.25,
        "ramp": 32,
        "top_k": 3,
    },
    "report": {
        "nmi_normalization": "geometric",
        "window": 32,
    },
}


class ConfigError(ValueError):
    pass


def _check_value(path: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    elif isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
    return value


def _merge(base: dict, overrides: dict, path: str = "") -> None:
    for key, value in overrides.items():
        here = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{here}: expected a section (object)")
            _merge(base[key], value, here + ".")
        else:
            base[key] = _check_value(here, base[key], value)


def _parse_env_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _env_overrides(env) -> dict:
    tree: dict = {}
    for name in sorted(env):
        if not name.startswith(ENV_PREFIX):
            continue
        spine = name[len(ENV_PREFIX) :].lower().split("__")
        if not all(spine):
            raise ConfigError(f"malformed override variable {name}")
        node = tree
        for part in spine[:-1]:
            node = node.setdefault(part, {})
        node[spine[-1]] = _parse_env_value(env[name])
    return tree


class Config:
    """Merged settings; sections read like attributes, values like keys."""

    def __init__(self, tree: dict):
        self._tree = tree

    def __getitem__(self, key: str):
        return self._tree[key]

    def section(self, name: str) -> dict:
        value = self._tree[name]
        if not isinstance(value, dict):
            raise ConfigError(f"{name} is a value, not a section")
        return copy.deepcopy(value)

    @property
    def seed(self) -> int:
        return self._tree["seed"]

    def effective(self) -> dict:
        """The full merged tree, safe to dump or mutate."""
        return copy.deepcopy(self._tree)

    def dumps(self) -> str:
        return json.dumps(self.effective(), indent=2, sort_keys=True) + "\n"


def load_config(path=None, env=None, overrides: dict | None = None) -> Config:
    """Defaults <- file <- environment <- explicit overrides, in that order."""
    tree = copy.deepcopy(DEFAULTS)
    if path is not None:
        raw = Path(path).read_text(encoding="utf-8")
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: top level must be an object")
        declared = payload.get("schema_version", SCHEMA_VERSION)
        if declared != SCHEMA_VERSION:
            raise ConfigError(
                f"{path}: schema_version {declared} not supported (want {SCHEMA_VERSION})"
            )
        _merge(tree, payload)
    if env is None:
        env = os.environ
    _merge(tree, _env_overrides(env))
    if overrides:
        _merge(tree, overrides)
    return Config(tree)
