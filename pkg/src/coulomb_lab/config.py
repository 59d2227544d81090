"""Experiment configuration: a flat TOML schema with exact round-tripping.

Top-level scalars plus one level of tables ([params], [initial],
[estimators], [scan], [meanfield], [output]).  parse -> serialize -> parse
is the identity on the parsed dict; the config hash (sha256 of canonical
JSON) is embedded in every CSV header so outputs are traceable to their
inputs.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .model import SystemParams
from .samplers import sampler_from_name

__all__ = ["ConfigError", "ExperimentConfig", "dumps_toml", "loads_toml"]


_MISSING = object()


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(message)


def loads_toml(text: str) -> dict:
    try:
        return _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return repr(v)
    if isinstance(v, float):
        if v != v or v in (float("inf"), float("-inf")):
            raise ConfigError("non-finite floats are not representable in config files")
        r = repr(v)
        # make sure the token stays a TOML float
        return r if any(c in r for c in ".eE") else r + ".0"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    raise ConfigError(f"unsupported config value type {type(v).__name__}")


def dumps_toml(data: dict) -> str:
    """Serialize the flat schema (scalars and lists, one table level)."""
    lines: list[str] = []
    tables: list[tuple[str, dict]] = []
    for key, value in data.items():
        if isinstance(value, dict):
            tables.append((key, value))
        else:
            lines.append(f"{key} = {_fmt_value(value)}")
    for name, table in tables:
        if lines:
            lines.append("")
        lines.append(f"[{name}]")
        for key, value in table.items():
            if isinstance(value, dict):
                raise ConfigError(f"nested tables are not part of the schema: {name}.{key}")
            lines.append(f"{key} = {_fmt_value(value)}")
    return "\n".join(lines) + "\n"


_KNOWN_SECTIONS = {"params", "initial", "estimators", "scan", "meanfield", "output"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment configuration plus typed accessors."""

    data: dict

    @classmethod
    def from_path(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            text = fh.read().decode()
        return cls.from_text(text)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        data = loads_toml(text)
        for key, value in data.items():
            if isinstance(value, dict) and key not in _KNOWN_SECTIONS:
                raise ConfigError(f"unknown config section [{key}]", key=key)
        return cls(data)

    def to_toml(self) -> str:
        return dumps_toml(self.data)

    def config_hash(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    # -- typed access -------------------------------------------------------

    def _section(self, name: str) -> dict:
        sec = self.data.get(name)
        if sec is None:
            raise ConfigError(f"missing config section [{name}]", key=name)
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table", key=name)
        return sec

    def get(self, section: str, key: str, default=_MISSING):
        if section not in self.data and default is not _MISSING:
            return default
        sec = self._section(section)
        if key in sec:
            return sec[key]
        if default is _MISSING:
            raise ConfigError(f"missing config key {section}.{key}", key=f"{section}.{key}")
        return default

    def command(self) -> str | None:
        return self.data.get("command")

    def system_params(self, **overrides) -> SystemParams:
        sec = dict(self._section("params"))
        sec.update(overrides)
        ell = sec.get("ell", "off")
        if isinstance(ell, str):
            if ell != "off":
                raise ConfigError("params.ell must be a number >= 1 or 'off'", key="params.ell")
            ell = None
        try:
            return SystemParams(
                sigma=float(sec["sigma"]),
                gamma=float(sec["gamma"]),
                n_particles=int(sec["n_particles"]),
                epsilon=float(sec.get("epsilon", 0.0)),
                ell=ell if ell is None else float(ell),
                dt=float(sec["dt"]),
                horizon=float(sec["horizon"]),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key params.{exc.args[0]}",
                              key=f"params.{exc.args[0]}") from exc
        except ValueError as exc:
            raise ConfigError(f"bad [params] value: {exc}", key="params") from exc

    def initial_sampler(self):
        sec = dict(self._section("initial"))
        kind = sec.pop("kind", None)
        if kind is None:
            raise ConfigError("missing config key initial.kind", key="initial.kind")
        try:
            return sampler_from_name(kind, **sec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad [initial] block: {exc}", key="initial") from exc

    def output_dir(self, override=None) -> str:
        if override:
            return str(override)
        out = self.data.get("output", {})
        return str(out.get("directory", "out"))

    def header_lines(self, extra: dict | None = None) -> tuple[str, ...]:
        import scipy

        from . import __version__, backend

        items = {
            "config_hash": self.config_hash(),
            "generator": f"coulomb-lab {__version__}",
            "backend": backend.BACKEND_NAME,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        }
        if extra:
            items.update(extra)
        return tuple(f"{k}={v}" for k, v in items.items())
