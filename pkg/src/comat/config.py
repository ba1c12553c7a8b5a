"""Run configuration with layered resolution.

Sources, strongest first: command-line flags, environment variables,
a key=value config file, built-in defaults.  The fully resolved config
is persisted into every run directory so a run is reproducible from its
artifacts alone.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .gateway import (
    DEFAULT_CONCURRENCY,
    DEFAULT_MAX_TOKENS,
    DEFAULT_MODEL,
    DEFAULT_TEMPERATURE,
    ENV_API_BASE,
    ENV_API_KEY,
    ENV_CACHE_DIR,
)
from .prompting import DEFAULT_EXEMPLAR

REDACTED = "********"

_ENV_FIELDS = {
    "api_key": ENV_API_KEY,
    "api_base": ENV_API_BASE,
    "cache_dir": ENV_CACHE_DIR,
}


@dataclass
class RunConfig:
    dataset: str = ""
    format: str = "aqua"
    method: str = "comat"
    steps: str = "1,2,3,4"          # active conversion steps
    call_mode: str = "single"
    backend: str = "mock"
    model: str = DEFAULT_MODEL
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    concurrency: int = DEFAULT_CONCURRENCY
    seed: int = 0
    out: str = "runs/latest"
    exemplar: str = DEFAULT_EXEMPLAR
    limit: int = -1                  # -1: no limit
    scorer: str = "exact"
    judge_model: str = "gpt-4o-mini"
    mock_script: str = ""
    api_base: str = ""
    api_key: str = ""
    cache_dir: str = ""
    resume: bool = False

    def validate(self) -> None:
        if self.backend not in ("mock", "http"):
            raise ConfigError(f"backend must be mock or http, got {self.backend!r}")
        if self.method not in ("comat", "cot", "standard"):
            raise ConfigError(f"method must be comat, cot, or standard, got {self.method!r}")
        if self.call_mode not in ("single", "two"):
            raise ConfigError(f"call-mode must be single or two, got {self.call_mode!r}")
        if self.scorer not in ("exact", "judge"):
            raise ConfigError(f"scorer must be exact or judge, got {self.scorer!r}")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be at least 1")
        if self.backend == "http" and not self.api_key:
            raise ConfigError(f"backend http needs an api key ({ENV_API_KEY} or config)")
        if self.backend == "http" and not self.api_base:
            raise ConfigError(f"backend http needs an api base url ({ENV_API_BASE} or config)")

    def resolved_dict(self, *, redact: bool = True) -> dict[str, object]:
        out: dict[str, object] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "api_key" and redact and value:
                value = REDACTED
            out[f.name] = value
        return out

    def write_resolved(self, path: Path) -> None:
        path.write_text(
            json.dumps(self.resolved_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_BOOL_TRUE = ("1", "true", "yes", "on")
_BOOL_FALSE = ("0", "false", "no", "off")


def _coerce(name: str, raw: str) -> object:
    kind = _FIELD_TYPES[name]
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
        if kind in ("bool", bool):
            low = raw.strip().lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from exc
    return raw


def parse_config_file(path: str | Path) -> dict[str, object]:
    """Read key=value lines; blank lines and # comments are skipped."""
    values: dict[str, object] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw.strip())
    return values


def resolve_config(
    cli_values: dict[str, object] | None = None,
    config_path: str | Path | None = None,
    env: dict[str, str] | None = None,
) -> RunConfig:
    """Layer defaults, config file, environment, and CLI flags into a RunConfig.

    ``cli_values`` holds only flags the user actually passed.
    """
    env = env if env is not None else dict(os.environ)
    config = RunConfig()
    if config_path:
        for key, value in parse_config_file(config_path).items():
            setattr(config, key, value)
    for field_name, env_name in _ENV_FIELDS.items():
        if env.get(env_name):
            setattr(config, field_name, env[env_name])
    for key, value in (cli_values or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            setattr(config, key, value)
    return config
