"""
Run configuration: settings defaults, then the matching ``[section]`` of an
INI file, then command-line flags, validated through the command's form.
"""
from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from django.conf import settings

from .exceptions import ConfigError
from .forms import FORMS

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    command: str
    values: dict[str, Any]
    form: Any = field(repr=False, default=None)
    source: Path | None = None

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def path(self, key) -> Path | None:
        value = self.values.get(key)
        return Path(value) if value else None

    def echo(self) -> dict:
        """The validated values in a JSON-friendly form, for reports and the registry."""
        return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.values.items())}


def read_config_file(path: str | Path, command: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    unknown = [s for s in parser.sections() if s not in FORMS]
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {', '.join(unknown)}")
    if not parser.has_section(command):
        return {}
    return dict(parser.items(command))


def merge_options(command: str, config_path: str | Path | None, overrides: Mapping[str, Any]) -> dict[str, Any]:
    try:
        merged: dict[str, Any] = dict(settings.TIGAN_DEFAULTS[command])
    except KeyError:
        raise ConfigError(f"no defaults for command '{command}'")
    if config_path:
        from_file = read_config_file(config_path, command)
        unknown = sorted(set(from_file) - set(merged))
        if unknown:
            raise ConfigError(f"{config_path}: unknown key(s) in [{command}]: {', '.join(unknown)}")
        merged.update(from_file)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def load_run_config(command: str, config_path: str | Path | None = None, overrides: Mapping[str, Any] = {}) -> RunConfig:
    """Merge and validate; nothing is written by this function or before it succeeds."""
    data = merge_options(command, config_path, overrides)
    form = FORMS[command](data=data)
    if not form.is_valid():
        problems = []
        for name, errors in form.errors.items():
            label = "config" if name == "__all__" else name
            problems.extend(f"{label}: {message}" for message in errors)
        raise ConfigError(f"invalid {command} configuration:\n  " + "\n  ".join(problems))
    logger.debug("%s configuration: %s", command, form.cleaned_data)
    return RunConfig(command=command, values=dict(form.cleaned_data), form=form, source=Path(config_path) if config_path else None)
