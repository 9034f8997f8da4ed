"""Flat key-value run configuration.

Files contain ``key = value`` lines; ``#`` and ``;`` start comments and an
optional ``[section]`` header is ignored.  Lists are comma separated.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import ConfigError

_SECTION = "run"
_MISSING = object()


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)
    source: Optional[str] = None
    _used: set = field(default_factory=set, repr=False)

    def _raw(self, key, default):
        self._used.add(key)
        if key in self.values:
            return self.values[key]
        if default is _MISSING:
            raise ConfigError(f"missing required key {key!r}")
        return default

    def get_str(self, key: str, default=_MISSING) -> str:
        v = self._raw(key, default)
        return v if v is None else str(v).strip()

    def get_int(self, key: str, default=_MISSING) -> int:
        v = self._raw(key, default)
        try:
            return int(v) if v is not None else None
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an integer, got {v!r}") from None

    def get_float(self, key: str, default=_MISSING) -> Optional[float]:
        v = self._raw(key, default)
        try:
            return float(v) if v is not None else None
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number, got {v!r}") from None

    def get_bool(self, key: str, default=_MISSING) -> bool:
        v = self._raw(key, default)
        if isinstance(v, bool):
            return v
        s = str(v).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} must be a boolean, got {v!r}")

    def get_list(self, key: str, default=_MISSING, cast=str) -> list:
        v = self._raw(key, default)
        if isinstance(v, (list, tuple)):
            items = list(v)
        else:
            items = [s.strip() for s in str(v).split(",") if s.strip()]
        try:
            return [cast(s) for s in items]
        except (TypeError, ValueError):
            raise ConfigError(f"{key} has an invalid entry: {v!r}") from None

    def set(self, key: str, value) -> None:
        self.values[key] = value

    def unused_keys(self) -> list[str]:
        return sorted(set(self.values) - self._used)

    def digest(self) -> str:
        """Short hash of the command and its resolved key-value pairs."""
        canon = "\n".join([self.command] + [f"{k}={self.values[k]}" for k in sorted(self.values)])
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def parse_config_text(text: str, command: str, source: Optional[str] = None) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    body = text if text.lstrip().startswith("[") else f"[{_SECTION}]\n{text}"
    try:
        parser.read_string(body, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    values = {}
    for sec in parser.sections():
        for k, v in parser.items(sec):
            values[k.strip().lower()] = v.strip()
    return RunConfig(command, values, source)


def load_config(path, command: str) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config_text(text, command, str(p))
