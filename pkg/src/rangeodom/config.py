"""Flat ``section.key = value`` configuration files.

Blank lines and ``#`` comments are ignored. Every tunable constant of the
pipeline has a key; unspecified keys keep their dataclass defaults.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

from .consistency import LossWeights
from .frontend import FrontendConfig
from .mapping import MappingConfig, PipelineConfig
from .projection import ProjectionConfig


class ConfigError(ValueError):
    """Malformed line, unknown key or unparsable value."""


@dataclass(frozen=True)
class EvalConfig:
    normal_window: int = 3
    pca_radius: float = 0.5
    pca_min_points: int = 3
    grad_clamp: float = 10.0
    heuristic_mask_threshold: float = 0.3
    normalized_l_n: bool = False


@dataclass(frozen=True)
class Config:
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    mapping: MappingConfig = field(default_factory=MappingConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.projection, self.frontend, self.mapping, self.eval.normal_window)


_SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(Config)}


def _parse_value(text: str, current):
    text = text.strip()
    if text.lower() in ("none", "null"):
        return None
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, str):
        return text
    if isinstance(current, tuple) or "," in text:
        return tuple(float(v) for v in text.split(",") if v.strip())
    value = float(text)
    return value


def parse_config(text: str) -> Config:
    overrides: dict[str, dict] = {name: {} for name in _SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} needs a section prefix")
        section, name = key.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        defaults = _SECTIONS[section]()
        if name not in {f.name for f in dataclasses.fields(defaults)}:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            overrides[section][name] = _parse_value(value, getattr(defaults, name))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
    try:
        parts = {s: _SECTIONS[s](**o) for s, o in overrides.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return Config(**parts)


def _field_values(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj) if f.init}


def load_config(path) -> Config:
    with open(path) as f:
        return parse_config(f.read())


def format_config(cfg: Config) -> str:
    """Render ``cfg`` in the file format; ``parse_config`` reads it back unchanged."""
    lines = []
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        lines.append(f"# {section}")
        for name, value in _field_values(obj).items():
            if value is None:
                text = "none"
            elif isinstance(value, tuple):
                text = ", ".join(repr(float(v)) for v in value)
            elif isinstance(value, float):
                text = repr(value) if math.isfinite(value) else str(value)
            else:
                text = str(value)
            lines.append(f"{section}.{name} = {text}")
    return "\n".join(lines) + "\n"
