#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Run options from ``config.yaml`` and command declarations from ``actions.yaml``."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from grid_perm import MIN_EXTENT, is_power_of_two
from topology import TopologyKind

logger = logging.getLogger(__name__)

ROOT = Path(__file__).resolve().parent.parent
CONFIG_FILE = ROOT / "config.yaml"
ACTIONS_FILE = ROOT / "actions.yaml"

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

OptionType = Literal["string", "int", "float", "boolean"]


class ConfigError(Exception):
    """Raised when a configuration file or option value is invalid."""

    def __init__(self, message: str, option: Optional[str] = None):
        self.option = option
        self.message = f"{option}: {message}" if option else message

        super().__init__(self.message)


class OptionSpec(BaseModel):
    """One declared option or command parameter."""

    model_config = ConfigDict(extra="forbid")

    type: OptionType
    description: str = ""
    default: Optional[Union[bool, int, float, str]] = None
    choices: Optional[List[str]] = None
    required: bool = False


class ActionSpec(BaseModel):
    """One declared command."""

    model_config = ConfigDict(extra="forbid")

    description: str = ""
    params: Dict[str, OptionSpec] = Field(default_factory=dict)


def _load_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        content = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"{path} is not valid YAML: {e}") from e
    if not isinstance(content, dict):
        raise ConfigError(f"{path} must hold a mapping")
    return content


def load_options(path: Union[str, Path] = CONFIG_FILE) -> Dict[str, OptionSpec]:
    """Declared run options.

    Raises:
        ConfigError: naming the first malformed option.
    """
    content = _load_yaml(path)
    options = content.get("options")
    if not isinstance(options, dict):
        raise ConfigError(f"{path} has no 'options' mapping")
    loaded = {}
    for name, spec in options.items():
        try:
            loaded[name] = OptionSpec.model_validate(spec)
        except ValidationError as e:
            raise ConfigError(f"bad declaration: {e.errors()[0]['msg']}", name) from e
    return loaded


def load_actions(path: Union[str, Path] = ACTIONS_FILE) -> Dict[str, ActionSpec]:
    """Declared commands and their parameters.

    Raises:
        ConfigError: naming the first malformed command.
    """
    loaded = {}
    for name, spec in _load_yaml(path).items():
        try:
            loaded[name] = ActionSpec.model_validate(spec or {})
        except ValidationError as e:
            raise ConfigError(f"bad declaration: {e.errors()[0]['msg']}", name) from e
    return loaded


class RunSettings(BaseModel):
    """Validated run options."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dims: int = 32
    nodes: int = Field(1, ge=1)
    pipes: int = Field(1, ge=1)
    topology: TopologyKind = TopologyKind.PTOP
    links: int = Field(4, ge=1)
    bandwidth_gbps: float = Field(78.0, gt=0)
    fmax_mhz: float = Field(300.0, gt=0)
    beta: float = Field(0.0, ge=0)
    ewald_tolerance: float = Field(1e-7, gt=0, lt=1)
    kmax: int = Field(0, ge=0)
    box: float = Field(1.0, gt=0)
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    reorder_window: int = Field(0, ge=0)
    balance_threshold: float = Field(0.25, ge=0)
    wire_bits_per_point: int = Field(64, gt=0)
    tracing_endpoint: str = ""
    log_level: str = "INFO"

    @field_validator("dims")
    @classmethod
    def _dims_power_of_two(cls, value: int) -> int:
        if not is_power_of_two(value) or value < MIN_EXTENT:
            raise ValueError(f"must be a power of two >= {MIN_EXTENT}, got {value}")
        return value

    @field_validator("nodes")
    @classmethod
    def _nodes_power_of_two(cls, value: int) -> int:
        if not is_power_of_two(value):
            raise ValueError(f"must be a power of two, got {value}")
        return value

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in LOG_LEVELS:
            raise ValueError(f"must be one of {', '.join(LOG_LEVELS)}")
        return value

    @classmethod
    def from_options(
        cls, options: Mapping[str, OptionSpec], overrides: Optional[Mapping[str, Any]] = None
    ) -> "RunSettings":
        """Declared defaults overridden by explicitly given values (``None`` is not given).

        Raises:
            ConfigError: naming the offending option.
        """
        values = {name: spec.default for name, spec in options.items() if spec.default is not None}
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        unknown = sorted(set(values) - set(cls.model_fields))
        if unknown:
            raise ConfigError("not a known option", unknown[0])
        try:
            return cls(**values)
        except ValidationError as e:
            error = e.errors()[0]
            option = str(error["loc"][0]) if error["loc"] else None
            raise ConfigError(error["msg"], option) from e

    def echo(self) -> Dict[str, Union[bool, int, float, str]]:
        """Plain values for reports."""
        return self.model_dump(mode="json")
