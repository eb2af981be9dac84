#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""JSON report of a command run."""

import logging
import math
from pathlib import Path
from typing import Dict, List, Union

from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

Scalar = Union[bool, int, float, str]


class CheckResult(BaseModel):
    """Outcome of one numeric check."""

    model_config = ConfigDict(allow_inf_nan=False)

    name: str
    value: float
    tolerance: float
    passed: bool

    @classmethod
    def at_most(cls, name: str, value: float, tolerance: float) -> "CheckResult":
        """Passes when ``value`` is finite and not above ``tolerance``."""
        finite = math.isfinite(value)
        return cls(
            name=name,
            value=value if finite else -1.0,
            tolerance=tolerance,
            passed=finite and value <= tolerance,
        )


class RunReport(BaseModel):
    """Configuration, stage timings, numeric summaries, checks and table rows of a run."""

    model_config = ConfigDict(allow_inf_nan=False)

    command: str
    config: Dict[str, Scalar] = Field(default_factory=dict)
    timings: Dict[str, float] = Field(default_factory=dict)
    summary: Dict[str, float] = Field(default_factory=dict)
    checks: List[CheckResult] = Field(default_factory=list)
    rows: List[Dict[str, Scalar]] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed_checks(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.debug("wrote %s report to %s", self.command, path)

    @classmethod
    def read(cls, path: Union[str, Path]) -> "RunReport":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))
