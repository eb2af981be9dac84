#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
import subprocess
import sys
from datetime import datetime
from pathlib import Path
from typing import Callable, List

import pytest

logger = logging.getLogger(__name__)

ROOT = Path(__file__).resolve().parents[2]
ENTRY_POINT = ROOT / "src" / "pme.py"


@pytest.fixture(scope="module")
def pme() -> Callable[..., subprocess.CompletedProcess]:
    """Run the command-line tool in a fresh interpreter."""

    def run(*argv: str, cwd: Path = ROOT) -> subprocess.CompletedProcess:
        command: List[str] = [sys.executable, str(ENTRY_POINT), *argv]
        logger.info("Started: %s", " ".join(argv))
        start_time = datetime.now()
        result = subprocess.run(command, cwd=cwd, capture_output=True, text=True, timeout=600)
        logger.info("Finished: %s in: %s seconds", argv[0], datetime.now() - start_time)
        return result

    return run
