#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import math
import tempfile
import unittest
from pathlib import Path

from config import ConfigError, RunSettings, load_actions, load_options
from report import CheckResult, RunReport
from topology import TopologyKind


class TestDeclaredOptions(unittest.TestCase):
    """Feature: Options and commands are declared in YAML next to the code."""

    def test_every_option_has_a_default(self):
        options = load_options()

        self.assertEqual(options["dims"].default, 32)
        self.assertTrue(all(spec.default is not None for spec in options.values()))
        self.assertEqual(set(options), set(RunSettings.model_fields))

    def test_commands(self):
        actions = load_actions()

        self.assertEqual(set(actions), {"fft-verify", "pme-run", "perf-table", "schedule"})
        self.assertTrue(actions["perf-table"].params["which"].required)

    def test_malformed_declaration(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.yaml"
            path.write_text("options:\n  dims:\n    type: integer\n")

            with self.assertRaises(ConfigError) as ctx:
                load_options(path)
        self.assertEqual(ctx.exception.option, "dims")

    def test_not_a_mapping(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.yaml"
            path.write_text("- just\n- a list\n")

            with self.assertRaises(ConfigError):
                load_options(path)


class TestRunSettings(unittest.TestCase):
    """Feature: Run settings are the declared defaults with explicit overrides."""

    def test_defaults(self):
        settings = RunSettings.from_options(load_options())

        self.assertEqual(settings.dims, 32)
        self.assertEqual(settings.topology, TopologyKind.PTOP)
        self.assertEqual(settings.bandwidth_gbps, 78.0)

    def test_overrides_win_and_none_is_ignored(self):
        settings = RunSettings.from_options(
            load_options(), {"dims": 64, "nodes": None, "log_level": "debug"}
        )

        self.assertEqual(settings.dims, 64)
        self.assertEqual(settings.nodes, 1)
        self.assertEqual(settings.log_level, "DEBUG")

    def test_errors_name_the_option(self):
        for overrides, option in (
            ({"dims": 24}, "dims"),
            ({"nodes": 6}, "nodes"),
            ({"threads": 0}, "threads"),
            ({"colour": "blue"}, "colour"),
        ):
            with self.subTest(option=option), self.assertRaises(ConfigError) as ctx:
                RunSettings.from_options(load_options(), overrides)
            self.assertEqual(ctx.exception.option, option)


class TestRunReport(unittest.TestCase):
    """Feature: Runs can be recorded as JSON reports."""

    def test_written_report_reads_back(self):
        report = RunReport(command="pme-run", config={"dims": 16, "topology": "ptop"})
        report.summary["energy"] = 1.25
        report.checks.append(CheckResult.at_most("oracle-forces", 2e-4, 1e-3))

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "report.json"
            report.write(path)
            loaded = RunReport.read(path)

        self.assertEqual(loaded, report)
        self.assertTrue(loaded.passed)

    def test_non_finite_values_fail(self):
        check = CheckResult.at_most("oracle-energy", math.nan, 1e-3)
        report = RunReport(command="pme-run", checks=[check])

        self.assertFalse(check.passed)
        self.assertEqual(report.failed_checks, ["oracle-energy"])
