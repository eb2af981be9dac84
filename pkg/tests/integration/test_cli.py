#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import csv
import io
import json

import numpy as np

from spme import format_atoms, random_neutral


def test_fft_verify_passes_on_a_cluster(pme, tmp_path):
    report = tmp_path / "report.json"

    result = pme(
        "fft-verify", "--dims", "16", "--nodes", "4", "--threads", "2", "--report", str(report)
    )

    assert result.returncode == 0, result.stderr
    assert "distributed-equivalence: PASS" in result.stdout
    assert json.loads(report.read_text())["command"] == "fft-verify"


def test_force_files_agree_across_cluster_sizes(pme, tmp_path):
    atoms = tmp_path / "atoms.txt"
    atoms.write_text(format_atoms(random_neutral(64, seed=3)))

    outputs = []
    for nodes in ("1", "4"):
        out = tmp_path / f"forces-{nodes}.txt"
        result = pme(
            "pme-run", "--atoms", str(atoms), "--dims", "32", "--nodes", nodes, "--out", str(out)
        )
        assert result.returncode == 0, result.stderr
        outputs.append(np.loadtxt(out))

    scale = np.max(np.abs(outputs[0]))
    assert np.max(np.abs(outputs[1] - outputs[0])) <= 1e-9 * scale


def test_check_reports_oracle_errors(pme):
    result = pme("pme-run", "--random-atoms", "64", "--dims", "32", "--check")

    assert result.returncode == 0, result.stderr
    assert "oracle-forces: PASS" in result.stderr
    assert len(result.stdout.splitlines()) == 64


def test_perf_tables_are_csv(pme):
    for which in ("fft", "cycles", "a2a", "balance", "gflops", "ideal", "scaling"):
        result = pme("perf-table", "--which", which)

        assert result.returncode == 0, result.stderr
        rows = list(csv.DictReader(io.StringIO(result.stdout)))
        assert rows, which


def test_usage_errors_exit_with_two(pme):
    result = pme("fft-verify", "--dims", "12")

    assert result.returncode == 2
    assert "power of two" in result.stderr
