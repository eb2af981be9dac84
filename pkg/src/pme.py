#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Command-line entry point for the long-range electrostatics pipeline.

Shared flags come from ``config.yaml`` and per-command flags from ``actions.yaml``::

    pme.py fft-verify --dims 16 --nodes 2
    pme.py pme-run --random-atoms 64 --dims 32 --check
    pme.py perf-table --which a2a
    pme.py schedule --nodes 8 --topology hypercube --pack
"""

import argparse
import logging
import sys
from contextlib import ExitStack
from typing import Any, Callable, Dict, List, Optional, Sequence, TextIO

import numpy as np
from pydantic import ValidationError

from cluster_sim import (
    ClusterConfig,
    ClusterError,
    distributed_fft3d,
    distributed_lr_pipeline,
    format_schedule,
    make_schedule,
    pack_multihop,
    validate_schedule,
)
from config import ConfigError, OptionSpec, RunSettings, load_actions, load_options
from fft_core import (
    Direction,
    FftError,
    fft_3d,
    inverse_fft_3d,
    max_relative_error,
    naive_dft_3d,
    separable_dft_3d,
)
from grid_perm import (
    MIN_EXTENT,
    PermutationError,
    Volume3D,
    VolumeError,
    is_power_of_two,
    read_volume,
)
from perf_model import TABLES, PerfModelError, message_bytes, render_csv
from report import CheckResult, RunReport
from spme import (
    AtomSet,
    GreensVolume,
    SpmeError,
    compare_forces,
    default_beta,
    default_kmax,
    direct_recip_oracle,
    lr_pipeline,
    make_greens,
    random_neutral,
    read_atoms,
    write_forces,
)
from topology import TopologyError
from tracing import TracingError, setup_tracing, shutdown_tracing, stage_timings

logger = logging.getLogger(__name__)

# naive O(P^2) oracle up to this many points, separable DFT above
NAIVE_ORACLE_POINTS = 16**3
DEFAULT_RANDOM_ATOMS = 64

LIBRARY_ERRORS = (
    ClusterError,
    FftError,
    PerfModelError,
    PermutationError,
    SpmeError,
    TopologyError,
    TracingError,
    VolumeError,
    OSError,
)

_TYPES: Dict[str, Callable[[str], Any]] = {"string": str, "int": int, "float": float}


def _dims(text: str) -> int:
    """Argparse type of ``--dims``: a power of two of at least 8."""
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if not is_power_of_two(value) or value < MIN_EXTENT:
        raise argparse.ArgumentTypeError(f"{value} is not a power of two >= {MIN_EXTENT}")
    return value


def _add_flag(parser: argparse.ArgumentParser, name: str, spec: OptionSpec) -> None:
    flag = "--" + name.replace("_", "-")
    dest = name.replace("-", "_")
    help_text = spec.description.strip()
    if spec.type == "boolean":
        parser.add_argument(flag, dest=dest, action="store_true", default=None, help=help_text)
        return
    kind = _dims if name == "dims" else _TYPES[spec.type]
    parser.add_argument(
        flag,
        dest=dest,
        type=kind,
        default=None,
        choices=spec.choices,
        required=spec.required,
        help=help_text,
    )


class PmeApp:
    """Parses a command line and runs one command."""

    def __init__(self, stdout: TextIO = sys.stdout):
        self.stdout = stdout
        self.options = load_options()
        self.actions = load_actions()
        self.parser = self._build_parser()
        self.settings = RunSettings()
        self.command = ""
        self.params: Dict[str, Any] = {}

    def _build_parser(self) -> argparse.ArgumentParser:
        shared = argparse.ArgumentParser(add_help=False)
        for name, spec in self.options.items():
            _add_flag(shared, name, spec)

        parser = argparse.ArgumentParser(
            prog="pme", description="Long-range electrostatics pipeline and cluster model."
        )
        commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
        for name, action in self.actions.items():
            sub = commands.add_parser(
                name, parents=[shared], help=action.description.splitlines()[0]
            )
            for param, spec in action.params.items():
                _add_flag(sub, param, spec)
        return parser

    @property
    def cluster_config(self) -> ClusterConfig:
        s = self.settings
        try:
            return ClusterConfig(
                nodes=s.nodes,
                pipes_per_node=s.pipes,
                topology=s.topology,
                links_per_node=s.links,
                link_bandwidth_bps=s.bandwidth_gbps * 1e9,
                wire_bits_per_point=s.wire_bits_per_point,
                threads=s.threads,
            )
        except ValidationError as e:
            raise ClusterError(f"invalid cluster: {e.errors()[0]['msg']}") from e

    def _param(self, name: str) -> Any:
        """A command parameter, falling back to its declared default."""
        value = self.params.get(name.replace("-", "_"))
        if value is None:
            spec = self.actions[self.command].params.get(name)
            value = spec.default if spec else None
        return value

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        args = vars(self.parser.parse_args(argv))
        self.command = args.pop("command")
        overrides = {name: args.pop(name, None) for name in self.options}
        self.params = args
        try:
            self.settings = RunSettings.from_options(self.options, overrides)
        except ConfigError as e:
            self.parser.error(e.message)

        logging.basicConfig(
            level=self.settings.log_level,
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        handlers = {
            "fft-verify": self._on_fft_verify,
            "pme-run": self._on_pme_run,
            "perf-table": self._on_perf_table,
            "schedule": self._on_schedule,
        }
        report = RunReport(command=self.command, config=self.settings.echo())
        try:
            setup_tracing("pme", self.settings.tracing_endpoint or None)
            handlers[self.command](report)
        except LIBRARY_ERRORS as e:
            print(f"error: {getattr(e, 'message', None) or e}", file=sys.stderr)
            return 1
        finally:
            report.timings = stage_timings()
            shutdown_tracing()

        for check in report.checks:
            logger.info(
                "check %s %s: %.3g (tolerance %g)",
                check.name,
                "passed" if check.passed else "failed",
                check.value,
                check.tolerance,
            )
        if self._param("report"):
            report.write(self._param("report"))
        if not report.passed:
            print(f"FAIL: {', '.join(report.failed_checks)}", file=sys.stderr)
            return 1
        return 0

    def _on_fft_verify(self, report: RunReport) -> None:
        """Hook for the fft-verify command."""
        path = self._param("volume")
        if path:
            volume = read_volume(path)
        else:
            n = self.settings.dims
            rng = np.random.default_rng(self.settings.seed)
            volume = Volume3D(n, n, n, rng.standard_normal(n**3) + 1j * rng.standard_normal(n**3))
        tolerance = float(self._param("tolerance"))

        spectrum = fft_3d(volume)
        oracle = naive_dft_3d if volume.size <= NAIVE_ORACLE_POINTS else separable_dft_3d
        dft_error = max_relative_error(spectrum.data, oracle(volume).data)
        report.checks.append(CheckResult.at_most("naive-dft", dft_error, tolerance))

        round_trip = max_relative_error(inverse_fft_3d(spectrum).data, volume.data)
        report.checks.append(CheckResult.at_most("round-trip", round_trip, tolerance))

        config = self.cluster_config
        distributed, stats = distributed_fft3d(volume, config, Direction.FORWARD)
        mismatch = float(np.max(np.abs(distributed.data - spectrum.data)))
        report.checks.append(CheckResult.at_most("distributed-equivalence", mismatch, 0.0))

        turn = stats.turns[0]
        report.summary.update(
            {
                "points": float(volume.size),
                "pipelines": float(config.pipes),
                "messages": float(turn.messages),
                "offnode_bytes": float(turn.offnode_bytes),
                "local_bytes": float(turn.local_bytes),
            }
        )
        for check in report.checks:
            print(
                f"{check.name}: {'PASS' if check.passed else 'FAIL'} "
                f"({check.value:.3g} <= {check.tolerance:g})",
                file=self.stdout,
            )
        print(
            f"{volume!r} on {config.pipes} pipelines: {turn.messages} messages, "
            f"{turn.offnode_bytes} bytes off-node",
            file=self.stdout,
        )

    def _atoms(self) -> AtomSet:
        path = self._param("atoms")
        if path:
            return read_atoms(path)
        count = int(self._param("random-atoms") or DEFAULT_RANDOM_ATOMS)
        return random_neutral(count, self.settings.seed)

    def _on_pme_run(self, report: RunReport) -> None:
        """Hook for the pme-run command."""
        s = self.settings
        atoms = self._atoms()
        dims = (s.dims, s.dims, s.dims)
        beta = s.beta or default_beta(dims, s.box, s.ewald_tolerance)
        greens_path = self._param("greens")
        if greens_path:
            greens = GreensVolume.from_volume(read_volume(greens_path), s.box)
        else:
            greens = make_greens(dims, beta, s.box)
        config = self.cluster_config

        if config.pipes > 1:
            result, stats = distributed_lr_pipeline(atoms, dims, greens, config, s.reorder_window)
            report.summary["offnode_bytes"] = float(stats.offnode_bytes)
            report.summary["replicated_atoms"] = float(stats.replicated_atoms)
        else:
            result = lr_pipeline(atoms, dims, greens, s.reorder_window)

        report.summary.update(
            {
                "atoms": float(atoms.count),
                "beta": beta,
                "energy": result.energy,
                "max_force": result.forces.max_abs,
                "stalls": float(result.stalls),
            }
        )
        out = self._param("out")
        with ExitStack() as stack:
            stream = stack.enter_context(open(out, "w", encoding="utf-8")) if out else self.stdout
            write_forces(stream, result.forces)
        summary = sys.stderr if not out else self.stdout
        print(f"energy {result.energy:.17g}", file=summary)

        if self._param("check"):
            kmax = s.kmax or default_kmax(beta, s.box)
            energy, forces = direct_recip_oracle(atoms, beta, kmax, s.box)
            tolerance = float(self._param("tolerance"))
            energy_error = abs(result.energy - energy) / abs(energy) if energy else 0.0
            force_error = compare_forces(result.forces, forces)
            report.summary.update({"oracle_energy": energy, "kmax": float(kmax)})
            report.checks.append(CheckResult.at_most("oracle-energy", energy_error, tolerance))
            report.checks.append(CheckResult.at_most("oracle-forces", force_error, tolerance))
            for check in report.checks:
                print(
                    f"{check.name}: {'PASS' if check.passed else 'FAIL'} "
                    f"(relative error {check.value:.3g})",
                    file=summary,
                )

    def _on_perf_table(self, report: RunReport) -> None:
        """Hook for the perf-table command."""
        which = self._param("which")
        s = self.settings
        if which == "fft":
            rows = TABLES[which](s.fmax_mhz * 1e6)
        elif which == "a2a":
            rows = TABLES[which](s.bandwidth_gbps * 1e9)
        elif which == "balance":
            rows = TABLES[which](s.balance_threshold)
        else:
            rows = TABLES[which]()
        self.stdout.write(render_csv(rows))
        report.rows = [dict(row) for row in rows]  # type: ignore
        flagged = sum(1 for row in rows if row.get("flag"))
        report.summary.update({"rows": float(len(rows)), "flagged": float(flagged)})

    def _on_schedule(self, report: RunReport) -> None:
        """Hook for the schedule command."""
        config = self.cluster_config
        s = self.settings
        pair_bytes = message_bytes(s.dims, config.pipes, s.wire_bits_per_point)
        schedule = make_schedule(config.pipes, pair_bytes, config)
        validate_schedule(schedule)
        self.stdout.write(format_schedule(schedule))
        report.summary.update({"rounds": float(len(schedule)), "pair_bytes": float(pair_bytes)})

        if self._param("pack"):
            board_bytes = message_bytes(s.dims, s.nodes, s.wire_bits_per_point)
            packing = pack_multihop(config, board_bytes, int(self._param("fragment-bytes")))
            self.stdout.write(packing.format())
            report.summary.update(
                {
                    "makespan_slots": float(packing.makespan_slots),
                    "link_load_bound": float(packing.link_load_bound),
                    "max_buffer_occupancy": float(packing.max_buffer_occupancy),
                    "mean_hops": packing.mean_hops,
                }
            )


def main(argv: Optional[List[str]] = None) -> int:
    try:
        app = PmeApp()
    except ConfigError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return 1
    return app.run(argv)


if __name__ == "__main__":
    sys.exit(main())
