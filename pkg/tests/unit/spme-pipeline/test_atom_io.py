#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import io
import tempfile
import unittest
from pathlib import Path

import numpy as np

from grid_perm import read_volume, write_volume
from spme import (
    AtomFileError,
    AtomSet,
    ForceSet,
    GreensVolume,
    SpmeError,
    default_beta,
    format_atoms,
    lr_pipeline,
    make_greens,
    parse_atoms,
    random_neutral,
    read_atoms,
    read_forces,
    reorder_atoms,
    write_forces,
)


class TestAtomFiles(unittest.TestCase):
    """Feature: Atom files hold ``x y z q`` per line in fractional coordinates."""

    def test_comments_and_blank_lines(self):
        atoms = parse_atoms("# water-ish\n0.1 0.2 0.3 -0.8\n\n0.5 0.5 0.5 0.4  # H\n")

        self.assertEqual(atoms.count, 2)
        self.assertAlmostEqual(atoms.total_charge, -0.4)

    def test_formatted_atoms_parse_back_exactly(self):
        atoms = random_neutral(16, seed=1)

        parsed = parse_atoms(format_atoms(atoms))

        np.testing.assert_array_equal(parsed.positions, atoms.positions)
        np.testing.assert_array_equal(parsed.charges, atoms.charges)

    def test_errors_name_the_line(self):
        for text, line in (
            ("0.1 0.2 0.3\n", 1),
            ("0.1 0.2 0.3 1\n0.1 0.2 x 1\n", 2),
            ("0.1 0.2 0.3 1\n\n0.1 0.2 inf 1\n", 3),
        ):
            with self.subTest(text=text), self.assertRaises(AtomFileError) as ctx:
                parse_atoms(text)
            self.assertEqual(ctx.exception.line, line)

    def test_no_atoms(self):
        with self.assertRaises(AtomFileError):
            parse_atoms("# nothing here\n")

    def test_missing_file(self):
        with self.assertRaises(AtomFileError):
            read_atoms("/nonexistent/atoms.txt")

    def test_mismatched_arrays(self):
        with self.assertRaises(SpmeError):
            AtomSet(np.zeros((3, 3)), np.zeros(2))


class TestForceFiles(unittest.TestCase):
    """Feature: Force files hold ``fx fy fz`` per atom at full precision."""

    def test_written_forces_read_back_exactly(self):
        forces = ForceSet(np.random.default_rng(2).standard_normal((5, 3)))
        stream = io.StringIO()

        write_forces(stream, forces)

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "forces.txt"
            path.write_text(stream.getvalue())
            np.testing.assert_array_equal(read_forces(path).values, forces.values)
        self.assertEqual(len(stream.getvalue().splitlines()), 5)


class TestReordering(unittest.TestCase):
    """Feature: Atoms with overlapping supports are issued at least a window apart.

    Background: A slot with no hazard-free atom becomes a bubble.
    """

    def test_coincident_atoms_need_bubbles(self):
        # GIVEN five atoms at the same position
        atoms = AtomSet(np.full((5, 3), 0.5), np.ones(5))

        # WHEN they are reordered with a window of 3
        result = reorder_atoms(atoms, 16, window=3)

        # THEN every atom after the first waits two slots
        self.assertEqual(result.stalls, 8)
        self.assertEqual(result.slots, 13)
        self.assertEqual(result.order.tolist(), [0, 1, 2, 3, 4])

    def test_distant_atoms_interleave(self):
        # GIVEN two pairs of coincident atoms far apart on the grid
        atoms = AtomSet([[0.1] * 3, [0.1] * 3, [0.6] * 3, [0.6] * 3], np.ones(4))

        # WHEN reordered with a window of 2
        result = reorder_atoms(atoms, 16, window=2)

        # THEN the pairs alternate without bubbles
        self.assertEqual(result.order.tolist(), [0, 2, 1, 3])
        self.assertEqual(result.stalls, 0)

    def test_supports_overlap_across_the_boundary(self):
        atoms = AtomSet([[0.01, 0.5, 0.5], [0.97, 0.5, 0.5]], np.ones(2))

        self.assertEqual(reorder_atoms(atoms, 16, window=2).stalls, 1)

    def test_window_of_one_keeps_input_order(self):
        atoms = random_neutral(20, seed=3)

        result = reorder_atoms(atoms, 16, window=1)

        self.assertEqual(result.order.tolist(), list(range(20)))
        self.assertEqual(result.stalls, 0)

    def test_window_must_be_positive(self):
        with self.assertRaises(SpmeError):
            reorder_atoms(random_neutral(2), 16, window=0)


class TestGreensFile(unittest.TestCase):
    """Feature: An influence function can be stored as a PMEV volume and loaded back.

    Background: Only the real part of the stored volume is used.
    """

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_stored_influence_function_gives_identical_forces(self):
        # GIVEN a generated influence function written to a PMEV file
        generated = make_greens(16, default_beta(16))
        path = Path(self.tmp.name) / "greens.pmev"
        write_volume(path, generated.volume)

        # WHEN it is loaded back and used by the pipeline
        loaded = GreensVolume.from_volume(read_volume(path))
        atoms = random_neutral(12, seed=3)
        expected = lr_pipeline(atoms, 16, generated)
        actual = lr_pipeline(atoms, 16, loaded)

        # THEN values and forces are identical
        np.testing.assert_array_equal(loaded.values, generated.values)
        np.testing.assert_array_equal(actual.forces.values, expected.forces.values)
        self.assertEqual(actual.energy, expected.energy)
