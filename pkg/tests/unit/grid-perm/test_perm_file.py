#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import unittest

import hypothesis.strategies as st
from hypothesis import given

from grid_perm import (
    PermutationParseError,
    PermutationSpec,
    bit_reversal_spec,
    format_perm_file,
    labels,
    parse_perm_file,
)


class TestParsing(unittest.TestCase):
    """Feature: Permutation control files name the input and output label orders.

    Background: One ``in:`` line and one ``out:`` line, labels lowest first, ``#`` comments.
    """

    def test_reversal_file(self):
        # GIVEN a commented control file
        text = "# 3-bit reversal\nin:  X0 X1 X2\nout: X2 X1 X0  # reversed\n"

        # WHEN it is parsed
        parsed = parse_perm_file(text)

        # THEN it is the 3-bit reversal
        self.assertEqual(parsed, bit_reversal_spec(8))

    def test_out_line_may_come_first(self):
        parsed = parse_perm_file("out: Y0 X0\n\nin: X0 Y0\n")

        self.assertEqual([str(label) for label in parsed.input_order], ["X0", "Y0"])
        self.assertEqual([str(label) for label in parsed.output_order], ["Y0", "X0"])

    @given(st.integers(1, 8).flatmap(lambda n: st.permutations(list(range(n)))))
    def test_formatted_spec_parses_back(self, order):
        natural = labels("Z", 0, len(order))
        spec = PermutationSpec(natural, tuple(natural[i] for i in order))

        self.assertEqual(parse_perm_file(format_perm_file(spec)), spec)


class TestParseErrors(unittest.TestCase):
    """Feature: Parse errors carry 1-based line and column numbers."""

    def assertParseError(self, text: str, line: int, column: int):
        with self.assertRaises(PermutationParseError) as ctx:
            parse_perm_file(text)
        self.assertEqual((ctx.exception.line, ctx.exception.column), (line, column))
        return ctx.exception

    def test_malformed_token(self):
        self.assertParseError("in: X0 Q1\nout: X0 Q1\n", 1, 8)

    def test_duplicate_label(self):
        self.assertParseError("in: X0 X1\nout: X1 X1\n", 2, 9)

    def test_label_not_in_input(self):
        error = self.assertParseError("in: X0 X1\nout: X0 X2\n", 2, 9)
        self.assertIn("X2", error.message)

    def test_label_missing_from_output(self):
        error = self.assertParseError("in: X0 X1 X2\nout: X0 X1\n", 2, 11)
        self.assertIn("X2", error.message)

    def test_missing_out_line(self):
        self.assertParseError("in: X0 X1\n", 1, 1)

    def test_repeated_in_line(self):
        self.assertParseError("in: X0\nin: X0\nout: X0\n", 2, 1)

    def test_unknown_line(self):
        self.assertParseError("in: X0\n  through: X0\n", 2, 3)

    def test_empty_label_list(self):
        self.assertParseError("in:\nout: X0\n", 1, 4)
