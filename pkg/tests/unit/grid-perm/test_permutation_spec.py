#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
import unittest

import hypothesis.strategies as st
import numpy as np
from hypothesis import given

from grid_perm import (
    BitLabel,
    PermutationError,
    PermutationLengthError,
    PermutationSpec,
    apply_permutation,
    axis_first_spec,
    bit_reversal_spec,
    labels,
    lane_input_order,
    natural_order,
    parse_perm_file,
    permutation_table,
)

logger = logging.getLogger(__name__)


def spec(input_order: str, output_order: str) -> PermutationSpec:
    return PermutationSpec(
        tuple(BitLabel.parse(t) for t in input_order.split()),
        tuple(BitLabel.parse(t) for t in output_order.split()),
    )


class TestBitReversal(unittest.TestCase):
    """Feature: A bit permutation moves every element to its relabeled address.

    Background: Labels are listed lowest-order bit first. The element at address ``a`` moves
    to the address whose bit at each label's output position equals the bit of ``a`` at that
    label's input position.
    """

    def test_three_bit_reversal(self):
        # GIVEN a 3-bit reversal
        reversal = spec("X0 X1 X2", "X2 X1 X0")

        # WHEN it is applied to the identity sequence
        out = apply_permutation(np.arange(8), reversal)

        # THEN the result is the bit-reversal ordering
        self.assertEqual(out.tolist(), [0, 4, 2, 6, 1, 5, 3, 7])

    def test_swapping_two_low_bits(self):
        # GIVEN a spec that swaps the two low bits of a 3-bit address
        swap = spec("X0 X1 X2", "X1 X0 X2")

        # WHEN it is applied to the identity sequence
        out = apply_permutation(np.arange(8), swap)

        # THEN addresses 1 and 2 (and 5 and 6) trade places
        self.assertEqual(out.tolist(), [0, 2, 1, 3, 4, 6, 5, 7])

    def test_swapping_outermost_bits_of_sixteen(self):
        # GIVEN a spec that swaps bit 0 and bit 3 of a 4-bit address
        swap = spec("X0 X1 X2 X3", "X3 X1 X2 X0")

        # WHEN it is applied to the identity sequence
        out = apply_permutation(np.arange(16), swap)

        # THEN every address reads from the address with those two bits exchanged
        expected = [(i & 0b0110) | ((i & 1) << 3) | ((i >> 3) & 1) for i in range(16)]
        self.assertEqual(out.tolist(), expected)

    def test_builder_matches_literal_spec(self):
        self.assertEqual(bit_reversal_spec(8), spec("X0 X1 X2", "X2 X1 X0"))

    def test_identity_returns_a_copy(self):
        data = np.arange(16)
        identity = spec("X0 X1 X2 X3", "X0 X1 X2 X3")

        out = apply_permutation(data, identity)

        self.assertTrue(identity.is_identity)
        self.assertEqual(out.tolist(), data.tolist())
        out[0] = 99
        self.assertEqual(data[0], 0)

    @given(st.integers(1, 10))
    def test_reversal_is_an_involution(self, bits):
        """Scenario: Reversing twice restores the input."""
        # GIVEN any power-of-two length and a sequence of that length
        reversal = bit_reversal_spec(1 << bits)
        data = np.arange(1 << bits)

        # WHEN the reversal is applied twice
        twice = apply_permutation(apply_permutation(data, reversal), reversal)

        # THEN the sequence is unchanged
        self.assertEqual(twice.tolist(), data.tolist())


class TestPermutationProperties(unittest.TestCase):
    """Feature: Permutations are bijections that compose with their inverse.

    Background: A spec is any reordering of the same label set.
    """

    @given(st.integers(1, 9).flatmap(lambda n: st.permutations(list(range(n)))))
    def test_inverse_undoes_any_spec(self, order):
        """Scenario: A random relabeling followed by its inverse is the identity."""
        # GIVEN a random relabeling of an n-bit address
        natural = labels("X", 0, len(order))
        shuffled = PermutationSpec(natural, tuple(natural[i] for i in order))
        data = np.arange(shuffled.size)

        # WHEN it is applied and then inverted
        forward = apply_permutation(data, shuffled)
        restored = apply_permutation(forward, shuffled.inverse())

        # THEN the output is a permutation of the input and the inverse restores it
        self.assertEqual(sorted(forward.tolist()), data.tolist())
        self.assertEqual(restored.tolist(), data.tolist())

    def test_rows_of_a_batch_are_permuted_independently(self):
        reversal = bit_reversal_spec(8)
        batch = np.arange(24).reshape(3, 8)

        out = apply_permutation(batch, reversal)

        for row, permuted in zip(batch, out):
            self.assertEqual(permuted.tolist(), apply_permutation(row, reversal).tolist())

    def test_table_is_cached_and_read_only(self):
        reversal = bit_reversal_spec(32)

        table = permutation_table(reversal)

        self.assertIs(table, permutation_table(bit_reversal_spec(32)))
        with self.assertRaises(ValueError):
            table[0] = 1


class TestVolumeRelabeling(unittest.TestCase):
    """Feature: Address bits of a volume carry axis labels.

    Background: Volumes are stored X fastest, so the natural order is ``X.. Y.. Z..``.
    """

    def test_natural_order_of_a_volume(self):
        order = natural_order(8, 16, 8)

        self.assertEqual(
            [str(label) for label in order],
            ["X0", "X1", "X2", "Y0", "Y1", "Y2", "Y3", "Z0", "Z1", "Z2"],
        )

    def test_axis_first_lays_out_pencils_contiguously(self):
        # GIVEN an 8x8x8 volume holding each sample's own flat address
        data = np.arange(512)

        # WHEN the Z bits are moved lowest
        out = apply_permutation(data, axis_first_spec((8, 8, 8), "Z"))

        # THEN the first eight samples are the Z pencil at x=0, y=0
        self.assertEqual(out[:8].tolist(), [z * 64 for z in range(8)])
        # AND the next pencil is at x=1
        self.assertEqual(out[8:16].tolist(), [1 + z * 64 for z in range(8)])

    def test_bind_rejects_a_spec_for_another_volume(self):
        with self.assertRaises(PermutationError):
            axis_first_spec((8, 8, 8), "Y").bind(16, 8, 8)


class TestLaneOrder(unittest.TestCase):
    """Feature: The vector FFT unit takes input bit-reversed by lane and in order by vector."""

    def test_sixteen_points_over_eight_lanes(self):
        out = apply_permutation(np.arange(16), lane_input_order(16, 8))

        self.assertEqual(out.tolist(), [0, 4, 2, 6, 1, 5, 3, 7, 8, 12, 10, 14, 9, 13, 11, 15])

    def test_lane_bits_reversed_and_vector_bits_kept(self):
        def reverse_lane_bits(i: int) -> int:
            lane = i & 7
            return (i & ~7) | ((lane & 1) << 2) | (lane & 2) | (lane >> 2)

        for n in (8, 32, 64):
            with self.subTest(n=n):
                out = apply_permutation(np.arange(n), lane_input_order(n, 8))

                self.assertEqual(out.tolist(), [reverse_lane_bits(i) for i in range(n)])

    def test_thirty_two_points_relabel_only_the_low_bits(self):
        order = lane_input_order(32, 8)

        self.assertEqual([str(label) for label in order.output_order], "X2 X1 X0 X3 X4".split())

    def test_lanes_must_fit(self):
        with self.assertRaises(PermutationError):
            lane_input_order(4, 8)


class TestInvalidSpecs(unittest.TestCase):
    """Feature: Malformed specs are rejected before any data moves."""

    def test_duplicate_label(self):
        with self.assertRaises(PermutationError):
            spec("X0 X0", "X0 X0")

    def test_label_sets_differ(self):
        with self.assertRaises(PermutationError) as ctx:
            spec("X0 X1", "X0 X2")
        self.assertIn("X1", ctx.exception.details)

    def test_unknown_axis(self):
        with self.assertRaises(PermutationError):
            BitLabel("W", 0)

    def test_wrong_sequence_length(self):
        with self.assertRaises(PermutationLengthError):
            apply_permutation(np.arange(7), bit_reversal_spec(8))


class TestExchangeRelabeling(unittest.TestCase):
    """Feature: The all-to-all address listing relocates whole Z pencils.

    Background: The input side lists Y bits reversed, then X, then Z. The output side puts
    the high Z bits lowest and spreads the low Y bits over the top of the address.
    """

    LISTING = (
        "in: Y4 Y3 Y2 Y1 Y0 X0 X1 X2 X3 X4 Z0 Z1 Z2 Z3 Z4\n"
        "out: Z4 Z3 Z2 Y1 Y0 X0 X1 X2 X3 X4 Z0 Z1 Y2 Y3 Y4\n"
    )

    @staticmethod
    def bit(value, index: int):
        return (value >> index) & 1

    def source_address(self, x, y, z):
        reversed_y = sum(self.bit(y, 4 - i) << i for i in range(5))
        return reversed_y + 32 * x + 1024 * z

    def destination_address(self, x, y, z):
        b = self.bit
        return (
            b(z, 4)
            | b(z, 3) << 1
            | b(z, 2) << 2
            | b(y, 1) << 3
            | b(y, 0) << 4
            | x << 5
            | b(z, 0) << 10
            | b(z, 1) << 11
            | b(y, 2) << 12
            | b(y, 3) << 13
            | b(y, 4) << 14
        )

    def test_listing_parses(self):
        relabel = parse_perm_file(self.LISTING)

        self.assertEqual(len(relabel), 15)
        self.assertEqual(str(relabel.output_order[0]), "Z4")
        self.assertEqual(str(relabel.output_order[-1]), "Y4")

    def test_every_pencil_lands_where_index_arithmetic_predicts(self):
        # GIVEN a 32^3 volume whose samples hold their own input address
        relabel = parse_perm_file(self.LISTING)
        out = apply_permutation(np.arange(32**3), relabel)
        z = np.arange(32)

        # WHEN each of the 1024 (x, y) pencils is located in the output
        for x in range(32):
            for y in range(32):
                # THEN all 32 samples of the pencil sit at their computed addresses
                np.testing.assert_array_equal(
                    out[self.destination_address(x, y, z)], self.source_address(x, y, z)
                )

    def test_first_outputs_step_through_high_z(self):
        out = apply_permutation(np.arange(32**3), parse_perm_file(self.LISTING))

        self.assertEqual(out[:4].tolist(), [0, 16384, 8192, 24576])
