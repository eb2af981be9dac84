#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import unittest

import numpy as np
from helpers import random_volume

from fft_core import (
    Direction,
    FftError,
    fft_3d,
    inverse_fft_3d,
    max_relative_error,
    naive_dft_3d,
    real_to_complex_wrap,
    separable_dft_3d,
)
from grid_perm import Volume3D


class TestFft3d(unittest.TestCase):
    """Feature: The 3D transform is 1D transforms along X, Y and Z.

    Background: The inverse is normalized by the number of points unless disabled.
    """

    def test_matches_naive_dft_on_cube(self):
        # GIVEN a random 8x8x8 volume
        volume = random_volume((8, 8, 8), seed=1)

        # WHEN it is transformed
        spectrum = fft_3d(volume)

        # THEN it matches summing every input point into every output point
        self.assertLess(max_relative_error(spectrum.data, naive_dft_3d(volume).data), 1e-10)

    def test_matches_naive_dft_on_rectangular_volume(self):
        volume = random_volume((16, 8, 32), seed=2)

        spectrum = fft_3d(volume)

        self.assertLess(max_relative_error(spectrum.data, separable_dft_3d(volume).data), 1e-10)

    def test_oracles_agree(self):
        volume = random_volume((8, 16, 8), seed=3)

        self.assertLess(
            max_relative_error(separable_dft_3d(volume).data, naive_dft_3d(volume).data), 1e-10
        )

    def test_numpy_agrees(self):
        volume = random_volume((16, 16, 16), seed=4)

        reference = np.fft.fftn(volume.as_array()).reshape(-1)

        self.assertLess(max_relative_error(fft_3d(volume).data, reference), 1e-12)

    def test_round_trip(self):
        volume = random_volume((32, 32, 32), seed=5)

        back = inverse_fft_3d(fft_3d(volume))

        self.assertLess(max_relative_error(back.data, volume.data), 1e-10)

    def test_unnormalized_inverse(self):
        volume = random_volume((8, 8, 8), seed=6)

        raw = fft_3d(volume, Direction.INVERSE, normalize=False)

        oracle = naive_dft_3d(volume, inverse=True)
        self.assertLess(max_relative_error(raw.data, oracle.data), 1e-10)

    def test_input_is_untouched(self):
        volume = random_volume(seed=7)
        before = volume.data.copy()

        fft_3d(volume)

        np.testing.assert_array_equal(volume.data, before)


class TestRealInput(unittest.TestCase):
    """Feature: Real grids are wrapped as complex volumes with zero imaginary parts."""

    def test_real_grid_has_hermitian_spectrum(self):
        # GIVEN a real grid
        rng = np.random.default_rng(8)
        wrapped = real_to_complex_wrap(rng.standard_normal((8, 8, 8)))

        # WHEN it is transformed
        spectrum = fft_3d(wrapped).as_array()

        # THEN F(-k) is the conjugate of F(k)
        mirrored = np.roll(spectrum[::-1, ::-1, ::-1], 1, axis=(0, 1, 2))
        np.testing.assert_allclose(spectrum, np.conj(mirrored), atol=1e-11)

    def test_complex_input_is_rejected(self):
        with self.assertRaises(FftError):
            real_to_complex_wrap(np.full((8, 8, 8), 1j))
        with self.assertRaises(FftError):
            real_to_complex_wrap(Volume3D(8, 8, 8, np.full(512, 1j)))

    def test_hermitian_spectrum_inverts_to_a_real_field(self):
        rng = np.random.default_rng(9)
        spectrum = fft_3d(real_to_complex_wrap(rng.standard_normal((16, 16, 16))))

        field = inverse_fft_3d(spectrum)

        self.assertLess(float(np.max(np.abs(field.data.imag))), 1e-10)


class TestIdentities(unittest.TestCase):
    """Feature: The transform is linear and preserves energy."""

    def test_linearity(self):
        u, v = random_volume(seed=10), random_volume(seed=11)
        a, b = 0.5 - 2j, 3.0

        combined = fft_3d(Volume3D(8, 8, 8, a * u.data + b * v.data))

        expected = a * fft_3d(u).data + b * fft_3d(v).data
        self.assertLess(max_relative_error(combined.data, expected), 1e-12)

    def test_parseval(self):
        volume = random_volume((16, 8, 32), seed=12)

        spectrum = fft_3d(volume)

        energy = float(np.sum(np.abs(volume.data) ** 2))
        self.assertAlmostEqual(
            float(np.sum(np.abs(spectrum.data) ** 2)) / volume.size / energy, 1.0, delta=1e-9
        )
