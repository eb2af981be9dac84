#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import tempfile
import unittest
from pathlib import Path

import numpy as np
from helpers import random_volume

from grid_perm import (
    PMEV_HEADER,
    Volume3D,
    VolumeError,
    VolumeFormatError,
    read_volume,
    write_volume,
)


class TestVolume(unittest.TestCase):
    """Feature: Volumes are power-of-two grids of at least eight points per axis."""

    def test_x_varies_fastest(self):
        volume = Volume3D(8, 16, 32, np.arange(8 * 16 * 32))

        self.assertEqual(volume.as_array().shape, (32, 16, 8))
        self.assertEqual(volume.as_array()[1, 2, 3], 1 * 128 + 2 * 8 + 3)

    def test_rejects_small_or_odd_extents(self):
        for shape in ((4, 8, 8), (8, 12, 8), (8, 8, 0)):
            with self.subTest(shape=shape), self.assertRaises(VolumeError):
                Volume3D(*shape)

    def test_rejects_wrong_sample_count(self):
        with self.assertRaises(VolumeError):
            Volume3D(8, 8, 8, np.zeros(100))

    def test_single_precision_cast_rounds(self):
        volume = Volume3D(8, 8, 8, np.full(512, 0.1 + 0.2j))

        self.assertEqual(volume.cast("single").data[0], complex(np.complex64(0.1 + 0.2j)))
        with self.assertRaises(VolumeError):
            volume.cast("half")


class TestVolumeFile(unittest.TestCase):
    """Feature: Volumes are stored in little-endian PMEV files.

    Background: A 24-byte header (magic, version, extents, dtype code) precedes the samples.
    """

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / "volume.pmev"

    def test_double_precision_is_exact(self):
        volume = random_volume((8, 16, 8), seed=3)

        write_volume(self.path, volume)
        loaded = read_volume(self.path)

        self.assertEqual(loaded.shape, (8, 16, 8))
        np.testing.assert_array_equal(loaded.data, volume.data)
        self.assertEqual(self.path.stat().st_size, PMEV_HEADER.itemsize + 1024 * 16)

    def test_single_precision_is_rounded(self):
        volume = random_volume(seed=4)

        write_volume(self.path, volume, "single")

        np.testing.assert_array_equal(read_volume(self.path).data, volume.cast("single").data)

    def test_bad_magic(self):
        write_volume(self.path, random_volume())
        raw = bytearray(self.path.read_bytes())
        raw[:4] = b"NOPE"
        self.path.write_bytes(bytes(raw))

        with self.assertRaises(VolumeFormatError):
            read_volume(self.path)

    def test_truncated_payload(self):
        write_volume(self.path, random_volume())
        self.path.write_bytes(self.path.read_bytes()[:-8])

        with self.assertRaises(VolumeFormatError) as ctx:
            read_volume(self.path)
        self.assertIn("expected", ctx.exception.message)

    def test_truncated_header(self):
        self.path.write_bytes(b"PMEV")

        with self.assertRaises(VolumeFormatError):
            read_volume(self.path)
