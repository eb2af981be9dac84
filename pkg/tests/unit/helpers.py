#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.


from typing import Tuple

import numpy as np

from grid_perm import Volume3D


def random_volume(shape: Tuple[int, int, int] = (8, 8, 8), seed: int = 0) -> Volume3D:
    rng = np.random.default_rng(seed)
    size = shape[0] * shape[1] * shape[2]
    return Volume3D(*shape, rng.standard_normal(size) + 1j * rng.standard_normal(size))

