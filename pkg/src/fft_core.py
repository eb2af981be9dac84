#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Radix-2 FFT kernels, the 3D transform built from them, and naive DFT oracles.

The forward convention is ``X[k] = sum_j x[j] exp(-2 pi i j k / n)``; the inverse uses the
conjugate kernel and, unless disabled, divides by the number of points.

Butterflies run on batches of rows with the real and imaginary parts kept in separate
float arrays. Every output element then goes through the same sequence of IEEE
operations no matter how many rows share the batch, so a pencil transformed inside a
slab on a simulated pipeline is bitwise equal to the same pencil transformed as part of
the whole volume.
"""

import enum
import functools
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from grid_perm import (
    Volume3D,
    apply_permutation,
    axis_first_spec,
    bit_reversal_spec,
    is_power_of_two,
    lane_input_order,
)
from tracing import _span

logger = logging.getLogger(__name__)

DEFAULT_LANES = 8
NAIVE_3D_CHUNK = 256


class FftError(Exception):
    """Base class for errors raised by this module."""

    def __init__(self, message: str):
        self.message = message

        super().__init__(self.message)


class FftPlanError(FftError):
    """Raised when a plan's parameters are inconsistent."""


class FftLengthError(FftError):
    """Raised when the input length does not match the plan."""


class Direction(str, enum.Enum):
    """Transform direction."""

    FORWARD = "forward"
    INVERSE = "inverse"


class Scaling(str, enum.Enum):
    """Normalization applied by the inverse transform."""

    NONE = "none"
    INVERSE_N = "1/n"


class Ordering(str, enum.Enum):
    """Sample ordering seen by the transform.

    ``natural`` takes and returns natural order. ``lane`` takes input in lane order
    (bit-reversed by lane, in order by vector) and returns the spectrum bit-reversed, the
    way the 8-wide hardware unit streams it.
    """

    NATURAL = "natural"
    LANE = "lane"


@dataclass(frozen=True)
class FftPlan:
    """Immutable description of a 1D transform."""

    n: int
    direction: Direction = Direction.FORWARD
    lanes: int = DEFAULT_LANES
    scaling: Scaling = Scaling.INVERSE_N
    ordering: Ordering = Ordering.NATURAL

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "scaling", Scaling(self.scaling))
        object.__setattr__(self, "ordering", Ordering(self.ordering))
        if not is_power_of_two(self.n):
            raise FftPlanError(f"transform size {self.n} is not a power of two")
        if not is_power_of_two(self.lanes):
            raise FftPlanError(f"lane count {self.lanes} is not a power of two")
        if self.n < self.lanes:
            raise FftPlanError(f"transform size {self.n} is smaller than {self.lanes} lanes")

    @property
    def inverse(self) -> bool:
        return self.direction is Direction.INVERSE

    @classmethod
    def for_axis(cls, n: int, direction: Direction, scaling: Scaling = Scaling.NONE) -> "FftPlan":
        """Natural-order plan for one axis of a volume."""
        return cls(n, direction, lanes=min(DEFAULT_LANES, n), scaling=scaling)


@functools.lru_cache(maxsize=32)
def _twiddles(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """cos and sin of ``2 pi k / n`` for ``k < n / 2``."""
    angle = 2.0 * np.pi * np.arange(n // 2) / n
    cos, sin = np.cos(angle), np.sin(angle)
    cos.setflags(write=False)
    sin.setflags(write=False)
    return cos, sin


def _butterflies(re: np.ndarray, im: np.ndarray, inverse: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Iterative radix-2 DIT over rows already in bit-reversed order."""
    batch, n = re.shape
    cos, sin = _twiddles(n)
    size = 2
    while size <= n:
        half = size // 2
        step = n // size
        wr = cos[::step][:half]
        wi = sin[::step][:half] if inverse else -sin[::step][:half]

        re = re.reshape(batch, n // size, size)
        im = im.reshape(batch, n // size, size)
        ar, ai = re[..., :half], im[..., :half]
        br, bi = re[..., half:], im[..., half:]
        tr = br * wr - bi * wi
        ti = br * wi + bi * wr
        re = np.concatenate([ar + tr, ar - tr], axis=-1).reshape(batch, n)
        im = np.concatenate([ai + ti, ai - ti], axis=-1).reshape(batch, n)
        size *= 2
    return re, im


def fft_1d(x: Union[np.ndarray, Sequence[complex]], plan: FftPlan) -> np.ndarray:
    """Transform a sequence, or each row of a ``(batch, n)`` array.

    Raises:
        FftLengthError: if the last dimension is not ``plan.n``.
    """
    data = np.asarray(x, dtype=np.complex128)
    if data.ndim == 0 or data.shape[-1] != plan.n:
        raise FftLengthError(
            f"input length {data.shape[-1] if data.ndim else 0} does not match plan size {plan.n}"
        )
    rows = data.reshape(-1, plan.n)

    if plan.ordering is Ordering.LANE:
        rows = apply_permutation(rows, lane_input_order(plan.n, plan.lanes).inverse())
    rows = apply_permutation(rows, bit_reversal_spec(plan.n))

    re, im = _butterflies(rows.real.copy(), rows.imag.copy(), plan.inverse)
    if plan.inverse and plan.scaling is Scaling.INVERSE_N:
        re = re * (1.0 / plan.n)
        im = im * (1.0 / plan.n)

    out = np.empty(re.shape, dtype=np.complex128)
    out.real = re
    out.imag = im
    if plan.ordering is Ordering.LANE:
        out = apply_permutation(out, bit_reversal_spec(plan.n))
    return out.reshape(data.shape)


def transform_axis(
    flat: np.ndarray,
    shape: Sequence[int],
    axis: str,
    direction: Direction,
) -> np.ndarray:
    """Unscaled 1D transforms along every pencil of one axis of a natural-order block.

    The block's bits are permuted so the axis is lowest, the pencils are transformed as
    contiguous rows, and the inverse permutation restores natural order.
    """
    n = shape["XYZ".index(axis)]
    plan = FftPlan.for_axis(n, direction)
    if axis == "X":
        return fft_1d(flat.reshape(-1, n), plan).reshape(-1)
    spec = axis_first_spec(shape, axis)
    rows = apply_permutation(flat, spec).reshape(-1, n)
    return apply_permutation(fft_1d(rows, plan).reshape(-1), spec.inverse())


def scale(data: np.ndarray, factor: float) -> np.ndarray:
    """Multiply real and imaginary parts by a real factor."""
    out = np.empty_like(data)
    out.real = data.real * factor
    out.imag = data.imag * factor
    return out


def fft_3d(
    volume: Volume3D, direction: Union[Direction, str] = Direction.FORWARD, normalize: bool = True
) -> Volume3D:
    """3D transform as 1D transforms along X, Y, Z (Z, Y, X for the inverse).

    The inverse divides by the number of points unless ``normalize`` is false.
    """
    direction = Direction(direction)
    flat = volume.data
    order = "XYZ" if direction is Direction.FORWARD else "ZYX"
    with _span(f"fft_3d {direction.value}"):
        for axis in order:
            flat = transform_axis(flat, volume.shape, axis, direction)
        if direction is Direction.INVERSE and normalize:
            flat = scale(flat, 1.0 / volume.size)
    return Volume3D(*volume.shape, flat)


def inverse_fft_3d(volume: Volume3D) -> Volume3D:
    """Normalized inverse of :func:`fft_3d`."""
    return fft_3d(volume, Direction.INVERSE)


def real_to_complex_wrap(real: Union[np.ndarray, Volume3D]) -> Volume3D:
    """Embed a real ``[z, y, x]`` grid as a complex volume with zero imaginary parts.

    Raises:
        FftError: if the input carries nonzero imaginary parts.
    """
    if isinstance(real, Volume3D):
        if np.any(real.data.imag != 0):
            raise FftError("input volume is not real")
        return Volume3D(*real.shape, real.data.real)
    array = np.asarray(real)
    if np.iscomplexobj(array):
        if np.any(array.imag != 0):
            raise FftError("input grid is not real")
        array = array.real
    return Volume3D.from_array(array.astype(np.float64))


def naive_dft(x: Union[np.ndarray, Sequence[complex]], inverse: bool = False) -> np.ndarray:
    """O(n^2) DFT by direct summation (unscaled in both directions)."""
    data = np.asarray(x, dtype=np.complex128)
    n = data.shape[-1]
    jk = np.outer(np.arange(n), np.arange(n)) % n
    sign = 1.0 if inverse else -1.0
    kernel = np.exp(sign * 2j * np.pi * jk / n)
    return data @ kernel.T


def naive_dft_3d(volume: Volume3D, inverse: bool = False) -> Volume3D:
    """O(P^2) 3D DFT summing every input point into every output point (unscaled)."""
    nx, ny, nz = volume.shape
    total = volume.size
    z, y, x = (a.reshape(-1) for a in np.indices((nz, ny, nx)))
    # phases as integers modulo P keep the argument exact
    wx, wy, wz = total // nx, total // ny, total // nz
    sign = 1.0 if inverse else -1.0

    out = np.empty(total, dtype=np.complex128)
    for start in range(0, total, NAIVE_3D_CHUNK):
        stop = min(start + NAIVE_3D_CHUNK, total)
        phase = (
            np.outer(x[start:stop], x) * wx
            + np.outer(y[start:stop], y) * wy
            + np.outer(z[start:stop], z) * wz
        ) % total
        out[start:stop] = np.exp(sign * 2j * np.pi * phase / total) @ volume.data
    return Volume3D(nx, ny, nz, out)


def separable_dft_3d(volume: Volume3D, inverse: bool = False) -> Volume3D:
    """Naive DFT matrices applied along each axis (unscaled).

    Used for sizes where the O(P^2) oracle is too slow.
    """
    data = volume.as_array()
    for axis in (2, 1, 0):
        data = np.moveaxis(naive_dft(np.moveaxis(data, axis, -1), inverse), -1, axis)
    return Volume3D.from_array(data)


def max_relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    """Largest absolute difference relative to the largest reference magnitude."""
    reference = float(np.max(np.abs(expected)))
    diff = float(np.max(np.abs(np.asarray(actual) - np.asarray(expected))))
    if reference == 0.0:
        return diff
    return diff / reference
