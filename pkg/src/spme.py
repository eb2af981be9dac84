#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Smooth particle mesh Ewald long-range pipeline and its direct reciprocal-sum oracle.

Conventions (Gaussian units, Coulomb constant 1):

- Positions are fractional box coordinates in ``[0, 1)``; box lengths are ``(Lx, Ly, Lz)``.
- An atom at scaled coordinate ``u = K * s`` deposits onto grid indices
  ``floor(u) - 3 .. floor(u)`` with weights ``M4(u - k)``, where ``M4`` is the order-4
  cardinal B-spline.
- The influence function is
  ``G(m) = exp(-pi^2 |m|^2 / beta^2) / (pi V |m|^2) * |b(m)|^2`` with ``G(0) = 0``.
- The potential grid is ``IFFT(G * FFT(Q))`` with an unnormalized inverse, so the
  reciprocal energy is ``0.5 * sum(Q * phi)`` and matches
  ``sum_{m != 0} exp(-pi^2 |m|^2 / beta^2) / (2 pi V |m|^2) |S(m)|^2``.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Deque, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from fft_core import Direction, fft_3d, real_to_complex_wrap
from grid_perm import Volume3D, is_power_of_two
from tracing import _span

logger = logging.getLogger(__name__)

ORDER = 4
DEFAULT_EWALD_TOLERANCE = 1e-7
DEFAULT_ORACLE_TOLERANCE = 1e-12

Dims = Union[int, Sequence[int]]
Box = Union[float, Sequence[float]]


class SpmeError(Exception):
    """Base class for errors raised by this module."""

    def __init__(self, message: str):
        self.message = message

        super().__init__(self.message)


class AtomFileError(SpmeError):
    """Raised when an atom file cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SplineDomainError(SpmeError):
    """Raised when a spline is evaluated outside ``[0, 1)``."""


class GreensError(SpmeError):
    """Raised when an influence function cannot be built or loaded."""


def grid_dims(dims: Dims) -> Tuple[int, int, int]:
    """Normalize grid dimensions to ``(nx, ny, nz)``.

    Raises:
        SpmeError: if any extent is not a power of two.
    """
    if isinstance(dims, (int, np.integer)):
        dims = (int(dims),) * 3
    nx, ny, nz = (int(d) for d in dims)
    for extent in (nx, ny, nz):
        if not is_power_of_two(extent):
            raise SpmeError(f"grid extent {extent} is not a power of two")
    return nx, ny, nz


def box_lengths(box: Box) -> Tuple[float, float, float]:
    """Normalize box lengths to ``(Lx, Ly, Lz)``."""
    if isinstance(box, (int, float, np.floating, np.integer)):
        box = (float(box),) * 3
    lx, ly, lz = (float(b) for b in box)
    if min(lx, ly, lz) <= 0:
        raise SpmeError(f"box lengths must be positive, got {(lx, ly, lz)}")
    return lx, ly, lz


@dataclass(frozen=True, eq=False)
class AtomSet:
    """Positions in fractional box coordinates and charges."""

    positions: np.ndarray
    charges: np.ndarray

    def __post_init__(self):
        positions = np.array(self.positions, dtype=np.float64).reshape(-1, 3)
        charges = np.array(self.charges, dtype=np.float64).reshape(-1)
        if positions.shape[0] != charges.shape[0]:
            raise SpmeError(
                f"{positions.shape[0]} positions but {charges.shape[0]} charges"
            )
        if charges.size == 0:
            raise SpmeError("no atoms")
        if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(charges))):
            raise SpmeError("non-finite atom data")
        wrapped = np.mod(positions, 1.0)
        # a tiny negative coordinate wraps to exactly 1.0
        wrapped[wrapped >= 1.0] = 0.0
        object.__setattr__(self, "positions", wrapped)
        object.__setattr__(self, "charges", charges)

    def __len__(self) -> int:
        return self.charges.size

    @property
    def count(self) -> int:
        return self.charges.size

    @property
    def total_charge(self) -> float:
        return float(np.sum(self.charges))

    def subset(self, indices: Sequence[int]) -> "AtomSet":
        index = np.asarray(indices, dtype=np.int64)
        return AtomSet(self.positions[index], self.charges[index])

    def translated(self, shift: Sequence[float]) -> "AtomSet":
        """All atoms moved by a fractional shift (wrapped back into the box)."""
        return AtomSet(self.positions + np.asarray(shift, dtype=np.float64), self.charges)

    def with_position(self, atom: int, position: Sequence[float]) -> "AtomSet":
        positions = self.positions.copy()
        positions[atom] = position
        return AtomSet(positions, self.charges)


@dataclass(frozen=True, eq=False)
class ForceSet:
    """Per-atom force vectors, shape ``(A, 3)``."""

    values: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def net(self) -> np.ndarray:
        """Sum of all forces."""
        return self.values.sum(axis=0)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def without_net(self) -> "ForceSet":
        """Forces with the mean force removed, so they sum to zero."""
        if not self.values.size:
            return self
        return ForceSet(self.values - self.net / len(self))


def compare_forces(forces: ForceSet, reference: ForceSet) -> float:
    """Largest component difference relative to the largest reference component."""
    diff = float(np.max(np.abs(forces.values - reference.values)))
    scale = reference.max_abs
    return diff / scale if scale > 0 else diff


@dataclass(frozen=True, eq=False)
class SplineWeights:
    """Order-4 B-spline support of every atom.

    ``weights[a, axis, t]`` applies to grid index ``(base[a, axis] + t) mod K``;
    ``dweights`` are derivatives with respect to the scaled coordinate (per grid spacing).
    """

    base: np.ndarray
    weights: np.ndarray
    dweights: np.ndarray
    order: int = ORDER

    def indices(self, dims: Tuple[int, int, int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wrapped support indices per axis, each ``(A, 4)``."""
        offsets = np.arange(self.order)
        return tuple(  # type: ignore
            (self.base[:, axis, None] + offsets) % dims[axis] for axis in range(3)
        )


def _cardinal_bspline(order: int, u: np.ndarray) -> np.ndarray:
    if order == 2:
        return np.where((u >= 0.0) & (u <= 2.0), 1.0 - np.abs(u - 1.0), 0.0)
    lower = _cardinal_bspline(order - 1, u)
    shifted = _cardinal_bspline(order - 1, u - 1.0)
    return (u * lower + (order - u) * shifted) / (order - 1)


def bspline4(u: Union[float, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Order-4 weights and derivatives for a fractional offset ``u`` in ``[0, 1)``.

    ``weights[..., j] = M4(u + j)`` belongs to grid point ``floor(x) - j`` of an atom at
    scaled coordinate ``x`` with fractional part ``u``; ``dweights[..., j]`` is
    ``M3(u + j) - M3(u + j - 1)``.

    Raises:
        SplineDomainError: if any ``u`` lies outside ``[0, 1)``.
    """
    frac = np.asarray(u, dtype=np.float64)
    if np.any((frac < 0.0) | (frac >= 1.0)) or not np.all(np.isfinite(frac)):
        raise SplineDomainError(f"spline offset outside [0, 1): {u}")
    shifted = frac[..., None] + np.arange(ORDER)
    weights = _cardinal_bspline(ORDER, shifted)
    dweights = _cardinal_bspline(ORDER - 1, shifted) - _cardinal_bspline(
        ORDER - 1, shifted - 1.0
    )
    return weights, dweights


def spline_support(atoms: AtomSet, dims: Dims) -> SplineWeights:
    """Support base indices and aligned weights of every atom on a grid."""
    shape = np.asarray(grid_dims(dims), dtype=np.float64)
    scaled = atoms.positions * shape
    floor = np.floor(scaled)
    weights, dweights = bspline4(scaled - floor)
    base = (floor.astype(np.int64) - (ORDER - 1)) % shape.astype(np.int64)
    # aligned so that index t of the support is grid point base + t
    return SplineWeights(base, weights[..., ::-1].copy(), dweights[..., ::-1].copy())


def deposits(
    support: SplineWeights, charges: np.ndarray, dims: Tuple[int, int, int]
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flat grid index, z index and charge of each of the 64 deposits per atom.

    Arrays are ``(A, 64)`` ordered ``[z][y][x]`` within an atom. Spreading in any
    partition preserves this order, which keeps every grid cell's sum bitwise stable.
    """
    nx, ny, _ = dims
    ix, iy, iz = support.indices(dims)
    wx, wy, wz = (support.weights[:, axis, :] for axis in range(3))
    count = charges.shape[0]
    flat = ix[:, None, None, :] + nx * (iy[:, None, :, None] + ny * iz[:, :, None, None])
    zidx = np.broadcast_to(iz[:, :, None, None], flat.shape)
    values = (
        charges[:, None, None, None]
        * wz[:, :, None, None]
        * wy[:, None, :, None]
        * wx[:, None, None, :]
    )
    return flat.reshape(count, -1), zidx.reshape(count, -1), values.reshape(count, -1)


def spread_charges(atoms: AtomSet, dims: Dims, order: Optional[Sequence[int]] = None) -> Volume3D:
    """Charge grid from depositing every atom onto its 4x4x4 support.

    ``order`` gives the sequence in which atoms are deposited; the grid is the same up
    to rounding for any order.
    """
    shape = grid_dims(dims)
    nx, ny, nz = shape
    if order is not None:
        atoms = atoms.subset(order)
    with _span("spread charges"):
        flat, _, values = deposits(spline_support(atoms, shape), atoms.charges, shape)
        grid = np.bincount(flat.reshape(-1), weights=values.reshape(-1), minlength=nx * ny * nz)
    return real_to_complex_wrap(grid.reshape(nz, ny, nx))


def _signed_index(extent: int) -> np.ndarray:
    index = np.arange(extent)
    return np.where(index <= extent // 2, index, index - extent)


def euler_factor(extent: int) -> np.ndarray:
    """``|b(m)|^2`` of order-4 splines for every index along one axis."""
    m = np.abs(_signed_index(extent)).astype(np.float64)
    knots = _cardinal_bspline(ORDER, np.arange(1, ORDER, dtype=np.float64))
    angle = 2.0 * np.pi * np.outer(m, np.arange(ORDER - 1)) / extent
    re = np.cos(angle) @ knots
    im = np.sin(angle) @ knots
    return 1.0 / (re * re + im * im)


@dataclass(frozen=True, eq=False)
class GreensVolume:
    """Reciprocal-space influence function, indexed ``[z, y, x]``."""

    values: np.ndarray
    beta: float = 0.0
    box: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise GreensError(f"influence function must be 3D, got shape {values.shape}")
        if values.flat[0] != 0.0:
            raise GreensError("influence function must vanish at m = 0")
        if np.any(values < 0.0) or not np.all(np.isfinite(values)):
            raise GreensError("influence function must be finite and non-negative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "box", box_lengths(self.box))

    @property
    def dims(self) -> Tuple[int, int, int]:
        nz, ny, nx = self.values.shape
        return nx, ny, nz

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @property
    def volume(self) -> Volume3D:
        return Volume3D.from_array(self.values.astype(np.complex128))

    @classmethod
    def from_volume(cls, volume: Volume3D, box: Box = 1.0) -> "GreensVolume":
        """Load from a volume's real part (e.g. a PMEV file)."""
        return cls(volume.as_array().real.copy(), beta=0.0, box=box_lengths(box))


def make_greens(dims: Dims, beta: float, box: Box = 1.0) -> GreensVolume:
    """Smooth-PME influence function with order-4 Euler factors.

    Raises:
        GreensError: if ``beta`` is not positive.
    """
    if not beta > 0:
        raise GreensError(f"Ewald parameter beta must be positive, got {beta}")
    nx, ny, nz = grid_dims(dims)
    lengths = box_lengths(box)
    volume = lengths[0] * lengths[1] * lengths[2]

    mx = _signed_index(nx) / lengths[0]
    my = _signed_index(ny) / lengths[1]
    mz = _signed_index(nz) / lengths[2]
    msq = mz[:, None, None] ** 2 + my[None, :, None] ** 2 + mx[None, None, :] ** 2
    bsq = (
        euler_factor(nz)[:, None, None]
        * euler_factor(ny)[None, :, None]
        * euler_factor(nx)[None, None, :]
    )
    msq[0, 0, 0] = 1.0
    values = np.exp(-(np.pi**2) * msq / beta**2) / (np.pi * volume * msq) * bsq
    values[0, 0, 0] = 0.0
    logger.debug("influence function %dx%dx%d, beta=%g", nx, ny, nz, beta)
    return GreensVolume(values, beta=beta, box=lengths)


def default_beta(dims: Dims, box: Box = 1.0, tolerance: float = DEFAULT_EWALD_TOLERANCE) -> float:
    """Ewald parameter whose Gaussian falls to ``tolerance`` at a third of the grid Nyquist.

    The wavenumber used is ``K / (6 L)`` of the coarsest axis.
    """
    shape = grid_dims(dims)
    lengths = box_lengths(box)
    k = min(extent / (6.0 * length) for extent, length in zip(shape, lengths))
    return math.pi * k / math.sqrt(math.log(1.0 / tolerance))


def default_kmax(beta: float, box: Box = 1.0, tolerance: float = DEFAULT_ORACLE_TOLERANCE) -> int:
    """Smallest integer radius beyond which every Gaussian term is below ``tolerance``."""
    shortest = min(box_lengths(box))
    kmax = max(1, int(math.ceil(beta * shortest * math.sqrt(math.log(1.0 / tolerance)) / math.pi)))
    while math.exp(-((math.pi * kmax / shortest) ** 2) / beta**2) >= tolerance:
        kmax += 1
    return kmax


def apply_greens(spectrum: np.ndarray, greens: np.ndarray) -> np.ndarray:
    """Pointwise product of a complex spectrum with a real influence function."""
    out = np.empty_like(spectrum)
    out.real = spectrum.real * greens
    out.imag = spectrum.imag * greens
    return out


def interpolate_forces(
    potential: Volume3D,
    atoms: AtomSet,
    box: Box = 1.0,
    support: Optional[SplineWeights] = None,
    z_mask: Optional[np.ndarray] = None,
) -> ForceSet:
    """Forces from the gradient of the interpolated potential.

    ``z_mask`` (a boolean per grid plane) restricts the sum to owned planes, giving the
    partial force of a pipeline holding only part of the grid.
    """
    shape = potential.shape
    lengths = box_lengths(box)
    if support is None:
        support = spline_support(atoms, shape)
    ix, iy, iz = support.indices(shape)
    w = support.weights
    dw = support.dweights * (np.asarray(shape, dtype=np.float64) / np.asarray(lengths))[:, None]

    with _span("interpolate forces"):
        grid = potential.as_array().real
        phi = grid[iz[:, :, None, None], iy[:, None, :, None], ix[:, None, None, :]]
        if z_mask is not None:
            phi = np.where(z_mask[iz][:, :, None, None], phi, 0.0)
        # broadcast per-axis factors onto the [z][y][x] support
        wx, dx = w[:, 0, None, None, :], dw[:, 0, None, None, :]
        wy, dy = w[:, 1, None, :, None], dw[:, 1, None, :, None]
        wz, dz = w[:, 2, :, None, None], dw[:, 2, :, None, None]
        count = atoms.count
        gx = (phi * wz * wy * dx).reshape(count, -1).sum(axis=1)
        gy = (phi * wz * dy * wx).reshape(count, -1).sum(axis=1)
        gz = (phi * dz * wy * wx).reshape(count, -1).sum(axis=1)
        gradient = np.stack([gx, gy, gz], axis=1)
    return ForceSet(-atoms.charges[:, None] * gradient)


@dataclass(frozen=True, eq=False)
class ReorderResult:
    """Hazard-free issue order of atoms and the bubbles it needed."""

    order: np.ndarray
    stalls: int

    @property
    def slots(self) -> int:
        """Pipeline slots used, atoms plus bubbles."""
        return int(self.order.size) + self.stalls


def _supports_overlap(a: np.ndarray, b: np.ndarray, dims: Tuple[int, int, int]) -> bool:
    for axis, extent in enumerate(dims):
        forward = (b[axis] - a[axis]) % extent
        backward = (a[axis] - b[axis]) % extent
        if forward > ORDER - 1 and backward > ORDER - 1:
            return False
    return True


def reorder_atoms(atoms: AtomSet, dims: Dims, window: int) -> ReorderResult:
    """Greedy issue order keeping overlapping supports at least ``window`` slots apart.

    Each slot takes the first pending atom whose support is disjoint from the atoms in
    the previous ``window - 1`` slots; when there is none, the slot is a bubble.

    Raises:
        SpmeError: if ``window`` is below 1.
    """
    if window < 1:
        raise SpmeError(f"reorder window must be at least 1, got {window}")
    shape = grid_dims(dims)
    base = spline_support(atoms, shape).base
    pending: List[int] = list(range(atoms.count))
    recent: Deque[Optional[int]] = deque(maxlen=window - 1)
    order: List[int] = []
    stalls = 0

    while pending:
        for position, candidate in enumerate(pending):
            if not any(
                previous is not None and _supports_overlap(base[candidate], base[previous], shape)
                for previous in recent
            ):
                order.append(candidate)
                recent.append(candidate)
                del pending[position]
                break
        else:
            stalls += 1
            recent.append(None)

    if stalls:
        logger.debug(
            "reordering %d atoms with window %d needed %d stalls", atoms.count, window, stalls
        )
    return ReorderResult(np.asarray(order, dtype=np.int64), stalls)


@dataclass(frozen=True, eq=False)
class LrResult:
    """Outputs of one long-range evaluation."""

    energy: float
    forces: ForceSet
    charge_grid: Volume3D
    potential: Volume3D
    stalls: int = 0


def check_greens(dims: Tuple[int, int, int], greens: GreensVolume) -> None:
    if greens.dims != dims:
        raise GreensError(f"influence function is {greens.dims}, grid is {dims}")


def lr_pipeline(
    atoms: AtomSet,
    dims: Dims,
    greens: GreensVolume,
    reorder_window: int = 0,
    remove_net_force: bool = True,
) -> LrResult:
    """Spread, transform, multiply by the influence function, transform back, interpolate.

    With a nonzero ``reorder_window`` atoms are spread in hazard-free order. Grid aliasing
    leaves a small net force; ``remove_net_force`` subtracts its mean from every atom.
    With it off, forces are the exact gradient of the grid energy.
    """
    shape = grid_dims(dims)
    check_greens(shape, greens)
    order = None
    stalls = 0
    if reorder_window > 0:
        reordered = reorder_atoms(atoms, shape, reorder_window)
        order, stalls = reordered.order, reordered.stalls

    charge = spread_charges(atoms, shape, order)
    spectrum = fft_3d(charge, Direction.FORWARD)
    with _span("greens multiply"):
        product = Volume3D(*shape, apply_greens(spectrum.data, greens.flat))
    potential = fft_3d(product, Direction.INVERSE, normalize=False)
    energy = 0.5 * float(np.dot(charge.data.real, potential.data.real))
    forces = interpolate_forces(potential, atoms, greens.box)
    if remove_net_force:
        forces = forces.without_net()
    logger.debug("lr pipeline on %d atoms: energy %.12g", atoms.count, energy)
    return LrResult(energy, forces, charge, potential, stalls)


def reciprocal_vectors(kmax: int) -> np.ndarray:
    """Integer vectors ``n`` with ``0 < |n| <= kmax``, shape ``(K, 3)``."""
    span = np.arange(-kmax, kmax + 1)
    grid = np.stack(np.meshgrid(span, span, span, indexing="ij"), axis=-1).reshape(-1, 3)
    norm = np.sum(grid * grid, axis=1)
    return grid[(norm > 0) & (norm <= kmax * kmax)]


def direct_recip_oracle(
    atoms: AtomSet, beta: float, kmax: int, box: Box = 1.0
) -> Tuple[float, ForceSet]:
    """Reciprocal Ewald energy and forces from exact structure factors.

    Raises:
        SpmeError: if ``beta`` or ``kmax`` is not positive.
    """
    if not beta > 0 or kmax < 1:
        raise SpmeError(f"oracle needs beta > 0 and kmax >= 1, got {beta}, {kmax}")
    lengths = np.asarray(box_lengths(box))
    volume = float(np.prod(lengths))

    with _span("direct reciprocal oracle"):
        n = reciprocal_vectors(kmax)
        m = n / lengths
        msq = np.sum(m * m, axis=1)
        coeff = np.exp(-(np.pi**2) * msq / beta**2) / (2.0 * np.pi * volume * msq)

        phase = 2.0 * np.pi * (n @ atoms.positions.T)
        cos, sin = np.cos(phase), np.sin(phase)
        s_re = cos @ atoms.charges
        s_im = sin @ atoms.charges
        energy = float(np.sum(coeff * (s_re * s_re + s_im * s_im)))

        # Im(conj(S) exp(2 pi i n.s_j)) per vector and atom
        im = s_re[:, None] * sin - s_im[:, None] * cos
        forces = 4.0 * np.pi * atoms.charges[:, None] * ((coeff[:, None] * im).T @ m)
    return energy, ForceSet(forces)


def random_neutral(count: int, seed: int = 0) -> AtomSet:
    """Uniformly placed atoms with zero net charge."""
    rng = np.random.default_rng(seed)
    positions = rng.random((count, 3))
    charges = rng.uniform(-1.0, 1.0, count)
    charges -= charges.mean()
    return AtomSet(positions, charges)


def parse_atoms(text: str) -> AtomSet:
    """Parse ``x y z q`` lines; ``#`` starts a comment, blank lines are skipped.

    Raises:
        AtomFileError: on malformed lines (with line number) or when no atoms remain.
    """
    rows: List[List[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        fields = content.split()
        if len(fields) != 4:
            raise AtomFileError(f"expected 'x y z q', got {len(fields)} fields", lineno)
        try:
            values = [float(f) for f in fields]
        except ValueError as e:
            raise AtomFileError(f"not a number: {e}", lineno) from e
        if not all(math.isfinite(v) for v in values):
            raise AtomFileError("non-finite value", lineno)
        rows.append(values)
    if not rows:
        raise AtomFileError("no atoms")
    data = np.asarray(rows)
    return AtomSet(data[:, :3], data[:, 3])


def read_atoms(path: Union[str, Path]) -> AtomSet:
    """Read an atom file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise AtomFileError(f"cannot read {path}: {e.strerror}") from e
    return parse_atoms(text)


def format_atoms(atoms: AtomSet) -> str:
    return "".join(
        f"{x!r} {y!r} {z!r} {q!r}\n"
        for (x, y, z), q in zip(atoms.positions.tolist(), atoms.charges.tolist())
    )


def write_forces(stream: TextIO, forces: ForceSet) -> None:
    """Write ``fx fy fz`` per atom."""
    for fx, fy, fz in forces.values.tolist():
        stream.write(f"{fx:.17g} {fy:.17g} {fz:.17g}\n")


def read_forces(path: Union[str, Path]) -> ForceSet:
    """Read a force file written by :func:`write_forces`."""
    values = np.loadtxt(path, dtype=np.float64, ndmin=2)
    return ForceSet(values.reshape(-1, 3))
