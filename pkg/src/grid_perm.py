#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Volume storage, generalized sample addressing and bit-dimension permutations.

A volume of ``nx * ny * nz`` samples (each extent a power of two) is stored flat with X
varying fastest. Every flat address is then a bit string whose bits carry a label such
as ``X0`` (lowest X bit) or ``Z4``. A data reordering that only moves address bits around
is a :class:`PermutationSpec`: the element at source address ``a`` moves to the address
``b`` whose bit at the position of label ``L`` in ``output_order`` equals the bit of
``a`` at the position of ``L`` in ``input_order``.

Label lists are always written lowest-order bit first, both in code and in control
files::

    # 3-bit reversal
    in:  X0 X1 X2
    out: X2 X1 X0
"""

import functools
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

AXES: Tuple[str, ...] = ("X", "Y", "Z")
MIN_EXTENT = 8

PMEV_MAGIC = b"PMEV"
PMEV_VERSION = 1
PMEV_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("nx", "<u4"),
        ("ny", "<u4"),
        ("nz", "<u4"),
        ("dtype", "<u4"),
    ]
)
PMEV_PAYLOAD = {0: np.dtype("<c8"), 1: np.dtype("<c16")}

_LABEL_RE = re.compile(r"^([XYZ])([0-9]+)$")


class PermutationError(Exception):
    """Raised when a permutation spec is invalid or cannot be applied."""

    def __init__(self, message: str, details: Optional[str] = None):
        self.message = message
        self.details = details

        super().__init__(self.message)


class PermutationParseError(PermutationError):
    """Raised when a permutation control file cannot be parsed."""

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column

        super().__init__(f"line {line}, column {column}: {message}")


class PermutationLengthError(PermutationError):
    """Raised when a sequence does not match the size addressed by a spec."""


class VolumeError(Exception):
    """Raised when a volume has inconsistent extents or data."""

    def __init__(self, message: str):
        self.message = message

        super().__init__(self.message)


class VolumeFormatError(VolumeError):
    """Raised when a PMEV volume file is malformed."""


def is_power_of_two(value: int) -> bool:
    """Whether an integer is a positive power of two."""
    return value > 0 and value & (value - 1) == 0


def log2_exact(value: int) -> int:
    """Base-2 logarithm of a power of two.

    Raises:
        ValueError: if the value is not a positive power of two.
    """
    if not is_power_of_two(value):
        raise ValueError(f"{value} is not a power of two")
    return value.bit_length() - 1


@dataclass(frozen=True, order=True)
class BitLabel:
    """One bit of a generalized sample address, e.g. ``Y3``."""

    axis: str
    index: int

    def __post_init__(self):
        if self.axis not in AXES:
            raise PermutationError(f"unknown axis {self.axis!r}")
        if self.index < 0:
            raise PermutationError(f"negative bit index in {self.axis}{self.index}")

    def __str__(self) -> str:
        return f"{self.axis}{self.index}"

    @classmethod
    def parse(cls, token: str) -> "BitLabel":
        """Parse a label token such as ``X0``.

        Raises:
            PermutationError: if the token is malformed.
        """
        match = _LABEL_RE.match(token)
        if not match:
            raise PermutationError(f"malformed label {token!r}")
        return cls(match.group(1), int(match.group(2)))


def labels(axis: str, start: int, stop: int) -> Tuple[BitLabel, ...]:
    """Labels ``axis{start}`` to ``axis{stop - 1}``, lowest first."""
    return tuple(BitLabel(axis, i) for i in range(start, stop))


def natural_order(nx: int, ny: int, nz: int) -> Tuple[BitLabel, ...]:
    """Address labels of an X-fastest volume, lowest-order bit first."""
    bx, by, bz = (log2_exact(n) for n in (nx, ny, nz))
    return labels("X", 0, bx) + labels("Y", 0, by) + labels("Z", 0, bz)


@dataclass(frozen=True)
class PermutationSpec:
    """A relabeling of address bits from ``input_order`` to ``output_order``."""

    input_order: Tuple[BitLabel, ...]
    output_order: Tuple[BitLabel, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_order", tuple(self.input_order))
        object.__setattr__(self, "output_order", tuple(self.output_order))
        for name, order in (("input", self.input_order), ("output", self.output_order)):
            seen = set()
            for label in order:
                if label in seen:
                    raise PermutationError(f"duplicate label {label} in {name} order")
                seen.add(label)
        if set(self.input_order) != set(self.output_order):
            missing = sorted(set(self.input_order) ^ set(self.output_order))
            raise PermutationError(
                "input and output label sets differ",
                details=" ".join(str(label) for label in missing),
            )

    def __len__(self) -> int:
        return len(self.input_order)

    def __str__(self) -> str:
        return format_perm_file(self).strip().replace("\n", " / ")

    @property
    def size(self) -> int:
        """Number of elements addressed by this spec."""
        return 1 << len(self)

    @property
    def is_identity(self) -> bool:
        """Whether every label keeps its bit position."""
        return self.input_order == self.output_order

    def inverse(self) -> "PermutationSpec":
        """The spec undoing this one."""
        return PermutationSpec(self.output_order, self.input_order)

    def bind(self, nx: int, ny: int, nz: int) -> "PermutationSpec":
        """Check that this spec addresses exactly the bits of a volume.

        Raises:
            PermutationError: if the label set does not match the volume's bit widths.
        """
        expected = set(natural_order(nx, ny, nz))
        if set(self.input_order) != expected:
            raise PermutationError(
                f"spec labels do not match a {nx}x{ny}x{nz} volume",
                details=" ".join(str(label) for label in sorted(set(self.input_order) ^ expected)),
            )
        return self


def bit_reversal_spec(n: int, axis: str = "X") -> PermutationSpec:
    """Full bit reversal of an ``n``-point axis."""
    order = labels(axis, 0, log2_exact(n))
    return PermutationSpec(order, tuple(reversed(order)))


def axis_first_spec(shape: Sequence[int], axis: str) -> PermutationSpec:
    """Spec that makes one axis' bits lowest, keeping the others in natural order.

    Applied to a natural-order volume this lays out each pencil along ``axis``
    contiguously. For ``axis == "Z"`` the result is ``Z.. X.. Y..``, which is also the
    layout pipelines hold after a Z-slab to Y-slab corner turn.
    """
    natural = natural_order(*shape)
    first = tuple(label for label in natural if label.axis == axis)
    rest = tuple(label for label in natural if label.axis != axis)
    return PermutationSpec(natural, first + rest)


def corner_turn_spec(shape: Sequence[int]) -> PermutationSpec:
    """Global relabeling of a Z-slab to Y-slab corner turn: ``X.. Y.. Z..`` to ``Z.. X.. Y..``."""
    return axis_first_spec(shape, "Z")


def lane_input_order(n: int, lanes: int = 8) -> PermutationSpec:
    """Input ordering of the vector FFT unit: bit-reversed by lane, in order by vector.

    Raises:
        PermutationError: if ``n`` or ``lanes`` is not a power of two, or lanes exceed n.
    """
    if not (is_power_of_two(n) and is_power_of_two(lanes)):
        raise PermutationError(f"lane ordering needs powers of two, got n={n}, lanes={lanes}")
    if lanes > n:
        raise PermutationError(f"{lanes} lanes do not fit a {n}-point transform")
    bits = log2_exact(n)
    lane_bits = log2_exact(lanes)
    natural = labels("X", 0, bits)
    reordered = tuple(reversed(natural[:lane_bits])) + natural[lane_bits:]
    return PermutationSpec(natural, reordered)


@functools.lru_cache(maxsize=256)
def _source_index(
    input_order: Tuple[BitLabel, ...], output_order: Tuple[BitLabel, ...]
) -> np.ndarray:
    """Gather table: ``out[b] = in[table[b]]``."""
    logger.debug("building index map for %d-bit permutation", len(input_order))
    in_pos: Dict[BitLabel, int] = {label: i for i, label in enumerate(input_order)}
    dest = np.arange(1 << len(input_order), dtype=np.int64)
    source = np.zeros_like(dest)
    for out_bit, label in enumerate(output_order):
        source |= ((dest >> out_bit) & 1) << in_pos[label]
    source.setflags(write=False)
    return source


def permutation_table(spec: PermutationSpec) -> np.ndarray:
    """Source address of every destination address (read-only, cached)."""
    return _source_index(spec.input_order, spec.output_order)


def apply_permutation(sequence: Union[np.ndarray, Sequence], spec: PermutationSpec) -> np.ndarray:
    """Move every element to its relabeled address.

    A 2D ``(batch, 2**len(spec))`` array has each row permuted independently.

    Raises:
        PermutationLengthError: if the last dimension is not ``2**len(spec)``.
    """
    data = np.asarray(sequence)
    if data.ndim == 0 or data.shape[-1] != spec.size:
        raise PermutationLengthError(
            f"sequence length {data.shape[-1] if data.ndim else 0} does not match "
            f"{len(spec)}-bit spec ({spec.size} elements)"
        )
    if spec.is_identity:
        return data.copy()
    return data[..., permutation_table(spec)]


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0]


def parse_perm_file(text: str) -> PermutationSpec:
    """Parse a permutation control file.

    The file has exactly one ``in:`` line and one ``out:`` line, each a whitespace
    separated list of labels; ``#`` starts a comment.

    Raises:
        PermutationParseError: on malformed tokens, duplicate labels, label sets that
            differ, and missing or repeated lines; line and column are 1-based.
    """
    orders: Dict[str, List[BitLabel]] = {}
    columns: Dict[str, Dict[BitLabel, int]] = {}
    line_of: Dict[str, int] = {}
    line_end: Dict[str, int] = {}

    lines = text.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        content = _strip_comment(raw)
        if not content.strip():
            continue
        match = re.match(r"^(\s*)(in|out)\s*:", content)
        if not match:
            column = len(content) - len(content.lstrip()) + 1
            raise PermutationParseError("expected an 'in:' or 'out:' line", lineno, column)
        key = match.group(2)
        if key in orders:
            raise PermutationParseError(
                f"repeated '{key}:' line (first on line {line_of[key]})",
                lineno,
                len(match.group(1)) + 1,
            )

        order: List[BitLabel] = []
        cols: Dict[BitLabel, int] = {}
        for token in re.finditer(r"\S+", content[match.end() :]):
            column = match.end() + token.start() + 1
            if not _LABEL_RE.match(token.group()):
                raise PermutationParseError(f"malformed label {token.group()!r}", lineno, column)
            label = BitLabel.parse(token.group())
            if label in cols:
                raise PermutationParseError(f"duplicate label {label}", lineno, column)
            cols[label] = column
            order.append(label)
        if not order:
            raise PermutationParseError(f"'{key}:' line has no labels", lineno, match.end() + 1)

        orders[key] = order
        columns[key] = cols
        line_of[key] = lineno
        line_end[key] = len(content.rstrip()) + 1

    for key in ("in", "out"):
        if key not in orders:
            raise PermutationParseError(f"missing '{key}:' line", max(len(lines), 1), 1)

    extra = [label for label in orders["out"] if label not in columns["in"]]
    if extra:
        label = extra[0]
        raise PermutationParseError(
            f"label {label} is not in the input order", line_of["out"], columns["out"][label]
        )
    missing = [label for label in orders["in"] if label not in columns["out"]]
    if missing:
        raise PermutationParseError(
            f"label {missing[0]} is missing from the output order",
            line_of["out"],
            line_end["out"],
        )

    return PermutationSpec(tuple(orders["in"]), tuple(orders["out"]))


def format_perm_file(spec: PermutationSpec) -> str:
    """Render a spec as a control file."""
    return (
        "in: "
        + " ".join(str(label) for label in spec.input_order)
        + "\nout: "
        + " ".join(str(label) for label in spec.output_order)
        + "\n"
    )


class Volume3D:
    """Dense complex scalar field on an ``nx * ny * nz`` grid, X varying fastest."""

    def __init__(self, nx: int, ny: int, nz: int, data: Optional[Iterable] = None):
        for name, extent in (("nx", nx), ("ny", ny), ("nz", nz)):
            if not is_power_of_two(int(extent)) or extent < MIN_EXTENT:
                raise VolumeError(f"{name}={extent} is not a power of two >= {MIN_EXTENT}")
        self.nx, self.ny, self.nz = int(nx), int(ny), int(nz)

        if data is None:
            flat = np.zeros(self.size, dtype=np.complex128)
        else:
            flat = np.asarray(data, dtype=np.complex128).reshape(-1)
        if flat.size != self.size:
            raise VolumeError(f"data has {flat.size} samples, expected {self.size}")
        self.data = flat

    def __repr__(self) -> str:
        return f"Volume3D({self.nx}, {self.ny}, {self.nz})"

    @property
    def shape(self) -> Tuple[int, int, int]:
        """Extents as ``(nx, ny, nz)``."""
        return self.nx, self.ny, self.nz

    @property
    def size(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def bits(self) -> Tuple[int, int, int]:
        return log2_exact(self.nx), log2_exact(self.ny), log2_exact(self.nz)

    @classmethod
    def zeros(cls, nx: int, ny: int, nz: int) -> "Volume3D":
        return cls(nx, ny, nz)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "Volume3D":
        """Wrap an array indexed ``[z, y, x]``."""
        array = np.asarray(array)
        if array.ndim != 3:
            raise VolumeError(f"expected a 3D array, got shape {array.shape}")
        nz, ny, nx = array.shape
        return cls(nx, ny, nz, array.reshape(-1))

    def as_array(self) -> np.ndarray:
        """View indexed ``[z, y, x]``."""
        return self.data.reshape(self.nz, self.ny, self.nx)

    def copy(self) -> "Volume3D":
        return Volume3D(self.nx, self.ny, self.nz, self.data.copy())

    def permuted(self, spec: PermutationSpec) -> np.ndarray:
        """Flat data reordered by a spec bound to this volume."""
        return apply_permutation(self.data, spec.bind(*self.shape))

    def cast(self, precision: str = "single") -> "Volume3D":
        """Copy rounded through the given precision (``single`` or ``double``)."""
        if precision == "double":
            return self.copy()
        if precision != "single":
            raise VolumeError(f"unknown precision {precision!r}")
        return Volume3D(*self.shape, self.data.astype(np.complex64).astype(np.complex128))


def write_volume(path: Union[str, Path], volume: Volume3D, precision: str = "double") -> None:
    """Write a volume in PMEV format.

    Raises:
        VolumeFormatError: for an unknown precision.
    """
    code = {"single": 0, "double": 1}.get(precision)
    if code is None:
        raise VolumeFormatError(f"unknown precision {precision!r}")
    header = np.array(
        [(PMEV_MAGIC, PMEV_VERSION, volume.nx, volume.ny, volume.nz, code)], dtype=PMEV_HEADER
    )
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(volume.data.astype(PMEV_PAYLOAD[code]).tobytes())
    logger.debug("wrote %r to %s (%s precision)", volume, path, precision)


def read_volume(path: Union[str, Path]) -> Volume3D:
    """Read a PMEV volume file.

    Raises:
        VolumeFormatError: on bad magic, unsupported version or dtype, or truncation.
    """
    raw = Path(path).read_bytes()
    if len(raw) < PMEV_HEADER.itemsize:
        raise VolumeFormatError(f"{path}: truncated header")
    header = np.frombuffer(raw, dtype=PMEV_HEADER, count=1)[0]
    if bytes(header["magic"]) != PMEV_MAGIC:
        raise VolumeFormatError(f"{path}: bad magic {bytes(header['magic'])!r}")
    if int(header["version"]) != PMEV_VERSION:
        raise VolumeFormatError(f"{path}: unsupported version {int(header['version'])}")
    payload = PMEV_PAYLOAD.get(int(header["dtype"]))
    if payload is None:
        raise VolumeFormatError(f"{path}: unsupported dtype code {int(header['dtype'])}")

    nx, ny, nz = int(header["nx"]), int(header["ny"]), int(header["nz"])
    expected = nx * ny * nz * payload.itemsize
    body = raw[PMEV_HEADER.itemsize :]
    if len(body) != expected:
        raise VolumeFormatError(f"{path}: payload has {len(body)} bytes, expected {expected}")
    try:
        return Volume3D(nx, ny, nz, np.frombuffer(body, dtype=payload))
    except VolumeError as e:
        raise VolumeFormatError(f"{path}: {e.message}") from e
