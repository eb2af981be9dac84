#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Deterministic simulation of the slab-decomposed pipeline on a cluster of pipelines.

A volume is cut into Z-slabs, one per pipeline. Each pipeline transforms X and Y, then a
corner turn (an all-to-all exchange) leaves every pipeline holding a Y-slab laid out
Z-fastest, on which Z transforms and the influence-function multiply run. A second
corner turn returns Z-slabs for the inverse Y and X transforms.

Pipelines exchange messages through in-memory queues. A round of the round-robin
schedule is two phases, send and receive, and each phase ends on a barrier. Workers
run sequentially or on a thread pool; output does not depend on which.
"""

import functools
import logging
import math
import queue
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from fft_core import Direction, FftPlan, fft_1d, scale, transform_axis
from grid_perm import (
    PermutationSpec,
    Volume3D,
    apply_permutation,
    axis_first_spec,
    is_power_of_two,
    labels,
    log2_exact,
)
from spme import (
    AtomSet,
    ForceSet,
    GreensVolume,
    LrResult,
    apply_greens,
    check_greens,
    deposits,
    grid_dims,
    interpolate_forces,
    reorder_atoms,
    spline_support,
)
from topology import TopologyKind, route
from tracing import _span

logger = logging.getLogger(__name__)

DEFAULT_FRAGMENT_BYTES = 256

_T = TypeVar("_T")


class ClusterError(Exception):
    """Base class for errors raised by this module."""

    def __init__(self, message: str):
        self.message = message

        super().__init__(self.message)


class SlabDecompositionError(ClusterError):
    """Raised when a volume cannot be cut evenly across the pipelines."""


class ScheduleError(ClusterError):
    """Raised when an all-to-all schedule breaks matching or coverage."""


class ClusterConfig(BaseModel):
    """Simulated cluster: boards, pipelines per board and their interconnect."""

    model_config = ConfigDict(frozen=True)

    nodes: int = Field(1, ge=1, description="Number of boards; a power of two.")
    pipes_per_node: int = Field(1, ge=1, description="Pipelines on each board.")
    topology: TopologyKind = Field(TopologyKind.PTOP, description="Board interconnect.")
    links_per_node: int = Field(4, ge=1, description="Network links on each board.")
    link_bandwidth_bps: float = Field(78e9, gt=0, description="Bandwidth of one link.")
    wire_bits_per_point: int = Field(64, gt=0, description="Bits sent per grid point.")
    threads: int = Field(1, ge=1, description="Worker threads; 1 runs sequentially.")

    @field_validator("nodes")
    @classmethod
    def _nodes_power_of_two(cls, value: int) -> int:
        if not is_power_of_two(value):
            raise ValueError(f"node count must be a power of two, got {value}")
        return value

    @field_validator("wire_bits_per_point")
    @classmethod
    def _whole_bytes(cls, value: int) -> int:
        if value % 8:
            raise ValueError(f"wire bits per point must be whole bytes, got {value}")
        return value

    @property
    def pipes(self) -> int:
        """Total number of pipelines, the participants of the all-to-all."""
        return self.nodes * self.pipes_per_node

    def node_of(self, pipe: int) -> int:
        return pipe // self.pipes_per_node

    def is_local(self, source: int, destination: int) -> bool:
        """Whether two pipelines share a board."""
        return self.node_of(source) == self.node_of(destination)


@dataclass(frozen=True)
class SlabAssignment:
    """Equal contiguous ranges of one axis, one per pipeline."""

    axis: str
    extent: int
    parts: int

    def __post_init__(self):
        if self.axis not in ("Y", "Z"):
            raise SlabDecompositionError(f"slabs are cut along Y or Z, not {self.axis}")
        if self.parts < 1 or self.extent % self.parts:
            raise SlabDecompositionError(
                f"{self.parts} pipelines do not divide {self.axis} extent {self.extent}"
            )

    @property
    def width(self) -> int:
        return self.extent // self.parts

    def bounds(self, part: int) -> Tuple[int, int]:
        return part * self.width, (part + 1) * self.width

    @property
    def ranges(self) -> List[range]:
        return [range(*self.bounds(part)) for part in range(self.parts)]

    def owner(self, index: int) -> int:
        return (index % self.extent) // self.width


class Transfer(NamedTuple):
    """One message of a schedule round."""

    source: int
    destination: int
    nbytes: int = 0
    local: bool = False

    def __str__(self) -> str:
        return f"{self.source}->{self.destination}[{self.nbytes}]"


@dataclass(frozen=True)
class A2ASchedule:
    """Rounds of an all-to-all exchange among ``participants``."""

    participants: int
    rounds: Tuple[Tuple[Transfer, ...], ...]

    def __len__(self) -> int:
        return len(self.rounds)

    def pairs(self) -> List[Tuple[int, int]]:
        return [(t.source, t.destination) for transfers in self.rounds for t in transfers]


def make_schedule(
    participants: int, pair_bytes: int = 0, config: Optional[ClusterConfig] = None
) -> A2ASchedule:
    """Round-robin schedule: in round ``i`` participant ``n`` sends to ``(n + i) mod N``.

    With a config, transfers between pipelines on one board are flagged local.

    Raises:
        ScheduleError: for fewer than one participant.
    """
    if participants < 1:
        raise ScheduleError(f"schedule needs at least one participant, got {participants}")
    rounds = []
    for i in range(1, participants):
        transfers = []
        for n in range(participants):
            m = (n + i) % participants
            local = config.is_local(n, m) if config is not None else False
            transfers.append(Transfer(n, m, pair_bytes, local))
        rounds.append(tuple(transfers))
    return A2ASchedule(participants, tuple(rounds))


def validate_schedule(schedule: A2ASchedule) -> None:
    """Check perfect matching within rounds and exactly-once coverage of ordered pairs.

    Raises:
        ScheduleError: naming the first violation found.
    """
    n = schedule.participants
    for index, transfers in enumerate(schedule.rounds, start=1):
        sources = [t.source for t in transfers]
        destinations = [t.destination for t in transfers]
        if len(set(sources)) != len(sources):
            raise ScheduleError(f"round {index}: a participant sends twice")
        if len(set(destinations)) != len(destinations):
            raise ScheduleError(f"round {index}: a participant receives twice")
        if any(t.source == t.destination for t in transfers):
            raise ScheduleError(f"round {index}: a participant sends to itself")

    pairs = schedule.pairs()
    expected = {(s, d) for s in range(n) for d in range(n) if s != d}
    if len(pairs) != len(set(pairs)):
        raise ScheduleError("an ordered pair is scheduled more than once")
    if set(pairs) != expected:
        missing = sorted(expected - set(pairs))
        raise ScheduleError(f"ordered pairs never scheduled: {missing[:4]}")


def format_schedule(schedule: A2ASchedule) -> str:
    """One line per round: ``round i: src->dst[bytes], ...``."""
    return "".join(
        f"round {index}: {', '.join(str(t) for t in transfers)}\n"
        for index, transfers in enumerate(schedule.rounds, start=1)
    )


class Message(NamedTuple):
    source: int
    round: int
    payload: np.ndarray


@dataclass(eq=False)
class PipelineWorker:
    """State of one simulated pipeline."""

    index: int
    node: int
    inbox: "queue.Queue[Message]" = field(default_factory=queue.Queue)
    data: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.complex128))
    received: Dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class CornerTurnStats:
    """Traffic of one corner turn."""

    rounds: int = 0
    messages: int = 0
    pair_bytes: int = 0
    total_bytes: int = 0
    offnode_bytes: int = 0
    local_bytes: int = 0


@dataclass
class ClusterStats:
    """Traffic and work split of a distributed run."""

    atoms: int = 0
    turns: List[CornerTurnStats] = field(default_factory=list)
    atoms_per_pipe: List[int] = field(default_factory=list)

    @property
    def offnode_bytes(self) -> int:
        return sum(t.offnode_bytes for t in self.turns)

    @property
    def replicated_atoms(self) -> int:
        """Extra atom copies processed because supports straddle slab boundaries."""
        if not self.atoms_per_pipe:
            return 0
        return sum(self.atoms_per_pipe) - self.atoms


class SimulatedCluster:
    """Pipelines with inboxes, a round-robin schedule and phase barriers."""

    def __init__(self, config: ClusterConfig):
        self.config = config
        self.workers = [PipelineWorker(p, config.node_of(p)) for p in range(config.pipes)]
        self.schedule = make_schedule(config.pipes, config=config)

    def run_phase(self, step: Callable[[PipelineWorker], _T]) -> List[_T]:
        """Run ``step`` on every worker and wait for all of them (a barrier)."""
        if self.config.threads == 1 or len(self.workers) == 1:
            return [step(worker) for worker in self.workers]
        with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
            return list(pool.map(step, self.workers))

    def exchange(self, outgoing: Sequence[Sequence[np.ndarray]]) -> CornerTurnStats:
        """Deliver ``outgoing[p][q]`` from pipeline ``p`` to ``q``, one round at a time.

        Afterwards each worker's ``data`` is its received chunks concatenated in source
        order.

        Raises:
            ClusterError: on a chunk count or size mismatch, or a message out of round.
        """
        pipes = len(self.workers)
        if len(outgoing) != pipes or any(len(chunks) != pipes for chunks in outgoing):
            raise ClusterError(f"every one of {pipes} pipelines must send {pipes} chunks")
        points = outgoing[0][0].size
        if any(chunk.size != points for chunks in outgoing for chunk in chunks):
            raise ClusterError("corner-turn chunks differ in size")

        pair_bytes = points * self.config.wire_bits_per_point // 8
        stats = CornerTurnStats(rounds=len(self.schedule), pair_bytes=pair_bytes)
        for worker in self.workers:
            worker.received = {worker.index: outgoing[worker.index][worker.index]}

        for round_index, transfers in enumerate(self.schedule.rounds):
            self.run_phase(functools.partial(self._send, outgoing, transfers, round_index))
            self.run_phase(functools.partial(self._receive, round_index))
            for transfer in transfers:
                stats.messages += 1
                stats.total_bytes += pair_bytes
                if self.config.is_local(transfer.source, transfer.destination):
                    stats.local_bytes += pair_bytes
                else:
                    stats.offnode_bytes += pair_bytes
            logger.debug("round %d delivered %d messages", round_index + 1, len(transfers))

        for worker in self.workers:
            worker.data = np.concatenate([worker.received[p] for p in range(pipes)])
            worker.received = {}
        return stats

    def _send(
        self,
        outgoing: Sequence[Sequence[np.ndarray]],
        transfers: Tuple[Transfer, ...],
        round_index: int,
        worker: PipelineWorker,
    ) -> None:
        destination = transfers[worker.index].destination
        payload = outgoing[worker.index][destination]
        self.workers[destination].inbox.put(Message(worker.index, round_index, payload))

    @staticmethod
    def _receive(round_index: int, worker: PipelineWorker) -> None:
        message = worker.inbox.get_nowait()
        if message.round != round_index:
            raise ClusterError(
                f"pipeline {worker.index} got a round {message.round} message "
                f"in round {round_index}"
            )
        worker.received[message.source] = message.payload


@dataclass(frozen=True)
class _TurnPlan:
    """Local relabelings around the two corner turns.

    ``z_to_y_send`` makes the destination Y-slab the highest address bits of a Z-slab;
    ``z_to_y_receive`` merges the arriving Z pieces into a Z-fastest Y-slab.
    """

    z_to_y_send: PermutationSpec
    z_to_y_receive: PermutationSpec

    @property
    def y_to_z_send(self) -> PermutationSpec:
        return self.z_to_y_receive.inverse()

    @property
    def y_to_z_receive(self) -> PermutationSpec:
        return self.z_to_y_send.inverse()


def _turn_plan(shape: Tuple[int, int, int], pipes: int) -> _TurnPlan:
    bx, by, bz = (log2_exact(n) for n in shape)
    m = log2_exact(pipes)
    x = labels("X", 0, bx)
    y_low, y_high = labels("Y", 0, by - m), labels("Y", by - m, by)
    z_low, z_high = labels("Z", 0, bz - m), labels("Z", bz - m, bz)
    return _TurnPlan(
        PermutationSpec(x + y_low + y_high + z_low, z_low + x + y_low + y_high),
        PermutationSpec(z_low + x + y_low + z_high, z_low + z_high + x + y_low),
    )


def check_decomposition(dims: Sequence[int], config: ClusterConfig) -> Tuple[int, int, int]:
    """Grid dims after checking that the pipelines divide the Z and Y extents.

    Raises:
        SlabDecompositionError: if they do not.
    """
    shape = grid_dims(dims)
    pipes = config.pipes
    for axis, extent in (("Z", shape[2]), ("Y", shape[1])):
        if extent % pipes:
            raise SlabDecompositionError(
                f"{pipes} pipelines do not divide {axis} extent {extent}"
            )
    return shape


def turn_pair_bytes(dims: Sequence[int], config: ClusterConfig) -> int:
    """Wire bytes each pipeline sends each other pipeline in one corner turn."""
    nx, ny, nz = check_decomposition(dims, config)
    return nx * ny * nz // config.pipes**2 * config.wire_bits_per_point // 8


def corner_turn(
    cluster: SimulatedCluster, shape: Tuple[int, int, int], to_axis: str = "Y"
) -> CornerTurnStats:
    """Turn the workers' slabs to the other axis.

    Z-slabs in natural local order become Z-fastest Y-slabs (``to_axis="Y"``), and back
    (``to_axis="Z"``).

    Raises:
        SlabDecompositionError: if a worker's slab is not the expected size.
    """
    pipes = len(cluster.workers)
    check_decomposition(shape, cluster.config)
    plan = _turn_plan(shape, pipes)
    if to_axis == "Y":
        send, receive = plan.z_to_y_send, plan.z_to_y_receive
    elif to_axis == "Z":
        send, receive = plan.y_to_z_send, plan.y_to_z_receive
    else:
        raise SlabDecompositionError(f"corner turns go to Y or Z slabs, not {to_axis}")

    slab_points = shape[0] * shape[1] * shape[2] // pipes
    for worker in cluster.workers:
        if worker.data.size != slab_points:
            raise SlabDecompositionError(
                f"pipeline {worker.index} holds {worker.data.size} points, expected {slab_points}"
            )

    with _span(f"corner turn to {to_axis}"):
        outgoing = cluster.run_phase(
            lambda w: np.split(apply_permutation(w.data, send), pipes)
        )
        stats = cluster.exchange(outgoing)

        def merge(worker: PipelineWorker) -> None:
            worker.data = apply_permutation(worker.data, receive)

        cluster.run_phase(merge)
    return stats


def _transform_slab(
    data: np.ndarray, local_shape: Tuple[int, int, int], axes: str, direction: Direction
) -> np.ndarray:
    for axis in axes:
        data = transform_axis(data, local_shape, axis, direction)
    return data


def _transform_pencils(data: np.ndarray, n: int, direction: Direction) -> np.ndarray:
    return fft_1d(data.reshape(-1, n), FftPlan.for_axis(n, direction)).reshape(-1)


def scatter_z(cluster: SimulatedCluster, flat: np.ndarray) -> None:
    """Give every worker its Z-slab of a natural-order volume."""
    for worker, slab in zip(cluster.workers, np.split(flat, len(cluster.workers))):
        worker.data = slab.copy()


def gather_z(cluster: SimulatedCluster) -> np.ndarray:
    return np.concatenate([w.data for w in cluster.workers])


def scatter_y(cluster: SimulatedCluster, flat: np.ndarray, shape: Tuple[int, int, int]) -> None:
    """Give every worker its Z-fastest Y-slab of a natural-order volume."""
    turned = apply_permutation(flat, axis_first_spec(shape, "Z"))
    for worker, slab in zip(cluster.workers, np.split(turned, len(cluster.workers))):
        worker.data = slab


def gather_y(cluster: SimulatedCluster, shape: Tuple[int, int, int]) -> np.ndarray:
    turned = np.concatenate([w.data for w in cluster.workers])
    return apply_permutation(turned, axis_first_spec(shape, "Z").inverse())


def distributed_fft3d(
    volume: Volume3D,
    config: ClusterConfig,
    direction: Direction = Direction.FORWARD,
    normalize: bool = True,
) -> Tuple[Volume3D, ClusterStats]:
    """3D transform on the simulated cluster; bitwise equal to :func:`fft_core.fft_3d`.

    The forward transform starts from Z-slabs and ends on Y-slabs, the inverse the
    other way round.

    Raises:
        SlabDecompositionError: if the pipelines do not divide the Y and Z extents.
    """
    direction = Direction(direction)
    shape = check_decomposition(volume.shape, config)
    nx, ny, nz = shape
    local_shape = (nx, ny, nz // config.pipes)
    cluster = SimulatedCluster(config)
    stats = ClusterStats()
    forward = direction is Direction.FORWARD
    plane_axes = "XY" if forward else "YX"

    def planes(worker: PipelineWorker) -> None:
        worker.data = _transform_slab(worker.data, local_shape, plane_axes, direction)

    def pencils(worker: PipelineWorker) -> None:
        worker.data = _transform_pencils(worker.data, nz, direction)

    with _span(f"distributed fft_3d {direction.value}"):
        if forward:
            scatter_z(cluster, volume.data)
            cluster.run_phase(planes)
            stats.turns.append(corner_turn(cluster, shape, "Y"))
            cluster.run_phase(pencils)
            flat = gather_y(cluster, shape)
        else:
            scatter_y(cluster, volume.data, shape)
            cluster.run_phase(pencils)
            stats.turns.append(corner_turn(cluster, shape, "Z"))
            cluster.run_phase(planes)
            flat = gather_z(cluster)
            if normalize:
                flat = scale(flat, 1.0 / volume.size)
    return Volume3D(*shape, flat), stats


def distributed_spread(
    atoms: AtomSet,
    dims: Sequence[int],
    config: ClusterConfig,
    order: Optional[Sequence[int]] = None,
) -> Tuple[Volume3D, List[int]]:
    """Charge grid spread slab by slab, and the atoms each pipeline processed.

    Atoms whose support straddles a slab boundary are processed by every pipeline
    they touch, each keeping only the deposits on its own planes.
    """
    shape = check_decomposition(dims, config)
    cluster = SimulatedCluster(config)
    counts = _spread_on(cluster, atoms, shape, order)
    return Volume3D(*shape, gather_z(cluster)), counts


def _spread_on(
    cluster: SimulatedCluster,
    atoms: AtomSet,
    shape: Tuple[int, int, int],
    order: Optional[Sequence[int]],
) -> List[int]:
    nx, ny, _ = shape
    slabs = SlabAssignment("Z", shape[2], len(cluster.workers))
    spread = atoms if order is None else atoms.subset(order)
    flat, zidx, values = deposits(spline_support(spread, shape), spread.charges, shape)

    def step(worker: PipelineWorker) -> int:
        # masking keeps each cell's contributions in whole-grid order
        low, high = slabs.bounds(worker.index)
        owned = (zidx >= low) & (zidx < high)
        charge = np.bincount(
            flat[owned] - low * nx * ny, weights=values[owned], minlength=nx * ny * (high - low)
        )
        worker.data = charge.astype(np.complex128)
        return int(np.count_nonzero(owned.any(axis=1)))

    with _span("spread charges"):
        return cluster.run_phase(step)


def distributed_lr_pipeline(
    atoms: AtomSet,
    dims: Sequence[int],
    greens: GreensVolume,
    config: ClusterConfig,
    reorder_window: int = 0,
    remove_net_force: bool = True,
) -> Tuple[LrResult, ClusterStats]:
    """Long-range pipeline on the simulated cluster.

    Grids and potentials are bitwise equal to :func:`spme.lr_pipeline`; energy and
    forces are sums of per-pipeline partials and agree to rounding. The net force is
    removed after the partials are summed, as in the single-node pipeline.

    Raises:
        SlabDecompositionError: if the pipelines do not divide the Y and Z extents.
        GreensError: if the influence function does not match the grid.
    """
    shape = check_decomposition(dims, config)
    check_greens(shape, greens)
    nx, ny, nz = shape
    pipes = config.pipes
    local_shape = (nx, ny, nz // pipes)
    slabs = SlabAssignment("Z", nz, pipes)
    cluster = SimulatedCluster(config)
    stats = ClusterStats(atoms=atoms.count)

    order = None
    stalls = 0
    if reorder_window > 0:
        reordered = reorder_atoms(atoms, shape, reorder_window)
        order, stalls = reordered.order, reordered.stalls

    greens_slabs = np.split(apply_permutation(greens.flat, axis_first_spec(shape, "Z")), pipes)

    def forward_planes(worker: PipelineWorker) -> None:
        worker.data = _transform_slab(worker.data, local_shape, "XY", Direction.FORWARD)

    def convolve(worker: PipelineWorker) -> None:
        spectrum = _transform_pencils(worker.data, nz, Direction.FORWARD)
        product = apply_greens(spectrum, greens_slabs[worker.index])
        worker.data = _transform_pencils(product, nz, Direction.INVERSE)

    def inverse_planes(worker: PipelineWorker) -> None:
        worker.data = _transform_slab(worker.data, local_shape, "YX", Direction.INVERSE)

    stats.atoms_per_pipe = _spread_on(cluster, atoms, shape, order)
    charge = gather_z(cluster)
    with _span("distributed fft_3d forward"):
        cluster.run_phase(forward_planes)
        stats.turns.append(corner_turn(cluster, shape, "Y"))
    with _span("greens multiply"):
        cluster.run_phase(convolve)
    with _span("distributed fft_3d inverse"):
        stats.turns.append(corner_turn(cluster, shape, "Z"))
        cluster.run_phase(inverse_planes)
    potential = gather_z(cluster)

    iz = spline_support(atoms, shape).indices(shape)[2]

    def interpolate(worker: PipelineWorker) -> Tuple[np.ndarray, np.ndarray, float]:
        low, high = slabs.bounds(worker.index)
        start, stop = low * nx * ny, high * nx * ny
        energy = 0.5 * float(np.dot(charge[start:stop].real, worker.data.real))
        touched = np.flatnonzero(((iz >= low) & (iz < high)).any(axis=1))
        if touched.size == 0:
            return touched, np.zeros((0, 3)), energy
        owned = np.zeros(nz, dtype=bool)
        owned[low:high] = True
        grid = np.zeros(nx * ny * nz, dtype=np.complex128)
        grid[start:stop] = worker.data
        partial = interpolate_forces(
            Volume3D(*shape, grid), atoms.subset(touched), greens.box, z_mask=owned
        )
        return touched, partial.values, energy

    with _span("interpolate forces"):
        partials = cluster.run_phase(interpolate)
    forces = np.zeros((atoms.count, 3))
    energy = 0.0
    # partial sums in pipeline order
    for touched, partial, part_energy in partials:
        forces[touched] += partial
        energy += part_energy

    logger.info(
        "distributed lr pipeline on %d pipelines: %d atoms, %d replicas, energy %.12g",
        pipes,
        atoms.count,
        stats.replicated_atoms,
        energy,
    )
    total = ForceSet(forces)
    result = LrResult(
        energy,
        total.without_net() if remove_net_force else total,
        Volume3D(*shape, charge),
        Volume3D(*shape, potential),
        stalls,
    )
    return result, stats


@dataclass(frozen=True)
class PackingReport:
    """Outcome of packing one all-to-all onto a multihop network."""

    nodes: int
    topology: TopologyKind
    fragments_per_message: int
    makespan_slots: int
    link_load_bound: int
    max_buffer_occupancy: int
    mean_hops: float

    @property
    def efficiency(self) -> float:
        """Link-load bound over makespan; 1.0 means the packing is optimal."""
        return self.link_load_bound / self.makespan_slots if self.makespan_slots else 1.0

    def format(self) -> str:
        return (
            f"topology {self.topology.value}, {self.nodes} nodes, "
            f"{self.fragments_per_message} fragments per message\n"
            f"makespan {self.makespan_slots} slots (link-load bound {self.link_load_bound}, "
            f"efficiency {self.efficiency:.3f})\n"
            f"max buffer occupancy {self.max_buffer_occupancy} fragments, "
            f"mean hops {self.mean_hops:.3f}\n"
        )


def _first_free(occupied: set, earliest: int) -> int:
    slot = earliest
    while slot in occupied:
        slot += 1
    return slot


def pack_multihop(
    config: ClusterConfig,
    message_bytes: int,
    fragment_bytes: int = DEFAULT_FRAGMENT_BYTES,
) -> PackingReport:
    """Greedy first-fit slot packing of a board-level all-to-all.

    Every scheduled message is cut into fragments, taken in round order, and routed
    along its shortest path. Each hop takes the earliest free slot on its directed link
    after the fragment's previous hop; a fragment waiting at an intermediate board
    occupies a buffer there.

    Raises:
        ClusterError: for non-positive message or fragment sizes.
    """
    if message_bytes < 1 or fragment_bytes < 1:
        raise ClusterError(
            f"message and fragment sizes must be positive, got {message_bytes}, {fragment_bytes}"
        )
    nodes = config.nodes
    kind = TopologyKind(config.topology)
    fragments = math.ceil(message_bytes / fragment_bytes)
    schedule = make_schedule(nodes)

    links: Dict[Tuple[int, int], set] = {}
    buffered: Dict[Tuple[int, int], int] = {}
    makespan = 0
    hops_total = 0

    with _span("pack multihop"):
        for transfers in schedule.rounds:
            for transfer in transfers:
                path = route(kind, nodes, transfer.source, transfer.destination)
                hops_total += len(path) - 1
                for _ in range(fragments):
                    ready = 0
                    for hop, (a, b) in enumerate(zip(path, path[1:])):
                        occupied = links.setdefault((a, b), set())
                        slot = _first_free(occupied, ready)
                        occupied.add(slot)
                        if hop:
                            for waiting in range(ready, slot):
                                buffered[(a, waiting)] = buffered.get((a, waiting), 0) + 1
                        ready = slot + 1
                    makespan = max(makespan, ready)

    messages = nodes * (nodes - 1)
    report = PackingReport(
        nodes=nodes,
        topology=kind,
        fragments_per_message=fragments,
        makespan_slots=makespan,
        link_load_bound=max((len(s) for s in links.values()), default=0),
        max_buffer_occupancy=max(buffered.values(), default=0),
        mean_hops=hops_total / messages if messages else 0.0,
    )
    logger.debug("packed %d messages: %s", messages, report)
    return report
