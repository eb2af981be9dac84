#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Node interconnect graphs and deterministic shortest-path routing."""

import enum
import functools
import logging
from collections import deque
from typing import Dict, List, Tuple

from grid_perm import is_power_of_two, log2_exact

logger = logging.getLogger(__name__)


class TopologyKind(str, enum.Enum):
    """Interconnect families considered for the all-to-all."""

    PTOP = "ptop"
    TORUS2D = "torus2d"
    TORUS3D = "torus3d"
    HYPERCUBE = "hypercube"
    HYPERCUBEPP = "hypercubepp"
    SWITCHED = "switched"


class TopologyError(Exception):
    """Raised when a topology cannot be built for a node count."""

    def __init__(self, message: str):
        self.message = message

        super().__init__(self.message)


def torus_shape(nodes: int, rank: int) -> Tuple[int, ...]:
    """Power-of-two torus extents as even as possible, larger extents first.

    >>> torus_shape(32, 2)
    (8, 4)
    """
    if not is_power_of_two(nodes):
        raise TopologyError(f"torus needs a power-of-two node count, got {nodes}")
    bits = log2_exact(nodes)
    return tuple(1 << (bits // rank + (1 if axis < bits % rank else 0)) for axis in range(rank))


def _torus_neighbors(nodes: int, rank: int) -> Dict[int, Tuple[int, ...]]:
    shape = torus_shape(nodes, rank)
    strides = [1]
    for extent in shape[:-1]:
        strides.append(strides[-1] * extent)

    adjacency = {}
    for node in range(nodes):
        coords = [(node // stride) % extent for stride, extent in zip(strides, shape)]
        found = set()
        for axis, extent in enumerate(shape):
            if extent == 1:
                continue
            for delta in (1, -1):
                moved = list(coords)
                moved[axis] = (coords[axis] + delta) % extent
                found.add(sum(c * s for c, s in zip(moved, strides)))
        found.discard(node)
        adjacency[node] = tuple(sorted(found))
    return adjacency


@functools.lru_cache(maxsize=64)
def neighbors(kind: TopologyKind, nodes: int) -> Dict[int, Tuple[int, ...]]:
    """Adjacency lists of a topology.

    ``ptop`` and ``switched`` are fully connected (one hop through cable or switch);
    ``hypercubepp`` adds a link from every node to its complement.

    Raises:
        TopologyError: for node counts the topology cannot be built on.
    """
    kind = TopologyKind(kind)
    if nodes < 1:
        raise TopologyError(f"node count must be positive, got {nodes}")
    if kind in (TopologyKind.PTOP, TopologyKind.SWITCHED):
        return {n: tuple(m for m in range(nodes) if m != n) for n in range(nodes)}
    if kind is TopologyKind.TORUS2D:
        return _torus_neighbors(nodes, 2)
    if kind is TopologyKind.TORUS3D:
        return _torus_neighbors(nodes, 3)

    if not is_power_of_two(nodes):
        raise TopologyError(f"hypercube needs a power-of-two node count, got {nodes}")
    dimension = log2_exact(nodes)
    adjacency = {}
    for n in range(nodes):
        linked = {n ^ (1 << bit) for bit in range(dimension)}
        if kind is TopologyKind.HYPERCUBEPP and nodes > 2:
            linked.add(n ^ (nodes - 1))
        adjacency[n] = tuple(sorted(linked))
    return adjacency


def degree(kind: TopologyKind, nodes: int) -> int:
    """Largest number of links on any node."""
    return max((len(v) for v in neighbors(kind, nodes).values()), default=0)


@functools.lru_cache(maxsize=64)
def _parents(kind: TopologyKind, nodes: int) -> Tuple[Tuple[int, ...], ...]:
    adjacency = neighbors(kind, nodes)
    trees = []
    for source in range(nodes):
        parent = [-1] * nodes
        parent[source] = source
        queue = deque([source])
        while queue:
            node = queue.popleft()
            for nxt in adjacency[node]:
                if parent[nxt] < 0:
                    parent[nxt] = node
                    queue.append(nxt)
        trees.append(tuple(parent))
    return tuple(trees)


def route(kind: TopologyKind, nodes: int, source: int, destination: int) -> List[int]:
    """Nodes visited from source to destination on a BFS shortest path (lowest ids first)."""
    parent = _parents(TopologyKind(kind), nodes)[source]
    if parent[destination] < 0:
        raise TopologyError(f"node {destination} unreachable from {source}")
    path = [destination]
    while path[-1] != source:
        path.append(parent[path[-1]])
    return path[::-1]


def mean_hops(kind: TopologyKind, nodes: int) -> float:
    """Average shortest-path length over all ordered pairs of distinct nodes."""
    if nodes < 2:
        return 0.0
    total = sum(
        len(route(kind, nodes, s, d)) - 1 for s in range(nodes) for d in range(nodes) if s != d
    )
    return total / (nodes * (nodes - 1))
