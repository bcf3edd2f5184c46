"""Hierarchical graph models: comet (head + ballistic tail), leaky loop, Bethe lattice.

All model types are frozen dataclasses.  Building through the ``build_*``
helpers raises on invalid input; constructing a dataclass directly does not,
so that :func:`validate` can report problems instead of throwing.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Union

import numpy as np


class InvalidModelError(ValueError):
    """A model specification violates one of its structural invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class HeadGraph:
    """Finite head subgraph with a start node and an exit node.

    ``edges`` holds undirected head edges as sorted pairs; the tail edge at
    ``exit`` is implicit and counts as one incident edge of the exit node.
    ``loops`` maps node -> explicit self-loop probability.  At a node with a
    loop weight ``w`` the walker stays with probability ``w`` and otherwise
    picks uniformly among its incident edges.
    """

    node_count: int
    edges: frozenset
    start: int
    exit: int
    loops: tuple = ()

    def neighbors(self, v: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == v:
                out.append(b)
            elif b == v:
                out.append(a)
        return sorted(out)

    def loop_weight(self, v: int) -> float:
        for node, w in self.loops:
            if node == v:
                return float(w)
        return 0.0

    def degree(self, v: int) -> int:
        """Incident edge count, including the tail edge at the exit node."""
        return len(self.neighbors(v)) + (1 if v == self.exit else 0)

    def step_distribution(self, v: int) -> tuple[np.ndarray, float]:
        """Return (probabilities over head nodes, probability of the tail hop)."""
        probs = np.zeros(self.node_count)
        w = self.loop_weight(v)
        probs[v] += w
        deg = self.degree(v)
        tail = 0.0
        if deg > 0:
            share = (1.0 - w) / deg
            for u in self.neighbors(v):
                probs[u] += share
            if v == self.exit:
                tail = share
        return probs, tail

    def step_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Substochastic head operator Q and exit vector e (tail hop as absorption)."""
        Q = np.zeros((self.node_count, self.node_count))
        e = np.zeros(self.node_count)
        for v in range(self.node_count):
            Q[v], e[v] = self.step_distribution(v)
        return Q, e

    @property
    def exit_edge_weight(self) -> float:
        return self.step_distribution(self.exit)[1]

    def head_distance(self) -> int | None:
        """BFS step count from start to exit inside the head, or None if unreachable."""
        seen = {self.start: 0}
        queue = deque([self.start])
        while queue:
            v = queue.popleft()
            if v == self.exit:
                return seen[v]
            for u in self.neighbors(v):
                if u not in seen:
                    seen[u] = seen[v] + 1
                    queue.append(u)
        return None


@dataclass(frozen=True)
class CometSpec:
    """Head feeding a unidirectional tail; the target sits ``tail_hops`` past the entry node.

    The head->tail entry hop belongs to ``d_head`` and is never killed; each
    of the ``tail_hops`` subsequent hops survives with probability ``survival``.
    """

    head: HeadGraph
    tail_hops: int
    survival: float = 1.0

    @property
    def d_head(self) -> int:
        hd = self.head.head_distance()
        return -1 if hd is None else hd + 1

    @property
    def distance(self) -> int:
        return self.d_head + self.tail_hops


@dataclass(frozen=True)
class LeakyLoopSpec:
    stay: float
    survival: float
    distance: int

    def to_comet(self) -> CometSpec:
        head = HeadGraph(
            node_count=1, edges=frozenset(), start=0, exit=0, loops=((0, self.stay),)
        )
        return CometSpec(head=head, tail_hops=self.distance - 1, survival=self.survival)


@dataclass(frozen=True)
class BetheSpec:
    z: int
    distance: int


Model = Union[CometSpec, LeakyLoopSpec, BetheSpec]


@dataclass(frozen=True)
class DistanceChain:
    """Biased walk on the distance-to-target chain, one step closer w.p. 1/z.

    Admits z = 2 (the unbiased, diffusive reference); only the diagnostics
    module uses it that way.
    """

    z: int
    distance: int
    test_only: bool = field(default=False, compare=False)


def build_clique_head(m: int, start: int, exit: int) -> HeadGraph:
    if m < 2:
        raise ValueError(f"clique head needs at least 2 nodes, got m={m}")
    if not (0 <= start < m and 0 <= exit < m):
        raise ValueError(f"start/exit must lie in [0, {m}), got start={start}, exit={exit}")
    edges = frozenset((i, j) for i in range(m) for j in range(i + 1, m))
    return HeadGraph(node_count=m, edges=edges, start=start, exit=exit)


def build_comet(head: HeadGraph, tail_hops: int, survival: float = 1.0) -> CometSpec:
    spec = CometSpec(head=head, tail_hops=tail_hops, survival=survival)
    problems = validate(spec)
    if problems:
        raise InvalidModelError(problems)
    return spec


def build_leaky_loop(s: float, mu: float, d: int) -> LeakyLoopSpec:
    spec = LeakyLoopSpec(stay=s, survival=mu, distance=d)
    problems = validate(spec)
    if problems:
        raise InvalidModelError(problems)
    return spec


def build_bethe(z: int, d: int) -> BetheSpec:
    spec = BetheSpec(z=z, distance=d)
    problems = validate(spec)
    if problems:
        raise InvalidModelError(problems)
    return spec


def _head_violations(head: HeadGraph) -> list[str]:
    out = []
    n = head.node_count
    if n < 1:
        return ["head must have at least one node"]
    if not (0 <= head.start < n):
        out.append(f"start node {head.start} out of range")
    if not (0 <= head.exit < n):
        out.append(f"exit node {head.exit} out of range")
    for a, b in head.edges:
        if not (0 <= a < n and 0 <= b < n) or a == b:
            out.append(f"bad head edge ({a}, {b})")
    for v, w in head.loops:
        if not (0 <= v < n):
            out.append(f"loop on unknown node {v}")
        elif not (0.0 <= w < 1.0):
            out.append(f"loop weight {w} at node {v} outside [0, 1)")
    if out:
        return out
    for v in range(n):
        if head.degree(v) == 0:
            out.append(f"node {v} has no incident edge")
            continue
        probs, tail = head.step_distribution(v)
        total = probs.sum() + tail
        if abs(total - 1.0) > 1e-15:
            out.append(f"step distribution at node {v} sums to {total!r}")
    if head.head_distance() is None:
        out.append("exit not reachable from start")
    return out


def validate(spec) -> list[str]:
    """List every invariant violation of a model spec; empty means valid."""
    if isinstance(spec, CometSpec):
        out = _head_violations(spec.head)
        if spec.tail_hops < 0:
            out.append(f"tail length {spec.tail_hops} must be non-negative")
        if not (0.0 < spec.survival <= 1.0):
            out.append(f"survival probability {spec.survival} out of range (0, 1]")
        return out
    if isinstance(spec, LeakyLoopSpec):
        out = []
        if not (0.0 <= spec.stay < 1.0):
            out.append(f"stay probability {spec.stay} out of range [0, 1)")
        if not (0.0 < spec.survival <= 1.0):
            out.append(f"survival probability {spec.survival} out of range (0, 1]")
        if spec.distance < 1:
            out.append(f"distance {spec.distance} must be >= 1")
        return out
    if isinstance(spec, BetheSpec):
        out = []
        if spec.z < 3:
            out.append(f"coordination number below 3 (z={spec.z})")
        if spec.distance < 1:
            out.append(f"distance {spec.distance} must be >= 1")
        return out
    if isinstance(spec, DistanceChain):
        out = []
        if spec.z < 2:
            out.append(f"distance chain needs z >= 2 (z={spec.z})")
        if spec.distance < 1:
            out.append(f"distance {spec.distance} must be >= 1")
        return out
    return [f"unknown model type {type(spec).__name__}"]


def ensure_valid(spec) -> None:
    problems = validate(spec)
    if problems:
        raise InvalidModelError(problems)


def hard_edge(spec) -> int:
    """Graph distance d from start to target (the minimum arrival time)."""
    return spec.distance


def comet_bfs_distance(spec: CometSpec) -> int | None:
    """Shortest move count from start to target on the explicit comet graph."""
    head = spec.head
    # tail nodes are labelled ("t", j), j = 1 is the entry node
    target = ("t", spec.tail_hops + 1)
    start = ("h", head.start)
    seen = {start: 0}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == target:
            return seen[node]
        kind, v = node
        if kind == "h":
            nxt = [("h", u) for u in head.neighbors(v)]
            if v == head.exit:
                nxt.append(("t", 1))
        else:
            nxt = [("t", v + 1)]
        for u in nxt:
            if u not in seen:
                seen[u] = seen[node] + 1
                queue.append(u)
    return None
