"""Exact single-walker first-passage laws with a hard edge at the graph distance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import (
    BetheSpec,
    CometSpec,
    DistanceChain,
    HeadGraph,
    LeakyLoopSpec,
    ensure_valid,
)
from .kernels import compensated_cumsum

TINY = np.finfo(float).tiny
MAX_ENUMERATION_TERMS = 10_000_000


class HorizonError(ValueError):
    """A query reaches past the horizon a distribution was computed to."""


class UnderflowError(ArithmeticError):
    pass


class EnumerationLimitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FptDistribution:
    """First-passage pmf ``masses[k] = P(tau = d + k)`` for ``k = 0..K``.

    ``defect`` is the probability of never arriving; ``residual_bound``
    bounds the arrival mass beyond ``d + K``.  When ``exact_residual`` is set
    the residual is the exact remaining arrival probability, so masses,
    residual and defect sum to one.
    """

    d: int
    masses: np.ndarray
    defect: float
    residual_bound: float
    exact_residual: bool = False
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)
        cdf = compensated_cumsum(m)
        cdf.setflags(write=False)
        object.__setattr__(self, "_cdf", cdf)
        if self.exact_residual:
            # sum the unreached mass from the far end so deep tails keep their digits
            rest = np.concatenate([[self.defect + self.residual_bound], m[:0:-1]])
            tail = compensated_cumsum(rest)[::-1].copy()
        else:
            tail = 1.0 - cdf
        tail.setflags(write=False)
        object.__setattr__(self, "_tail", tail)

    @property
    def K(self) -> int:
        return len(self.masses) - 1

    @property
    def p_d(self) -> float:
        return float(self.masses[0])

    @property
    def times(self) -> np.ndarray:
        return self.d + np.arange(len(self.masses))

    @property
    def cdf(self) -> np.ndarray:
        """``cdf[k] = P(tau <= d + k)``."""
        return self._cdf

    @property
    def tail(self) -> np.ndarray:
        """``tail[k] = P(tau > d + k)``, accurate far into the tail for exact laws."""
        return self._tail

    @property
    def total_mass(self) -> float:
        return float(self._cdf[-1])

    def arrived(self, t: int) -> float:
        """P(tau <= t)."""
        k = t - self.d
        if k < 0:
            return 0.0
        if k > self.K:
            raise HorizonError(f"t={t} beyond horizon d+K={self.d + self.K}")
        return float(self._cdf[k])

    def survival(self, t: int) -> float:
        k = t - self.d
        if k < 0:
            return 1.0
        if k > self.K:
            raise HorizonError(f"t={t} beyond horizon d+K={self.d + self.K}")
        return float(self._tail[k])

    def survival_table(self, t_max: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(t, S(t)) for t = 0..t_max (default d + K)."""
        t_max = self.d + self.K if t_max is None else t_max
        if t_max > self.d + self.K:
            raise HorizonError(f"t_max={t_max} beyond horizon d+K={self.d + self.K}")
        t = np.arange(t_max + 1)
        S = np.ones(t_max + 1)
        k = t - self.d
        inside = k >= 0
        S[inside] = self._tail[k[inside]]
        return t, S


@dataclass(frozen=True, eq=False)
class ExitPmf:
    """First head->tail hop time law: ``pi[n - 1] = P(first exit at step n)``."""

    pi: np.ndarray
    d_head: int
    remaining: float  # occupancy left in the head after n_max steps

    def at(self, n: int) -> float:
        if n < 1 or n > len(self.pi):
            return 0.0
        return float(self.pi[n - 1])


def exit_time_pmf(head: HeadGraph, n_max: int) -> ExitPmf:
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    Q, e = head.step_matrix()
    occ = np.zeros(head.node_count)
    occ[head.start] = 1.0
    pi = np.empty(n_max)
    for n in range(n_max):
        pi[n] = occ @ e
        occ = occ @ Q
    nz = np.flatnonzero(pi > 0)
    d_head = int(nz[0]) + 1 if nz.size else -1
    return ExitPmf(pi=pi, d_head=d_head, remaining=float(math.fsum(occ)))


def _check_underflow(p_d: float, what: str) -> None:
    if not p_d >= TINY:
        raise UnderflowError(f"{what}: shortest-path probability {p_d!r} underflows")


def comet_fpt(spec: CometSpec, k_max: int) -> FptDistribution:
    ensure_valid(spec)
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    d_head = spec.d_head
    pmf = exit_time_pmf(spec.head, d_head + k_max)
    tail_survival = spec.survival**spec.tail_hops
    masses = pmf.pi[d_head - 1 :] * tail_survival
    _check_underflow(masses[0], "comet")
    # every head node is connected to the exit, so the walker enters the tail
    # almost surely and the only defect is killing on the tail
    return FptDistribution(
        d=spec.distance,
        masses=masses,
        defect=1.0 - tail_survival,
        residual_bound=tail_survival * pmf.remaining,
        exact_residual=True,
        label="comet",
    )


def leaky_loop_fpt(spec: LeakyLoopSpec, k_max: int) -> FptDistribution:
    ensure_valid(spec)
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    s, mu, d = spec.stay, spec.survival, spec.distance
    reach = mu ** (d - 1)
    k = np.arange(k_max + 1)
    masses = s**k * (1.0 - s) * reach
    _check_underflow(masses[0], "leaky loop")
    return FptDistribution(
        d=d,
        masses=masses,
        defect=1.0 - reach,
        residual_bound=s ** (k_max + 1) * reach,
        exact_residual=True,
        label="leaky-loop",
    )


def bethe_fpt(spec: BetheSpec | DistanceChain, k_max: int) -> FptDistribution:
    """First passage on the distance-to-target chain (one step closer w.p. 1/z)."""
    ensure_valid(spec)
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    z, d = spec.z, spec.distance
    toward = 1.0 / z
    away = (z - 1) / z
    # index r = distance; r = R + 1 is unreachable-within-horizon and dropped
    R = d + k_max + 1
    v = np.zeros(R + 2)
    v[d] = 1.0
    masses = np.empty(k_max + 1)
    for t in range(1, d + k_max + 1):
        hit = toward * v[1]
        new = np.zeros_like(v)
        new[1:R] = toward * v[2 : R + 1]
        new[2 : R + 1] += away * v[1:R]
        v = new
        if t >= d:
            masses[t - d] = hit
        elif hit != 0.0:
            raise AssertionError("arrival before the hard edge")
    _check_underflow(masses[0], "bethe")
    reach = min(1.0, (z - 1.0) ** (-d))
    arrived = compensated_cumsum(masses)[-1]
    return FptDistribution(
        d=d,
        masses=masses,
        defect=1.0 - reach,
        residual_bound=max(0.0, reach - arrived),
        exact_residual=True,
        label="bethe" if isinstance(spec, BetheSpec) else "distance-chain",
    )


def fpt(model, k_max: int) -> FptDistribution:
    """Dispatch to the exact solver for ``model``."""
    if isinstance(model, LeakyLoopSpec):
        return leaky_loop_fpt(model, k_max)
    if isinstance(model, CometSpec):
        return comet_fpt(model, k_max)
    if isinstance(model, (BetheSpec, DistanceChain)):
        return bethe_fpt(model, k_max)
    raise TypeError(f"unsupported model {type(model).__name__}")


# ------------------------------------------------------------ brute force


def _tree_distance(a: tuple, b: tuple) -> int:
    common = 0
    for x, y in zip(a, b):
        if x != y:
            break
        common += 1
    return len(a) + len(b) - 2 * common


def _tree_neighbors(node: tuple, z: int) -> list[tuple]:
    if not node:
        return [(c,) for c in range(z)]
    return [node[:-1]] + [node + (c,) for c in range(z - 1)]


def brute_force_fpt(model, t_max: int, max_terms: int = MAX_ENUMERATION_TERMS) -> FptDistribution:
    """Exact pmf by exhaustive enumeration of every trajectory of length <= t_max.

    Works on the explicit graph (head nodes plus tail chain, or the labelled
    Bethe tree), not on the reduced chains used by the solvers.  Trajectories
    that can no longer reach the target by ``t_max`` are cut off.
    """
    if isinstance(model, LeakyLoopSpec):
        model = model.to_comet()
    ensure_valid(model)
    masses_by_t: dict[int, float] = {}
    killed = 0.0
    terms = 0

    def bump():
        nonlocal terms
        terms += 1
        if terms > max_terms:
            raise EnumerationLimitError(
                f"more than {max_terms} path terms; shrink the instance"
            )

    if isinstance(model, CometSpec):
        head, L, mu = model.head, model.tail_hops, model.survival
        target = ("t", L + 1)

        def moves(node):
            kind, v = node
            if kind == "t":
                return [(("t", v + 1), mu)]
            w = head.loop_weight(v)
            incident = [("h", u) for u in head.neighbors(v)]
            if v == head.exit:
                incident.append(("t", 1))
            out = [(("h", v), w)] if w > 0 else []
            out += [(n, (1.0 - w) / len(incident)) for n in incident]
            return out

        def lower_bound(node):
            kind, v = node
            if kind == "t":
                return L + 1 - v
            return 1 + L  # at least the entry hop and the tail

        start = ("h", head.start)
        d = model.distance
    elif isinstance(model, (BetheSpec, DistanceChain)):
        z = model.z
        target = (0,) * model.distance

        def moves(node):
            return [(n, 1.0 / z) for n in _tree_neighbors(node, z)]

        def lower_bound(node):
            return _tree_distance(node, target)

        start = ()
        d = model.distance
    else:
        raise TypeError(f"unsupported model {type(model).__name__}")

    if t_max < d:
        raise HorizonError(f"t_max={t_max} below the hard edge d={d}")

    stack = [(start, 0, 1.0)]
    while stack:
        node, t, prob = stack.pop()
        bump()
        for nxt, w in moves(node):
            if w == 0.0:
                continue
            if isinstance(model, CometSpec) and node[0] == "t":
                killed += prob * (1.0 - mu)
            p = prob * w
            if nxt == target:
                masses_by_t[t + 1] = masses_by_t.get(t + 1, 0.0) + p
            elif t + 1 + lower_bound(nxt) <= t_max:
                stack.append((nxt, t + 1, p))

    masses = np.array([masses_by_t.get(t, 0.0) for t in range(d, t_max + 1)])
    if any(t < d for t in masses_by_t):
        raise AssertionError("enumeration found an arrival below the hard edge")
    arrived = math.fsum(masses)
    return FptDistribution(
        d=d,
        masses=masses,
        defect=killed,
        residual_bound=max(0.0, 1.0 - arrived - killed),
        exact_residual=False,
        label="brute-force",
    )
