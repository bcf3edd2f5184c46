"""Seeded Monte Carlo of T_N, the first arrival among N independent walkers.

Every model is compiled to a small chain table (next-state codes plus
cumulative step probabilities) that the kernels step through.  Results depend
only on (config, seed): trials are split into chunks that may run on several
threads, and aggregation goes through integer histograms, so the thread count
never changes a single output bit.
"""

from __future__ import annotations

import logging
import math
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .fpt import fpt
from .graphs import BetheSpec, CometSpec, DistanceChain, LeakyLoopSpec, ensure_valid
from .kernels import CEMETERY, NO_ARRIVAL, TARGET

log = logging.getLogger(__name__)

MODES = ("direct-walk", "inverse-cdf")
DEFAULT_EXTRA_STEPS = 200


class NoArrivalError(RuntimeError):
    def __init__(self, no_arrival_count: int, trials: int):
        self.no_arrival_count = no_arrival_count
        super().__init__(f"no walker arrived in any of {trials} trials")


@dataclass(frozen=True, eq=False)
class Chain:
    nxt: np.ndarray
    cum: np.ndarray
    dist: np.ndarray  # fewest steps from each state to the target
    start: int
    d: int


def _pack(rows, dist, start, d) -> Chain:
    width = max(len(r) for r in rows)
    nxt = np.full((len(rows), width + 1), CEMETERY, dtype=np.int64)
    cum = np.full((len(rows), width), 2.0)
    for i, row in enumerate(rows):
        row = [(s, p) for s, p in row if p > 0]
        c = kernels.compensated_cumsum([p for _, p in row])
        c[-1] = 1.0
        for j, (s, _) in enumerate(row):
            nxt[i, j] = s
        cum[i, : len(row)] = c
    return Chain(nxt=nxt, cum=cum, dist=np.asarray(dist, dtype=np.int64), start=start, d=d)


def compile_chain(model, t_max: int) -> Chain:
    """Chain table for ``model`` valid for walks of at most ``t_max`` steps."""
    if isinstance(model, LeakyLoopSpec):
        model = model.to_comet()
    ensure_valid(model)
    if isinstance(model, CometSpec):
        head, L, mu = model.head, model.tail_hops, model.survival
        m = head.node_count
        # states 0..m-1 head nodes, m + j - 1 tail node v_j (j = 1..L)
        tail_state = lambda j: TARGET if j == L + 1 else m + j - 1  # noqa: E731
        to_exit = _bfs_to(head, head.exit)
        rows, dist = [], []
        for v in range(m):
            probs, tail = head.step_distribution(v)
            rows.append([(u, probs[u]) for u in range(m)] + [(tail_state(1), tail)])
            dist.append(to_exit.get(v, 10**9) + 1 + L)
        for j in range(1, L + 1):
            rows.append([(tail_state(j + 1), mu), (CEMETERY, 1.0 - mu)])
            dist.append(L + 1 - j)
        return _pack(rows, dist, head.start, model.distance)
    if isinstance(model, (BetheSpec, DistanceChain)):
        z, d = model.z, model.distance
        R = d + t_max + 1
        rows, dist = [], []
        for r in range(1, R + 1):
            toward = TARGET if r == 1 else r - 2
            away = r if r < R else CEMETERY
            rows.append([(toward, 1.0 / z), (away, (z - 1) / z)])
            dist.append(r)
        return _pack(rows, dist, d - 1, d)
    raise TypeError(f"unsupported model {type(model).__name__}")


def _bfs_to(head, goal) -> dict[int, int]:
    seen = {goal: 0}
    queue = deque([goal])
    while queue:
        v = queue.popleft()
        for u in head.neighbors(v):
            if u not in seen:
                seen[u] = seen[v] + 1
                queue.append(u)
    return seen


# ------------------------------------------------------------ single walker


def simulate_walker(model, seed: int, trial: int, walker: int, t_max: int) -> int | None:
    """Arrival time of one walker on its own stream, or None (killed / past t_max)."""
    chain = compile_chain(model, t_max)
    key = kernels.walker_keys(seed, np.array([trial]), np.array([walker]))
    state = chain.start
    for t in range(t_max):
        u = kernels.uniforms(key, t)[0]
        j = int(np.count_nonzero(chain.cum[state] <= u))
        new = int(chain.nxt[state, j])
        if new == TARGET:
            return t + 1
        if new == CEMETERY:
            return None
        state = new
    return None


def simulate_walkers(model, n: int, seed: int, t_max: int, backend=None) -> np.ndarray:
    """``n`` independent single-walker arrival times (``NO_ARRIVAL`` for none)."""
    chain = compile_chain(model, t_max)
    return kernels.chain_min_arrivals(
        chain.nxt, chain.cum, chain.dist, chain.start, seed, 0, n, 1, t_max, backend
    )


def sample_min_of_n(
    model, N: int, seed: int, trial: int, t_max: int, mode: str = "direct-walk", backend=None
) -> int | None:
    out = _run_chunk(_prepare(model, t_max, mode), N, seed, trial, 1, t_max, mode, backend)
    return None if out[0] == NO_ARRIVAL else int(out[0])


# ------------------------------------------------------------------ trials


@dataclass(frozen=True)
class McConfig:
    model: object
    N: int
    trials: int
    seed: int = 0
    t_max: int | None = None
    mode: str = "direct-walk"
    k_max: int | None = None

    @property
    def d(self) -> int:
        return self.model.distance

    @property
    def horizon(self) -> int:
        return self.d + DEFAULT_EXTRA_STEPS if self.t_max is None else self.t_max

    def check(self) -> None:
        ensure_valid(self.model)
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.horizon <= self.d:
            raise ValueError(f"t_max={self.horizon} must exceed d={self.d}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(eq=False)
class McResult:
    d: int
    N: int
    seed: int
    t_max: int
    mode: str
    trials: int
    counts: np.ndarray  # counts[k] = trials with T_N = d + k, k = 0..t_max - d
    no_arrival_count: int
    k_max: int
    wall_time: float = field(default=0.0, compare=False)

    @property
    def trials_used(self) -> int:
        return self.trials - self.no_arrival_count

    @property
    def tail(self) -> np.ndarray:
        """P_hat(T_N > d + k) for k = 0..k_max; no-arrival trials count as beyond every k."""
        arrived_by = np.cumsum(self.counts)[: self.k_max + 1]
        return (self.trials - arrived_by) / self.trials

    @property
    def tail_se(self) -> np.ndarray:
        p = self.tail
        return np.sqrt(p * (1.0 - p) / self.trials)

    def _moments(self):
        n = self.trials_used
        if n == 0:
            return math.nan, math.nan
        k = np.arange(len(self.counts), dtype=float)
        mean = float(np.dot(k, self.counts)) / n
        if n < 2:
            return self.d + mean, 0.0
        var = float(np.dot((k - mean) ** 2, self.counts)) / (n - 1)
        return self.d + mean, var

    @property
    def mean(self) -> float:
        """Sample mean of T_N over trials with an arrival."""
        return self._moments()[0]

    @property
    def variance(self) -> float:
        return self._moments()[1]

    @property
    def mean_se(self) -> float:
        n = self.trials_used
        return math.sqrt(self.variance / n) if n > 1 else math.nan

    @property
    def throughput(self) -> float:
        return self.trials / self.wall_time if self.wall_time > 0 else math.nan

    def samples(self) -> np.ndarray:
        """Arrival times of trials with an arrival, sorted."""
        return np.repeat(self.d + np.arange(len(self.counts)), self.counts)

    def bootstrap_variance_se(self, reps: int = 1000, seed: int = 0) -> float:
        """Bootstrap standard error of the conditional sample variance."""
        n = self.trials_used
        if n < 2:
            return math.nan
        rng = np.random.default_rng(seed)
        p = self.counts / n
        k = np.arange(len(self.counts), dtype=float)
        draws = rng.multinomial(n, p, size=reps)
        means = draws @ k / n
        second = draws @ (k * k) / n
        var = (second - means**2) * n / (n - 1)
        return float(np.std(var, ddof=1))

    def to_dict(self) -> dict:
        """Deterministic summary; wall time is deliberately left out."""
        return {
            "d": self.d,
            "N": self.N,
            "seed": self.seed,
            "t_max": self.t_max,
            "mode": self.mode,
            "trials": self.trials,
            "trials_used": self.trials_used,
            "no_arrival_count": self.no_arrival_count,
            "mean": self.mean,
            "variance": self.variance,
            "mean_se": self.mean_se,
            "k_max": self.k_max,
            "tail": self.tail.tolist(),
            "tail_se": self.tail_se.tolist(),
            "counts": self.counts.tolist(),
        }


def _prepare(model, t_max, mode):
    if mode == "direct-walk":
        return compile_chain(model, t_max)
    if mode == "inverse-cdf":
        return fpt(model, t_max - model.distance)
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _run_chunk(prepared, N, seed, trial0, n_trials, t_max, mode, backend):
    if mode == "direct-walk":
        c = prepared
        return kernels.chain_min_arrivals(
            c.nxt, c.cum, c.dist, c.start, seed, trial0, n_trials, N, t_max, backend
        )
    return kernels.inverse_cdf_min_arrivals(prepared.cdf, prepared.d, seed, trial0, n_trials, N, backend)


def default_threads() -> int:
    env = os.environ.get("XFPT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_trials(config: McConfig, threads: int | None = None, backend=None) -> McResult:
    config.check()
    threads = default_threads() if threads is None else max(1, int(threads))
    d, t_max, mode = config.d, config.horizon, config.mode
    prepared = _prepare(config.model, t_max, mode)
    n_chunks = min(config.trials, max(1, threads) * 4)
    edges = np.linspace(0, config.trials, n_chunks + 1).astype(np.int64)
    spans = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]

    def work(span):
        a, b = span
        out = _run_chunk(prepared, config.N, config.seed, a, b - a, t_max, mode, backend)
        arrived = out[out != NO_ARRIVAL]
        if arrived.size and arrived.min() < d:
            raise AssertionError(f"sampled T_N={arrived.min()} below the hard edge d={d}")
        hist = np.bincount(arrived - d, minlength=t_max - d + 1)
        log.debug("trials %d-%d done", a, b)
        return hist, int(out.size - arrived.size)

    t0 = time.perf_counter()
    if threads == 1 or len(spans) == 1:
        parts = [work(s) for s in spans]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, spans))
    wall = time.perf_counter() - t0

    counts = np.zeros(t_max - d + 1, dtype=np.int64)
    no_arrival = 0
    for hist, none in parts:
        counts += hist
        no_arrival += none
    if no_arrival == config.trials:
        raise NoArrivalError(no_arrival, config.trials)
    if no_arrival:
        beyond = fpt(config.model, t_max - d).residual_bound
        if beyond * config.N > 1e-9:
            log.warning(
                "%d trials without arrival; up to %.3g of per-walker mass lies beyond t_max=%d",
                no_arrival, beyond, t_max,
            )
    k_max = t_max - d if config.k_max is None else min(config.k_max, t_max - d)
    log.info("%d trials in %.2fs (%.0f trials/s)", config.trials, wall, config.trials / max(wall, 1e-12))
    return McResult(
        d=d,
        N=config.N,
        seed=config.seed,
        t_max=t_max,
        mode=mode,
        trials=config.trials,
        counts=counts,
        no_arrival_count=no_arrival,
        k_max=k_max,
        wall_time=wall,
    )
