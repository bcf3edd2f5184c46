"""Hot loops of the Monte Carlo engine, numba-compiled with a pure-numpy twin.

Set ``XFPT_DISABLE_NUMBA=1`` to force the numpy path.  Both paths consume the
same counter-based random numbers and return bit-identical results, so the
choice only affects speed.

Random numbers are a stateless hash of (seed, trial, walker, step): every
walker owns its own stream and the draw used at step ``t`` never depends on
how trials are scheduled.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("XFPT_DISABLE_NUMBA", "0").lower() not in (
    "1",
    "true",
    "yes",
)

# next-state codes in a compiled chain
TARGET = -1
CEMETERY = -2
NO_ARRIVAL = -1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TRIAL_MUL = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0


def _mix64(x):
    x = x ^ (x >> _S30)
    x = x * _M1
    x = x ^ (x >> _S27)
    x = x * _M2
    return x ^ (x >> _S31)


def _walker_key(seed, trial, walker):
    k = _mix64(seed + _GOLDEN)
    k = _mix64(k ^ ((trial + _ONE) * _TRIAL_MUL))
    return _mix64(k + (walker + _ONE) * _GOLDEN)


def _uniform(key, step):
    return (_mix64(key + (step + _ONE) * _GOLDEN) >> _S11) * _INV53


# numpy twins operate on uint64 arrays (array arithmetic wraps silently)
def walker_keys(seed: int, trials: np.ndarray, walkers: np.ndarray) -> np.ndarray:
    t = np.asarray(trials, dtype=np.uint64)
    w = np.asarray(walkers, dtype=np.uint64)
    s = np.full(np.broadcast(t, w).shape, seed, dtype=np.uint64)
    return _walker_key(s, t, w)


def uniforms(keys: np.ndarray, step) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.uint64)
    steps = np.broadcast_to(np.asarray(step, dtype=np.uint64), keys.shape)
    return _uniform(keys, steps)


# ---------------------------------------------------------------- numpy path


def _chain_min_numpy(nxt, cum, dist, start, seed, trial0, n_trials, n_walkers, t_max):
    out = np.full(n_trials, NO_ARRIVAL, dtype=np.int64)
    block = max(1, min(n_trials, 2_000_000 // max(n_walkers, 1)))
    walkers = np.arange(n_walkers, dtype=np.uint64)
    for b0 in range(0, n_trials, block):
        b1 = min(n_trials, b0 + block)
        trials = np.arange(trial0 + b0, trial0 + b1, dtype=np.uint64)
        keys = walker_keys(seed, trials[:, None], walkers[None, :]).ravel()
        owner = np.repeat(np.arange(b1 - b0), n_walkers)
        state = np.full(keys.shape, start, dtype=np.int64)
        # live walkers are kept compacted; a trial ends at its first arrival
        live = dist[state] <= t_max
        keys, owner, state = keys[live], owner[live], state[live]
        for t in range(t_max):
            if keys.size == 0:
                break
            u = uniforms(keys, t)
            j = (cum[state] <= u[:, None]).sum(axis=1)
            new = nxt[state, j]
            hit = new == TARGET
            if hit.any():
                done = np.unique(owner[hit])
                out[b0 + done] = t + 1
                keep = ~np.isin(owner, done)
            else:
                keep = np.ones(new.shape, dtype=bool)
            keep &= new >= 0
            new_safe = np.where(new >= 0, new, 0)
            keep &= (t + 1) + dist[new_safe] <= t_max
            keys, owner, state = keys[keep], owner[keep], new[keep]
    return out


def _inverse_min_numpy(cdf, d, seed, trial0, n_trials, n_walkers):
    out = np.full(n_trials, NO_ARRIVAL, dtype=np.int64)
    block = max(1, min(n_trials, 2_000_000 // max(n_walkers, 1)))
    walkers = np.arange(n_walkers, dtype=np.uint64)
    horizon = cdf.shape[0]
    for b0 in range(0, n_trials, block):
        b1 = min(n_trials, b0 + block)
        trials = np.arange(trial0 + b0, trial0 + b1, dtype=np.uint64)
        keys = walker_keys(seed, trials[:, None], walkers[None, :])
        u = uniforms(keys, 0)
        k = np.searchsorted(cdf, u, side="right").min(axis=1)
        out[b0:b1] = np.where(k < horizon, d + k, NO_ARRIVAL)
    return out


def _neumaier_cumsum_py(x):
    out = np.empty(len(x))
    total = 0.0
    comp = 0.0
    for i in range(len(x)):
        v = float(x[i])
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
        out[i] = total + comp
    return out


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:
    _mix64_nb = numba.njit(inline="always")(_mix64)

    @numba.njit(inline="always")
    def _walker_key_nb(seed, trial, walker):
        k = _mix64_nb(seed + _GOLDEN)
        k = _mix64_nb(k ^ ((trial + _ONE) * _TRIAL_MUL))
        return _mix64_nb(k + (walker + _ONE) * _GOLDEN)

    @numba.njit(inline="always")
    def _uniform_nb(key, step):
        return (_mix64_nb(key + (step + _ONE) * _GOLDEN) >> _S11) * _INV53

    @numba.njit(nogil=True, cache=True)
    def _chain_min_nb(nxt, cum, dist, start, seed, trial0, n_trials, n_walkers, t_max):
        out = np.full(n_trials, NO_ARRIVAL, dtype=np.int64)
        width = cum.shape[1]
        useed = np.uint64(seed)
        d_min = dist[start]
        for i in range(n_trials):
            trial = np.uint64(trial0 + i)
            best = t_max + 1
            for w in range(n_walkers):
                if best == d_min:
                    break
                key = _walker_key_nb(useed, trial, np.uint64(w))
                state = start
                t = 0
                while t + dist[state] < best:
                    u = _uniform_nb(key, np.uint64(t))
                    j = 0
                    while j < width and cum[state, j] <= u:
                        j += 1
                    new = nxt[state, j]
                    t += 1
                    if new == TARGET:
                        best = t
                        break
                    if new == CEMETERY:
                        break
                    state = new
            if best <= t_max:
                out[i] = best
        return out

    @numba.njit(nogil=True, cache=True)
    def _inverse_min_nb(cdf, d, seed, trial0, n_trials, n_walkers):
        out = np.full(n_trials, NO_ARRIVAL, dtype=np.int64)
        horizon = cdf.shape[0]
        useed = np.uint64(seed)
        for i in range(n_trials):
            trial = np.uint64(trial0 + i)
            best = horizon
            for w in range(n_walkers):
                key = _walker_key_nb(useed, trial, np.uint64(w))
                u = _uniform_nb(key, np.uint64(0))
                k = np.searchsorted(cdf, u, side="right")
                if k < best:
                    best = k
                    if best == 0:
                        break
            if best < horizon:
                out[i] = d + best
        return out

    @numba.njit(cache=True)
    def _neumaier_cumsum_nb(x):
        out = np.empty(x.shape[0])
        total = 0.0
        comp = 0.0
        for i in range(x.shape[0]):
            v = x[i]
            t = total + v
            if abs(total) >= abs(v):
                comp += (total - t) + v
            else:
                comp += (v - t) + total
            total = t
            out[i] = total + comp
        return out


def _pick(backend):
    if backend is None:
        return USE_NUMBA
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")


def chain_min_arrivals(
    nxt, cum, dist, start, seed, trial0, n_trials, n_walkers, t_max, backend=None
) -> np.ndarray:
    """Min-of-N first arrival per trial on a compiled chain; ``NO_ARRIVAL`` if none by ``t_max``.

    Walkers are advanced step by step; draw ``t`` of walker ``w`` in trial
    ``trial0 + i`` is ``uniform(key(seed, trial, w), t)``.
    """
    args = (
        np.ascontiguousarray(nxt, dtype=np.int64),
        np.ascontiguousarray(cum, dtype=np.float64),
        np.ascontiguousarray(dist, dtype=np.int64),
        int(start),
        np.uint64(seed),
        int(trial0),
        int(n_trials),
        int(n_walkers),
        int(t_max),
    )
    if _pick(backend):
        return _chain_min_nb(*args)
    return _chain_min_numpy(*args)


def inverse_cdf_min_arrivals(
    cdf, d, seed, trial0, n_trials, n_walkers, backend=None
) -> np.ndarray:
    """Min-of-N arrival per trial by inverse transform on ``cdf[k] = P(tau <= d + k)``."""
    args = (
        np.ascontiguousarray(cdf, dtype=np.float64),
        int(d),
        np.uint64(seed),
        int(trial0),
        int(n_trials),
        int(n_walkers),
    )
    if _pick(backend):
        return _inverse_min_nb(*args)
    return _inverse_min_numpy(*args)


def compensated_cumsum(x, backend=None) -> np.ndarray:
    """Running sums with Neumaier compensation."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if _pick(backend):
        return _neumaier_cumsum_nb(x)
    return _neumaier_cumsum_py(x)
