"""Extreme-value statistics of T_N = min of N i.i.d. first-passage times.

Exact quantities use ``P(T_N > t) = S(t)**N`` from the single-walker law;
asymptotic ones use the hard-edge limit ``P(T_N > d + k) -> exp(-lam F(k))``.

Defective laws (walkers that never arrive) make the unconditional mean
infinite, so means and moments default to the version conditioned on an
arrival within the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fpt import FptDistribution, HorizonError

MODES = ("conditional", "unconditional")
ASYMPTOTIC_MODES = ("truncated", "conditional")


class DivergentMeanError(ValueError):
    pass


class NonConvergentError(ValueError):
    pass


def _power(arrived, N: float, survival=None):
    """S**N with ``S = 1 - arrived``.

    Near S = 1 the log comes from log1p(-arrived); deeper in the tail it
    comes from ``survival`` when given, which avoids the 1 - cdf cancellation.
    """
    a = np.asarray(arrived, dtype=float)
    with np.errstate(divide="ignore"):
        log_s = np.log1p(-a)
        if survival is not None:
            S = np.asarray(survival, dtype=float)
            log_s = np.where(a <= 0.5, log_s, np.log(S))
        out = np.exp(N * log_s)
    gone = a >= 1.0 if survival is None else S <= 0.0
    return np.where(gone, 0.0, out)


@dataclass(frozen=True)
class ExtremeQuery:
    dist: FptDistribution
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if not self.dist.p_d > 0:
            raise ValueError("p_d must be positive")

    @property
    def lam(self) -> float:
        return self.N * self.dist.p_d

    @classmethod
    def from_lambda(cls, dist: FptDistribution, lam: float) -> "ExtremeQuery":
        return cls(dist, n_for_lambda(dist, lam))


@dataclass(frozen=True, eq=False)
class EntropicProfile:
    """Cumulative detour weight ``F[k] = sum_{j<=k} p_{d+j} / p_d``.

    ``limit`` is F(infinity) when known (closed form, or exact residual).
    """

    F: np.ndarray
    source: str
    limit: float | None = None

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        F.setflags(write=False)
        object.__setattr__(self, "F", F)

    @property
    def K(self) -> int:
        return len(self.F) - 1

    def __call__(self, k: int) -> float:
        if k < 0:
            return 0.0
        if k > self.K:
            raise HorizonError(f"k={k} beyond profile horizon {self.K}")
        return float(self.F[k])


def n_for_lambda(dist_or_pd, lam: float) -> int:
    p_d = dist_or_pd.p_d if isinstance(dist_or_pd, FptDistribution) else float(dist_or_pd)
    if not lam > 0 or not p_d > 0:
        raise ValueError("lambda and p_d must be positive")
    return max(1, int(math.floor(lam / p_d + 0.5)))


def default_truncation(N: float) -> int:
    return max(0, math.ceil(math.log(N)))


# ------------------------------------------------------------------ exact


def extreme_tail_table(q: ExtremeQuery) -> np.ndarray:
    """``P(T_N > d + k)`` for k = 0..K."""
    return _power(q.dist.cdf, q.N, q.dist.tail)


def extreme_tail_exact(q: ExtremeQuery, k: int) -> float:
    if k < -q.dist.d:
        raise ValueError(f"k={k} gives a negative time")
    if k < 0:
        return 1.0
    if k > q.dist.K:
        raise HorizonError(f"k={k} beyond horizon K={q.dist.K}")
    return float(_power(q.dist.cdf[k], q.N, q.dist.tail[k]))


def extreme_hit_prob(q: ExtremeQuery) -> float:
    """P(T_N = d)."""
    return 1.0 - extreme_tail_exact(q, 0)


def conditional_tail_table(q: ExtremeQuery) -> np.ndarray:
    """``P(T_N > d + k | T_N <= d + K)`` for k = 0..K."""
    tails = extreme_tail_table(q)
    floor = tails[-1]
    return (tails - floor) / (1.0 - floor)


def _tail_for_mode(q: ExtremeQuery, mode: str, tol: float) -> np.ndarray:
    if mode == "conditional":
        return conditional_tail_table(q)
    if mode == "unconditional":
        if q.dist.defect > 0:
            raise DivergentMeanError(
                f"defect {q.dist.defect:.3g} > 0: P(T_N = inf) > 0 and the mean is infinite"
            )
        tails = extreme_tail_table(q)
        if tails[-1] > tol:
            raise HorizonError(
                f"P(T_N > d+K) = {tails[-1]:.3g} exceeds {tol:g}; extend the horizon"
            )
        return tails
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def moment_exact(q: ExtremeQuery, m: int, mode: str = "conditional", tol: float = 1e-12) -> float:
    """``<(T_N - d)**m>`` from the exact tails via the tail-sum identity."""
    if m < 1:
        raise ValueError("moment order must be >= 1")
    tails = _tail_for_mode(q, mode, tol)
    k = np.arange(len(tails), dtype=float)
    return math.fsum(((k + 1) ** m - k**m) * tails)


def mean_exact(q: ExtremeQuery, mode: str = "conditional", tol: float = 1e-12) -> float:
    return q.dist.d + moment_exact(q, 1, mode, tol)


def variance_exact(q: ExtremeQuery, mode: str = "conditional", tol: float = 1e-12) -> float:
    m1 = moment_exact(q, 1, mode, tol)
    return moment_exact(q, 2, mode, tol) - m1 * m1


# ------------------------------------------------------- entropic function


def F_from_pmf(dist: FptDistribution, k_max: int | None = None) -> EntropicProfile:
    k_max = dist.K if k_max is None else k_max
    if k_max > dist.K:
        raise HorizonError(f"k_max={k_max} beyond horizon K={dist.K}")
    if not dist.p_d > 0:
        raise ValueError("p_d must be positive")
    F = dist.cdf[: k_max + 1] / dist.p_d
    F[0] = 1.0
    limit = None
    if dist.exact_residual:
        limit = (dist.total_mass + dist.residual_bound) / dist.p_d
    return EntropicProfile(F=F, source="from-pmf", limit=limit)


def F_leaky_closed(s: float, k) -> float:
    if not 0.0 <= s < 1.0:
        raise ValueError(f"s must lie in [0, 1), got {s}")
    if k == math.inf:
        return 1.0 / (1.0 - s)
    return (1.0 - s ** (k + 1)) / (1.0 - s)


def leaky_profile(s: float, k_max: int) -> EntropicProfile:
    F = np.array([F_leaky_closed(s, k) for k in range(k_max + 1)])
    return EntropicProfile(F=F, source="closed-form", limit=F_leaky_closed(s, math.inf))


# -------------------------------------------------------------- asymptotic


def _profile_values(F) -> np.ndarray:
    return F.F if isinstance(F, EntropicProfile) else np.asarray(F, dtype=float)


def tail_asymptotic(lam: float, F, k: int) -> float:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if k < 0:
        return 1.0
    vals = _profile_values(F)
    if k >= len(vals):
        raise HorizonError(f"k={k} beyond profile horizon {len(vals) - 1}")
    return math.exp(-lam * vals[k])


def tail_asymptotic_table(lam: float, F) -> np.ndarray:
    return np.exp(-lam * _profile_values(F))


def _asymptotic_terms(lam: float, F, mode: str, K: int | None, tol: float = 1e-12) -> np.ndarray:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    vals = _profile_values(F)
    if mode == "truncated":
        if K is None:
            raise ValueError("truncated mode needs K (default ceil(ln N))")
        if K >= len(vals):
            raise HorizonError(f"K={K} beyond profile horizon {len(vals) - 1}")
        return np.exp(-lam * vals[: K + 1])
    if mode == "conditional":
        limit = F.limit if isinstance(F, EntropicProfile) else None
        if limit is None or not math.isfinite(limit):
            raise NonConvergentError("F(inf) unknown or infinite; conditional sum diverges")
        floor = math.exp(-lam * limit)
        terms = (np.exp(-lam * vals) - floor) / (1.0 - floor)
        if terms[-1] > tol:
            raise NonConvergentError(
                f"conditional terms not converged by k={len(vals) - 1} "
                f"(last term {terms[-1]:.3g}); F is far from saturating"
            )
        return terms
    raise ValueError(f"mode must be one of {ASYMPTOTIC_MODES}, got {mode!r}")


def moment_asymptotic(
    m: int, lam: float, F, K: int | None = None, mode: str = "truncated"
) -> float:
    if m < 1:
        raise ValueError("moment order must be >= 1")
    terms = _asymptotic_terms(lam, F, mode, K)
    k = np.arange(len(terms), dtype=float)
    return math.fsum(((k + 1) ** m - k**m) * terms)


def mean_asymptotic(d: int, lam: float, F, mode: str = "truncated", K: int | None = None) -> float:
    return d + moment_asymptotic(1, lam, F, K, mode)


def variance_asymptotic(lam: float, F, K: int | None = None, mode: str = "truncated") -> float:
    m1 = moment_asymptotic(1, lam, F, K, mode)
    return moment_asymptotic(2, lam, F, K, mode) - m1 * m1
