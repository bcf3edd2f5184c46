"""Injection-limited vs bulk-limited classification from the d-dependence of F(k; d).

A family of models indexed by the source-target distance d is
injection-limited when its entropic function F(k) does not move with d, and
bulk-limited when delayed-path weight grows with d (entropic collapse).  The
sweep uses exact distributions only; Monte Carlo enters just the optional
drift-velocity estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .evt import EntropicProfile, F_from_pmf
from .fpt import fpt
from .graphs import (
    BetheSpec,
    CometSpec,
    DistanceChain,
    HeadGraph,
    LeakyLoopSpec,
    ensure_valid,
)

INJECTION = "injection-limited"
BULK = "bulk-limited"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ModelFamily:
    """Models sharing every parameter except the distance d."""

    name: str
    build: Callable[[int], object]
    params: dict = field(default_factory=dict)

    def at(self, d: int):
        return self.build(d)


def leaky_family(s: float, mu: float) -> ModelFamily:
    return ModelFamily(
        "leaky-loop", lambda d: LeakyLoopSpec(s, mu, d), {"s": s, "mu": mu}
    )


def comet_family(head: HeadGraph, mu: float) -> ModelFamily:
    """Comet with a fixed head; d changes through the tail length only."""
    d_head = CometSpec(head, 0, mu).d_head

    def build(d):
        if d - d_head < 0:
            raise ValueError(f"d={d} shorter than the head distance {d_head}")
        return CometSpec(head, d - d_head, mu)

    return ModelFamily("comet", build, {"mu": mu, "head_nodes": head.node_count})


def bethe_family(z: int) -> ModelFamily:
    return ModelFamily("bethe", lambda d: BetheSpec(z, d), {"z": z})


def distance_chain_family(z: int) -> ModelFamily:
    """Test-only family admitting z = 2, the unbiased diffusive reference."""
    return ModelFamily(
        "distance-chain", lambda d: DistanceChain(z, d, test_only=True), {"z": z}
    )


def entropic_profile(family: ModelFamily, d_list, k_max: int) -> dict[int, EntropicProfile]:
    out = {}
    for d in sorted(set(int(x) for x in d_list)):
        model = family.at(d)
        ensure_valid(model)
        out[d] = F_from_pmf(fpt(model, k_max), k_max)
    return out


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    residual: float  # largest absolute residual
    slope_se: float

    @property
    def significance(self) -> float:
        if self.slope_se > 0:
            return self.slope / self.slope_se
        if self.slope > 0:
            return math.inf
        return 0.0 if self.slope == 0 else -math.inf


def linear_fit(x, y) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    se = math.sqrt(float((resid**2).sum()) / (n - 2) / sxx) if n > 2 else math.inf
    return LinearFit(slope, intercept, float(np.abs(resid).max()), se)


@dataclass(frozen=True)
class DriftEstimate:
    v: float
    ci_low: float
    ci_high: float
    n: int


@dataclass(frozen=True, eq=False)
class RegimeReport:
    family: str
    params: dict
    d_values: tuple
    F: np.ndarray  # F[i, k] = F(k; d_values[i])
    invariance_score: float
    fit_k: int
    growth: LinearFit
    excursion_ratios: np.ndarray  # p_{d+2l}/p_d, l = 1..; reported, not asserted
    classification: str
    invariance_tol: float
    slope_sigma: float
    drift: DriftEstimate | None = None

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "d_values": list(self.d_values),
            "k_max": int(self.F.shape[1] - 1),
            "F": self.F.tolist(),
            "invariance_score": self.invariance_score,
            "invariance_tol": self.invariance_tol,
            "fit_k": self.fit_k,
            "growth_slope": self.growth.slope,
            "growth_intercept": self.growth.intercept,
            "growth_residual": self.growth.residual,
            "growth_slope_se": self.growth.slope_se,
            "growth_significance": self.growth.significance,
            "slope_sigma": self.slope_sigma,
            "excursion_ratios": self.excursion_ratios.tolist(),
            "classification": self.classification,
            "drift": None if self.drift is None else vars(self.drift),
        }


def classify(
    profiles: dict[int, EntropicProfile],
    invariance_tol: float = 1e-9,
    slope_sigma: float = 5.0,
    fit_k: int = 2,
    family: str = "",
    params: dict | None = None,
) -> RegimeReport:
    """Classify a d-sweep of entropic profiles.

    The growth trend is a straight-line fit of F(fit_k; d) against d; the
    default ``fit_k = 2`` is the first detour order that can show bulk growth
    (parity forbids k = 1 on bipartite lattices).
    """
    ds = sorted(profiles)
    if len(ds) < 3:
        raise ValueError(f"need at least 3 distinct d values, got {len(ds)}")
    k_max = min(profiles[d].K for d in ds)
    if fit_k > k_max:
        raise ValueError(f"fit_k={fit_k} exceeds common profile horizon {k_max}")
    F = np.vstack([profiles[d].F[: k_max + 1] for d in ds])
    invariance = float((F.max(axis=0) - F.min(axis=0)).max())
    fit = linear_fit(ds, F[:, fit_k])
    if invariance <= invariance_tol:
        label = INJECTION
    elif fit.slope > 0 and fit.significance >= slope_sigma:
        label = BULK
    else:
        label = INCONCLUSIVE
    increments = np.diff(F, axis=1, prepend=0.0)
    ratios = increments[:, 2::2]
    return RegimeReport(
        family=family,
        params=dict(params or {}),
        d_values=tuple(ds),
        F=F,
        invariance_score=invariance,
        fit_k=fit_k,
        growth=fit,
        excursion_ratios=ratios,
        classification=label,
        invariance_tol=invariance_tol,
        slope_sigma=slope_sigma,
    )


def diagnose(
    family: ModelFamily,
    d_list,
    k_max: int = 10,
    invariance_tol: float = 1e-9,
    slope_sigma: float = 5.0,
    fit_k: int = 2,
) -> RegimeReport:
    profiles = entropic_profile(family, d_list, k_max)
    return classify(profiles, invariance_tol, slope_sigma, fit_k, family.name, family.params)


def ratio_slope(family: ModelFamily, d_list, lag: int = 2) -> LinearFit:
    """Least-squares line through p_{d+lag}/p_d against d."""
    ds = sorted(set(int(x) for x in d_list))
    if len(ds) < 3:
        raise ValueError("need at least 3 distinct d values")
    ratios = []
    for d in ds:
        dist = fpt(family.at(d), lag)
        ratios.append(dist.masses[lag] / dist.p_d)
    return linear_fit(ds, ratios)


def bethe_ratio_slope(z: int, d_list) -> tuple[float, float, float]:
    fit = ratio_slope(bethe_family(z), d_list, 2)
    return fit.slope, fit.intercept, fit.residual


def estimate_drift(spec, arrivals, reps: int = 2000, seed: int = 0, level: float = 0.95) -> DriftEstimate:
    """Effective velocity d / <t> of conditioned arrivals, with a percentile bootstrap CI.

    ``arrivals`` is an array of arrival times or an object with a ``samples()`` method.
    """
    t = np.asarray(arrivals.samples() if hasattr(arrivals, "samples") else arrivals, dtype=float)
    if t.size < 1000:
        raise ValueError(f"need at least 1000 conditioned arrivals, got {t.size}")
    d = spec.distance
    v = d / t.mean()
    rng = np.random.default_rng(seed)
    values, counts = np.unique(t, return_counts=True)
    draws = rng.multinomial(t.size, counts / t.size, size=reps)
    boot = d / (draws @ values / t.size)
    lo, hi = np.quantile(boot, [(1 - level) / 2, (1 + level) / 2])
    return DriftEstimate(float(v), float(lo), float(hi), int(t.size))
