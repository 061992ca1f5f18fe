"""Quantile-distribution particle representation.

A quantile distribution with N particles is stored as a sorted 1-D float
array; each particle carries implicit weight 1/N. Weighted particle sets
(mixtures before sketch extraction) carry explicit weights.
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import norm

WEIGHT_TOL = 1e-9


class WeightedParticleSet(NamedTuple):
    """Finitely many (location, weight) pairs with weights summing to one."""

    locations: np.ndarray
    weights: np.ndarray


def quantile_midpoints(n: int) -> np.ndarray:
    """Midpoint quantile levels tau_k = (2k - 1) / (2n), k = 1..n."""
    if n < 1:
        raise ValueError(f"need at least one quantile level, got {n}")
    return (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)


def make_quantile_distribution(locations) -> np.ndarray:
    """Canonicalize particle locations into a sorted quantile distribution."""
    q = np.asarray(locations, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise ValueError("particle locations must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(q)):
        raise ValueError("particle locations must be finite")
    return np.sort(q)


def cdf_at(particles: np.ndarray, z: float) -> float:
    """Right-continuous empirical CDF of the particle measure at z."""
    particles = np.asarray(particles)
    return float(np.searchsorted(particles, z, side="right")) / particles.size


def mean(particles: np.ndarray) -> float:
    """Expected value of the particle measure."""
    return float(np.mean(particles))


def pushforward_affine(particles: np.ndarray, delta: float, r: float,
                       gamma: float) -> np.ndarray:
    """Push particles through z -> delta*r + gamma^delta * z.

    The slope gamma^delta is positive, so sortedness is preserved.
    """
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma={gamma} outside (0, 1)")
    return delta * r + gamma ** delta * np.asarray(particles, dtype=float)


def mixture(components: Sequence[tuple[float, np.ndarray]]) -> WeightedParticleSet:
    """Mix quantile distributions with the given weights.

    Each component's N particles enter with weight w/N, so total mass is one.
    """
    if not components:
        raise ValueError("mixture needs at least one component")
    weights = np.array([w for w, _ in components], dtype=float)
    if np.any(weights < 0):
        raise ValueError("mixture weights must be non-negative")
    if abs(weights.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError(f"mixture weights sum to {weights.sum()}, expected 1")
    locs = []
    wts = []
    for w, particles in components:
        particles = np.asarray(particles, dtype=float)
        locs.append(particles)
        wts.append(np.full(particles.size, w / particles.size))
    return WeightedParticleSet(np.concatenate(locs), np.concatenate(wts))


def extract_quantiles(pset: WeightedParticleSet, n: int) -> np.ndarray:
    """Sketch a weighted particle set into n quantiles at midpoint levels.

    Uses the generalized inverse CDF inf{z : F(z) >= tau}; a small slack on
    tau guards against cumulative-sum rounding at exactly attained levels.
    """
    if n < 1:
        raise ValueError(f"need at least one quantile, got {n}")
    locs = np.asarray(pset.locations, dtype=float)
    wts = np.asarray(pset.weights, dtype=float)
    if locs.size == 0:
        raise ValueError("cannot extract quantiles from an empty particle set")
    order = np.argsort(locs, kind="stable")
    locs = locs[order]
    cumw = np.cumsum(wts[order])
    total = cumw[-1]
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"particle weights sum to {total}, expected 1")
    taus = quantile_midpoints(n) * total
    idx = np.searchsorted(cumw, taus - 1e-12, side="left")
    return locs[np.minimum(idx, locs.size - 1)]


def gaussian_quantiles(mu: float, sigma: float, n: int) -> np.ndarray:
    """Midpoint quantiles of N(mu, sigma^2) as a quantile distribution."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    return mu + sigma * norm.ppf(quantile_midpoints(n))
