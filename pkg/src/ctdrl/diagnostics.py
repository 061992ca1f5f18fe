"""Quantitative checks against the closed-form oracle: per-quantile HJB
residuals, Wasserstein-1 error to the analytic return law, and value-error
profiles over the lattice.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .agents import StatisticsTable
from .distributions import quantile_midpoints
from .env import (ToyEnvParams, analytic_greedy_direction,
                  analytic_return_distribution, analytic_value)
from .lattice import Cell, Lattice


@dataclass
class ErrorProfile:
    x: np.ndarray
    value_estimate: np.ndarray
    value_true: np.ndarray
    abs_error: np.ndarray
    w1_error: np.ndarray

    @property
    def mean_abs_error(self) -> float:
        return float(np.mean(self.abs_error))

    @property
    def max_abs_error(self) -> float:
        return float(np.max(self.abs_error))

    @property
    def mean_w1_error(self) -> float:
        return float(np.mean(self.w1_error))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "v_hat", "v_star", "abs_err", "w1_err"])
            for row in zip(self.x, self.value_estimate, self.value_true,
                           self.abs_error, self.w1_error):
                writer.writerow([format(v, ".12g") for v in row])


def quantile_hjb_residual(table: StatisticsTable, lattice: Lattice, cell: Cell,
                          k: int, action: int, params: ToyEnvParams) -> float:
    """Central-difference evaluation of the per-quantile HJB left side.

    Uses the true particle-task dynamics: drift equal to the action velocity,
    zero diffusion, zero interior reward. Boundary cells are rejected since
    both axis neighbors are required.
    """
    if lattice.dimension != 1:
        raise ValueError("residual diagnostic is defined for the 1-D task")
    if lattice.is_boundary(cell):
        raise ValueError(f"cell {cell} lies on the boundary; need both neighbors")
    idx = lattice.flat_index(cell)
    eps = lattice.epsilon
    left = lattice.flat_index((cell[0] - 1,))
    right = lattice.flat_index((cell[0] + 1,))
    s = table.q[idx, action, k]
    s_left = table.q[left, action, k]
    s_right = table.q[right, action, k]
    drift = (-1.0, 1.0)[action]
    grad = (s_right - s_left) / (2.0 * eps)
    return drift * grad + math.log(params.gamma) * s


def w1_to_analytic(particles: np.ndarray, mu: float, sigma: float) -> float:
    """W1 distance from the particle measure to the equal-N quantile
    discretization of N(mu, sigma^2)."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    particles = np.asarray(particles, dtype=float)
    ref = mu + sigma * norm.ppf(quantile_midpoints(particles.size))
    return float(np.mean(np.abs(particles - ref)))


def value_error_profile(table: StatisticsTable, lattice: Lattice,
                        params: ToyEnvParams) -> ErrorProfile:
    """Greedy-action value and distribution errors at every interior cell.

    The reference distribution at each cell is the analytic return law of the
    oracle-optimal direction there.
    """
    xs, v_hat, v_star, w1 = [], [], [], []
    for cell in lattice.cells():
        if lattice.is_boundary(cell):
            continue
        idx = lattice.flat_index(cell)
        x = float(lattice.cell_center(cell)[0])
        greedy = table.greedy_action(idx)
        q = table.q[idx, greedy]
        direction = analytic_greedy_direction(x, params.gamma)
        mu, sigma = analytic_return_distribution(x, params.gamma, direction, params)
        xs.append(x)
        v_hat.append(float(q.mean()))
        v_star.append(analytic_value(x, params.gamma))
        w1.append(w1_to_analytic(q, mu, sigma))
    xs = np.asarray(xs)
    v_hat = np.asarray(v_hat)
    v_star = np.asarray(v_star)
    return ErrorProfile(xs, v_hat, v_star, np.abs(v_hat - v_star), np.asarray(w1))
