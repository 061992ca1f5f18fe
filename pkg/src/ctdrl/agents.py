"""Tabular agents over the lattice: the model-based finite-difference
Wasserstein-gradient-flow learner (fdwgf) and the discrete-time quantile
TD-learning baseline (qtd), both with epsilon-greedy control.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import jko
from .distributions import (WeightedParticleSet, extract_quantiles,
                            gaussian_quantiles, mixture, quantile_midpoints)
from .env import V_MAX, V_MIN, Transition
from .lattice import Cell, DegenerateModelError, Lattice, LatticeModel, TransitionKernel


@dataclass
class AgentConfig:
    epsilon_lattice: float = 0.02
    n_quantiles: int = 51
    gamma: float = 0.3
    tau: float = 2.5
    beta: float = 1000.0
    alpha: float = 0.1
    explore_eps: float = 0.2
    qtd_lr: float = 0.1
    gd_steps: int = 1
    gd_rate: float = 4.0
    sinkhorn_tol: float = 1e-6
    sinkhorn_max_iter: int = 5000
    # optimistic pseudo-observation of the exit reward at each boundary: it
    # draws visits to unexplored boundaries and decays as real exits
    # accumulate, so early reward noise cannot collapse the greedy field
    terminal_prior: float = 0.5
    terminal_prior_weight: float = 5.0

    def __post_init__(self):
        if min(self.epsilon_lattice, self.gamma, self.tau, self.beta,
               self.alpha, self.qtd_lr, self.gd_rate) <= 0:
            raise ValueError("config parameters must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0,1), got {self.gamma}")
        if not 0.0 <= self.explore_eps <= 1.0:
            raise ValueError(f"explore_eps must lie in [0,1], got {self.explore_eps}")
        if self.n_quantiles < 1 or self.gd_steps < 1:
            raise ValueError("n_quantiles and gd_steps must be at least 1")


class StatisticsTable:
    """Per (cell, action) quantile statistics, kept sorted along the last axis."""

    def __init__(self, n_cells: int, n_actions: int, n_quantiles: int):
        self.q = np.zeros((n_cells, n_actions, n_quantiles))

    @property
    def n_actions(self) -> int:
        return self.q.shape[1]

    @property
    def n_quantiles(self) -> int:
        return self.q.shape[2]

    def quantiles(self, cell_idx: int, action: int) -> np.ndarray:
        return self.q[cell_idx, action].copy()

    def greedy_action(self, cell_idx: int) -> int:
        """Action with the largest mean; ties go to the smaller index."""
        return int(np.argmax(self.q[cell_idx].sum(axis=1)))


def select_action(table: StatisticsTable, cell_idx: int, explore_eps: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy over the per-action means at a cell."""
    if rng.random() < explore_eps:
        return int(rng.integers(table.n_actions))
    return table.greedy_action(cell_idx)


class RunningMeanVar:
    """Welford accumulator for the terminal-reward law at a boundary cell."""

    __slots__ = ("count", "mean", "_m2")

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def add(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self._m2 += d * (x - self.mean)

    @property
    def std(self) -> float:
        return math.sqrt(self._m2 / self.count) if self.count > 0 else 0.0


class _TabularAgent:
    def __init__(self, lattice: Lattice, cfg: AgentConfig, n_actions: int):
        self.lattice = lattice
        self.cfg = cfg
        self.table = StatisticsTable(lattice.n_cells, n_actions, cfg.n_quantiles)

    def select_action(self, cell: Cell, rng: np.random.Generator) -> int:
        return select_action(self.table, self.lattice.flat_index(cell),
                             self.cfg.explore_eps, rng)


def fdwgf_target(agent: "FdwgfAgent", cell: Cell, action: int, r: float,
                 kernel: TransitionKernel) -> WeightedParticleSet:
    """Mixture of bootstrapped neighbor quantiles under the kernel.

    Non-terminal neighbors contribute their greedy-action quantiles pushed
    through z -> Delta*r + gamma^Delta*z; terminal neighbors contribute the
    quantiles of the empirical Gaussian of observed exit rewards, discounted
    over Delta. A never-observed boundary cell contributes the return-space
    ceiling instead: optimism there is what drives the agent to reach and
    measure each boundary, and it is replaced by data on first contact.
    """
    cfg = agent.cfg
    n = cfg.n_quantiles
    disc = cfg.gamma ** kernel.delta
    comps = []
    for y, p in kernel.probs.items():
        if agent.lattice.is_boundary(y):
            stats = agent.terminal_stats.get(y)
            count = stats.count if stats is not None else 0
            w = cfg.terminal_prior_weight
            if count == 0:
                locs = np.full(n, disc * cfg.terminal_prior)
            else:
                mean = (w * cfg.terminal_prior + count * stats.mean) / (w + count)
                locs = disc * (mean + stats.std * agent._normal_quantiles)
        else:
            y_idx = agent.lattice.flat_index(y)
            pi_y = agent.table.greedy_action(y_idx)
            locs = kernel.delta * r + disc * agent.table.q[y_idx, pi_y]
        comps.append((p, locs))
    return mixture(comps)


class FdwgfAgent(_TabularAgent):
    """Model-based learner: estimates local dynamics, forms the kernel-weighted
    bootstrap mixture, and moves each cell's quantiles by one JKO step."""

    def __init__(self, lattice: Lattice, cfg: AgentConfig, n_actions: int = 2):
        super().__init__(lattice, cfg, n_actions)
        self.model = LatticeModel(lattice, n_actions)
        self.terminal_stats: dict[Cell, RunningMeanVar] = {}
        self.skipped_updates = 0
        self._warm: dict[tuple[int, int], jko.SinkhornWarmStart] = {}
        self._normal_quantiles = gaussian_quantiles(0.0, 1.0, cfg.n_quantiles)
        self._jko_cfg = jko.JkoConfig(
            tau=cfg.tau, beta=cfg.beta, gd_steps=cfg.gd_steps, gd_rate=cfg.gd_rate,
            sinkhorn_tol=cfg.sinkhorn_tol, sinkhorn_max_iter=cfg.sinkhorn_max_iter)

    def record_terminal_reward(self, cell: Cell, r: float) -> None:
        self.terminal_stats.setdefault(cell, RunningMeanVar()).add(r)

    def update(self, t: Transition) -> None:
        if t.x.terminal:
            raise ValueError("cannot update from a terminal state")
        cell = self.lattice.encode(t.x.x)
        if t.terminal:
            self.record_terminal_reward(self.lattice.encode(t.x_next.x), t.r)
        self.model.update(cell, t.a, t, self.cfg.alpha)
        try:
            kernel = self.model.kernel(cell, t.a)
        except DegenerateModelError:
            self.skipped_updates += 1
            return
        target = fdwgf_target(self, cell, t.a, t.r, kernel)
        idx = self.lattice.flat_index(cell)
        anchor = self.table.q[idx, t.a]
        warm = self._warm.setdefault((idx, t.a), jko.SinkhornWarmStart())
        nu = jko.jko_step(anchor, target, self._jko_cfg, warm=warm)
        uniform = WeightedParticleSet(nu, np.full(nu.size, 1.0 / nu.size))
        self.table.q[idx, t.a] = extract_quantiles(uniform, self.cfg.n_quantiles)


def qtd_quantile_step(theta: np.ndarray, targets: np.ndarray, taus: np.ndarray,
                      lr: float) -> np.ndarray:
    """Quantile-regression subgradient update; the indicator uses strict <."""
    return theta + lr * (taus - (targets < theta))


class QtdAgent(_TabularAgent):
    """Discrete-time quantile TD-learning at the raw observation rate."""

    def __init__(self, lattice: Lattice, cfg: AgentConfig, n_actions: int = 2):
        super().__init__(lattice, cfg, n_actions)
        self._taus = quantile_midpoints(cfg.n_quantiles)

    def update(self, t: Transition, rng: np.random.Generator) -> None:
        if t.x.terminal:
            raise ValueError("cannot update from a terminal state")
        cfg = self.cfg
        idx = self.lattice.flat_index(self.lattice.encode(t.x.x))
        n = cfg.n_quantiles
        disc = cfg.gamma ** t.delta
        if t.terminal:
            targets = np.full(n, disc * t.r)
        else:
            nidx = self.lattice.flat_index(self.lattice.encode(t.x_next.x))
            pi = self.table.greedy_action(nidx)
            js = rng.integers(0, n, size=n)
            targets = t.delta * t.r + disc * self.table.q[nidx, pi][js]
        theta = qtd_quantile_step(self.table.q[idx, t.a], targets, self._taus,
                                  cfg.qtd_lr)
        self.table.q[idx, t.a] = np.sort(theta)


def write_checkpoint(table: StatisticsTable, path) -> None:
    """CSV checkpoint: one row per (cell, action, quantile level)."""
    taus = quantile_midpoints(table.n_quantiles)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cell_index", "action", "k", "tau_k", "quantile_value"])
        n_cells = table.q.shape[0]
        for idx in range(n_cells):
            for a in range(table.n_actions):
                for k in range(table.n_quantiles):
                    writer.writerow([idx, a, k + 1, format(taus[k], ".12g"),
                                     format(table.q[idx, a, k], ".12g")])


def read_checkpoint(path) -> StatisticsTable:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((int(row["cell_index"]), int(row["action"]),
                         int(row["k"]), float(row["quantile_value"])))
    n_cells = max(r[0] for r in rows) + 1
    n_actions = max(r[1] for r in rows) + 1
    n_quantiles = max(r[2] for r in rows)
    table = StatisticsTable(n_cells, n_actions, n_quantiles)
    for idx, a, k, v in rows:
        table.q[idx, a, k - 1] = v
    return table
