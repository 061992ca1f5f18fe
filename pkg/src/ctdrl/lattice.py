"""State-space lattice, dynamics-model estimation, and the finite-difference
transition kernel (cell-dependent timestep plus neighbor probabilities).
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .env import EnvState, Transition

Cell = tuple[int, ...]


class DegenerateModelError(RuntimeError):
    """Raised when the model at a (cell, action) cannot define a kernel yet.

    Callers should skip the corresponding update until the model has seen a
    transition with non-trivial drift or diffusion.
    """


@dataclass(frozen=True)
class Lattice:
    """Uniform grid of pitch ``epsilon`` anchored at the origin, intersected
    with a box domain [lower, upper]."""

    epsilon: float
    lower: np.ndarray
    upper: np.ndarray
    i_min: np.ndarray = field(init=False)
    i_max: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        # snap-to-grid tolerance so that e.g. upper=1.0, eps=0.02 yields i_max=50
        tol = 1e-9
        object.__setattr__(self, "i_min", np.ceil(lower / self.epsilon - tol).astype(int))
        object.__setattr__(self, "i_max", np.floor(upper / self.epsilon + tol).astype(int))
        boundary = np.array([self._compute_boundary(c) for c in self.cells()])
        object.__setattr__(self, "_boundary_mask", boundary)

    @property
    def dimension(self) -> int:
        return self.lower.size

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple((self.i_max - self.i_min + 1).tolist())

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def cells(self) -> Iterator[Cell]:
        ranges = [range(lo, hi + 1) for lo, hi in zip(self.i_min, self.i_max)]
        return (tuple(c) for c in itertools.product(*ranges))

    def cell_center(self, cell: Cell) -> np.ndarray:
        return np.asarray(cell, dtype=float) * self.epsilon

    def flat_index(self, cell: Cell) -> int:
        if len(cell) == 1:
            return cell[0] - int(self.i_min[0])
        rel = np.asarray(cell, dtype=int) - self.i_min
        return int(np.ravel_multi_index(rel, self.shape))

    def cell_from_flat(self, idx: int) -> Cell:
        rel = np.unravel_index(idx, self.shape)
        return tuple(int(r + lo) for r, lo in zip(rel, self.i_min))

    def contains(self, cell: Cell) -> bool:
        c = np.asarray(cell, dtype=int)
        return bool(np.all(c >= self.i_min) and np.all(c <= self.i_max))

    def _compute_boundary(self, cell: Cell) -> bool:
        x = self.cell_center(cell)
        tol = 1e-9 * max(1.0, float(np.max(np.abs(self.upper - self.lower))))
        return bool(np.any(x <= self.lower + tol) or np.any(x >= self.upper - tol))

    def is_boundary(self, cell: Cell) -> bool:
        """True when the cell lies on the domain boundary (terminal region)."""
        return bool(self._boundary_mask[self.flat_index(cell)])

    def encode(self, x: np.ndarray | EnvState) -> Cell:
        """Nearest lattice cell; exact midpoints break toward the smaller index."""
        if isinstance(x, EnvState):
            x = x.x
        if self.dimension == 1:
            v = float(x[0]) if hasattr(x, "__len__") else float(x)
            if v < self.lower[0] - 1e-12 or v > self.upper[0] + 1e-12:
                raise ValueError(f"state {v} outside the domain box")
            t = v / self.epsilon
            i0 = math.floor(t)
            i = i0 + (t - i0 > 0.5 + 1e-12)
            return (min(max(i, int(self.i_min[0])), int(self.i_max[0])),)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < self.lower - 1e-12) or np.any(x > self.upper + 1e-12):
            raise ValueError(f"state {x} outside the domain box")
        t = x / self.epsilon
        i0 = np.floor(t).astype(int)
        frac = t - i0
        i = i0 + (frac > 0.5 + 1e-12)
        i = np.clip(i, self.i_min, self.i_max)
        return tuple(int(v) for v in i)

    def neighbor_offsets(self) -> list[Cell]:
        """Stencil offsets: one or two axes shifted by +-1 (no origin)."""
        d = self.dimension
        offsets = []
        for off in itertools.product((-1, 0, 1), repeat=d):
            nz = sum(1 for o in off if o != 0)
            if 1 <= nz <= 2:
                offsets.append(off)
        return offsets

    def neighbors(self, cell: Cell) -> list[Cell]:
        """In-domain stencil neighbors of ``cell``, excluding the cell itself."""
        if not self.contains(cell):
            raise ValueError(f"cell {cell} not in lattice")
        result = []
        for off in self.neighbor_offsets():
            cand = tuple(c + o for c, o in zip(cell, off))
            if self.contains(cand):
                result.append(cand)
        return result


@dataclass(frozen=True)
class TransitionKernel:
    """Cell-dependent timestep and probabilities over neighbor cells."""

    delta: float
    probs: dict[Cell, float]


def kernel_from_moments(mu: np.ndarray, sigma: np.ndarray,
                        epsilon: float) -> tuple[float, dict[Cell, float]]:
    """Finite-difference timestep and stencil probabilities from (mu, sigma).

    Axis cells receive Delta/(2 eps^2) * [2 eps mu_i^{+-} + sigma_ii - sum_{j!=i}|sigma_ij|];
    the four corner cells of each axis pair split the off-diagonal mass by
    sign so that total mass is exactly one. Negative intermediate values are
    clamped to zero and the vector renormalized.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = mu.size
    if d == 1:
        m = float(mu[0])
        s = float(sigma[0, 0])
        denom = epsilon * abs(m) + s
        if denom <= 1e-300:
            raise DegenerateModelError(
                "model has no usable drift or diffusion at this (cell, action); "
                "skip the update until more transitions are observed")
        delta = epsilon * epsilon / denom
        scale = delta / (2.0 * epsilon * epsilon)
        p_up = scale * (2.0 * epsilon * max(m, 0.0) + s)
        p_dn = scale * (2.0 * epsilon * max(-m, 0.0) + s)
        total = p_up + p_dn
        return delta, {(1,): p_up / total, (-1,): p_dn / total}
    off_abs_total = np.abs(sigma).sum() - np.trace(np.abs(sigma))
    denom = epsilon * np.abs(mu).sum() + np.trace(sigma) - 0.5 * off_abs_total
    if denom <= 1e-300:
        raise DegenerateModelError(
            "model has no usable drift or diffusion at this (cell, action); "
            "skip the update until more transitions are observed")
    delta = epsilon ** 2 / denom
    scale = delta / (2.0 * epsilon ** 2)
    probs: dict[Cell, float] = {}

    def offset(i: int, s: int, j: int | None = None, t: int = 0) -> Cell:
        off = [0] * d
        off[i] = s
        if j is not None:
            off[j] = t
        return tuple(off)

    for i in range(d):
        row_off = np.abs(sigma[i]).sum() - abs(sigma[i, i])
        base = sigma[i, i] - row_off
        probs[offset(i, +1)] = scale * (2.0 * epsilon * max(mu[i], 0.0) + base)
        probs[offset(i, -1)] = scale * (2.0 * epsilon * max(-mu[i], 0.0) + base)
    for i in range(d):
        for j in range(i + 1, d):
            plus = scale * max(sigma[i, j], 0.0)
            minus = scale * max(-sigma[i, j], 0.0)
            probs[offset(i, +1, j, +1)] = plus
            probs[offset(i, -1, j, -1)] = plus
            probs[offset(i, +1, j, -1)] = minus
            probs[offset(i, -1, j, +1)] = minus

    clipped = {off: max(p, 0.0) for off, p in probs.items()}
    total = sum(clipped.values())
    if total <= 0:
        raise DegenerateModelError("all stencil probabilities vanished")
    return delta, {off: p / total for off, p in clipped.items()}


class LatticeModel:
    """Per (cell, action) EMA estimates of drift and diffusion-rate moments."""

    def __init__(self, lattice: Lattice, n_actions: int):
        self.lattice = lattice
        self.n_actions = n_actions
        d = lattice.dimension
        n = lattice.n_cells
        self.mu_hat = np.zeros((n, n_actions, d))
        self.sigma_hat = np.zeros((n, n_actions, d, d))
        self.visits = np.zeros((n, n_actions), dtype=np.int64)

    def update(self, cell: Cell, action: int, t: Transition, alpha: float) -> None:
        """EMA update of drift then diffusion rate, from one observed step.

        The diffusion residual uses the freshly updated drift and the observed
        step duration.
        """
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        if t.delta <= 0:
            raise ValueError("transition duration must be positive")
        idx = self.lattice.flat_index(cell)
        dx = t.x_next.x - t.x.x
        mu = self.mu_hat[idx, action]
        mu *= 1.0 - alpha
        mu += alpha * dx / t.delta
        resid = dx - t.delta * mu
        sig = self.sigma_hat[idx, action]
        sig *= 1.0 - alpha
        sig += (alpha / t.delta) * np.outer(resid, resid)
        self.visits[idx, action] += 1

    def kernel(self, cell: Cell, action: int) -> TransitionKernel:
        """Transition kernel at (cell, action); stencil mass that would leave
        the domain is accumulated on the clamped boundary cell."""
        idx = self.lattice.flat_index(cell)
        delta, offset_probs = kernel_from_moments(
            self.mu_hat[idx, action], self.sigma_hat[idx, action], self.lattice.epsilon)
        lo, hi = self.lattice.i_min, self.lattice.i_max
        probs: dict[Cell, float] = {}
        if len(cell) == 1:
            i, lo0, hi0 = cell[0], int(lo[0]), int(hi[0])
            for (off,), p in offset_probs.items():
                key = (min(max(i + off, lo0), hi0),)
                probs[key] = probs.get(key, 0.0) + p
            return TransitionKernel(delta, probs)
        base = np.asarray(cell, dtype=int)
        for off, p in offset_probs.items():
            target = np.clip(base + np.asarray(off, dtype=int), lo, hi)
            key = tuple(int(v) for v in target)
            probs[key] = probs.get(key, 0.0) + p
        return TransitionKernel(delta, probs)

    def to_csv(self, path) -> None:
        d = self.lattice.dimension
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = (["cell_index", "action"]
                      + [f"mu_hat_{i}" for i in range(d)]
                      + [f"sigma_hat_{i}_{j}" for i in range(d) for j in range(d)]
                      + ["visits"])
            writer.writerow(header)
            for idx in range(self.lattice.n_cells):
                for a in range(self.n_actions):
                    row = ([idx, a]
                           + [format(v, ".12g") for v in self.mu_hat[idx, a]]
                           + [format(v, ".12g") for v in self.sigma_hat[idx, a].ravel()]
                           + [int(self.visits[idx, a])])
                    writer.writerow(row)

    @classmethod
    def from_csv(cls, path, lattice: Lattice, n_actions: int) -> "LatticeModel":
        model = cls(lattice, n_actions)
        d = lattice.dimension
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                idx, a = int(row["cell_index"]), int(row["action"])
                model.mu_hat[idx, a] = [float(row[f"mu_hat_{i}"]) for i in range(d)]
                model.sigma_hat[idx, a] = np.reshape(
                    [float(row[f"sigma_hat_{i}_{j}"]) for i in range(d) for j in range(d)],
                    (d, d))
                model.visits[idx, a] = int(row["visits"])
        return model
