"""One minimizing-movements step for quantile particles.

Minimizes 2*tau*E(Z - Z')^2 (Z from the candidate, Z' from the target mixture,
drawn independently) plus the entropic Wasserstein proximal cost back to the
anchor, by gradient descent on the particle locations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sinkhorn
from .distributions import WeightedParticleSet
from .env import V_MAX, V_MIN

DEFAULT_GD_RATE = 0.1 * (V_MAX - V_MIN)

# Armijo sufficient-decrease coefficient; plain non-increase acceptance can
# stall in a step-size oscillation at the quadratic stability edge.
_ARMIJO = 1e-4
_MAX_HALVINGS = 60


class SinkhornConvergenceError(RuntimeError):
    """Sinkhorn failed to converge inside a descent step."""


@dataclass
class JkoConfig:
    tau: float
    beta: float = 1000.0
    gd_steps: int = 50
    gd_rate: float = DEFAULT_GD_RATE
    sinkhorn_tol: float = sinkhorn.DEFAULT_TOL
    sinkhorn_max_iter: int = sinkhorn.DEFAULT_MAX_ITER

    def __post_init__(self):
        if min(self.tau, self.beta, self.gd_rate) <= 0 or self.gd_steps <= 0:
            raise ValueError("all JKO parameters must be positive")


@dataclass
class SinkhornWarmStart:
    """Reusable scaled dual potentials for repeated solves on similar data."""

    phi: np.ndarray | None = None
    psi: np.ndarray | None = None


def kinetic_energy(candidate: np.ndarray, target: WeightedParticleSet) -> float:
    """(1/N) sum_i sum_j w_j (z_i - z'_j)^2 for independent draws."""
    z = np.asarray(candidate, dtype=float)
    locs = np.asarray(target.locations, dtype=float)
    w = np.asarray(target.weights, dtype=float)
    m1 = float(w @ locs)
    m2 = float(w @ locs ** 2)
    return float(np.mean(z ** 2) - 2.0 * m1 * np.mean(z) + m2)


def objective(candidate: np.ndarray, target: WeightedParticleSet,
              anchor: np.ndarray, cfg: JkoConfig) -> float:
    """2*tau*kinetic energy plus the entropic transport cost to the anchor."""
    candidate = np.asarray(candidate, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if candidate.size != anchor.size:
        raise ValueError("candidate and anchor must have the same particle count")
    prox = sinkhorn.value(sinkhorn.uniform_problem(candidate, anchor, cfg.beta),
                          cfg.sinkhorn_tol, cfg.sinkhorn_max_iter)
    return 2.0 * cfg.tau * kinetic_energy(candidate, target) + prox


def jko_step(anchor: np.ndarray, target: WeightedParticleSet, cfg: JkoConfig,
             warm: SinkhornWarmStart | None = None,
             trace: list | None = None) -> np.ndarray:
    """Descend the minimizing-movements objective from the anchor.

    Backtracking halves the step until the Armijo condition holds, so the
    objective is non-increasing across accepted steps. The result is re-sorted
    (monotone rearrangement) before returning.
    """
    anchor = np.asarray(anchor, dtype=float)
    n = anchor.size
    wa = np.full(n, 1.0 / n)
    t_locs = np.asarray(target.locations, dtype=float)
    t_w = np.asarray(target.weights, dtype=float)
    mask = t_w > 0
    t_locs_nz, t_w_nz = t_locs[mask], t_w[mask]
    m1 = float(t_w_nz @ t_locs_nz)
    m2 = float(t_w_nz @ t_locs_nz ** 2)
    if warm is None:
        warm = SinkhornWarmStart()
    if warm.psi is not None and warm.psi.shape != anchor.shape:
        warm.psi = None

    def kinetic(z: np.ndarray) -> float:
        return float(np.mean(z ** 2) - 2.0 * m1 * np.mean(z) + m2)

    def evaluate(z: np.ndarray):
        plan, _, phi, psi, _, converged = sinkhorn.solve_core(
            z, wa, anchor, wa, cfg.beta, cfg.sinkhorn_tol,
            min(cfg.sinkhorn_max_iter, 120), warm.phi, warm.psi)
        if not converged:
            # stale duals after a large particle move; restart with annealing
            plan, _, phi, psi, _, converged = sinkhorn.solve_core(
                z, wa, anchor, wa, cfg.beta, cfg.sinkhorn_tol,
                cfg.sinkhorn_max_iter)
        if not converged:
            raise SinkhornConvergenceError(
                f"Sinkhorn stalled after {cfg.sinkhorn_max_iter} iterations "
                f"(beta={cfg.beta}, n={n}) inside a JKO descent step")
        warm.phi, warm.psi = phi, psi
        obj = 2.0 * cfg.tau * kinetic(z) + sinkhorn.plan_cost(plan, z, anchor)
        return obj, plan

    z = anchor.copy()
    obj, plan = evaluate(z)
    if trace is not None:
        trace.append(obj)
    # trial displacements capped at the data span: runaway extrapolation would
    # push the scaled cost exponents beyond float64 resolution
    span = float(max(np.max(anchor), np.max(t_locs_nz))
                 - min(np.min(anchor), np.min(t_locs_nz))) + 1.0
    lr = cfg.gd_rate
    for _ in range(cfg.gd_steps):
        grad = (4.0 * cfg.tau / n) * (z - m1) + sinkhorn.plan_source_gradient(plan, z, anchor)
        gnorm2 = float(grad @ grad)
        if gnorm2 == 0.0:
            break
        gmax = float(np.max(np.abs(grad)))
        lr = min(lr, span / gmax)
        accepted = False
        for _ in range(_MAX_HALVINGS):
            cand = z - lr * grad
            cand_obj, cand_plan = evaluate(cand)
            if cand_obj <= obj - _ARMIJO * lr * gnorm2:
                z, obj, plan = cand, cand_obj, cand_plan
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break
        if trace is not None:
            trace.append(obj)
    return np.sort(z)
