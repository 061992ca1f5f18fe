"""Continuous-time environments with Euler-Maruyama stepping.

Provides a generic Ito-diffusion simulator on a box domain and the 1-D
bounded-particle task (velocity control on [0, 1] with Gaussian rewards paid
on exit), together with its closed-form value and return-distribution oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# Return-space bounds for the 1-D particle task: 4-sigma envelope of the two
# boundary reward laws. Used for histogram/diagnostic ranges only; learned
# quantiles are never clamped to this interval.
V_MIN = -3.0
V_MAX = 2.0 + 4.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class EnvState:
    """A point of the state space plus its terminal flag."""

    x: np.ndarray
    terminal: bool


@dataclass(frozen=True)
class Transition:
    """One observed step: (state, action index, reward, next state, duration)."""

    x: EnvState
    a: int
    r: float
    x_next: EnvState
    delta: float
    terminal: bool


@dataclass(frozen=True)
class ToyEnvParams:
    """Parameters of the 1-D particle task.

    Rewards are zero in the interior; exiting at the right boundary pays a
    draw from N(reward_right), exiting at the left pays N(reward_left),
    where the second entry of each pair is a *variance*.
    """

    gamma: float = 0.3
    reward_right: tuple[float, float] = (2.0, 2.0)
    reward_left: tuple[float, float] = (1.0, 1.0)
    obs_frequency: float = 1000.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0,1), got {self.gamma}")
        if self.reward_right[1] <= 0 or self.reward_left[1] <= 0:
            raise ValueError("reward variances must be positive")
        if self.obs_frequency <= 0:
            raise ValueError("obs_frequency must be positive")

    @property
    def delta(self) -> float:
        """Observation interval in seconds."""
        return 1.0 / self.obs_frequency


class ToyParticleEnv:
    """Velocity-controlled particle on [0, 1].

    Dynamics are deterministic (dx/dt equals the chosen velocity); the episode
    terminates when the particle reaches either boundary, where the terminal
    reward is sampled. Action indices map to velocities via ``actions``.
    """

    actions: tuple[float, ...] = (-1.0, +1.0)

    def __init__(self, params: ToyEnvParams | None = None):
        self.params = params or ToyEnvParams()

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def state(self, x: float) -> EnvState:
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"state {x} outside [0, 1]")
        return EnvState(np.array([x]), terminal=(x <= 0.0 or x >= 1.0))

    def initial_state(self, rng: np.random.Generator) -> EnvState:
        x = rng.uniform(0.0, 1.0)
        while x == 0.0 or x == 1.0:
            x = rng.uniform(0.0, 1.0)
        return self.state(x)

    def _terminal_reward(self, x: float, rng: np.random.Generator) -> float:
        mean, var = self.params.reward_right if x >= 1.0 else self.params.reward_left
        return mean + math.sqrt(var) * rng.standard_normal()

    def simulate_step(self, state: EnvState, action: int, delta: float,
                      rng: np.random.Generator) -> Transition:
        """Advance the particle by one observation interval."""
        if delta <= 0:
            raise ValueError(f"delta must be positive, got {delta}")
        if state.terminal:
            raise ValueError("cannot step from a terminal state")
        x = float(state.x[0])
        x_next = min(1.0, max(0.0, x + self.actions[action] * delta))
        terminal = x_next <= 0.0 or x_next >= 1.0
        r = self._terminal_reward(x_next, rng) if terminal else 0.0
        return Transition(state, action, r, self.state(x_next), delta, terminal)


class ItoDiffusionEnv:
    """Generic Ito diffusion dX = f(X, a) dt + sigma(X, a) dB on a box domain.

    Stepping uses the Euler-Maruyama rule: the increment over ``delta`` is
    f*delta plus a Gaussian with covariance sigma sigma^T * delta. The episode
    terminates when the raw step leaves the open box; the state is then
    projected back onto the boundary.
    """

    def __init__(self, drift: Callable[[np.ndarray, int], np.ndarray],
                 diffusion: Callable[[np.ndarray, int], np.ndarray],
                 lower: Sequence[float], upper: Sequence[float],
                 n_actions: int,
                 terminal_reward: Callable[[np.ndarray, np.random.Generator], float] | None = None):
        self.drift = drift
        self.diffusion = diffusion
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.n_actions = n_actions
        self.terminal_reward = terminal_reward
        if self.lower.shape != self.upper.shape or np.any(self.lower >= self.upper):
            raise ValueError("domain box must satisfy lower < upper componentwise")

    def state(self, x: np.ndarray) -> EnvState:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower) or np.any(x > self.upper):
            raise ValueError(f"state {x} outside the domain box")
        on_boundary = bool(np.any(x <= self.lower) or np.any(x >= self.upper))
        return EnvState(x, terminal=on_boundary)

    def simulate_step(self, state: EnvState, action: int, delta: float,
                      rng: np.random.Generator) -> Transition:
        if delta <= 0:
            raise ValueError(f"delta must be positive, got {delta}")
        if state.terminal:
            raise ValueError("cannot step from a terminal state")
        x = state.x
        noise = self.diffusion(x, action) @ rng.standard_normal(x.shape[0])
        x_raw = x + self.drift(x, action) * delta + math.sqrt(delta) * noise
        x_next = np.minimum(self.upper, np.maximum(self.lower, x_raw))
        terminal = bool(np.any(x_next <= self.lower) or np.any(x_next >= self.upper))
        r = 0.0
        if terminal and self.terminal_reward is not None:
            r = self.terminal_reward(x_next, rng)
        return Transition(state, action, r, EnvState(x_next, terminal), delta, terminal)


def analytic_value(x: float, gamma: float) -> float:
    """Optimal expected discounted terminal reward at x under unit speed."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma={gamma} outside (0, 1)")
    return max(2.0 * gamma ** (1.0 - x), gamma ** x)


def analytic_greedy_direction(x: float, gamma: float) -> int:
    """+1 if moving right is at least as valuable as moving left, else -1."""
    return +1 if 2.0 * gamma ** (1.0 - x) >= gamma ** x else -1


def value_kink(gamma: float) -> float:
    """Location where the two branches of the optimal value cross."""
    return (math.log(2.0) + math.log(gamma)) / (2.0 * math.log(gamma))


def analytic_return_distribution(x: float, gamma: float, direction: int,
                                 params: ToyEnvParams | None = None) -> tuple[float, float]:
    """Mean and standard deviation of the return when moving straight to exit.

    The return is the terminal reward discounted over the (deterministic)
    exit time, so the law is a scaled Gaussian.
    """
    if not 0.0 < x < 1.0:
        raise ValueError(f"x={x} outside (0, 1)")
    params = params or ToyEnvParams(gamma=gamma)
    if direction >= 0:
        t, (mean, var) = 1.0 - x, params.reward_right
    else:
        t, (mean, var) = x, params.reward_left
    scale = gamma ** t
    return scale * mean, scale * math.sqrt(var)


def simulate_batch_returns(env: ToyParticleEnv, x0: np.ndarray, direction: np.ndarray,
                           delta: float, rng: np.random.Generator) -> np.ndarray:
    """Vectorized rollouts of the particle task under fixed per-rollout velocity.

    Uses the same clamp-then-check stepping rule as ``simulate_step``; returns
    the discounted terminal reward gamma^T * R of each rollout.
    """
    params = env.params
    x = np.asarray(x0, dtype=float).copy()
    direction = np.asarray(direction, dtype=float)
    t_exit = np.zeros_like(x)
    returns = np.zeros_like(x)
    active = (x > 0.0) & (x < 1.0)
    max_steps = int(math.ceil(1.0 / delta)) + 2
    for _ in range(max_steps):
        if not active.any():
            break
        x[active] = np.clip(x[active] + direction[active] * delta, 0.0, 1.0)
        t_exit[active] += delta
        exited = active & ((x <= 0.0) | (x >= 1.0))
        if exited.any():
            right = exited & (x >= 1.0)
            left = exited & (x <= 0.0)
            for mask, (mean, var) in ((right, params.reward_right), (left, params.reward_left)):
                n = int(mask.sum())
                if n:
                    r = mean + math.sqrt(var) * rng.standard_normal(n)
                    returns[mask] = params.gamma ** t_exit[mask] * r
            active &= ~exited
    return returns
