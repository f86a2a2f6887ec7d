"""Trajectories, policies, environments and the noise-to-state rollout.

A trajectory is stored by its noise terms. States, actions and rewards are a
deterministic image of ``(noise, theta)`` and are recomputed whenever either
changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import ConfigurationError

__all__ = [
    "NoiseStep",
    "Trajectory",
    "PolicyParams",
    "Environment",
    "rollout_from_noise",
    "recompute_suffix",
    "sample_noise_step",
    "sample_noise",
    "theta_vector",
]

_EMPTY = np.zeros(0)
_EMPTY.setflags(write=False)


@dataclass(frozen=True)
class NoiseStep:
    """Exogenous randomness of one time step.

    ``psi`` is the transition noise. At index 0 it holds the initial state
    itself. ``phi`` is the policy noise and is empty for deterministic
    policies.
    """

    psi: np.ndarray
    phi: np.ndarray = _EMPTY

    def __post_init__(self):
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=float).reshape(-1))
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float).reshape(-1))


@dataclass(frozen=True, eq=False)
class Trajectory:
    noise: tuple
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    reward_sum: float

    @property
    def k(self) -> int:
        """Final time index; the trajectory has ``k + 1`` steps."""
        return len(self.noise) - 1

    @property
    def last_reward(self) -> float:
        return float(self.rewards[-1])

    def __len__(self):
        return len(self.noise)

    def identical_to(self, other: "Trajectory") -> bool:
        """Bitwise equality of every stored field."""
        if len(self.noise) != len(other.noise):
            return False
        for a, b in zip(self.noise, other.noise):
            if not (np.array_equal(a.psi, b.psi) and np.array_equal(a.phi, b.phi)):
                return False
        return (
            np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
            and self.reward_sum == other.reward_sum
        )


@dataclass(frozen=True)
class PolicyParams:
    theta: np.ndarray
    blocks: tuple = ()

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        object.__setattr__(self, "theta", theta)
        blocks = self.blocks or ((0, theta.size),)
        blocks = tuple((int(a), int(b)) for a, b in blocks)
        _check_blocks(blocks, theta.size)
        object.__setattr__(self, "blocks", blocks)

    def __array__(self, dtype=None, copy=None):
        return self.theta if dtype is None else self.theta.astype(dtype)


def _check_blocks(blocks, size):
    pos = 0
    for a, b in blocks:
        if a != pos or b <= a:
            raise ConfigurationError(
                f"theta blocks must be contiguous, disjoint and cover 0..{size}; got {blocks}"
            )
        pos = b
    if pos != size:
        raise ConfigurationError(f"theta blocks cover {pos} of {size} entries")


def theta_vector(theta) -> np.ndarray:
    if isinstance(theta, PolicyParams):
        return theta.theta
    return np.asarray(theta, dtype=float).reshape(-1)


def _additive(transition_mean):
    def transition(x, u, psi):
        return transition_mean(x, u) + psi

    return transition


@dataclass(frozen=True, eq=False)
class Environment:
    """Known MDP model with additive (or general) noise.

    ``transition`` is the general hook ``x' = transition(x, u, psi)``. When it
    is omitted it is built from ``transition_mean`` as ``f(x, u) + psi``.
    ``transition_logdensity(x, u, x_next)`` is only needed by the state-space
    baseline and defaults to the noise density of the additive residual.
    Rewards are floored at ``reward_floor`` so they are always positive.

    ``rollout_kernel`` is an optional compiled loop with the same semantics as
    the step-by-step path; see ``rjmdp._kernels``.
    """

    state_dim: int
    action_dim: int
    initial_sampler: Callable
    initial_logdensity: Callable
    transition_noise_sampler: Callable
    transition_noise_logdensity: Callable
    policy_mean: Callable
    reward_fn: Callable
    theta_low: np.ndarray
    theta_high: np.ndarray
    transition_mean: Optional[Callable] = None
    transition: Optional[Callable] = None
    transition_logdensity: Optional[Callable] = None
    policy_noise_sampler: Optional[Callable] = None
    policy_noise_logdensity: Optional[Callable] = None
    policy_noise_depends_on_theta: bool = False
    theta_blocks: tuple = ()
    noise_dim: Optional[int] = None
    rollout_kernel: Optional[Callable] = None
    reward_floor: float = 1e-12
    name: str = "environment"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.state_dim < 1 or self.action_dim < 1:
            raise ConfigurationError("state_dim and action_dim must be positive")
        if self.transition is None:
            if self.transition_mean is None:
                raise ConfigurationError("need transition_mean or a general transition hook")
            object.__setattr__(self, "transition", _additive(self.transition_mean))
            if self.transition_logdensity is None:
                mean, noise_lp = self.transition_mean, self.transition_noise_logdensity

                def transition_logdensity(x, u, x_next):
                    return noise_lp(np.asarray(x_next, dtype=float) - mean(x, u))

                object.__setattr__(self, "transition_logdensity", transition_logdensity)
        if self.noise_dim is None:
            object.__setattr__(self, "noise_dim", self.state_dim)
        if self.reward_floor <= 0:
            raise ConfigurationError("reward_floor must be positive")
        low = np.asarray(self.theta_low, dtype=float).reshape(-1)
        high = np.asarray(self.theta_high, dtype=float).reshape(-1)
        if low.shape != high.shape or np.any(high <= low):
            raise ConfigurationError("theta box needs theta_low < theta_high elementwise")
        object.__setattr__(self, "theta_low", low)
        object.__setattr__(self, "theta_high", high)
        blocks = PolicyParams(np.zeros(low.size), self.theta_blocks).blocks
        object.__setattr__(self, "theta_blocks", blocks)
        if (self.policy_noise_sampler is None) != (self.policy_noise_logdensity is None):
            raise ConfigurationError("policy noise needs both a sampler and a log-density")

    @property
    def theta_dim(self) -> int:
        return self.theta_low.size

    @property
    def deterministic_policy(self) -> bool:
        return self.policy_noise_sampler is None

    def reward(self, x, u) -> float:
        r = float(self.reward_fn(x, u))
        return self.reward_floor if r < self.reward_floor else r  # NaN passes through

    def in_prior(self, theta) -> bool:
        theta = theta_vector(theta)
        return bool(np.all(theta >= self.theta_low) and np.all(theta <= self.theta_high))

    def log_prior_theta(self, theta) -> float:
        """Uniform prior on the parameter box (unnormalised)."""
        return 0.0 if self.in_prior(theta) else -math.inf

    def policy_params(self, theta) -> PolicyParams:
        return PolicyParams(theta_vector(theta), self.theta_blocks)

    def sample_theta(self, rng) -> np.ndarray:
        return rng.uniform(self.theta_low, self.theta_high)


def sample_noise_step(env: Environment, rng, theta=None, initial: bool = False) -> NoiseStep:
    """Draw one step of noise from the model (the initial state when ``initial``)."""
    psi = env.initial_sampler(rng) if initial else env.transition_noise_sampler(rng)
    if env.policy_noise_sampler is None:
        return NoiseStep(psi)
    return NoiseStep(psi, env.policy_noise_sampler(rng, theta))


def sample_noise(env: Environment, rng, k: int, theta=None) -> tuple:
    """Draw ``k + 1`` noise steps; index 0 carries the initial state."""
    steps = [sample_noise_step(env, rng, theta, initial=True)]
    steps.extend(sample_noise_step(env, rng, theta) for _ in range(k))
    return tuple(steps)


def _check_noise(env, noise, start):
    for n, step in enumerate(noise, start):
        want = env.state_dim if n == 0 else env.noise_dim
        if step.psi.size != want:
            raise ConfigurationError(f"noise[{n}].psi has size {step.psi.size}, expected {want}")
        if step.phi.size not in (0, env.action_dim):
            raise ConfigurationError(
                f"noise[{n}].phi has size {step.phi.size}, expected 0 or {env.action_dim}"
            )


def _roll(env, theta, noise, start, states, actions, rewards):
    """Recompute steps ``start..len(noise)-1`` after the given prefix arrays."""
    if env.rollout_kernel is not None:
        return _roll_compiled(env, theta, noise, start, states, actions, rewards)
    states, actions, rewards = list(states), list(actions), rewards.tolist()
    policy, transition, reward = env.policy_mean, env.transition, env.reward
    for n in range(start, len(noise)):
        step = noise[n]
        if n == 0:
            x = step.psi.copy()
        else:
            x = np.asarray(transition(states[n - 1], actions[n - 1], step.psi), dtype=float)
        u = np.asarray(policy(theta, x), dtype=float).reshape(-1)
        if step.phi.size:
            u = u + step.phi
        states.append(x)
        actions.append(u)
        rewards.append(reward(x, u))
    states_arr = np.array(states, dtype=float).reshape(len(noise), env.state_dim)
    actions_arr = np.array(actions, dtype=float).reshape(len(noise), env.action_dim)
    return Trajectory(tuple(noise), states_arr, actions_arr, np.array(rewards, dtype=float),
                      math.fsum(rewards))


def _roll_compiled(env, theta, noise, start, states, actions, rewards):
    ds, da = env.state_dim, env.action_dim
    first = max(start, 1)
    psis = np.array([step.psi for step in noise[first:]], dtype=float).reshape(-1, env.noise_dim)
    if env.policy_noise_sampler is None:
        phis = np.zeros((0, da))
    else:
        phis = np.array([step.phi for step in noise[start:]], dtype=float).reshape(-1, da)
    if start == 0:
        s, a, r = env.rollout_kernel(theta, noise[0].psi, np.zeros(da), psis, phis, True)
    else:
        s, a, r = env.rollout_kernel(theta, states[-1], actions[-1], psis, phis, False)
    if not np.all(np.isfinite(s)):
        raise FloatingPointError(f"non-finite state in rollout under theta={theta.tolist()}")
    np.maximum(r, env.reward_floor, out=r)
    if start:
        s = np.concatenate((states, s))
        a = np.concatenate((actions, a))
        r = np.concatenate((rewards, r))
    return Trajectory(tuple(noise), s.reshape(-1, ds), a.reshape(-1, da), r,
                      math.fsum(r.tolist()))


def rollout_from_noise(env: Environment, theta, noise: Sequence[NoiseStep]) -> Trajectory:
    """Deterministically map ``(noise, theta)`` to a full trajectory.

    ``x_0 = noise[0].psi``, ``u_n = pi(theta, x_n) + phi_n`` and
    ``x_{n+1} = transition(x_n, u_n, psi_{n+1})``.
    """
    noise = tuple(noise)
    if not noise:
        raise ConfigurationError("noise sequence must be nonempty")
    _check_noise(env, noise, 0)
    return _roll(env, theta_vector(theta), noise, 0, np.zeros((0, env.state_dim)),
                 np.zeros((0, env.action_dim)), np.zeros(0))


def recompute_suffix(env: Environment, theta, traj: Trajectory, from_index: int,
                     new_noise: Sequence[NoiseStep]) -> Trajectory:
    """Splice ``new_noise`` in at ``from_index`` and recompute everything downstream.

    Positions ``[from_index, from_index + len(new_noise))`` are replaced; the
    sequence grows when the splice runs past the end. The prefix before
    ``from_index`` is copied untouched.
    """
    new_noise = tuple(new_noise)
    if not 0 <= from_index <= traj.k + 1:
        raise IndexError(f"from_index {from_index} outside [0, {traj.k + 1}]")
    _check_noise(env, new_noise, from_index)
    end = from_index + len(new_noise)
    noise = traj.noise[:from_index] + new_noise + traj.noise[end:]
    if not noise:
        raise ConfigurationError("spliced noise sequence is empty")
    return _roll(env, theta_vector(theta), noise, from_index, traj.states[:from_index],
                 traj.actions[:from_index], traj.rewards[:from_index])


def truncate(traj: Trajectory) -> Trajectory:
    """Drop the final step (the death move); nothing downstream to recompute."""
    if traj.k == 0:
        raise ValueError("cannot remove the only step of a trajectory")
    rewards = traj.rewards[:-1]
    return Trajectory(traj.noise[:-1], traj.states[:-1], traj.actions[:-1], rewards,
                      math.fsum(rewards.tolist()))


def sample_noise_arrays(env: Environment, rng, length: int, theta=None):
    """Draw an initial state plus ``length`` transition-noise rows as plain arrays.

    Returns ``(x0, psis, phis)`` with ``phis`` of shape ``(length + 1, action_dim)``
    or ``(0, action_dim)`` for deterministic policies.
    """
    x0 = np.asarray(env.initial_sampler(rng), dtype=float)
    psis = np.array([env.transition_noise_sampler(rng) for _ in range(length)],
                    dtype=float).reshape(length, env.noise_dim)
    if env.policy_noise_sampler is None:
        phis = np.zeros((0, env.action_dim))
    else:
        phis = np.array([env.policy_noise_sampler(rng, theta) for _ in range(length + 1)],
                        dtype=float).reshape(length + 1, env.action_dim)
    return x0, psis, phis


def rollout_rewards(env: Environment, theta, x0, psis, phis) -> np.ndarray:
    """Floored per-step rewards of the rollout driven by the given noise arrays."""
    theta = theta_vector(theta)
    if env.rollout_kernel is not None:
        _, _, r = env.rollout_kernel(theta, np.asarray(x0, dtype=float),
                                     np.zeros(env.action_dim), psis, phis, True)
        return np.maximum(r, env.reward_floor)
    noise = [NoiseStep(x0, phis[0] if len(phis) else _EMPTY)]
    noise += [NoiseStep(psi, phis[n + 1] if len(phis) else _EMPTY) for n, psi in enumerate(psis)]
    return _roll(env, theta, noise, 0, np.zeros((0, env.state_dim)),
                 np.zeros((0, env.action_dim)), np.zeros(0)).rewards
