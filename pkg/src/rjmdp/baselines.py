"""Comparison methods.

``pegasus_search`` freezes a set of noise scenarios so the truncated return
is a deterministic function of the policy, then climbs it with central
finite-difference gradients. ``statespace_chain`` samples the same summed-
reward target over states directly, with random-walk path updates whose
acceptance carries the full transition-density ratio.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Environment, rollout_from_noise, rollout_rewards, sample_noise, \
    sample_noise_arrays, theta_vector
from .evaluation import default_horizon
from .exceptions import ConfigurationError, NumericalError
from .sampler import ChainState, NoiseSpaceKernel, SampleLog, SamplerConfig, _accept
from .target import Parameterization, RewardVariant, TargetKind, beta_of, check_gamma

__all__ = [
    "PegasusConfig",
    "PegasusTrace",
    "draw_scenarios",
    "pegasus_objective",
    "pegasus_search",
    "PathTrajectory",
    "StateSpaceKernel",
    "statespace_chain",
]


# --------------------------------------------------------------------------
# PEGASUS
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PegasusConfig:
    gamma: float = 0.9
    num_scenarios: int = 20
    horizon: int = None
    fd_step: float = 1e-2
    learn_rate: float = 0.1
    num_iters: int = 100
    max_samples: int = None
    seed: int = 0

    def __post_init__(self):
        check_gamma(self.gamma)
        if self.horizon is None:
            object.__setattr__(self, "horizon", default_horizon(self.gamma))
        for name in ("num_scenarios", "horizon", "num_iters"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be a positive integer")
        if self.fd_step <= 0 or self.learn_rate <= 0:
            raise ConfigurationError("fd_step and learn_rate must be positive")
        if self.max_samples is not None and self.max_samples < 1:
            raise ConfigurationError("max_samples must be positive when given")


@dataclass
class PegasusTrace:
    thetas: np.ndarray
    objectives: np.ndarray
    samples_consumed: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return self.thetas[-1]

    def to_csv(self, path):
        d = self.thetas.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", *[f"theta_{i}" for i in range(d)], "objective",
                             "samples_consumed"])
            for i in range(len(self.objectives)):
                writer.writerow([i, *(repr(float(v)) for v in self.thetas[i]),
                                 repr(float(self.objectives[i])), int(self.samples_consumed[i])])

    @staticmethod
    def read_csv(path) -> "PegasusTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        body = np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        return PegasusTrace(body[:, 1:-2], body[:, -2], body[:, -1].astype(np.int64))


def draw_scenarios(env: Environment, num_scenarios: int, horizon: int, rng) -> list:
    """Frozen noise sequences ``(x0, psis, phis)`` covering steps ``0..horizon``."""
    rng = np.random.default_rng(rng)
    return [sample_noise_arrays(env, rng, horizon) for _ in range(num_scenarios)]


def pegasus_objective(env: Environment, theta, scenarios, gamma: float, horizon: int) -> float:
    """Average truncated discounted return over the frozen scenarios."""
    theta = theta_vector(theta)
    weights = check_gamma(gamma) ** np.arange(horizon + 1)
    total = 0.0
    for x0, psis, phis in scenarios:
        rewards = rollout_rewards(env, theta, x0, psis[:horizon], phis[: horizon + 1])
        total += float(weights @ rewards)
    return total / len(scenarios)


def _central_gradient(f, theta, step):
    grad = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        grad[i] = (f(theta + e) - f(theta - e)) / (2.0 * step)
    return grad


def pegasus_search(env: Environment, config: PegasusConfig, initial_theta=None) -> PegasusTrace:
    """Fixed-step gradient ascent on the scenario objective, projected onto the prior box.

    Iterates ``num_iters`` times or until the next iteration would exceed
    ``max_samples`` transition samples.
    """
    rng = np.random.default_rng(config.seed)
    scenarios = draw_scenarios(env, config.num_scenarios, config.horizon, rng)
    if initial_theta is None:
        initial_theta = env.sample_theta(np.random.default_rng([config.seed, 1]))
    theta = np.clip(theta_vector(initial_theta).astype(float), env.theta_low, env.theta_high)
    per_eval = config.num_scenarios * (config.horizon + 1)
    consumed = 0

    def objective(th):
        nonlocal consumed
        consumed += per_eval
        return pegasus_objective(env, th, scenarios, config.gamma, config.horizon)

    thetas, values, used = [theta.copy()], [objective(theta)], [consumed]
    step = config.fd_step
    per_iter = (2 * theta.size + 1) * per_eval
    for _ in range(config.num_iters):
        if config.max_samples is not None and consumed + per_iter > config.max_samples:
            break
        grad = _central_gradient(objective, theta, step)
        if not np.all(np.isfinite(grad)):
            if step < config.fd_step:
                raise NumericalError("non-finite PEGASUS gradient after halving the step",
                                     {"theta": theta.tolist(), "fd_step": step})
            step = 0.5 * step
            grad = _central_gradient(objective, theta, step)
            if not np.all(np.isfinite(grad)):
                raise NumericalError("non-finite PEGASUS gradient after halving the step",
                                     {"theta": theta.tolist(), "fd_step": step})
        theta = np.clip(theta + config.learn_rate * grad, env.theta_low, env.theta_high)
        thetas.append(theta.copy())
        values.append(objective(theta))
        used.append(consumed)
    return PegasusTrace(np.array(thetas), np.array(values), np.array(used, dtype=np.int64))


# --------------------------------------------------------------------------
# state-space reversible-jump sampler
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathTrajectory:
    """A trajectory stored by its states; ``log_path`` holds per-step path log-densities.

    ``log_path[0]`` is the initial-state density, ``log_path[n]`` the
    transition density of ``x_n`` given ``(x_{n-1}, u_{n-1})``.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    log_path: np.ndarray
    reward_sum: float = field(default=None)

    def __post_init__(self):
        if self.reward_sum is None:
            object.__setattr__(self, "reward_sum", math.fsum(self.rewards.tolist()))

    @property
    def k(self) -> int:
        return len(self.rewards) - 1

    @property
    def last_reward(self) -> float:
        return float(self.rewards[-1])

    def identical_to(self, other) -> bool:
        return (np.array_equal(self.states, other.states)
                and np.array_equal(self.actions, other.actions)
                and np.array_equal(self.rewards, other.rewards)
                and np.array_equal(self.log_path, other.log_path))


class StateSpaceKernel(NoiseSpaceKernel):
    """Chain moves over ``(k, x_{0:k}, theta)`` for deterministic policies.

    Birth and death proposals draw from the transition model, so their ratios
    match the noise-space kernel. Path updates and policy moves do not cancel
    the transition densities and pay for every state they disturb.
    """

    def __init__(self, env, config, kind=None, state_scales=None):
        if not env.deterministic_policy:
            raise ConfigurationError("the state-space baseline supports deterministic policies only")
        kind = kind or TargetKind(RewardVariant.SUMMED, Parameterization.STATE_SPACE)
        super().__init__(env, config, kind)
        self.state_scales = None if state_scales is None else np.asarray(state_scales, float)

    def _policy(self, theta, x):
        return np.asarray(self.env.policy_mean(theta, x), dtype=float).reshape(-1)

    def _path(self, theta, states):
        env = self.env
        actions = np.array([self._policy(theta, x) for x in states]).reshape(-1, env.action_dim)
        rewards = np.array([env.reward(x, u) for x, u in zip(states, actions)])
        log_path = np.empty(len(states))
        log_path[0] = env.initial_logdensity(states[0])
        for n in range(1, len(states)):
            log_path[n] = env.transition_logdensity(states[n - 1], actions[n - 1], states[n])
        return PathTrajectory(states, actions, rewards, log_path)

    def _pilot_scales(self, state):
        if self.state_scales is None:
            typical = np.mean(np.abs(np.concatenate([t.states for t in state.trajs])), axis=0)
            self.state_scales = 0.1 * np.maximum(typical, 1e-3)
        return self.state_scales

    def fresh_trajectory(self, state: ChainState):
        k = int(state.rng.geometric(1.0 - self.config.gamma)) - 1
        noise = sample_noise(self.env, state.rng, k, state.theta)
        state.samples_consumed += k + 1
        return self._path(state.theta, rollout_from_noise(self.env, state.theta, noise).states)

    def extend(self, state, traj):
        env = self.env
        psi = env.transition_noise_sampler(state.rng)
        state.samples_consumed += 1
        x = np.asarray(env.transition(traj.states[-1], traj.actions[-1], psi), dtype=float)
        u = self._policy(state.theta, x)
        log_p = env.transition_logdensity(traj.states[-1], traj.actions[-1], x)
        return PathTrajectory(np.vstack((traj.states, x)), np.vstack((traj.actions, u)),
                              np.append(traj.rewards, env.reward(x, u)),
                              np.append(traj.log_path, log_p))

    def shrink(self, traj):
        return PathTrajectory(traj.states[:-1], traj.actions[:-1], traj.rewards[:-1],
                              traj.log_path[:-1])

    def update(self, state: ChainState, j: int) -> bool:
        """Gaussian random walk on a window of states; downstream states stay put."""
        env = self.env
        traj = state.trajs[j]
        beta = beta_of(j + 1, state.nu)
        scales = self._pilot_scales(state)
        start, length = self.choose_block(state, traj)
        stop = start + length
        states = traj.states.copy()
        states[start:stop] += scales * state.rng.standard_normal((length, env.state_dim))
        actions = traj.actions.copy()
        rewards = traj.rewards.copy()
        log_path = traj.log_path.copy()
        for n in range(start, stop):
            actions[n] = self._policy(state.theta, states[n])
            rewards[n] = env.reward(states[n], actions[n])
        if start == 0:
            log_path[0] = env.initial_logdensity(states[0])
        for n in range(max(start, 1), min(stop, traj.k) + 1):
            log_path[n] = env.transition_logdensity(states[n - 1], actions[n - 1], states[n])
        state.samples_consumed += length
        new = PathTrajectory(states, actions, rewards, log_path)
        log_alpha = beta * (self.log_reward(new) - self.log_reward(traj))
        log_alpha += _path_delta(new.log_path, traj.log_path, start, min(stop, traj.k) + 1)
        accept = _accept(state.rng, log_alpha, state, "update")
        if accept:
            state.trajs[j] = new
        state.record("update", accept)
        return accept

    def reroll(self, theta, traj):
        return self._path(theta, traj.states)

    def path_log_ratio(self, theta_new, theta_old, new_trajs, old_trajs) -> float:
        return sum(_path_delta(n.log_path, o.log_path, 0, len(o.log_path))
                   for n, o in zip(new_trajs, old_trajs))

    def initial_state(self, initial_theta, rng):
        state = super().initial_state(initial_theta, rng)
        self._pilot_scales(state)
        return state


def _path_delta(new, old, start, stop):
    a, b = new[start:stop], old[start:stop]
    if np.any(np.isneginf(a)):
        return -math.inf
    if np.any(np.isneginf(b)):
        return math.inf
    return float(a.sum() - b.sum())


def statespace_chain(env: Environment, config: SamplerConfig, kind: TargetKind = None,
                     initial_theta=None, state_scales=None) -> SampleLog:
    """Reversible-jump chain over states instead of noise; same log schema as ``run_chain``."""
    if initial_theta is None:
        initial_theta = env.sample_theta(np.random.default_rng([config.seed, 1]))
    return StateSpaceKernel(env, config, kind, state_scales).run(initial_theta)
