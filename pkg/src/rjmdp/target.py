"""Log-densities of the trans-dimensional targets.

Everything is computed in log space. Reward factors enter as ``beta * log R``
where ``R`` is either the summed reward of a trajectory or its final reward.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from .core import Environment, Trajectory, theta_vector
from .exceptions import ConfigurationError

__all__ = [
    "RewardVariant",
    "Parameterization",
    "TargetKind",
    "AnnealParams",
    "check_gamma",
    "num_trajectories",
    "beta_of",
    "betas",
    "length_prior_log",
    "log_reward",
    "trajectory_log_density",
    "annealed_log_target",
]


class RewardVariant(str, enum.Enum):
    LAST_STEP = "last_step"
    SUMMED = "summed"


class Parameterization(str, enum.Enum):
    STATE_SPACE = "state_space"
    NOISE_SPACE = "noise_space"


@dataclass(frozen=True)
class TargetKind:
    variant: RewardVariant = RewardVariant.SUMMED
    parameterization: Parameterization = Parameterization.NOISE_SPACE

    def __post_init__(self):
        object.__setattr__(self, "variant", RewardVariant(self.variant))
        object.__setattr__(self, "parameterization", Parameterization(self.parameterization))


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError(f"discount factor must lie in (0, 1), got {gamma}")
    return gamma


def num_trajectories(nu: float) -> int:
    """Number of live trajectories; an integer ``nu`` has no fractional extra one."""
    if nu < 1:
        raise ConfigurationError(f"annealing exponent must be >= 1, got {nu}")
    return math.ceil(nu)


@dataclass(frozen=True)
class AnnealParams:
    nu: float = 1.0
    nu_max: int = 1

    def __post_init__(self):
        num_trajectories(self.nu)
        if self.nu_max < 1:
            raise ConfigurationError("nu_max must be a positive integer")

    @property
    def num_trajectories(self) -> int:
        return num_trajectories(self.nu)


def beta_of(traj_index: int, nu: float) -> float:
    """Annealing exponent of trajectory ``traj_index`` (1-based)."""
    count = num_trajectories(nu)
    if not 1 <= traj_index <= count:
        raise IndexError(f"trajectory index {traj_index} outside [1, {count}]")
    if traj_index < count:
        return 1.0
    frac = nu - math.floor(nu)
    return frac if frac > 0.0 else 1.0


def betas(nu: float) -> list:
    return [beta_of(j, nu) for j in range(1, num_trajectories(nu) + 1)]


def length_prior_log(k: int, gamma: float) -> float:
    """``log((1 - gamma) * gamma**k)``."""
    gamma = check_gamma(gamma)
    if k < 0:
        raise ValueError("trajectory length index must be nonnegative")
    return math.log1p(-gamma) + k * math.log(gamma)


def log_reward(traj: Trajectory, variant) -> float:
    if RewardVariant(variant) is RewardVariant.SUMMED:
        return math.log(traj.reward_sum)
    return math.log(traj.last_reward)


def trajectory_log_density(env: Environment, theta, traj: Trajectory, gamma: float) -> float:
    """``log p(k) + log p(noise_{0:k} | k, theta)``; the reward never enters."""
    theta = theta_vector(theta)
    total = length_prior_log(traj.k, gamma)
    for n, step in enumerate(traj.noise):
        if n == 0:
            total += env.initial_logdensity(step.psi)
        else:
            total += env.transition_noise_logdensity(step.psi)
        if step.phi.size:
            total += env.policy_noise_logdensity(step.phi, theta)
    return total


def annealed_log_target(env: Environment, theta, trajs: Sequence[Trajectory],
                        anneal: AnnealParams, kind: TargetKind, gamma: float,
                        log_prior_theta=None) -> float:
    """Unnormalised log of the replicated target at real-valued ``nu``.

    At ``nu = 1`` this is the single-trajectory joint. Only the reward factor
    of the fractional trajectory is tempered; its path density is not.
    """
    trajs = list(trajs)
    if len(trajs) != anneal.num_trajectories:
        raise ConfigurationError(
            f"expected {anneal.num_trajectories} trajectories for nu={anneal.nu}, got {len(trajs)}"
        )
    prior = env.log_prior_theta if log_prior_theta is None else log_prior_theta
    total = prior(theta)
    if total == -math.inf:
        return total
    for beta, traj in zip(betas(anneal.nu), trajs):
        total += beta * log_reward(traj, kind.variant)
        total += trajectory_log_density(env, theta, traj, gamma)
    return total
