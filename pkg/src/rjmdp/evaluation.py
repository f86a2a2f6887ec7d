"""Monte Carlo evaluation of policies and the common-random-numbers experiment."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .core import Environment, rollout_rewards, sample_noise_arrays, theta_vector
from .target import check_gamma

__all__ = ["default_horizon", "estimate_expected_reward", "crn_variance_experiment",
           "f_test_less"]


def default_horizon(gamma: float, tail: float = 1e-3) -> int:
    """``ceil(log(tail) / log(gamma))``, so ``gamma**H <= tail``."""
    gamma = check_gamma(gamma)
    return max(int(math.ceil(math.log(tail) / math.log(gamma))), 1)


def _discounts(gamma, horizon):
    return gamma ** np.arange(horizon + 1)


def estimate_expected_reward(env: Environment, theta, num_rollouts: int, horizon: int,
                             gamma: float, rng) -> tuple:
    """Mean and standard error of the truncated discounted return over fresh rollouts."""
    if num_rollouts < 1:
        raise ValueError("num_rollouts must be positive")
    theta = theta_vector(theta)
    weights = _discounts(check_gamma(gamma), horizon)
    returns = np.empty(num_rollouts)
    for i in range(num_rollouts):
        x0, psis, phis = sample_noise_arrays(env, rng, horizon, theta)
        returns[i] = weights @ rollout_rewards(env, theta, x0, psis, phis)
    if num_rollouts == 1:
        return float(returns[0]), 0.0
    # offsets from the first return keep identical rollouts exactly error-free
    dev = returns - returns[0]
    return float(returns[0] + dev.mean()), float(dev.std(ddof=1) / math.sqrt(num_rollouts))


def crn_variance_experiment(env: Environment, theta, delta, num_pairs: int, horizon: int,
                            gamma: float, rng=None, num_rollouts: int = 1) -> tuple:
    """Variance of ``J(theta + delta) - J(theta)`` estimates with shared versus fresh noise.

    Each estimate averages ``num_rollouts`` rollouts. Returns
    ``(var_common, var_independent)`` as unbiased sample variances over
    ``num_pairs`` replications.
    """
    if num_pairs < 2:
        raise ValueError("need at least two pairs to estimate a variance")
    rng = np.random.default_rng(rng)
    theta = theta_vector(theta)
    shifted = theta + np.asarray(delta, dtype=float)
    weights = _discounts(check_gamma(gamma), horizon)

    def estimate(th, noises):
        return float(np.mean([weights @ rollout_rewards(env, th, *nz) for nz in noises]))

    def draw():
        return [sample_noise_arrays(env, rng, horizon, theta) for _ in range(num_rollouts)]

    common = np.empty(num_pairs)
    independent = np.empty(num_pairs)
    for p in range(num_pairs):
        shared = draw()
        common[p] = estimate(shifted, shared) - estimate(theta, shared)
        independent[p] = estimate(shifted, draw()) - estimate(theta, draw())
    return float(common.var(ddof=1)), float(independent.var(ddof=1))


def f_test_less(var_small: float, var_large: float, n_small: int, n_large: int) -> float:
    """One-sided p-value of an F-test for ``var_small < var_large``."""
    if var_small == 0.0:
        return 0.0 if var_large > 0.0 else 1.0
    return float(stats.f.sf(var_large / var_small, n_large - 1, n_small - 1))
