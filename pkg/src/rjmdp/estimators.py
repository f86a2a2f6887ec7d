"""Estimator-style front ends.

Each search method is an estimator with constructor-only hyperparameters,
``fit(env)`` returning ``self``, fitted attributes ending in an underscore,
and ``predict(states)`` giving the policy's actions. ``get_params`` and
``set_params`` come from scikit-learn, so the estimators clone and grid
search like any other.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baselines import PegasusConfig, pegasus_search, statespace_chain
from .clustering import EstimateMethod, default_merge_threshold, point_estimate, upgma_cluster
from .evaluation import default_horizon, estimate_expected_reward
from .sampler import AnnealSchedule, SamplerConfig, run_chain
from .target import Parameterization, RewardVariant, TargetKind
from .validation import check_environment, check_generator, check_states, check_theta

__all__ = ["RJMCMCPolicySearch", "StateSpacePolicySearch", "PegasusPolicySearch"]


def _seed_from(random_state) -> int:
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    return int(check_generator(random_state).integers(2**63 - 1))


class _PolicyMixin:
    """Prediction and evaluation shared by every fitted search method."""

    def predict(self, X):
        """Mean action of the fitted policy for each row of ``X``."""
        check_is_fitted(self, "theta_")
        X = check_states(X, self.env_)
        return np.array([self.env_.policy_mean(self.theta_, x) for x in X])

    def expected_reward(self, env=None, num_rollouts: int = 1000, horizon: int = None,
                        random_state=0):
        """Monte Carlo estimate ``(mean, std_err)`` of the fitted policy's return."""
        check_is_fitted(self, "theta_")
        env = self.env_ if env is None else check_environment(env)
        horizon = default_horizon(self.gamma) if horizon is None else horizon
        return estimate_expected_reward(env, self.theta_, num_rollouts, horizon, self.gamma,
                                        check_generator(random_state))

    def score(self, env=None, num_rollouts: int = 1000, random_state=0) -> float:
        return self.expected_reward(env, num_rollouts, random_state=random_state)[0]

    def _initial_theta(self, env, initial_theta, seed):
        if initial_theta is None:
            return env.sample_theta(np.random.default_rng([seed, 1]))
        return check_theta(initial_theta, env)


class RJMCMCPolicySearch(_PolicyMixin, BaseEstimator):
    """Annealed reversible-jump search over noise-space trajectories.

    Parameters
    ----------
    gamma : float
        Discount factor of the MDP.
    variant : {"summed", "last_step"}
        Whether trajectories are weighted by their summed or final reward.
    n_iter, nu_max, n_plateau, ramp_fraction
        Chain length and annealing schedule; the last ``n_plateau`` samples,
        drawn at ``nu_max``, feed the point estimate.
    estimate : {"cluster", "mean"}
        Largest-UPGMA-cluster centroid or plain average of the plateau.
    merge_threshold : float, optional
        Clustering cut; defaults to 10% of the prior-box diagonal.
    tie_rollouts : int
        Rollouts used to score equally large clusters against each other.
    """

    def __init__(self, gamma=0.9, variant="summed", n_iter=2000, nu_max=1, n_plateau=500,
                 ramp_fraction=1.0, birth_prob=0.5, n_up=1, n_block=5, theta_scales=None,
                 crn_hold=1, estimate="cluster", merge_threshold=None, tie_rollouts=200,
                 random_state=None):
        self.gamma = gamma
        self.variant = variant
        self.n_iter = n_iter
        self.nu_max = nu_max
        self.n_plateau = n_plateau
        self.ramp_fraction = ramp_fraction
        self.birth_prob = birth_prob
        self.n_up = n_up
        self.n_block = n_block
        self.theta_scales = theta_scales
        self.crn_hold = crn_hold
        self.estimate = estimate
        self.merge_threshold = merge_threshold
        self.tie_rollouts = tie_rollouts
        self.random_state = random_state

    _parameterization = Parameterization.NOISE_SPACE

    def _config(self, seed) -> SamplerConfig:
        return SamplerConfig(
            gamma=self.gamma, birth_prob=self.birth_prob, n_up=self.n_up,
            n_block=self.n_block,
            theta_scales=None if self.theta_scales is None else tuple(np.atleast_1d(self.theta_scales)),
            n_iter=self.n_iter, nu_max=self.nu_max, n_plateau=self.n_plateau,
            schedule=AnnealSchedule(ramp_fraction=self.ramp_fraction), seed=seed,
            crn_hold=self.crn_hold,
        )

    def _kind(self) -> TargetKind:
        return TargetKind(RewardVariant(self.variant), self._parameterization)

    def _sample(self, env, config, theta0):
        return run_chain(env, config, self._kind(), theta0)

    def fit(self, env, initial_theta=None):
        env = check_environment(env)
        seed = _seed_from(self.random_state)
        config = self._config(seed)
        theta0 = self._initial_theta(env, initial_theta, seed)
        log = self._sample(env, config, theta0)
        samples = log.plateau_samples()

        self.env_ = env
        self.seed_ = seed
        self.sample_log_ = log
        self.acceptance_rates_ = log.acceptance_rates()
        self.samples_consumed_ = int(log.samples_consumed[-1])
        self.cluster_result_ = None
        if EstimateMethod(self.estimate) is EstimateMethod.MEAN:
            self.theta_ = point_estimate(samples, EstimateMethod.MEAN)
        else:
            threshold = self.merge_threshold
            if threshold is None:
                threshold = default_merge_threshold(env.theta_low, env.theta_high)
            horizon = default_horizon(self.gamma)

            def score(theta):
                rng = np.random.default_rng([seed, 2])
                return estimate_expected_reward(env, theta, self.tie_rollouts, horizon,
                                                self.gamma, rng)[0]

            self.cluster_result_ = upgma_cluster(samples, threshold, score_fn=score)
            self.theta_ = self.cluster_result_.estimate.copy()
        return self


class StateSpacePolicySearch(RJMCMCPolicySearch):
    """The same chain sampled over states, with random-walk path updates.

    ``state_scales`` sets the per-coordinate random-walk scale; by default it
    is 10% of the mean absolute state in the initial trajectory.
    """

    def __init__(self, gamma=0.9, variant="summed", n_iter=2000, nu_max=1, n_plateau=500,
                 ramp_fraction=1.0, birth_prob=0.5, n_up=1, n_block=5, theta_scales=None,
                 crn_hold=1, estimate="cluster", merge_threshold=None, tie_rollouts=200,
                 state_scales=None, random_state=None):
        super().__init__(
            gamma=gamma, variant=variant, n_iter=n_iter, nu_max=nu_max, n_plateau=n_plateau,
            ramp_fraction=ramp_fraction, birth_prob=birth_prob, n_up=n_up, n_block=n_block,
            theta_scales=theta_scales, crn_hold=crn_hold, estimate=estimate,
            merge_threshold=merge_threshold, tie_rollouts=tie_rollouts,
            random_state=random_state)
        self.state_scales = state_scales

    _parameterization = Parameterization.STATE_SPACE

    def _sample(self, env, config, theta0):
        return statespace_chain(env, config, self._kind(), theta0, self.state_scales)


class PegasusPolicySearch(_PolicyMixin, BaseEstimator):
    """Gradient ascent on a frozen-scenario estimate of the return."""

    def __init__(self, gamma=0.9, num_scenarios=20, horizon=None, fd_step=1e-2, learn_rate=0.1,
                 n_iter=100, max_samples=None, random_state=None):
        self.gamma = gamma
        self.num_scenarios = num_scenarios
        self.horizon = horizon
        self.fd_step = fd_step
        self.learn_rate = learn_rate
        self.n_iter = n_iter
        self.max_samples = max_samples
        self.random_state = random_state

    def fit(self, env, initial_theta=None):
        env = check_environment(env)
        seed = _seed_from(self.random_state)
        config = PegasusConfig(
            gamma=self.gamma, num_scenarios=self.num_scenarios, horizon=self.horizon,
            fd_step=self.fd_step, learn_rate=self.learn_rate, num_iters=self.n_iter,
            max_samples=self.max_samples, seed=seed,
        )
        trace = pegasus_search(env, config, self._initial_theta(env, initial_theta, seed))
        self.env_ = env
        self.seed_ = seed
        self.trace_ = trace
        self.theta_ = trace.theta.copy()
        self.samples_consumed_ = int(trace.samples_consumed[-1])
        return self
