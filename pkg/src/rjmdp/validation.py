"""Input validation helpers shared by the estimators and the harness."""

from __future__ import annotations

import numbers

import numpy as np

from .core import Environment, theta_vector
from .exceptions import ConfigurationError

__all__ = ["check_environment", "check_theta", "check_generator", "check_states",
           "check_positive_int"]


def check_environment(env) -> Environment:
    if not isinstance(env, Environment):
        raise TypeError(f"expected an Environment, got {type(env).__name__}")
    return env


def check_theta(theta, env: Environment, in_prior: bool = True) -> np.ndarray:
    """Flat float copy of ``theta``; checks its size and, optionally, the prior box."""
    theta = theta_vector(theta).astype(float).copy()
    if theta.size != env.theta_dim:
        raise ConfigurationError(f"theta has {theta.size} entries, expected {env.theta_dim}")
    if not np.all(np.isfinite(theta)):
        raise ConfigurationError("theta must be finite")
    if in_prior and not env.in_prior(theta):
        raise ConfigurationError("theta lies outside the prior box")
    return theta


def check_generator(random_state) -> np.random.Generator:
    """Turn ``None``, an int, a SeedSequence or a Generator into a Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(random_state)
    raise TypeError(f"cannot build a random generator from {random_state!r}")


def check_states(X, env: Environment) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != env.state_dim:
        raise ValueError(f"expected states of shape (n, {env.state_dim}), got {X.shape}")
    return X


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, numbers.Integral) or value < 1:
        raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
