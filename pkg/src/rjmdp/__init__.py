"""Policy search for discounted MDPs with annealed reversible-jump MCMC."""

from .baselines import PegasusConfig, pegasus_objective, pegasus_search, statespace_chain
from .clustering import ClusterResult, EstimateMethod, point_estimate, upgma_cluster
from .core import Environment, NoiseStep, PolicyParams, Trajectory, recompute_suffix, \
    rollout_from_noise, truncate
from .environments import (CircularZone, CircularZones, GaussianBump, GaussianGoal,
                           LinearGaussianSpec, RepellerSpec, bimodal_linear_gaussian,
                           make_environment, make_linear_gaussian, make_repellers,
                           repellers_with_gaussian_goal, repellers_with_zones)
from .estimators import PegasusPolicySearch, RJMCMCPolicySearch, StateSpacePolicySearch
from .evaluation import crn_variance_experiment, default_horizon, estimate_expected_reward
from .exceptions import ConfigurationError, NumericalError
from .harness import EvalReport, ExperimentConfig, load_config, run_experiment
from .sampler import AnnealSchedule, SampleLog, SamplerConfig, run_chain
from .target import AnnealParams, Parameterization, RewardVariant, TargetKind, \
    annealed_log_target

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
