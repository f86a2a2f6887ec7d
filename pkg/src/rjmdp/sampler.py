"""Reversible-jump chain over policy parameters and noise-space trajectories.

One iteration, in order: a birth or death move on every trajectory (plus a
blocked update every ``n_up`` iterations), one Metropolis-Hastings move on
the policy parameters, the annealing step for ``nu``, and a freshly drawn
trajectory whenever ``ceil(nu)`` grows.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Environment, Trajectory, recompute_suffix, rollout_from_noise, \
    sample_noise, sample_noise_step, theta_vector, truncate
from .exceptions import ConfigurationError, NumericalError
from .target import RewardVariant, TargetKind, beta_of, betas, check_gamma, num_trajectories

__all__ = [
    "MOVES",
    "AnnealSchedule",
    "SamplerConfig",
    "ChainState",
    "SampleLog",
    "birth_probability",
    "birth_acceptance",
    "death_acceptance",
    "update_acceptance",
    "mh_acceptance",
    "NoiseSpaceKernel",
    "birth_move",
    "death_move",
    "update_move",
    "policy_mh_move",
    "run_chain",
]

MOVES = ("birth", "death", "update", "mh")


class ScheduleKind(str, enum.Enum):
    LINEAR_RAMP = "linear_ramp"


@dataclass(frozen=True)
class AnnealSchedule:
    """Linear ramp from 1 to ``nu_max``, then a plateau for the last ``M`` iterations.

    The ramp ends at ``ramp_fraction * (N - M)`` so the plateau always runs at
    ``nu_max``.
    """

    kind: ScheduleKind = ScheduleKind.LINEAR_RAMP
    ramp_fraction: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not 0.0 < self.ramp_fraction <= 1.0:
            raise ConfigurationError("ramp_fraction must lie in (0, 1]")

    def nu(self, i: int, n_iter: int, n_plateau: int, nu_max: int) -> float:
        if i <= 0 or nu_max == 1:
            return 1.0
        ramp_end = self.ramp_fraction * (n_iter - n_plateau)
        if i >= ramp_end:
            return float(nu_max)
        return 1.0 + (nu_max - 1) * (i / ramp_end)


@dataclass(frozen=True)
class SamplerConfig:
    gamma: float = 0.9
    birth_prob: float = 0.5
    n_up: int = 1
    n_block: int = 5
    theta_scales: Optional[tuple] = None
    n_iter: int = 1000
    nu_max: int = 1
    n_plateau: int = 0
    schedule: AnnealSchedule = AnnealSchedule()
    seed: int = 0
    crn_hold: int = 1

    def __post_init__(self):
        check_gamma(self.gamma)
        if not 0.0 < self.birth_prob < 1.0:
            raise ConfigurationError("birth_prob must lie in (0, 1)")
        for name in ("n_up", "n_block", "nu_max"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be a positive integer")
        if self.n_iter < 0 or self.n_plateau < 0 or self.n_plateau > self.n_iter:
            raise ConfigurationError("need 0 <= n_plateau <= n_iter")
        if self.crn_hold < 0:
            raise ConfigurationError("crn_hold must be nonnegative")
        if self.theta_scales is not None:
            scales = tuple(float(s) for s in np.atleast_1d(self.theta_scales))
            if any(s <= 0 for s in scales):
                raise ConfigurationError("theta proposal scales must be positive")
            object.__setattr__(self, "theta_scales", scales)
        if isinstance(self.schedule, dict):
            object.__setattr__(self, "schedule", AnnealSchedule(**self.schedule))

    def nu_at(self, i: int) -> float:
        return self.schedule.nu(i, self.n_iter, self.n_plateau, self.nu_max)

    def block_scales(self, env: Environment) -> np.ndarray:
        """Per-block random-walk scales; default is 10% of each block's box width."""
        blocks = env.theta_blocks
        if self.theta_scales is None:
            width = env.theta_high - env.theta_low
            return np.array([0.1 * float(width[a:b].mean()) for a, b in blocks])
        if len(self.theta_scales) == 1:
            return np.full(len(blocks), self.theta_scales[0])
        if len(self.theta_scales) != len(blocks):
            raise ConfigurationError(
                f"{len(self.theta_scales)} theta scales given for {len(blocks)} blocks")
        return np.asarray(self.theta_scales, dtype=float)


# --------------------------------------------------------------------------
# acceptance ratios
# --------------------------------------------------------------------------


def birth_probability(k: int, birth_prob: float) -> float:
    """``b_k``; a length-one trajectory can only grow."""
    return 1.0 if k == 0 else birth_prob


def _log_birth(gamma, k, birth_prob, log_ratio, beta):
    b_k = birth_probability(k, birth_prob)
    d_next = 1.0 - birth_probability(k + 1, birth_prob)
    return math.log(gamma) + math.log(d_next) - math.log(b_k) + beta * log_ratio


def _log_death(gamma, k, birth_prob, log_ratio, beta):
    if k < 1:
        raise RuntimeError("death move proposed on a trajectory with k = 0")
    b_prev = birth_probability(k - 1, birth_prob)
    d_k = 1.0 - birth_probability(k, birth_prob)
    return -math.log(gamma) + math.log(b_prev) - math.log(d_k) + beta * log_ratio


def birth_acceptance(gamma: float, k: int, birth_prob: float, reward_ratio: float,
                     beta: float = 1.0) -> float:
    """``gamma * d_{k+1} / b_k * ratio**beta`` for growing a length-``k`` trajectory."""
    return math.exp(_log_birth(gamma, k, birth_prob, math.log(reward_ratio), beta))


def death_acceptance(gamma: float, k: int, birth_prob: float, reward_ratio: float,
                     beta: float = 1.0) -> float:
    """``(1 / gamma) * b_{k-1} / d_k * ratio**beta`` for shrinking from ``k`` to ``k - 1``."""
    return math.exp(_log_death(gamma, k, birth_prob, math.log(reward_ratio), beta))


def update_acceptance(reward_ratio: float, beta: float = 1.0) -> float:
    return reward_ratio**beta


def mh_acceptance(new_rewards, old_rewards, nu: float) -> float:
    """Simplified policy-move ratio: tempered products of reward ratios."""
    log_alpha = 0.0
    for beta, new, old in zip(betas(nu), new_rewards, old_rewards, strict=True):
        log_alpha += beta * (math.log(new) - math.log(old))
    return math.exp(log_alpha)


# --------------------------------------------------------------------------
# chain state and log
# --------------------------------------------------------------------------


@dataclass
class ChainState:
    theta: np.ndarray
    trajs: list
    nu: float
    rng: np.random.Generator
    iteration: int = 0
    proposed: dict = field(default_factory=lambda: dict.fromkeys(MOVES, 0))
    accepted: dict = field(default_factory=lambda: dict.fromkeys(MOVES, 0))
    samples_consumed: int = 0

    def record(self, move: str, accept: bool):
        self.proposed[move] += 1
        if accept:
            self.accepted[move] += 1

    def acceptance_rates(self) -> dict:
        return {m: (self.accepted[m] / self.proposed[m] if self.proposed[m] else math.nan)
                for m in MOVES}

    def dump(self) -> dict:
        return {
            "iteration": self.iteration,
            "nu": self.nu,
            "theta": self.theta.tolist(),
            "k": [t.k for t in self.trajs],
            "reward_sums": [t.reward_sum for t in self.trajs],
        }


@dataclass
class SampleLog:
    """Per-iteration record of a chain; row 0 is the initial state.

    ``proposed`` and ``accepted`` are cumulative counts with one column per
    entry of ``MOVES``. ``k_first`` tracks the length index of the first
    trajectory.
    """

    theta: np.ndarray
    nu: np.ndarray
    proposed: np.ndarray
    accepted: np.ndarray
    k_first: np.ndarray
    samples_consumed: np.ndarray
    n_plateau: int = 0
    final_trajs: list = field(default_factory=list, repr=False)

    CSV_MOVE_COLUMNS = tuple(f"acc_{m}" for m in MOVES)

    @property
    def n_iter(self) -> int:
        return len(self.nu) - 1

    def plateau_samples(self) -> np.ndarray:
        """The final ``n_plateau`` parameter samples (all of them when zero)."""
        if self.n_plateau == 0:
            return self.theta[1:] if self.n_iter else self.theta
        return self.theta[-self.n_plateau:]

    def cumulative_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.proposed > 0, self.accepted / np.maximum(self.proposed, 1), np.nan)

    def acceptance_rates(self) -> dict:
        return dict(zip(MOVES, self.cumulative_rates()[-1].tolist()))

    def to_csv(self, path):
        d = self.theta.shape[1]
        rates = self.cumulative_rates()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "nu", *[f"theta_{i}" for i in range(d)],
                             *self.CSV_MOVE_COLUMNS])
            for i in range(len(self.nu)):
                writer.writerow([i, repr(float(self.nu[i])),
                                 *(repr(float(v)) for v in self.theta[i]),
                                 *(repr(float(v)) for v in rates[i])])

    @staticmethod
    def read_csv(path) -> dict:
        """Parse a ``samples.csv`` back into arrays keyed by column group."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        theta_cols = [i for i, h in enumerate(header) if h.startswith("theta_")]
        move_cols = [header.index(c) for c in SampleLog.CSV_MOVE_COLUMNS]
        return {
            "header": header,
            "iter": body[:, 0].astype(int),
            "nu": body[:, 1],
            "theta": body[:, theta_cols],
            "rates": body[:, move_cols],
        }


class _Recorder:
    def __init__(self, n_iter, theta_dim):
        self.theta = np.empty((n_iter + 1, theta_dim))
        self.nu = np.empty(n_iter + 1)
        self.proposed = np.zeros((n_iter + 1, len(MOVES)), dtype=np.int64)
        self.accepted = np.zeros((n_iter + 1, len(MOVES)), dtype=np.int64)
        self.k_first = np.empty(n_iter + 1, dtype=np.int64)
        self.consumed = np.empty(n_iter + 1, dtype=np.int64)

    def __call__(self, i, state):
        self.theta[i] = state.theta
        self.nu[i] = state.nu
        self.proposed[i] = [state.proposed[m] for m in MOVES]
        self.accepted[i] = [state.accepted[m] for m in MOVES]
        self.k_first[i] = state.trajs[0].k
        self.consumed[i] = state.samples_consumed

    def finish(self, n_plateau, trajs):
        return SampleLog(self.theta, self.nu, self.proposed, self.accepted, self.k_first,
                         self.consumed, n_plateau, list(trajs))


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


def _accept(rng, log_alpha, state, where):
    if math.isnan(log_alpha):
        raise NumericalError(f"acceptance ratio is NaN in {where}", state.dump())
    u = rng.random()
    return log_alpha >= 0.0 or u < math.exp(log_alpha)


class NoiseSpaceKernel:
    """Moves of the chain when trajectories are parameterised by their noise."""

    def __init__(self, env: Environment, config: SamplerConfig, kind: TargetKind = None):
        self.env = env
        self.config = config
        self.kind = kind or TargetKind()
        self.summed = self.kind.variant is RewardVariant.SUMMED
        self.scales = config.block_scales(env)
        self.log_gamma = math.log(config.gamma)

    def log_reward(self, traj) -> float:
        return math.log(traj.reward_sum if self.summed else traj.rewards[-1])

    # trajectory construction ------------------------------------------------

    def fresh_trajectory(self, state: ChainState):
        """Draw ``k`` from the length prior and noise from the model, then roll out."""
        k = int(state.rng.geometric(1.0 - self.config.gamma)) - 1
        noise = sample_noise(self.env, state.rng, k, state.theta)
        state.samples_consumed += k + 1
        return rollout_from_noise(self.env, state.theta, noise)

    def reroll(self, theta, traj):
        return rollout_from_noise(self.env, theta, traj.noise)

    # moves -----------------------------------------------------------------

    def birth_or_death(self, state: ChainState, j: int) -> bool:
        k = state.trajs[j].k
        if state.rng.random() < birth_probability(k, self.config.birth_prob):
            return self.birth(state, j)
        return self.death(state, j)

    def birth(self, state: ChainState, j: int) -> bool:
        traj = state.trajs[j]
        beta = beta_of(j + 1, state.nu)
        new = self.extend(state, traj)
        log_ratio = self.log_reward(new) - self.log_reward(traj)
        log_alpha = _log_birth(self.config.gamma, traj.k, self.config.birth_prob, log_ratio, beta)
        accept = _accept(state.rng, log_alpha, state, "birth")
        if accept:
            state.trajs[j] = new
        state.record("birth", accept)
        return accept

    def extend(self, state, traj):
        step = sample_noise_step(self.env, state.rng, state.theta)
        state.samples_consumed += 1
        return recompute_suffix(self.env, state.theta, traj, traj.k + 1, (step,))

    def shrink(self, traj):
        return truncate(traj)

    def death(self, state: ChainState, j: int) -> bool:
        traj = state.trajs[j]
        beta = beta_of(j + 1, state.nu)
        new = self.shrink(traj)
        log_ratio = self.log_reward(new) - self.log_reward(traj)
        log_alpha = _log_death(self.config.gamma, traj.k, self.config.birth_prob, log_ratio, beta)
        accept = _accept(state.rng, log_alpha, state, "death")
        if accept:
            state.trajs[j] = new
        state.record("death", accept)
        return accept

    def choose_block(self, state, traj):
        length = min(self.config.n_block, traj.k + 1)
        start = int(state.rng.integers(0, traj.k + 2 - length))
        return start, length

    def update(self, state: ChainState, j: int) -> bool:
        """Resample a window of noise from the model and recompute downstream."""
        traj = state.trajs[j]
        beta = beta_of(j + 1, state.nu)
        start, length = self.choose_block(state, traj)
        steps = [sample_noise_step(self.env, state.rng, state.theta, initial=(n == 0))
                 for n in range(start, start + length)]
        new = recompute_suffix(self.env, state.theta, traj, start, steps)
        state.samples_consumed += traj.k + 1 - start
        log_alpha = beta * (self.log_reward(new) - self.log_reward(traj))
        accept = _accept(state.rng, log_alpha, state, "update")
        if accept:
            state.trajs[j] = new
        state.record("update", accept)
        return accept

    def propose_theta(self, state: ChainState) -> np.ndarray:
        blocks = self.env.theta_blocks
        b = int(state.rng.integers(len(blocks)))
        lo, hi = blocks[b]
        proposal = state.theta.copy()
        proposal[lo:hi] += self.scales[b] * state.rng.standard_normal(hi - lo)
        return proposal

    def path_log_ratio(self, theta_new, theta_old, new_trajs, old_trajs) -> float:
        """Path-density terms of the policy move; zero unless policy noise depends on theta."""
        if not self.env.policy_noise_depends_on_theta:
            return 0.0
        lp = self.env.policy_noise_logdensity
        total = 0.0
        for traj in old_trajs:
            for step in traj.noise:
                total += lp(step.phi, theta_new) - lp(step.phi, theta_old)
        return total

    def policy_move(self, state: ChainState) -> bool:
        """Random-walk proposal on one parameter block; trajectories re-rolled from their noise."""
        proposal = self.propose_theta(state)
        if not self.env.in_prior(proposal):
            state.record("mh", False)
            return False
        new_trajs = [self.reroll(proposal, t) for t in state.trajs]
        state.samples_consumed += sum(t.k + 1 for t in state.trajs)
        log_alpha = 0.0
        for j, (new, old) in enumerate(zip(new_trajs, state.trajs)):
            log_alpha += beta_of(j + 1, state.nu) * (self.log_reward(new) - self.log_reward(old))
        log_alpha += self.path_log_ratio(proposal, state.theta, new_trajs, state.trajs)
        accept = _accept(state.rng, log_alpha, state, "mh")
        if accept:
            state.theta = proposal
            state.trajs = new_trajs
        state.record("mh", accept)
        return accept

    # driver ----------------------------------------------------------------

    def initial_state(self, initial_theta, rng) -> ChainState:
        theta = theta_vector(initial_theta).astype(float).copy()
        if theta.size != self.env.theta_dim:
            raise ConfigurationError(
                f"initial theta has {theta.size} entries, model expects {self.env.theta_dim}")
        if not self.env.in_prior(theta):
            raise ConfigurationError("initial theta lies outside the prior box")
        state = ChainState(theta=theta, trajs=[], nu=1.0, rng=rng)
        state.trajs.append(self.fresh_trajectory(state))
        return state

    def run(self, initial_theta, callback=None) -> SampleLog:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        state = self.initial_state(initial_theta, rng)
        record = _Recorder(cfg.n_iter, self.env.theta_dim)
        record(0, state)
        hold = max(cfg.crn_hold, 1)
        try:
            for i in range(1, cfg.n_iter + 1):
                state.iteration = i
                if (i - 1) % hold == 0:
                    for j in range(len(state.trajs)):
                        self.birth_or_death(state, j)
                        if i % cfg.n_up == 0:
                            self.update(state, j)
                self.policy_move(state)
                state.nu = cfg.nu_at(i)
                while len(state.trajs) < num_trajectories(state.nu):
                    state.trajs.append(self.fresh_trajectory(state))
                record(i, state)
                if callback is not None:
                    callback(state)
        except (FloatingPointError, OverflowError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise NumericalError(f"chain aborted at iteration {state.iteration}: {exc}",
                                 state.dump()) from exc
        return record.finish(cfg.n_plateau, state.trajs)


def _kernel(env, config, kind, state=None):
    return NoiseSpaceKernel(env, config or SamplerConfig(), kind)


def birth_move(env, state: ChainState, traj_index: int, config: SamplerConfig = None,
               kind: TargetKind = None) -> bool:
    """Propose appending one step to trajectory ``traj_index`` (0-based)."""
    return _kernel(env, config, kind).birth(state, traj_index)


def death_move(env, state: ChainState, traj_index: int, config: SamplerConfig = None,
               kind: TargetKind = None) -> bool:
    return _kernel(env, config, kind).death(state, traj_index)


def update_move(env, state: ChainState, traj_index: int, config: SamplerConfig = None,
                kind: TargetKind = None) -> bool:
    return _kernel(env, config, kind).update(state, traj_index)


def policy_mh_move(env, state: ChainState, config: SamplerConfig = None,
                   kind: TargetKind = None) -> bool:
    return _kernel(env, config, kind).policy_move(state)


def run_chain(env: Environment, config: SamplerConfig, kind: TargetKind = None,
              initial_theta=None, callback=None) -> SampleLog:
    """Run the full annealed chain and return its log.

    ``initial_theta`` defaults to a uniform draw from the prior box using a
    stream derived from ``config.seed``.
    """
    if initial_theta is None:
        initial_theta = env.sample_theta(np.random.default_rng([config.seed, 1]))
    return NoiseSpaceKernel(env, config, kind).run(initial_theta, callback)
