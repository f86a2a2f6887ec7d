"""Benchmark models: linear-Gaussian control and falling particles with repellers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .core import Environment
from .exceptions import ConfigurationError

__all__ = [
    "GaussianBump",
    "LinearGaussianSpec",
    "make_linear_gaussian",
    "CircularZone",
    "CircularZones",
    "GaussianGoal",
    "RepellerSpec",
    "repeller_force",
    "repeller_step",
    "make_repellers",
    "make_environment",
    "bimodal_linear_gaussian",
    "repellers_with_zones",
    "repellers_with_gaussian_goal",
]


def _as_matrix(value, rows, cols, name):
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.shape == (1, 1) and (rows, cols) != (1, 1):
        raise ConfigurationError(f"{name} must be {rows}x{cols}")
    if arr.shape != (rows, cols):
        raise ConfigurationError(f"{name} has shape {arr.shape}, expected {(rows, cols)}")
    return arr


def _check_pd(cov, name):
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ConfigurationError(f"{name} must be positive definite") from None


def _gaussian(mean, cov):
    """Sampler and log-density of N(mean, cov)."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    chol = np.linalg.cholesky(cov)
    dim = mean.size
    const = -0.5 * dim * math.log(2.0 * math.pi) - float(np.log(np.diag(chol)).sum())
    if dim == 1:
        mu, sd = float(mean[0]), float(chol[0, 0])

        def sample(rng):
            return np.array([mu + sd * rng.standard_normal()])

        def logpdf(v):
            z = (float(v[0]) - mu) / sd
            return const - 0.5 * z * z

        return sample, logpdf

    def sample(rng):
        return mean + chol @ rng.standard_normal(dim)

    def logpdf(v):
        z = np.linalg.solve(chol, np.asarray(v, dtype=float).reshape(-1) - mean)
        return const - 0.5 * float(z @ z)

    return sample, logpdf


# --------------------------------------------------------------------------
# linear-Gaussian control
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianBump:
    """``weight * exp(-|z - center|^2 / (2 scale^2))``.

    ``center`` lives in state space, or in joint state-action space when it
    has ``state_dim + action_dim`` entries.
    """

    weight: float
    center: Sequence[float]
    scale: float = 1.0


@dataclass(frozen=True)
class LinearGaussianSpec:
    """``x' = A x + B u + N(0, Sigma)`` under the policy ``u = K x + m``.

    The parameter vector is ``theta = (K.ravel(), m)``.
    """

    A: object = 1.0
    B: object = 1.0
    Sigma: object = 0.01
    init_mean: object = 0.0
    init_cov: object = 1.0
    bumps: tuple = (GaussianBump(1.0, (0.0,), 1.0),)
    reward_floor: float = 1e-12
    theta_low: object = None
    theta_high: object = None

    @property
    def state_dim(self):
        return np.atleast_2d(np.asarray(self.A, dtype=float)).shape[0]

    @property
    def action_dim(self):
        return np.atleast_2d(np.asarray(self.B, dtype=float)).shape[1]


def make_linear_gaussian(spec: LinearGaussianSpec, compiled: bool = True) -> Environment:
    ds, da = spec.state_dim, spec.action_dim
    A = _as_matrix(spec.A, ds, ds, "A")
    B = _as_matrix(spec.B, ds, da, "B")
    Sigma = _as_matrix(spec.Sigma, ds, ds, "Sigma")
    init_cov = _as_matrix(spec.init_cov, ds, ds, "init_cov")
    init_mean = np.broadcast_to(np.asarray(spec.init_mean, dtype=float), (ds,)).copy()
    _check_pd(Sigma, "Sigma")
    _check_pd(init_cov, "init_cov")
    if not spec.bumps:
        raise ConfigurationError("reward needs at least one bump")
    bumps = []
    for bump in spec.bumps:
        if not isinstance(bump, GaussianBump):
            bump = GaussianBump(**bump)
        center = np.asarray(bump.center, dtype=float).reshape(-1)
        if center.size not in (ds, ds + da):
            raise ConfigurationError(f"bump center must have {ds} or {ds + da} entries")
        if bump.scale <= 0 or bump.weight <= 0:
            raise ConfigurationError("bump weight and scale must be positive")
        bumps.append((float(bump.weight), center, 0.5 / bump.scale**2))

    theta_dim = da * ds + da
    low = np.full(theta_dim, -2.0) if spec.theta_low is None else spec.theta_low
    high = np.full(theta_dim, 2.0) if spec.theta_high is None else spec.theta_high
    low = np.broadcast_to(np.asarray(low, dtype=float), (theta_dim,))
    high = np.broadcast_to(np.asarray(high, dtype=float), (theta_dim,))

    init_sample, init_logpdf = _gaussian(init_mean, init_cov)
    noise_sample, noise_logpdf = _gaussian(np.zeros(ds), Sigma)

    if ds == 1 and da == 1:
        a, b = float(A[0, 0]), float(B[0, 0])

        def transition_mean(x, u):
            return np.array([a * x[0] + b * u[0]])

        def policy_mean(theta, x):
            return np.array([theta[0] * x[0] + theta[1]])
    else:

        def transition_mean(x, u):
            return A @ x + B @ u

        def policy_mean(theta, x):
            return theta[: da * ds].reshape(da, ds) @ x + theta[da * ds:]

    def reward_fn(x, u):
        total = 0.0
        for weight, center, prec in bumps:
            z = x if center.size == ds else np.concatenate((x, u))
            d = z - center
            total += weight * math.exp(-prec * float(d @ d))
        return total

    kernel = None
    if compiled:
        width = max(c.size for _, c, _ in bumps)
        centers = np.zeros((len(bumps), width))
        for i, (_, c, _) in enumerate(bumps):
            centers[i, : c.size] = c
        kernel = partial(
            _kernels.linear_gaussian_rollout, A=A, B=B,
            bump_weights=np.array([w for w, _, _ in bumps]), bump_centers=centers,
            bump_precs=np.array([p for _, _, p in bumps]),
            bump_dims=np.array([c.size for _, c, _ in bumps], dtype=np.int64),
        )

    return Environment(
        state_dim=ds,
        action_dim=da,
        rollout_kernel=kernel,
        initial_sampler=init_sample,
        initial_logdensity=init_logpdf,
        transition_noise_sampler=noise_sample,
        transition_noise_logdensity=noise_logpdf,
        transition_mean=transition_mean,
        policy_mean=policy_mean,
        reward_fn=reward_fn,
        theta_low=low,
        theta_high=high,
        theta_blocks=((0, da * ds), (da * ds, theta_dim)),
        reward_floor=spec.reward_floor,
        name="linear_gaussian",
        info={"spec": spec},
    )


# --------------------------------------------------------------------------
# particles and repellers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CircularZone:
    center: Sequence[float]
    radius: float
    level: float


@dataclass(frozen=True)
class CircularZones:
    """Constant reward inside discs, near-zero background elsewhere.

    ``background`` defaults to 1/1000 of the highest zone level.
    """

    zones: tuple
    background: Optional[float] = None


@dataclass(frozen=True)
class GaussianGoal:
    """``floor + peak * exp(-|p - center|^2 / (2 scale^2))`` on position."""

    center: Sequence[float]
    scale: float = 0.5
    peak: float = 1.0
    floor: float = 1e-3


@dataclass(frozen=True)
class RepellerSpec:
    num_repellers: int = 2
    start_low: Sequence[float] = (-0.5, 4.5)
    start_high: Sequence[float] = (0.5, 5.0)
    init_velocity: Sequence[float] = (0.0, 0.0)
    gravity: Sequence[float] = (0.0, -9.8)
    friction: float = 0.1
    dt: float = 0.05
    vel_noise_sigma: float = 0.05
    singular_clamp: float = 1e-3
    reward: object = GaussianGoal(center=(0.0, 0.0))
    theta_low: Optional[Sequence[float]] = None
    theta_high: Optional[Sequence[float]] = None


def repeller_force(theta, p, num_repellers: int = None, clamp: float = 1e-3) -> np.ndarray:
    """Sum of ``w_i (p - r_i) / |p - r_i|^3`` with distances clamped below at ``clamp``.

    ``theta`` is laid out as ``(r_1, ..., r_k, w_1, ..., w_k)``.
    """
    if num_repellers is None:
        num_repellers = len(theta) // 3
    px, py = float(p[0]), float(p[1])
    fx = fy = 0.0
    for i in range(num_repellers):
        dx = px - theta[2 * i]
        dy = py - theta[2 * i + 1]
        dist = math.sqrt(dx * dx + dy * dy)
        if dist < clamp:
            dist = clamp
        scale = theta[2 * num_repellers + i] / (dist * dist * dist)
        fx += scale * dx
        fy += scale * dy
    return np.array((fx, fy))


def repeller_step(spec: RepellerSpec, state, force, psi) -> np.ndarray:
    """Symplectic Euler: velocity first, then position with the new velocity."""
    dt, c = spec.dt, spec.friction
    gx, gy = spec.gravity
    vx = state[2] + dt * (force[0] + gx - c * state[2]) + psi[0]
    vy = state[3] + dt * (force[1] + gy - c * state[3]) + psi[1]
    return np.array((state[0] + dt * vx, state[1] + dt * vy, vx, vy))


def _zone_reward(model: CircularZones):
    zones = []
    for zone in model.zones:
        if not isinstance(zone, CircularZone):
            zone = CircularZone(**zone)
        if zone.level <= 0 or zone.radius <= 0:
            raise ConfigurationError("zone levels and radii must be positive")
        zones.append((float(zone.center[0]), float(zone.center[1]), zone.radius**2, zone.level))
    if not zones:
        raise ConfigurationError("need at least one reward zone")
    background = model.background
    if background is None:
        background = max(z[3] for z in zones) / 1000.0
    if background <= 0:
        raise ConfigurationError("background reward must be positive")

    def reward_fn(x, u):
        best = background
        for cx, cy, r2, level in zones:
            dx, dy = x[0] - cx, x[1] - cy
            if dx * dx + dy * dy <= r2 and level > best:
                best = level
        return best

    reward_fn.zones = zones
    reward_fn.background = background
    return reward_fn


def _goal_reward(model: GaussianGoal):
    if model.scale <= 0 or model.peak <= 0 or model.floor <= 0:
        raise ConfigurationError("goal scale, peak and floor must be positive")
    cx, cy = float(model.center[0]), float(model.center[1])
    prec = 0.5 / model.scale**2
    peak, floor = model.peak, model.floor

    def reward_fn(x, u):
        dx, dy = x[0] - cx, x[1] - cy
        return floor + peak * math.exp(-prec * (dx * dx + dy * dy))

    return reward_fn


def make_repellers(spec: RepellerSpec, compiled: bool = True) -> Environment:
    kr = int(spec.num_repellers)
    if kr < 1:
        raise ConfigurationError("need at least one repeller")
    if spec.dt <= 0 or spec.vel_noise_sigma <= 0 or spec.friction < 0:
        raise ConfigurationError("dt and vel_noise_sigma must be positive, friction nonnegative")
    low_s = np.asarray(spec.start_low, dtype=float)
    high_s = np.asarray(spec.start_high, dtype=float)
    if low_s.shape != (2,) or np.any(high_s <= low_s):
        raise ConfigurationError("start region needs start_low < start_high in both axes")
    v0 = np.asarray(spec.init_velocity, dtype=float)
    log_area = float(np.log(high_s - low_s).sum())

    reward = spec.reward
    if isinstance(reward, CircularZones):
        reward_fn = _zone_reward(reward)
        mode = 0
        reward_params = np.array(reward_fn.zones, dtype=float)
        background = reward_fn.background
    elif isinstance(reward, GaussianGoal):
        reward_fn = _goal_reward(reward)
        mode = 1
        reward_params = np.array([[reward.center[0], reward.center[1], 0.5 / reward.scale**2,
                                   reward.peak, reward.floor]], dtype=float)
        background = 0.0
    else:
        raise ConfigurationError(f"unknown repeller reward model {reward!r}")

    theta_dim = 3 * kr
    if spec.theta_low is None:
        low = np.concatenate((np.tile([-3.0, -1.0], kr), np.zeros(kr)))
    else:
        low = np.asarray(spec.theta_low, dtype=float)
    if spec.theta_high is None:
        high = np.concatenate((np.tile([3.0, 5.0], kr), np.full(kr, 5.0)))
    else:
        high = np.asarray(spec.theta_high, dtype=float)
    if low.shape != (theta_dim,) or high.shape != (theta_dim,):
        raise ConfigurationError(f"theta bounds must have {theta_dim} entries")
    blocks = tuple((2 * i, 2 * i + 2) for i in range(kr))
    blocks += tuple((2 * kr + i, 2 * kr + i + 1) for i in range(kr))

    sigma = float(spec.vel_noise_sigma)
    noise_const = -math.log(2.0 * math.pi) - 2.0 * math.log(sigma)
    clamp = spec.singular_clamp

    def initial_sampler(rng):
        p = rng.uniform(low_s, high_s)
        return np.array((p[0], p[1], v0[0], v0[1]))

    def initial_logdensity(x0):
        inside = np.all(x0[:2] >= low_s) and np.all(x0[:2] <= high_s)
        if not inside or not np.allclose(x0[2:], v0, rtol=0.0, atol=1e-12):
            return -math.inf
        return -log_area

    def noise_sampler(rng):
        return sigma * rng.standard_normal(2)

    def noise_logdensity(psi):
        return noise_const - 0.5 * (psi[0] * psi[0] + psi[1] * psi[1]) / (sigma * sigma)

    def policy_mean(theta, x):
        return repeller_force(theta, x, kr, clamp)

    def transition(x, u, psi):
        nxt = repeller_step(spec, x, u, psi)
        if not np.all(np.isfinite(nxt)):
            raise FloatingPointError(f"non-finite particle state from {x} with force {u}")
        return nxt

    def transition_logdensity(x, u, x_next):
        # velocity noise is the only randomness; positions must follow exactly
        mean = repeller_step(spec, x, u, (0.0, 0.0))
        psi = (x_next[2] - mean[2], x_next[3] - mean[3])
        px = x[0] + spec.dt * x_next[2]
        py = x[1] + spec.dt * x_next[3]
        tol = 1e-9 * (1.0 + abs(px) + abs(py))
        if abs(x_next[0] - px) > tol or abs(x_next[1] - py) > tol:
            return -math.inf
        return noise_logdensity(psi)

    kernel = None
    if compiled:
        physics = np.array([spec.dt, spec.gravity[0], spec.gravity[1], spec.friction, clamp])
        kernel = partial(_kernels.repeller_rollout, physics=physics, kr=kr, mode=mode,
                         reward_params=reward_params, background=float(background))

    return Environment(
        state_dim=4,
        rollout_kernel=kernel,
        action_dim=2,
        noise_dim=2,
        initial_sampler=initial_sampler,
        initial_logdensity=initial_logdensity,
        transition_noise_sampler=noise_sampler,
        transition_noise_logdensity=noise_logdensity,
        transition=transition,
        transition_logdensity=transition_logdensity,
        policy_mean=policy_mean,
        reward_fn=reward_fn,
        theta_low=low,
        theta_high=high,
        theta_blocks=blocks,
        name="repellers",
        info={"spec": spec},
    )


def make_environment(spec, compiled: bool = True) -> Environment:
    if isinstance(spec, LinearGaussianSpec):
        return make_linear_gaussian(spec, compiled)
    if isinstance(spec, RepellerSpec):
        return make_repellers(spec, compiled)
    raise ConfigurationError(f"unknown environment spec {type(spec).__name__}")


# --------------------------------------------------------------------------
# reference scenes
# --------------------------------------------------------------------------


def bimodal_linear_gaussian() -> LinearGaussianSpec:
    """1-D model whose reward has two bumps of unequal height.

    With ``u = K x + m`` the state settles near ``m / (1 - (1 + K))``; the
    expected reward surface over ``(K, m)`` has one mode per bump. The bump
    at +2 is taller, so averaging samples from both modes lands in the
    low-reward valley between them.
    """
    return LinearGaussianSpec(
        A=1.0, B=1.0, Sigma=0.01, init_mean=0.0, init_cov=0.25,
        bumps=(GaussianBump(1.0, (2.0,), 0.5), GaussianBump(0.6, (-2.0,), 0.5)),
        reward_floor=1e-6, theta_low=(-2.0, -4.0), theta_high=(0.0, 4.0),
    )


# Heavier damping and stronger repellers than the RepellerSpec defaults, so
# a pair of repellers can catch a falling particle and hold it in place.
_SCENE_PHYSICS = dict(friction=2.0, theta_high=(3.0, 5.0, 3.0, 5.0, 10.0, 10.0))


def repellers_with_zones() -> RepellerSpec:
    """Three small zones halfway down and a bottom zone worth 50 times as much."""
    zones = CircularZones((
        CircularZone((0.0, 0.0), 0.5, 50.0),
        CircularZone((-1.5, 2.5), 0.4, 1.0),
        CircularZone((0.0, 2.5), 0.4, 1.0),
        CircularZone((1.5, 2.5), 0.4, 1.0),
    ))
    return RepellerSpec(reward=zones, **_SCENE_PHYSICS)


def repellers_with_gaussian_goal(center=(2.0, 1.0)) -> RepellerSpec:
    """A single smooth goal off to the side of the drop zone."""
    return RepellerSpec(reward=GaussianGoal(center, scale=0.5, peak=1.0, floor=1e-3),
                        **_SCENE_PHYSICS)
