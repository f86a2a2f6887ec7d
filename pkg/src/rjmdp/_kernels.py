"""Compiled rollout loops for the benchmark models.

Each kernel continues a trajectory: given the previous state and action (or
the initial state when ``from_zero``) and a block of transition noise, it
returns the new states, actions and unfloored rewards.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _repeller_force(theta, px, py, kr, clamp):
    fx = 0.0
    fy = 0.0
    for i in range(kr):
        dx = px - theta[2 * i]
        dy = py - theta[2 * i + 1]
        dist = math.sqrt(dx * dx + dy * dy)
        if dist < clamp:
            dist = clamp
        scale = theta[2 * kr + i] / (dist * dist * dist)
        fx += scale * dx
        fy += scale * dy
    return fx, fy


@njit(cache=True)
def _repeller_reward(px, py, mode, params, background):
    if mode == 0:
        best = background
        for z in range(params.shape[0]):
            dx = px - params[z, 0]
            dy = py - params[z, 1]
            if dx * dx + dy * dy <= params[z, 2] and params[z, 3] > best:
                best = params[z, 3]
        return best
    dx = px - params[0, 0]
    dy = py - params[0, 1]
    return params[0, 4] + params[0, 3] * math.exp(-params[0, 2] * (dx * dx + dy * dy))


@njit(cache=True)
def repeller_rollout(theta, x_init, u_prev, psis, phis, from_zero, physics, kr,
                     mode, reward_params, background):
    dt, gx, gy, c, clamp = physics[0], physics[1], physics[2], physics[3], physics[4]
    m = psis.shape[0] + (1 if from_zero else 0)
    states = np.empty((m, 4))
    actions = np.empty((m, 2))
    rewards = np.empty(m)
    px, py, vx, vy = x_init[0], x_init[1], x_init[2], x_init[3]
    ux, uy = u_prev[0], u_prev[1]
    for n in range(m):
        if from_zero and n == 0:
            pass
        else:
            psi = psis[n - 1] if from_zero else psis[n]
            vx = vx + dt * (ux + gx - c * vx) + psi[0]
            vy = vy + dt * (uy + gy - c * vy) + psi[1]
            px = px + dt * vx
            py = py + dt * vy
        ux, uy = _repeller_force(theta, px, py, kr, clamp)
        if phis.shape[0] > 0:
            ux += phis[n, 0]
            uy += phis[n, 1]
        states[n, 0] = px
        states[n, 1] = py
        states[n, 2] = vx
        states[n, 3] = vy
        actions[n, 0] = ux
        actions[n, 1] = uy
        rewards[n] = _repeller_reward(px, py, mode, reward_params, background)
    return states, actions, rewards


@njit(cache=True)
def linear_gaussian_rollout(theta, x_init, u_prev, psis, phis, from_zero, A, B,
                            bump_weights, bump_centers, bump_precs, bump_dims):
    ds = A.shape[0]
    da = B.shape[1]
    m = psis.shape[0] + (1 if from_zero else 0)
    states = np.empty((m, ds))
    actions = np.empty((m, da))
    rewards = np.empty(m)
    x = x_init.copy()
    u = u_prev.copy()
    z = np.empty(ds + da)
    for n in range(m):
        if not (from_zero and n == 0):
            psi = psis[n - 1] if from_zero else psis[n]
            nx = np.empty(ds)
            for i in range(ds):
                acc = 0.0
                for j in range(ds):
                    acc += A[i, j] * x[j]
                for j in range(da):
                    acc += B[i, j] * u[j]
                nx[i] = acc + psi[i]
            x = nx
        u = np.empty(da)
        for i in range(da):
            acc = 0.0
            for j in range(ds):
                acc += theta[i * ds + j] * x[j]
            u[i] = acc + theta[da * ds + i]
        if phis.shape[0] > 0:
            for i in range(da):
                u[i] += phis[n, i]
        for i in range(ds):
            states[n, i] = x[i]
            z[i] = x[i]
        for i in range(da):
            actions[n, i] = u[i]
            z[ds + i] = u[i]
        total = 0.0
        for b in range(bump_weights.shape[0]):
            width = bump_dims[b]
            sq = 0.0
            for i in range(width):
                d = z[i] - bump_centers[b, i]
                sq += d * d
            total += bump_weights[b] * math.exp(-bump_precs[b] * sq)
        rewards[n] = total
    return states, actions, rewards
