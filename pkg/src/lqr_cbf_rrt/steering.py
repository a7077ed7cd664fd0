"""LQR steering with barrier checks on every step.

The rollout applies ``u = u_nom - K (x - x_next)`` and integrates with
explicit Euler. It stops at the first of: a step that violates any obstacle
constraint (that step is dropped), the horizon, or arrival within
``goal_tolerance`` of the target in the workspace. What remains is the safe
prefix of the plain LQR rollout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .cbf import CbfParams, ObstacleSpec, min_barrier, obstacle_array, step_is_safe, zeta
from .dynamics import DynamicsModel, Trajectory, euler_step_into, integrate_step, path_length, wrap_angle
from .lqr import CostWeights, GainCache, gain_for_goal

REACHED = 0
HORIZON = 1
VIOLATED = 2
STATUS_NAMES = {REACHED: "reached", HORIZON: "horizon", VIOLATED: "violated"}


class EmptyExtension(Exception):
    """The very first rollout step already violates a constraint."""


@dataclass(frozen=True)
class SteerConfig:
    dt: float = 0.05
    max_steps: int = 100
    goal_tolerance: float = 0.1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ValueError("max_steps must be a positive integer")
        if not self.goal_tolerance > 0:
            raise ValueError("goal_tolerance must be positive")


@dataclass
class SteerDeps:
    """Everything a steer call needs besides its two endpoints."""

    model: DynamicsModel
    weights: CostWeights
    cache: GainCache
    obstacles: list[ObstacleSpec] = field(default_factory=list)
    cbf: CbfParams | None = None
    config: SteerConfig = field(default_factory=SteerConfig)

    def __post_init__(self):
        if self.obstacles and self.cbf is None:
            raise ValueError("obstacles given without barrier parameters")
        self.obstacle_rows = obstacle_array(self.obstacles)
        m = self.model.m
        fixed = self.model.fixed_controls()
        self._fixed_mask = np.array([i in fixed for i in range(m)])
        self._fixed_vals = np.array([fixed.get(i, 0.0) for i in range(m)], dtype=float)
        self._u_nom = np.asarray(self.model.nominal_control(), float)
        self._angle = self.model.angle_indices[0] if self.model.angle_indices else -1
        self._variant = self.cbf.code if self.cbf is not None else 0
        self._k1 = self.cbf.k1 if self.cbf is not None else 0.0
        self._k2 = self.cbf.k2 if self.cbf is not None else 0.0
        self.calls = 0


@njit(cache=True)
def _rollout_kernel(kind, variant, x0, goal, K, u_nom, fixed_mask, fixed_vals, u_lo, u_hi,
                    dt, max_steps, tol, obs, pos0, pos1, k1, k2, angle, stop_at_goal, Q, R):
    n = x0.shape[0]
    m = u_nom.shape[0]
    states = np.empty((max_steps + 1, n))
    controls = np.empty((max_steps, m))
    states[0] = x0
    k = 0
    tol2 = tol * tol
    status = HORIZON
    e = np.empty(n)
    u = np.empty(m)
    cost = 0.0
    length = 0.0
    for t in range(max_steps):
        x = states[t]
        if stop_at_goal:
            gx = x[pos0] - goal[pos0]
            gy = x[pos1] - goal[pos1]
            if gx * gx + gy * gy <= tol2:
                status = REACHED
                break
        for i in range(n):
            e[i] = x[i] - goal[i]
        if angle >= 0:
            e[angle] = wrap_angle(e[angle])
        for j in range(m):
            acc = 0.0
            for i in range(n):
                acc += K[j, i] * e[i]
            uj = u_nom[j] - acc
            if fixed_mask[j]:
                uj = fixed_vals[j]
            if uj < u_lo[j]:
                uj = u_lo[j]
            elif uj > u_hi[j]:
                uj = u_hi[j]
            u[j] = uj
        xn = states[t + 1]
        euler_step_into(kind, x, u, dt, xn)
        if not step_is_safe(variant, xn, u, obs, pos0, pos1, k1, k2):
            status = VIOLATED
            break
        controls[t] = u
        k = t + 1
        stage = 0.0
        for i in range(n):
            for j in range(n):
                stage += e[i] * Q[i, j] * e[j]
        for i in range(m):
            for j in range(m):
                stage += u[i] * R[i, j] * u[j]
        cost += stage * dt
        dx = xn[pos0] - x[pos0]
        dy = xn[pos1] - x[pos1]
        length += math.sqrt(dx * dx + dy * dy)
    else:
        if stop_at_goal:
            x = states[k]
            gx = x[pos0] - goal[pos0]
            gy = x[pos1] - goal[pos1]
            if gx * gx + gy * gy <= tol2:
                status = REACHED
    return states[:k + 1].copy(), controls[:k].copy(), status, cost, length


def _rollout_python(deps: SteerDeps, x0, goal, K, obs_rows, stop_at_goal):
    """Reference loop for models without a compiled kernel."""
    model, cfg = deps.model, deps.config
    p0, p1 = model.position_indices
    states = [np.array(x0, float)]
    controls = []
    x = states[0]
    status = HORIZON
    obstacles = [ObstacleSpec((r[0], r[1]), r[2]) for r in obs_rows]
    tol2 = cfg.goal_tolerance ** 2
    for _ in range(cfg.max_steps):
        if stop_at_goal and (x[p0] - goal[p0]) ** 2 + (x[p1] - goal[p1]) ** 2 <= tol2:
            status = REACHED
            break
        u = model.apply_control_limits(deps._u_nom - K @ model.state_error(x, goal))
        xn = integrate_step(model, x, u, cfg.dt)
        if obstacles:
            h_ok = min_barrier(obs_rows, model.workspace(xn)[None, :])[0] >= 0
            if not h_ok or min(zeta(o, deps.cbf, xn, u) for o in obstacles) < 0:
                status = VIOLATED
                break
        states.append(xn)
        controls.append(u)
        x = xn
    else:
        if stop_at_goal and (x[p0] - goal[p0]) ** 2 + (x[p1] - goal[p1]) ** 2 <= tol2:
            status = REACHED
    return np.array(states), np.array(controls).reshape(-1, model.m), status


def rollout(x_current, x_next, deps: SteerDeps, gain=None, constrained: bool = True):
    """Raw rollout ``(states, controls, status, cost, length)``.

    ``cost`` and ``length`` are accumulated by the compiled kernel and are
    None on the pure-Python path.

    With ``constrained=False`` obstacles and the arrival test are ignored and
    the full horizon is simulated; the constrained result is always a prefix
    of that one.
    """
    model, cfg = deps.model, deps.config
    x0 = np.asarray(x_current, float)
    goal = np.asarray(x_next, float)
    if gain is None:
        gain = gain_for_goal(deps.cache, model, deps.weights, goal)
    K = np.ascontiguousarray(gain.K, dtype=float)
    obs = deps.obstacle_rows if constrained else np.empty((0, 3))
    if model.kernel_kind is None:
        states, controls, status = _rollout_python(deps, x0, goal, K, obs, constrained)
        return states, controls, status, None, None
    p0, p1 = model.position_indices
    states, controls, status, cost, length = _rollout_kernel(
        model.kernel_kind, deps._variant, x0, goal, K, deps._u_nom, deps._fixed_mask,
        deps._fixed_vals, model.control_lower, model.control_upper, float(cfg.dt),
        int(cfg.max_steps), float(cfg.goal_tolerance), obs, p0, p1, deps._k1, deps._k2,
        deps._angle, constrained, deps.weights.Q, deps.weights.R)
    return states, controls, int(status), cost, length


def trajectory_cost(traj: Trajectory, weights: CostWeights, x_ref, model: DynamicsModel | None = None) -> float:
    """Discretized LQR cost: sum of ``(e'Qe + u'Ru) * dt`` over the steps."""
    if len(traj.controls) == 0:
        return 0.0
    xs = traj.states[:-1]
    if model is not None:
        e = model.state_error(xs, x_ref)
    else:
        e = xs - np.asarray(x_ref, float)
    u = traj.controls
    stage = np.einsum("ij,jk,ik->i", e, weights.Q, e) + np.einsum("ij,jk,ik->i", u, weights.R, u)
    return float(stage.sum() * traj.dt)


def lqr_cbf_steer(x_current, x_next, deps: SteerDeps) -> Trajectory:
    """Steer from ``x_current`` toward ``x_next`` and return the safe prefix.

    Raises
    ------
    EmptyExtension
        If not even one step can be taken safely (and the start is not
        already within tolerance of the target).
    """
    deps.calls += 1
    states, controls, status, cost, length = rollout(x_current, x_next, deps)
    if len(controls) == 0 and status == VIOLATED:
        raise EmptyExtension("first steering step violates a barrier constraint")
    traj = Trajectory(states, controls, deps.config.dt, reached=status == REACHED,
                      status=STATUS_NAMES[status])
    if cost is None:
        cost = trajectory_cost(traj, deps.weights, x_next, deps.model)
        length = path_length(deps.model.workspace(states))
    traj.cost = cost
    traj.length = length
    return traj
