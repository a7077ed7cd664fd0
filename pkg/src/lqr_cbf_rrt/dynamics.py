"""Control-affine models ``xdot = f(x) + g(x) u`` and explicit-Euler stepping.

Two models ship with the library:

* ``double_integrator_4d``: state ``[x1, vx, x3, vy]``, control ``[ax, ay]``.
* ``unicycle``: state ``[x1, x2, theta]``, control ``[v, omega]`` with the
  translational velocity pinned to ``v_fixed``.

Each model exposes numpy-level drift/input maps and analytic Jacobians. The
per-step update used inside steering rollouts lives in :func:`euler_step`, a
numba kernel shared by :func:`integrate_step` so both paths agree bitwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

KIND_DOUBLE_INTEGRATOR = 0
KIND_UNICYCLE = 1


@njit(cache=True)
def wrap_angle(a):
    """Wrap an angle to (-pi, pi]."""
    r = (a + math.pi) % TWO_PI - math.pi
    if r == -math.pi:
        r = math.pi
    return r


@njit(cache=True)
def euler_step_into(kind, x, u, dt, out):
    """Explicit-Euler update written into ``out`` (must not alias ``x``)."""
    if kind == KIND_DOUBLE_INTEGRATOR:
        out[0] = x[0] + dt * x[1]
        out[1] = x[1] + dt * u[0]
        out[2] = x[2] + dt * x[3]
        out[3] = x[3] + dt * u[1]
    else:
        out[0] = x[0] + dt * (u[0] * math.cos(x[2]))
        out[1] = x[1] + dt * (u[0] * math.sin(x[2]))
        out[2] = wrap_angle(x[2] + dt * u[1])


@njit(cache=True)
def euler_step(kind, x, u, dt):
    out = np.empty(x.shape[0])
    euler_step_into(kind, x, u, dt, out)
    return out


def wrap_angles(a):
    """Vectorized :func:`wrap_angle`."""
    r = np.mod(np.asarray(a, float) + math.pi, TWO_PI) - math.pi
    return np.where(r == -math.pi, math.pi, r)


class DynamicsModel:
    """Base class for control-affine systems.

    Subclasses fill in ``drift``, ``input_map`` and ``jacobians``. The
    ``kernel_kind`` attribute selects the compiled rollout; models without a
    kernel fall back to the pure-Python steering loop.
    """

    name = "abstract"
    n = 0
    m = 0
    position_indices: tuple[int, int] = (0, 1)
    angle_indices: tuple[int, ...] = ()
    is_linear = False
    kernel_kind: int | None = None

    def __init__(self, control_lower=None, control_upper=None):
        lo = np.full(self.m, -np.inf) if control_lower is None else np.asarray(control_lower, float)
        hi = np.full(self.m, np.inf) if control_upper is None else np.asarray(control_upper, float)
        if lo.shape != (self.m,) or hi.shape != (self.m,) or np.any(lo > hi):
            raise ValueError(f"invalid control bounds for {self.name}: {lo}, {hi}")
        self.control_lower = lo
        self.control_upper = hi

    # --- structure -----------------------------------------------------
    def drift(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def input_map(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobians(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def nominal_control(self) -> np.ndarray:
        return np.zeros(self.m)

    def fixed_controls(self) -> dict[int, float]:
        """Control channels overridden after the feedback law, index -> value."""
        return {}

    # --- helpers -------------------------------------------------------
    def workspace(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        return x[..., list(self.position_indices)]

    def state_error(self, x: np.ndarray, ref: np.ndarray) -> np.ndarray:
        e = np.asarray(x, float) - np.asarray(ref, float)
        for i in self.angle_indices:
            e[..., i] = wrap_angles(e[..., i])
        return e

    def wrap(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, float)
        for i in self.angle_indices:
            x[i] = wrap_angle(x[i])
        return x

    def lift(self, point, origin=None) -> np.ndarray:
        """Full state whose workspace projection is ``point``.

        Non-workspace coordinates are filled per model; ``origin`` is the
        state the planner will steer from.
        """
        raise NotImplementedError

    def apply_control_limits(self, u: np.ndarray) -> np.ndarray:
        u = np.array(u, float)
        for i, val in self.fixed_controls().items():
            u[i] = val
        return np.minimum(np.maximum(u, self.control_lower), self.control_upper)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, m={self.m})"


class DoubleIntegrator(DynamicsModel):
    """Planar double integrator, state ``[x1, x2, x3, x4]`` = ``[px, vx, py, vy]``."""

    name = "double_integrator_4d"
    n = 4
    m = 2
    position_indices = (0, 2)
    is_linear = True
    kernel_kind = KIND_DOUBLE_INTEGRATOR

    _A = np.array([[0.0, 1.0, 0.0, 0.0],
                   [0.0, 0.0, 0.0, 0.0],
                   [0.0, 0.0, 0.0, 1.0],
                   [0.0, 0.0, 0.0, 0.0]])
    _B = np.array([[0.0, 0.0],
                   [1.0, 0.0],
                   [0.0, 0.0],
                   [0.0, 1.0]])

    def drift(self, x):
        x = np.asarray(x, float)
        return np.array([x[1], 0.0, x[3], 0.0])

    def input_map(self, x):
        return self._B.copy()

    def jacobians(self, x, u):
        return self._A.copy(), self._B.copy()

    def lift(self, point, origin=None):
        # rest state at the sampled position
        return np.array([point[0], 0.0, point[1], 0.0], dtype=float)


class Unicycle(DynamicsModel):
    """Kinematic unicycle ``[x1, x2, theta]`` driven by ``[v, omega]``.

    ``v`` is pinned to ``v_fixed`` during steering; only ``omega`` is shaped by
    feedback.
    """

    name = "unicycle"
    n = 3
    m = 2
    position_indices = (0, 1)
    angle_indices = (2,)
    kernel_kind = KIND_UNICYCLE

    def __init__(self, v_fixed: float = 1.0, control_lower=None, control_upper=None):
        if not v_fixed > 0:
            raise ValueError(f"v_fixed must be positive, got {v_fixed}")
        self.v_fixed = float(v_fixed)
        super().__init__(control_lower, control_upper)

    def drift(self, x):
        return np.zeros(3)

    def input_map(self, x):
        th = x[2]
        return np.array([[math.cos(th), 0.0],
                         [math.sin(th), 0.0],
                         [0.0, 1.0]])

    def jacobians(self, x, u):
        th, v = x[2], u[0]
        A = np.zeros((3, 3))
        A[0, 2] = -v * math.sin(th)
        A[1, 2] = v * math.cos(th)
        return A, self.input_map(x)

    def nominal_control(self):
        return np.array([self.v_fixed, 0.0])

    def fixed_controls(self):
        return {0: self.v_fixed}

    def lift(self, point, origin=None):
        # head along the bearing from the origin so the target lies ahead
        if origin is None:
            theta = 0.0
        else:
            dx = point[0] - origin[0]
            dy = point[1] - origin[1]
            theta = math.atan2(dy, dx) if (dx or dy) else float(origin[2])
        return np.array([point[0], point[1], wrap_angle(theta)], dtype=float)


MODELS = {
    DoubleIntegrator.name: DoubleIntegrator,
    Unicycle.name: Unicycle,
}


def make_model(name: str, **kwargs) -> DynamicsModel:
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; expected one of {sorted(MODELS)}") from None
    return cls(**kwargs)


def eval_dynamics(model: DynamicsModel, x, u) -> np.ndarray:
    """Return ``f(x) + g(x) u``."""
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    return model.drift(x) + model.input_map(x) @ u


def integrate_step(model: DynamicsModel, x, u, dt: float) -> np.ndarray:
    """One explicit-Euler step, with heading coordinates re-wrapped."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    if model.kernel_kind is not None:
        return euler_step(model.kernel_kind, x, u, float(dt))
    return model.wrap(x + dt * eval_dynamics(model, x, u))


@dataclass
class Trajectory:
    """State/control sequence with a fixed step.

    ``states`` has one more row than ``controls``. ``cost`` is the LQR stage
    cost accumulated against the steering target; ``length`` is the workspace
    polyline length.
    """

    states: np.ndarray
    controls: np.ndarray
    dt: float
    cost: float = 0.0
    length: float = 0.0
    reached: bool = False
    status: str = "horizon"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, float))
        self.controls = np.asarray(self.controls, float)
        if self.controls.ndim == 1:
            self.controls = self.controls.reshape(0, 0) if self.controls.size == 0 else self.controls[None, :]
        if len(self.states) < 1 or len(self.states) != len(self.controls) + 1:
            raise ValueError("trajectory needs len(states) == len(controls) + 1 >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.cost < 0:
            raise ValueError("trajectory cost must be nonnegative")

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self):
        return len(self.states)


def path_length(points: np.ndarray) -> float:
    points = np.asarray(points, float)
    if len(points) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))
