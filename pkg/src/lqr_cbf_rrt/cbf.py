"""Circular-obstacle barrier functions and their second-order constraint checks.

For an obstacle with center ``c`` and radius ``r`` the barrier is the squared
workspace distance ``h(x) = |p(x) - c|^2 - r^2``. Steering accepts a step only
when the second-order condition ``zeta_i(x, u) >= 0`` holds for every
obstacle, where ``zeta`` combines ``h``, its first derivative and its second
derivative with the linear gains ``k1`` and ``k2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynamics import DynamicsModel

VARIANT_DOUBLE_INTEGRATOR = 0
VARIANT_UNICYCLE = 1
VARIANT_UNICYCLE_PRINTED = 2

VARIANTS = {
    "double_integrator": VARIANT_DOUBLE_INTEGRATOR,
    "unicycle": VARIANT_UNICYCLE,
    "unicycle_printed": VARIANT_UNICYCLE_PRINTED,
}


class UnsupportedRelativeDegree(ValueError):
    pass


@dataclass(frozen=True)
class ObstacleSpec:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        if len(c) != 2 or not all(math.isfinite(v) for v in c):
            raise ValueError(f"obstacle center must be two finite numbers, got {self.center}")
        if not self.radius > 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class CbfParams:
    k1: float
    k2: float
    variant: str = "double_integrator"

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValueError(f"k1, k2 must be positive, got {self.k1}, {self.k2}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}")

    @property
    def code(self) -> int:
        return VARIANTS[self.variant]


@dataclass(frozen=True)
class CbfVerdict:
    satisfied: bool
    violating_index: int | None
    margin: float


def obstacle_array(obstacles) -> np.ndarray:
    """Pack obstacles as rows ``(cx, cy, r)``."""
    arr = np.array([(o.center[0], o.center[1], o.radius) for o in obstacles], dtype=float)
    return arr.reshape(-1, 3)


@njit(cache=True)
def barrier(px, py, cx, cy, r):
    dx = px - cx
    dy = py - cy
    return dx * dx + dy * dy - r * r


@njit(cache=True)
def zeta_kernel(variant, x, u, cx, cy, r, k1, k2, c, s):
    """Constraint value for one obstacle; ``c, s`` are cos/sin of the heading (unused for the double integrator)."""
    if variant == VARIANT_DOUBLE_INTEGRATOR:
        dx = x[0] - cx
        dy = x[2] - cy
        h = dx * dx + dy * dy - r * r
        return (2.0 * x[1] * x[1] + 2.0 * x[3] * x[3] + 2.0 * dx * u[0] + 2.0 * dy * u[1]
                + k1 * h + 2.0 * k2 * (dx * x[1] + dy * x[3]))
    dx = x[0] - cx
    dy = x[1] - cy
    v = u[0]
    w = u[1]
    h = dx * dx + dy * dy - r * r
    lf_h = 2.0 * v * dx * c + 2.0 * v * dy * s
    if variant == VARIANT_UNICYCLE:
        lead = 2.0 * v * v * c * c + 2.0 * v * v * s * s
    else:
        # literal leading term, raw positions instead of offsets
        lead = 2.0 * x[0] * v * v * c * c + 2.0 * x[1] * v * v * s * s
    return lead + (2.0 * dy * v * c - 2.0 * dx * v * s) * w + k1 * h + k2 * lf_h


@njit(cache=True)
def step_is_safe(variant, x, u, obs, pos0, pos1, k1, k2):
    """Both ``h_i(x) >= 0`` and ``zeta_i(x, u) >= 0`` for every obstacle row."""
    c = 0.0
    s = 0.0
    if variant != VARIANT_DOUBLE_INTEGRATOR:
        c = math.cos(x[2])
        s = math.sin(x[2])
    for i in range(obs.shape[0]):
        cx = obs[i, 0]
        cy = obs[i, 1]
        r = obs[i, 2]
        if barrier(x[pos0], x[pos1], cx, cy, r) < 0.0:
            return False
        if zeta_kernel(variant, x, u, cx, cy, r, k1, k2, c, s) < 0.0:
            return False
    return True


def h_value(obs: ObstacleSpec, x, model: DynamicsModel) -> float:
    p = model.workspace(x)
    return float(barrier(float(p[0]), float(p[1]), obs.center[0], obs.center[1], obs.radius))


def min_barrier(obstacles: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Smallest ``h_i`` over obstacles for each workspace point (``+inf`` if none)."""
    points = np.atleast_2d(np.asarray(points, float))
    if len(obstacles) == 0:
        return np.full(len(points), np.inf)
    d = points[:, None, :] - obstacles[None, :, :2]
    h = np.einsum("ijk,ijk->ij", d, d) - obstacles[None, :, 2] ** 2
    return h.min(axis=1)


def psi_chain(h_derivatives, gains) -> list[float]:
    """Evaluate ``Psi_0 .. Psi_r`` for linear class-K functions.

    ``h_derivatives`` holds ``[h, h', ..., h^(r)]`` along the flow and
    ``gains`` the slopes ``a_1 .. a_r`` of ``alpha_k(s) = a_k s``. Each
    ``Psi_k`` is tracked as a linear combination of the derivatives, so
    ``d/dt Psi_{k-1}`` is a shift of its coefficients.
    """
    gains = [float(g) for g in gains]
    r = len(gains)
    if r < 1 or r > 2:
        raise UnsupportedRelativeDegree(f"relative degree {r} not supported (1 or 2)")
    derivs = np.asarray(h_derivatives, dtype=float)
    if derivs.shape != (r + 1,):
        raise ValueError(f"need {r + 1} derivatives of h, got {derivs.shape}")
    coeffs = np.zeros(r + 1)
    coeffs[0] = 1.0
    out = [float(derivs[0])]
    for a in gains:
        shifted = np.roll(coeffs, 1)
        shifted[0] = 0.0
        coeffs = shifted + a * coeffs
        out.append(float(coeffs @ derivs))
    return out


def linear_alphas(k1: float, k2: float) -> tuple[float, float]:
    """Slopes ``(a, b)`` with ``a + b = k2`` and ``a * b = k1``.

    These make the generic two-step recursion coincide with the grouped
    ``k1 h + k2 h'`` form. Raises ``ValueError`` when no real pair exists.
    """
    disc = k2 * k2 - 4.0 * k1
    if disc < 0:
        raise ValueError(f"(k1={k1}, k2={k2}) has no real class-K factorization")
    root = math.sqrt(disc)
    return (0.5 * (k2 - root), 0.5 * (k2 + root))


def double_integrator_h_derivatives(obs: ObstacleSpec, x, u) -> np.ndarray:
    """``[h, h', h'']`` for the 4-state double integrator."""
    x = np.asarray(x, float)
    dx, dy = x[0] - obs.center[0], x[2] - obs.center[1]
    h = dx * dx + dy * dy - obs.radius ** 2
    hd = 2.0 * (dx * x[1] + dy * x[3])
    hdd = 2.0 * (x[1] ** 2 + x[3] ** 2) + 2.0 * (dx * u[0] + dy * u[1])
    return np.array([h, hd, hdd])


def unicycle_h_derivatives(obs: ObstacleSpec, x, u) -> np.ndarray:
    """``[h, h', h'']`` for the unicycle with ``v`` held constant."""
    x = np.asarray(x, float)
    v, w = u
    dx, dy = x[0] - obs.center[0], x[1] - obs.center[1]
    c, s = math.cos(x[2]), math.sin(x[2])
    h = dx * dx + dy * dy - obs.radius ** 2
    hd = 2.0 * v * (dx * c + dy * s)
    hdd = 2.0 * v * v + 2.0 * v * (dy * c - dx * s) * w
    return np.array([h, hd, hdd])


def zeta_double_integrator(obs: ObstacleSpec, params: CbfParams, x, u) -> float:
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    if x.shape != (4,):
        raise ValueError("double-integrator constraint needs a 4-state")
    return float(zeta_kernel(VARIANT_DOUBLE_INTEGRATOR, x, u, obs.center[0], obs.center[1],
                             obs.radius, params.k1, params.k2, 0.0, 0.0))


def zeta_unicycle(obs: ObstacleSpec, params: CbfParams, x, u) -> float:
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    if x.shape != (3,):
        raise ValueError("unicycle constraint needs a 3-state")
    variant = params.code if params.code != VARIANT_DOUBLE_INTEGRATOR else VARIANT_UNICYCLE
    return float(zeta_kernel(variant, x, u, obs.center[0], obs.center[1],
                             obs.radius, params.k1, params.k2, math.cos(x[2]), math.sin(x[2])))


def zeta(obs: ObstacleSpec, params: CbfParams, x, u) -> float:
    if params.code == VARIANT_DOUBLE_INTEGRATOR:
        return zeta_double_integrator(obs, params, x, u)
    return zeta_unicycle(obs, params, x, u)


def check_constraints(obstacles, params: CbfParams, x, u) -> CbfVerdict:
    """Evaluate every obstacle's constraint at ``(x, u)``."""
    if len(obstacles) == 0:
        return CbfVerdict(True, None, math.inf)
    values = [zeta(o, params, x, u) for o in obstacles]
    i = int(np.argmin(values))
    margin = values[i]
    if margin >= 0:
        return CbfVerdict(True, None, margin)
    return CbfVerdict(False, i, margin)
