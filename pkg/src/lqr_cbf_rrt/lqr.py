"""Continuous-time LQR: Riccati solver, feedback policy and a per-goal gain cache."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import linalg

from .dynamics import DynamicsModel

logger = logging.getLogger(__name__)

CACHE_GRID = 1e-6


class NonConvergent(RuntimeError):
    """The Riccati iteration failed to reach a stabilizing solution."""


def _as_matrix(a, name):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        B = _as_matrix(B, "B")
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]


@dataclass(frozen=True)
class CostWeights:
    """Quadratic weights; ``Q`` positive semidefinite, ``R`` positive definite."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        for name, M in (("Q", Q), ("R", R)):
            if M.shape[0] != M.shape[1]:
                raise ValueError(f"{name} must be square, got {M.shape}")
            if not np.allclose(M, M.T, atol=1e-12 * (1 + np.abs(M).max())):
                raise ValueError(f"{name} must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-10 * (1 + np.abs(Q).max()):
            raise ValueError("Q must be positive semidefinite")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ValueError("R must be positive definite") from None
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @classmethod
    def identity(cls, n, m):
        return cls(np.eye(n), np.eye(m))


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray


def care_residual(model: LinearModel, weights: CostWeights, P: np.ndarray) -> float:
    A, B, Q, R = model.A, model.B, weights.Q, weights.R
    res = A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q
    return float(np.linalg.norm(res, "fro"))


def _spectral_abscissa(M):
    if M.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(M).real))


def _bass_gain(A, B):
    """Stabilizing gain from the Bass shifted-Lyapunov construction.

    Returns None when the shifted Gramian is singular (pair only stabilizable).
    """
    n = A.shape[0]
    beta = np.linalg.norm(A, 2) + 1.0
    As = A + beta * np.eye(n)
    # (-As) Z + Z (-As)' = -2 B B'
    Z = solve_lyapunov(-As.T, 2.0 * B @ B.T)
    Z = 0.5 * (Z + Z.T)
    ev = np.linalg.eigvalsh(Z)
    if ev[0] <= 0 or ev[-1] > 1e12 * ev[0]:
        return None
    return np.linalg.solve(Z, B).T


def _hamiltonian_care(A, B, Q, R):
    n = A.shape[0]
    G = B @ np.linalg.solve(R, B.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    _, Z, sdim = linalg.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise NonConvergent("Hamiltonian has eigenvalues on the imaginary axis")
    U11, U21 = Z[:n, :n], Z[n:, :n]
    try:
        P = np.linalg.solve(U11.T, U21.T).T
    except np.linalg.LinAlgError:
        raise NonConvergent("stable invariant subspace is not a graph (pair not stabilizable)") from None
    return 0.5 * (P + P.T)


@njit(cache=True)
def _kron_lyapunov(A, M):
    # (I kron A' + A' kron I) vec(P) = -vec(M), row-major vec
    n = A.shape[0]
    L = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            row = i * n + j
            for k in range(n):
                L[row, k * n + j] += A[k, i]
                L[row, i * n + k] += A[k, j]
    rhs = np.empty(n * n)
    for i in range(n):
        for j in range(n):
            rhs[i * n + j] = -M[i, j]
    return np.linalg.solve(L, rhs).reshape(n, n)


def solve_lyapunov(A, M):
    """Solve ``A'P + PA + M = 0``.

    Small systems go through the Kronecker form directly; larger ones use
    scipy's Bartels-Stewart solver.
    """
    A = np.ascontiguousarray(A, dtype=float)
    M = np.ascontiguousarray(M, dtype=float)
    if A.shape[0] > 8:
        return linalg.solve_continuous_lyapunov(A.T, -M)
    return _kron_lyapunov(A, M)


@njit(cache=True)
def _nk_small(A, B, Q, R, K, max_iter):
    P_prev = np.zeros_like(Q)
    P = np.zeros_like(Q)
    for it in range(max_iter):
        Ak = A - B @ K
        Kt = np.ascontiguousarray(K.T)
        P = _kron_lyapunov(Ak, Q + Kt @ R @ K)
        P = 0.5 * (P + P.T)
        K = np.ascontiguousarray(np.linalg.solve(R, np.ascontiguousarray(B.T) @ P))
        if it > 0 and np.linalg.norm(P - P_prev) <= 1e-14 * (1.0 + np.linalg.norm(P)):
            return P
        P_prev = P
    return P_prev


def _newton_kleinman(A, B, Q, R, K, max_iter):
    if A.shape[0] <= 8:
        return _nk_small(np.ascontiguousarray(A), np.ascontiguousarray(B), np.ascontiguousarray(Q),
                         np.ascontiguousarray(R), np.ascontiguousarray(K, dtype=float), max_iter)
    P_prev = None
    for _ in range(max_iter):
        Ak = A - B @ K
        P = solve_lyapunov(Ak, Q + K.T @ R @ K)
        P = 0.5 * (P + P.T)
        K = np.linalg.solve(R, B.T @ P)
        if P_prev is not None and np.linalg.norm(P - P_prev, "fro") <= 1e-14 * (1 + np.linalg.norm(P, "fro")):
            return P
        P_prev = P
    return P_prev


def solve_care(model: LinearModel, weights: CostWeights, max_iter: int = 60) -> RiccatiSolution:
    """Solve ``A'P + PA - P B R^-1 B' P + Q = 0`` for the stabilizing ``P``.

    Newton-Kleinman from a stabilizing initial gain (zero if ``A`` is already
    Hurwitz, otherwise Bass's construction); falls back to the ordered Schur
    decomposition of the Hamiltonian for ``n <= 8``.
    """
    A, B = model.A, model.B
    Q, R = weights.Q, weights.R
    n, m = model.n, model.m
    if Q.shape != (n, n) or R.shape != (m, m):
        raise ValueError(f"weight shapes {Q.shape}, {R.shape} do not match model ({n}, {m})")
    tol = 1e-8 * (1.0 + np.linalg.norm(Q, "fro"))

    P = None
    if _spectral_abscissa(A) < 0:
        K0 = np.zeros((m, n))
    else:
        K0 = _bass_gain(A, B)
    if K0 is not None and _spectral_abscissa(A - B @ K0) < 0:
        P = _newton_kleinman(A, B, Q, R, K0, max_iter)

    res = care_residual(model, weights, P) if P is not None and np.all(np.isfinite(P)) else np.inf
    if res > tol and n <= 8:
        logger.debug("Newton-Kleinman did not converge; using Hamiltonian method")
        P = _hamiltonian_care(A, B, Q, R)
        K1 = np.linalg.solve(R, B.T @ P)
        if _spectral_abscissa(A - B @ K1) < 0:
            # one polish pass from the Schur estimate
            P = _newton_kleinman(A, B, Q, R, K1, 3)
        res = care_residual(model, weights, P) if np.all(np.isfinite(P)) else np.inf

    if P is None or not np.all(np.isfinite(P)):
        raise NonConvergent("no stabilizing Riccati solution found")
    if res > tol:
        raise NonConvergent(f"Riccati residual {res:.3e} exceeds {tol:.3e}")
    K = np.linalg.solve(R, B.T @ P)
    if _spectral_abscissa(A - B @ K) >= 0:
        raise NonConvergent("closed loop A - BK is not Hurwitz")
    return RiccatiSolution(P=P, K=K)


def linearize(dynamics: DynamicsModel, x_eq, u_eq) -> LinearModel:
    x_eq = np.asarray(x_eq, float)
    u_eq = np.asarray(u_eq, float)
    if x_eq.shape != (dynamics.n,) or u_eq.shape != (dynamics.m,):
        raise ValueError("equilibrium point has wrong dimensions")
    A, B = dynamics.jacobians(x_eq, u_eq)
    return LinearModel(A, B)


def lqr_policy(sol: RiccatiSolution, x, x_ref, model: DynamicsModel | None = None) -> np.ndarray:
    """Feedback ``u = -K (x - x_ref)``; angular error is wrapped when a model is given."""
    if model is not None:
        e = model.state_error(x, x_ref)
    else:
        e = np.asarray(x, float) - np.asarray(x_ref, float)
    return -(sol.K @ e)


class GainCache:
    """Hash table from quantized local goals to Riccati solutions.

    With ``enabled=False`` nothing is stored, so every lookup recomputes;
    the counters still run, which is how the no-cache baseline is measured.
    """

    def __init__(self, grid: float = CACHE_GRID, enabled: bool = True):
        if not grid > 0:
            raise ValueError("grid must be positive")
        self.grid = grid
        self.enabled = enabled
        self._table: dict[tuple, RiccatiSolution] = {}
        self.hits = 0
        self.misses = 0
        self.solves = 0

    def key(self, x) -> tuple:
        q = np.rint(np.asarray(x, float) / self.grid).astype(np.int64)
        return tuple(q.tolist())

    def representative(self, key: tuple) -> np.ndarray:
        return np.asarray(key, dtype=float) * self.grid

    def get(self, key):
        return self._table.get(key)

    def put(self, key, sol: RiccatiSolution):
        if self.enabled:
            self._table[key] = sol

    def __len__(self):
        return len(self._table)

    def __contains__(self, key):
        return key in self._table


LINEAR_KEY = ("linear",)


def gain_for_goal(cache: GainCache, dynamics: DynamicsModel, weights: CostWeights, x_goal_local) -> RiccatiSolution:
    """Riccati solution for steering toward ``x_goal_local``.

    Nonlinear models are linearized at the quantized goal (the cache key's
    representative point) with the model's nominal control, so cached and
    freshly computed gains are bitwise identical. Linear models share a
    single entry.
    """
    if dynamics.is_linear:
        key = LINEAR_KEY
    else:
        key = cache.key(x_goal_local)
    sol = cache.get(key)
    if sol is not None:
        cache.hits += 1
        return sol
    cache.misses += 1
    x_eq = np.zeros(dynamics.n) if dynamics.is_linear else cache.representative(key)
    sol = solve_care(linearize(dynamics, x_eq, dynamics.nominal_control()), weights)
    cache.solves += 1
    cache.put(key, sol)
    return sol
