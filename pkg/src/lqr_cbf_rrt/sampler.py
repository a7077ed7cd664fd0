"""Uniform and cross-entropy importance sampling over the workspace box.

Once goal-reaching solutions exist, half of the draws (on average) come from
a weighted Gaussian KDE fitted to states of the cheapest solutions, the
rest stay uniform so exploration never stops.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)


class DegenerateElitesWarning(UserWarning):
    """All elite points coincide along some axis; the bandwidth floor was used."""


@dataclass(frozen=True)
class SamplerConfig:
    bounds: tuple = ((0.0, 50.0), (0.0, 30.0))
    quantile: float = 0.25
    update_period: int = 5
    max_elites: int = 300
    bandwidth_floor: float = 1e-3
    mix_probability: float = 0.5
    convergence_threshold: float = 0.05
    convergence_samples: int = 10_000
    sticky_convergence: bool = True
    max_rejections: int = 100

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        if b.ndim != 2 or b.shape[1] != 2 or not np.all(np.isfinite(b)) or np.any(b[:, 0] >= b[:, 1]):
            raise ValueError(f"bounds must be finite, nonempty [lo, hi] pairs, got {self.bounds}")
        object.__setattr__(self, "bounds", tuple(tuple(map(float, r)) for r in b))
        if not 0 < self.quantile < 1:
            raise ValueError("quantile must lie in (0, 1)")
        if self.update_period < 1:
            raise ValueError("update_period must be >= 1")
        if self.max_elites < 1:
            raise ValueError("max_elites must be >= 1")

    @property
    def low(self):
        return np.array([r[0] for r in self.bounds])

    @property
    def high(self):
        return np.array([r[1] for r in self.bounds])


@dataclass
class KdeDensity:
    """Mixture of axis-aligned Gaussians, one per elite point."""

    means: np.ndarray
    weights: np.ndarray
    bandwidths: np.ndarray

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, float))
        self.weights = np.asarray(self.weights, float).ravel()
        bw = np.asarray(self.bandwidths, float)
        if bw.ndim == 1:
            bw = np.broadcast_to(bw, self.means.shape).copy()
        self.bandwidths = bw
        if len(self.weights) != len(self.means) or self.bandwidths.shape != self.means.shape:
            raise ValueError("kernel arrays have inconsistent shapes")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("kernel weights must be positive and sum to 1")
        if np.any(self.bandwidths <= 0):
            raise ValueError("bandwidths must be positive")

    @property
    def dim(self):
        return self.means.shape[1]

    def pdf(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        norm = np.prod(self.bandwidths, axis=1) * (2.0 * math.pi) ** (self.dim / 2.0)
        coef = self.weights / norm
        out = np.empty(len(pts))
        shared = np.all(self.bandwidths == self.bandwidths[0])
        for lo in range(0, len(pts), 2048):
            chunk = pts[lo:lo + 2048]
            if shared:
                b = self.bandwidths[0]
                sq = cdist(chunk / b, self.means / b, "sqeuclidean")
            else:
                sq = np.zeros((len(chunk), len(self.means)))
                for d in range(self.dim):
                    sq += ((chunk[:, d, None] - self.means[None, :, d]) / self.bandwidths[None, :, d]) ** 2
            out[lo:lo + 2048] = np.exp(-0.5 * sq) @ coef
        return out

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=size, p=self.weights)
        return self.means[idx] + rng.standard_normal((size, self.dim)) * self.bandwidths[idx]

    def to_records(self) -> list[dict]:
        return [{"mean": mu.tolist(), "weight": float(w), "bandwidth": bw.tolist()}
                for mu, w, bw in zip(self.means, self.weights, self.bandwidths)]


@dataclass
class EliteSet:
    points: np.ndarray
    weights: np.ndarray
    costs: np.ndarray  # originating solution cost per point
    threshold: float


def quantile_elites(solutions: Sequence[tuple[np.ndarray, float]], quantile: float,
                    max_elites: int = 300) -> EliteSet:
    """Select elite points from solutions at or below the cost quantile.

    ``solutions`` holds ``(workspace_points, cost)`` pairs. The threshold is
    the linearly interpolated empirical quantile; states of the surviving
    solutions are thinned to every k-th point so at most ``max_elites``
    remain. Each point carries ``exp(-cost / threshold)`` of its solution,
    normalized over all points.
    """
    if len(solutions) == 0:
        raise ValueError("no solutions to select elites from")
    costs = np.array([c for _, c in solutions], dtype=float)
    threshold = float(np.quantile(costs, quantile))
    chosen = [i for i, c in enumerate(costs) if c <= threshold]
    pts, pcost = [], []
    for i in chosen:
        p = np.atleast_2d(np.asarray(solutions[i][0], float))
        pts.append(p)
        pcost.append(np.full(len(p), costs[i]))
    points = np.concatenate(pts)
    point_costs = np.concatenate(pcost)
    stride = max(1, math.ceil(len(points) / max_elites))
    points = points[::stride]
    point_costs = point_costs[::stride]
    if threshold > 0:
        w = np.exp(-point_costs / threshold)
    else:
        w = np.ones(len(points))
    return EliteSet(points=points, weights=w / w.sum(), costs=point_costs, threshold=threshold)


def wgkde_fit(elites: EliteSet, bandwidth_floor: float = 1e-3) -> KdeDensity:
    """Weighted Gaussian KDE with a per-axis weighted Scott bandwidth."""
    pts = np.atleast_2d(elites.points)
    if len(pts) == 0:
        raise ValueError("empty elite set")
    w = np.asarray(elites.weights, float)
    w = w / w.sum()
    d = pts.shape[1]
    mean = w @ pts
    var = w @ (pts - mean) ** 2
    n_eff = 1.0 / np.sum(w ** 2)
    bw = np.sqrt(var) * n_eff ** (-1.0 / (d + 4))
    if np.any(bw < bandwidth_floor):
        if np.any(var == 0):
            warnings.warn("elite points coincide; applying bandwidth floor", DegenerateElitesWarning,
                          stacklevel=2)
        bw = np.maximum(bw, bandwidth_floor)
    return KdeDensity(means=pts.copy(), weights=w, bandwidths=np.tile(bw, (len(pts), 1)))


def l1_distance(p: KdeDensity, q: KdeDensity, rng: np.random.Generator, n: int = 10_000) -> float:
    """Monte Carlo estimate of ``integral |p - q|``.

    Draws from the equal mixture ``(p + q) / 2`` and averages
    ``|p - q| / ((p + q) / 2)``, which is bounded by 2.
    """
    n_p = rng.binomial(n, 0.5)
    xs = np.concatenate([p.draw(rng, n_p), q.draw(rng, n - n_p)])
    fp, fq = p.pdf(xs), q.pdf(xs)
    mix = 0.5 * (fp + fq)
    ok = mix > 0
    return float(np.sum(np.abs(fp[ok] - fq[ok]) / mix[ok]) / n)


def convergence_check(previous: KdeDensity | None, current: KdeDensity, rng: np.random.Generator,
                      threshold: float = 0.05, n: int = 10_000) -> bool:
    if previous is None:
        return False
    return l1_distance(previous, current, rng, n) < threshold


@dataclass
class SdfSnapshot:
    iteration: int
    solutions: int
    threshold: float
    density: KdeDensity
    elites: np.ndarray
    converged: bool

    def to_record(self) -> dict:
        return {
            "iteration": self.iteration,
            "solutions": self.solutions,
            "threshold": self.threshold,
            "converged": self.converged,
            "kernels": self.density.to_records(),
        }


class AdaptiveSampler:
    """Stateful workspace sampler implementing the CE mixing rule.

    ``sample(solutions)`` takes the current solution set as
    ``(workspace_points, cost)`` pairs (a callable returning them is also
    accepted so the planner only builds it when a refit is due).
    """

    def __init__(self, config: SamplerConfig, rng: np.random.Generator, adaptive: bool = True):
        self.config = config
        self.rng = rng
        self.adaptive = adaptive
        self.low = config.low
        self.high = config.high
        self.density: KdeDensity | None = None
        self.optimal_density: KdeDensity | None = None
        self.opt_density_flag = False
        self.last_source = "uniform"
        self.snapshots: list[SdfSnapshot] = []
        self.fits = 0
        self._fitted_count = -1
        self.iteration = 0

    def uniform(self) -> np.ndarray:
        return self.rng.uniform(self.low, self.high)

    def _inside(self, x):
        return bool(np.all(x >= self.low) and np.all(x <= self.high))

    def _draw_from(self, density: KdeDensity) -> np.ndarray:
        for _ in range(self.config.max_rejections):
            x = density.draw(self.rng, 1)[0]
            if self._inside(x):
                return x
        self.last_source = "uniform"
        return self.uniform()

    def refit(self, solutions) -> KdeDensity:
        cfg = self.config
        elites = quantile_elites(solutions, cfg.quantile, cfg.max_elites)
        # every elite must come from a solution at or under the threshold
        if np.any(elites.costs > elites.threshold):
            raise RuntimeError("elite drawn from a solution above the quantile threshold")
        density = wgkde_fit(elites, cfg.bandwidth_floor)
        converged = convergence_check(self.density, density, self.rng, cfg.convergence_threshold,
                                      cfg.convergence_samples)
        self.fits += 1
        self.snapshots.append(SdfSnapshot(self.iteration, len(solutions), elites.threshold, density,
                                          elites.points, converged))
        if converged:
            self.opt_density_flag = True
            self.optimal_density = density
            logger.debug("sampling density converged after %d fits", self.fits)
        elif not self.config.sticky_convergence:
            self.opt_density_flag = False
        self.density = density
        return density

    def sample(self, solutions, n_solutions: int | None = None) -> np.ndarray:
        """Draw one workspace point.

        ``solutions`` may be a sequence of ``(points, cost)`` pairs or a
        zero-argument callable producing one; ``n_solutions`` gives the
        count without materializing it.
        """
        if n_solutions is None:
            if callable(solutions):
                solutions = solutions()
            n_solutions = len(solutions)
        coin = self.rng.uniform()
        if self.adaptive and coin <= self.config.mix_probability and n_solutions > 0:
            if self.opt_density_flag and self.optimal_density is not None:
                self.last_source = "optimal"
                return self._draw_from(self.optimal_density)
            if n_solutions % self.config.update_period == 0:
                if n_solutions != self._fitted_count:
                    sols = solutions() if callable(solutions) else solutions
                    self.refit(sols)
                    self._fitted_count = n_solutions
                    if self.opt_density_flag and self.optimal_density is not None:
                        self.last_source = "optimal"
                        return self._draw_from(self.optimal_density)
                self.last_source = "density"
                return self._draw_from(self.density)
        self.last_source = "uniform"
        return self.uniform()
