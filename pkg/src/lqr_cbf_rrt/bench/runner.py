"""Run a scenario over seeds for one ablation baseline and collect metrics."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..lqr import GainCache
from ..planner import PlannerConfig, PlanResult, audit_states, audit_tree, plan
from ..steering import EmptyExtension, SteerDeps, lqr_cbf_steer
from .config import BASELINES, Baseline, ScenarioConfig

logger = logging.getLogger(__name__)

METRICS = ("wall_time", "iterations", "first_solution_iteration", "best_cost", "path_length", "violations")


@dataclass
class SeedRow:
    seed: int
    wall_time: float
    iterations: int
    first_solution_iteration: int | None
    best_cost: float | None
    path_length: float | None
    violations: int
    nodes: int = 0
    steer_calls: int = 0
    care_solves: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def solved(self) -> bool:
        return self.ok and self.best_cost is not None


@dataclass
class RunReport:
    scenario: str
    model: str
    baseline: str
    rows: list[SeedRow] = field(default_factory=list)

    def column(self, name) -> list[float]:
        return [getattr(r, name) for r in self.rows if r.ok and getattr(r, name) is not None]

    def mean(self, name) -> float | None:
        vals = self.column(name)
        return float(np.mean(vals)) if vals else None

    def std(self, name) -> float | None:
        # population std, and only once there are two seeds to compare
        vals = self.column(name)
        return float(np.std(vals)) if len(vals) >= 2 else None

    def aggregate(self) -> dict:
        return {m: {"mean": self.mean(m), "std": self.std(m)} for m in METRICS}

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "model": self.model, "baseline": self.baseline,
                "rows": [asdict(r) for r in self.rows], "aggregate": self.aggregate()}

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(d["scenario"], d["model"], d["baseline"], [SeedRow(**r) for r in d["rows"]])


def baseline_name(baseline: Baseline) -> str:
    for name, b in BASELINES.items():
        if b == baseline:
            return name
    raise ValueError(f"unknown baseline {baseline}")


def build_deps(config: ScenarioConfig, baseline: Baseline | None = None) -> SteerDeps:
    baseline = baseline or config.baseline
    return SteerDeps(config.make_model(), config.weights, GainCache(enabled=baseline.gain_cache),
                     list(config.obstacles), config.cbf, config.steer)


def warm_up(config: ScenarioConfig) -> None:
    """Trigger JIT compilation outside the timed region."""
    deps = build_deps(config, Baseline(gain_cache=False))
    target = config.make_model().lift(np.asarray(config.goal, float), config.x_init)
    try:
        lqr_cbf_steer(config.x_init, target, deps)
    except EmptyExtension:
        pass


def run_seed(config: ScenarioConfig, seed: int, baseline: Baseline | None = None,
             planner_overrides: dict | None = None) -> tuple[SeedRow, PlanResult | None]:
    """Plan once; planner exceptions are recorded on the row, not raised."""
    baseline = baseline or config.baseline
    pcfg: PlannerConfig = replace(config.planner, seed=int(seed), adaptive=baseline.adaptive_sampling,
                                  **(planner_overrides or {}))
    try:
        deps = build_deps(config, baseline)
        t0 = time.monotonic()
        result = plan(config.x_init, deps, pcfg, config.sampler)
        wall = time.monotonic() - t0
    except Exception as exc:  # noqa: BLE001 - one bad seed must not sink the others
        logger.warning("seed %s failed: %s", seed, exc)
        return SeedRow(int(seed), math.nan, 0, None, None, None, 0, error=f"{type(exc).__name__}: {exc}"), None
    violations = audit_tree(result.tree, deps.obstacle_rows)
    if result.best_path is not None:
        violations += audit_states(result.best_path, deps.model, deps.obstacle_rows)
    best = result.best_node
    row = SeedRow(
        seed=int(seed),
        wall_time=wall,
        iterations=result.iterations,
        first_solution_iteration=result.first_solution_iteration,
        best_cost=None if best is None else float(best.cost_to_come),
        path_length=None if best is None else float(result.tree.path_length(best.id)),
        violations=int(violations),
        nodes=len(result.tree),
        steer_calls=result.stats["steer_calls"],
        care_solves=result.stats["care_solves"],
    )
    return row, result


_WARM = set()


def _row_only(args):
    config, seed, baseline = args
    if config.model_name not in _WARM:
        warm_up(config)
        _WARM.add(config.model_name)
    return run_seed(config, seed, baseline)[0]


def run_scenario(config: ScenarioConfig, baseline: str | Baseline | None = None, seeds=None,
                 jobs: int = 1, keep_results: bool = False):
    """Run every seed; returns the report, plus ``{seed: PlanResult}`` if ``keep_results``.

    With ``jobs > 1`` seeds run in separate processes and plan results are
    not kept (trees stay in the workers).
    """
    if isinstance(baseline, str):
        try:
            baseline = BASELINES[baseline]
        except KeyError:
            raise ValueError(f"unknown baseline {baseline!r}; expected one of {sorted(BASELINES)}") from None
    baseline = baseline or config.baseline
    seeds = config.seeds if seeds is None else tuple(seeds)
    report = RunReport(config.name, config.model_name, baseline_name(baseline))
    results = {}
    warm_up(config)
    if jobs > 1 and not keep_results:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            report.rows = list(pool.map(_row_only, [(config, s, baseline) for s in seeds]))
    else:
        for s in seeds:
            row, res = run_seed(config, s, baseline)
            report.rows.append(row)
            if keep_results:
                results[int(s)] = res
    return (report, results) if keep_results else report
