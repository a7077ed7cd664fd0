"""End-to-end acceptance checks; one PASS/FAIL line per criterion.

Heavy planner runs are shared through module-scoped fixtures. Run directly
with ``python tests/test_acceptance.py`` or through pytest (the lines then
appear in the terminal summary).
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import linalg

from lqr_cbf_rrt.bench import load_config, run_scenario
from lqr_cbf_rrt.bench.runner import build_deps, warm_up
from lqr_cbf_rrt.cbf import CbfParams, ObstacleSpec, min_barrier
from lqr_cbf_rrt.dynamics import DoubleIntegrator, Trajectory, Unicycle, eval_dynamics
from lqr_cbf_rrt.lqr import CostWeights, GainCache, LinearModel, care_residual, gain_for_goal, solve_care
from lqr_cbf_rrt.planner import Planner, Tree, audit_tree, choose_parent, near, near_radius, nearest, rewire
from lqr_cbf_rrt.sampler import AdaptiveSampler, SamplerConfig, quantile_elites, wgkde_fit
from lqr_cbf_rrt.steering import EmptyExtension, SteerDeps, lqr_cbf_steer, rollout

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # executed as a script from elsewhere
    ACCEPTANCE_LINES = []

SEEDS = (0, 20, 42, 45, 100)


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- shared runs

@pytest.fixture(scope="module")
def di_runs():
    """Double integrator, seven-obstacle environment: audit at 2000 iterations, then continue to 2500."""
    cfg = load_config("paper_env")
    warm_up(cfg)
    out = {}
    for seed in SEEDS:
        deps = build_deps(cfg)
        p = Planner(cfg.x_init, deps, replace(cfg.planner, seed=seed), cfg.sampler)
        p.run(2000)
        v2000 = audit_tree(p.tree, deps.obstacle_rows)
        res = p.run(500)
        out[seed] = (res, v2000, deps)
    return cfg, out


@pytest.fixture(scope="module")
def ablation():
    """Unicycle, 2000 iterations, all four baselines over the five seeds."""
    cfg = load_config("paper_env_unicycle").with_overrides(iterations=2000, seeds=SEEDS)
    warm_up(cfg)
    reports, results = {}, {}
    for name in ("ours", "no-cache", "no-adaptive", "no-cache-no-adaptive"):
        keep = name in ("ours", "no-cache")
        r = run_scenario(cfg, name, keep_results=keep)
        reports[name], results[name] = (r if keep else (r, None))
    return cfg, reports, results


# ------------------------------------------------------------------ criteria

def random_stabilizable(rng, n, m, margin=0.1):
    while True:
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        if all(np.linalg.svd(np.hstack([A - lam * np.eye(n), B]), compute_uv=False)[-1] >= margin
               for lam in np.linalg.eigvals(A) if lam.real >= 0):
            return A, B


def test_care_correctness():
    sol = solve_care(LinearModel([[0, 1], [0, 0]], [[0], [1]]), CostWeights(np.eye(2), [[1.0]]))
    k_err = float(np.max(np.abs(sol.K - [[1.0, math.sqrt(3)]])))
    rng = np.random.default_rng(2024)
    systems = []
    for _ in range(200):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, n + 1))
        A, B = random_stabilizable(rng, n, m)
        M, N = rng.standard_normal((n, n)), rng.standard_normal((m, m))
        systems.append((LinearModel(A, B), CostWeights(M @ M.T + np.eye(n), N @ N.T + np.eye(m))))
    t0 = time.perf_counter()
    sols = [solve_care(lm, w) for lm, w in systems]
    elapsed = time.perf_counter() - t0
    worst = max(care_residual(lm, w, s.P) / (1e-8 * (1 + np.linalg.norm(w.Q))) for (lm, w), s in zip(systems, sols))
    hurwitz = all(np.max(np.linalg.eigvals(lm.A - lm.B @ s.K).real) < 0 for (lm, _), s in zip(systems, sols))
    report("CARE correctness", k_err <= 1e-6 and worst <= 1 and hurwitz and elapsed < 1.0,
           f"|K - [1, sqrt3]| = {k_err:.1e}; worst residual/bound {worst:.1e} over 200 systems; "
           f"closed loops Hurwitz {hurwitz}; {elapsed:.2f} s")


def test_safety(di_runs, ablation):
    _, di = di_runs
    _, _, results = ablation
    di_v = {s: v for s, (_, v, _) in di.items()}
    obs = build_deps(load_config("paper_env_unicycle")).obstacle_rows
    uni_v = {s: audit_tree(r.tree, obs) for s, r in results["ours"].items()}
    ok = sum(di_v.values()) == 0 and sum(uni_v.values()) == 0 and len(uni_v) == 5
    report("Safety audit", ok, f"double integrator violations {di_v}; unicycle violations {uni_v} "
                               "(5 seeds x 2000 iterations each)")


def test_prefix_truncation():
    centers = [(7, 12), (46, 10), (25, 10), (15, 5), (15, 15), (37, 7), (37, 23)]
    checked, empty, bad = 0, 0, []
    for model, cbf in ((DoubleIntegrator(), CbfParams(6, 1.5)), (Unicycle(), CbfParams(2, 2, "unicycle"))):
        deps = SteerDeps(model, CostWeights.identity(model.n, model.m), GainCache(),
                         [ObstacleSpec(c, 2.0) for c in centers], cbf)
        rng = np.random.default_rng(17)
        for center in centers:
            for _ in range(20):
                while True:
                    p = np.array(center) + rng.uniform(-5, 5, 2)
                    if min_barrier(deps.obstacle_rows, p[None])[0] > 0:
                        break
                start = model.lift(p, None)
                if model.angle_indices:
                    start[2] = rng.uniform(-math.pi, math.pi)
                target = model.lift(np.array(center, float), start)
                gain = gain_for_goal(deps.cache, model, deps.weights, target)
                free, free_u, _, _, _ = rollout(start, target, deps, gain, constrained=False)
                try:
                    t = lqr_cbf_steer(start, target, deps)
                except EmptyExtension:
                    empty += 1
                    continue
                checked += 1
                n = len(t.states)
                safe = np.all(min_barrier(deps.obstacle_rows, model.workspace(t.states)) >= 0)
                same = np.array_equal(t.states, free[:n]) and np.array_equal(t.controls, free_u[:n - 1])
                if not (safe and same):
                    bad.append((model.name, center))
    report("Prefix truncation", not bad,
           f"{checked} nonempty prefixes bitwise equal to the unconstrained rollout and safe, "
           f"{empty} EmptyExtension, failures {bad[:3]}")


def test_planner_success(di_runs, ablation):
    _, di = di_runs
    di_found = {s: r.first_solution_iteration for s, (r, _, _) in di.items()}
    cfg, _, results = ablation
    uni_found = {s: r.first_solution_iteration for s, r in results["ours"].items()}
    # a path within 2000 iterations is a path within 3000; extend only the seeds that missed
    for seed, it in uni_found.items():
        if it is None:
            deps = build_deps(cfg)
            p = Planner(cfg.x_init, deps, replace(cfg.planner, seed=seed, iterations=3000), cfg.sampler)
            uni_found[seed] = p.run().first_solution_iteration
    di_ok = sum(v is not None and v <= 2500 for v in di_found.values())
    uni_ok = sum(v is not None and v <= 3000 for v in uni_found.values())
    report("Planner success", di_ok >= 4 and uni_ok >= 4,
           f"double integrator {di_ok}/5 within 2500 (first solution at {di_found}); "
           f"unicycle {uni_ok}/5 within 3000 (first solution at {uni_found})")


def test_ablation_ordering(ablation):
    _, reports, _ = ablation
    mean = {k: r.mean("wall_time") for k, r in reports.items()}
    calls = {k: int(np.mean(r.column("steer_calls"))) for k, r in reports.items()}
    ratio = mean["no-cache"] / mean["ours"]
    ok = mean["ours"] < mean["no-cache"] < mean["no-cache-no-adaptive"] and ratio >= 1.5
    report("Ablation ordering", ok,
           "mean wall time " + ", ".join(f"{k} {v:.2f} s" for k, v in mean.items())
           + f"; no-cache/ours = {ratio:.2f}; mean steer calls {calls}")


def test_cache_transparency(ablation):
    _, _, results = ablation
    mismatched = []
    for seed in SEEDS:
        a, b = results["ours"][seed].tree, results["no-cache"][seed].tree
        same = len(a) == len(b) and all(
            np.array_equal(x.state, y.state) and x.parent == y.parent and abs(x.cost_to_come - y.cost_to_come) <= 1e-9
            for x, y in zip(a.nodes, b.nodes))
        if not same:
            mismatched.append(seed)
    sizes = {s: len(results["ours"][s].tree) for s in SEEDS}
    report("Cache transparency", not mismatched, f"identical trees on all seeds (node counts {sizes}); "
                                                 f"mismatched seeds {mismatched}")


def test_optimality_trend(di_runs, ablation):
    cfg, di = di_runs
    _, _, results = ablation
    series = [r.cost_series for r, _, _ in di.values()] + [r.cost_series for r in results["ours"].values()]
    monotone = all(all(b <= a for a, b in zip(s, s[1:])) for s in series)
    rrt_len, star_len = [], []
    for seed, (res, _, _) in di.items():
        if res.best_node is not None:
            star_len.append(res.tree.path_length(res.best_node.id))
        deps = build_deps(cfg)
        rr = Planner(cfg.x_init, deps, replace(cfg.planner, seed=seed, rewire=False, iterations=2500), cfg.sampler).run()
        if rr.best_node is not None:
            rrt_len.append(rr.tree.path_length(rr.best_node.id))
    ok = monotone and star_len and rrt_len and np.mean(star_len) <= np.mean(rrt_len)
    report("Optimality trend", bool(ok),
           f"best-cost series nonincreasing {monotone}; mean path length RRT* {np.mean(star_len):.2f} m "
           f"({len(star_len)} seeds) vs RRT {np.mean(rrt_len):.2f} m ({len(rrt_len)} seeds), double integrator 2500 it")


def test_sampler_properties():
    rng = np.random.default_rng(0)
    cfg = SamplerConfig()
    sols = []
    for i in range(10):
        xs = np.linspace(2, 30, 50)
        sols.append((np.column_stack([xs, 2 + 0.75 * xs + rng.normal(0, 0.4, 50)]), 40.0 + 3 * i))
    s = AdaptiveSampler(cfg, rng)
    uniform = 0
    inside = True
    for _ in range(10_000):
        x = s.sample(sols)
        uniform += s.last_source == "uniform"
        inside &= bool(np.all(x >= cfg.low) and np.all(x <= cfg.high))
    frac = uniform / 10_000
    d = wgkde_fit(quantile_elites(sols, cfg.quantile, cfg.max_elites))
    pts = rng.uniform(cfg.low, cfg.high, (100_000, 2))
    mass = float(d.pdf(pts).mean() * np.prod(cfg.high - cfg.low))
    sound = True
    for k in range(1, 41):
        sub = sols[:max(1, k % 11)] + [(p + rng.normal(0, 1, p.shape), c + rng.uniform(0, 50)) for p, c in sols[:k // 4]]
        e = quantile_elites(sub, cfg.quantile, cfg.max_elites)
        sound &= bool(np.all(e.costs <= e.threshold))
    report("Sampler properties", abs(frac - 0.5) <= 0.05 and abs(mass - 1) <= 0.05 and sound and inside,
           f"uniform fraction {frac:.3f}; KDE mass {mass:.4f}; elite soundness {sound}; samples in box {inside}")


def _line_steer(a, b):
    d = float(np.linalg.norm(DoubleIntegrator().workspace(a) - DoubleIntegrator().workspace(b)))
    return Trajectory(np.vstack([a, b]), np.zeros((1, 2)), 0.05, cost=d, length=d, reached=True, status="reached")


def test_oracle_equivalence():
    from lqr_cbf_rrt.planner import PlannerConfig
    di = DoubleIntegrator()
    rng = np.random.default_rng(99)
    cfg = PlannerConfig(eta=15.0)
    nn_bad = 0
    for _ in range(500):
        tree = Tree(di.lift(rng.uniform([0, 0], [50, 30])), di)
        for _ in range(int(rng.integers(0, 80))):
            p = tree[int(rng.integers(len(tree)))]
            x = di.lift(rng.uniform([0, 0], [50, 30]))
            tree.add(x, p, _line_steer(p.state, x))
        q = rng.uniform([0, 0], [50, 30])
        d = [float(np.sum((di.workspace(n.state) - q) ** 2)) for n in tree.nodes]
        r = near_radius(len(tree), cfg.lam, cfg.eta)
        nn_bad += nearest(tree, q).id != int(np.argmin(d))
        nn_bad += [n.id for n in near(tree, q, cfg)] != [i for i, v in enumerate(d) if v <= r * r]
    rw_bad = 0
    for _ in range(200):
        tree = Tree(di.lift(rng.uniform([0, 0], [50, 30])), di)
        for _ in range(int(rng.integers(1, 40))):
            p = tree[int(rng.integers(len(tree)))]
            x = di.lift(rng.uniform([0, 0], [50, 30]))
            tree.add(x, p, _line_steer(p.state, x))
        x_new = di.lift(rng.uniform([0, 0], [50, 30]))
        nb = near(tree, di.workspace(x_new), cfg)
        nst = nearest(tree, di.workspace(x_new))
        parent, seg = choose_parent(tree, x_new, nb, nst, _line_steer(nst.state, x_new), _line_steer)
        node = tree.add(x_new, parent, seg)
        before = tree.total_cost()
        rewire(tree, node, nb, _line_steer)
        brute = []
        for n in tree.nodes:
            c, cur = 0.0, n
            while cur.parent is not None:
                c += cur.segment_cost
                cur = tree[cur.parent]
            brute.append(c)
        rw_bad += tree.total_cost() > before + 1e-9
        rw_bad += not np.allclose([n.cost_to_come for n in tree.nodes], brute, atol=1e-9, rtol=0)
    report("Oracle equivalence", nn_bad == 0 and rw_bad == 0,
           f"nearest/near mismatches {nn_bad} over 500 instances; rewire cost increases or "
           f"stale costs {rw_bad} over 200 fuzzed trees")


def test_jacobians():
    rng = np.random.default_rng(5)
    worst = {}
    for model in (DoubleIntegrator(), Unicycle()):
        err = 0.0
        for _ in range(100):
            x = rng.uniform(-10, 10, model.n)
            u = rng.uniform(-3, 3, model.m)
            A, B = model.jacobians(x, u)
            h = 1e-6
            Afd = np.column_stack([(eval_dynamics(model, x + h * e, u) - eval_dynamics(model, x - h * e, u)) / (2 * h)
                                   for e in np.eye(model.n)])
            Bfd = np.column_stack([(eval_dynamics(model, x, u + h * e) - eval_dynamics(model, x, u - h * e)) / (2 * h)
                                   for e in np.eye(model.m)])
            err = max(err, float(np.max(np.abs(A - Afd))), float(np.max(np.abs(B - Bfd))))
        worst[model.name] = err
    report("Jacobian checks", all(v <= 1e-5 for v in worst.values()),
           "max |analytic - central difference| " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
