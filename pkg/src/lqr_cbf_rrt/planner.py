"""RRT* over LQR-steered, barrier-checked segments.

Edges are compared by the discretized LQR cost of their segments rather than
by length. Each iteration: sample, nearest, steer, choose the cheapest
reaching parent among nearby nodes, insert, rewire nearby nodes through the
new one, and try to connect the new node to the goal region.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cbf import min_barrier
from .dynamics import DynamicsModel, Trajectory
from .sampler import AdaptiveSampler, SamplerConfig
from .steering import EmptyExtension, SteerDeps, lqr_cbf_steer

logger = logging.getLogger(__name__)

SteerFn = Callable[[np.ndarray, np.ndarray], Trajectory]


class InfeasibleStart(ValueError):
    """The initial state lies inside an obstacle."""


@dataclass
class TreeNode:
    id: int
    state: np.ndarray
    parent: int | None
    cost_to_come: float
    segment: Trajectory | None = None
    segment_cost: float = 0.0
    children: list[int] = field(default_factory=list)
    is_goal: bool = False

    @property
    def cost(self):
        return self.cost_to_come


class Tree:
    """Node store with a contiguous array of workspace positions for queries."""

    def __init__(self, root_state, model: DynamicsModel):
        self.model = model
        self.nodes: list[TreeNode] = []
        self._pos = np.empty((256, 2))
        self.add(np.asarray(root_state, float), None, None)

    def __len__(self):
        return len(self.nodes)

    def __getitem__(self, i) -> TreeNode:
        return self.nodes[i]

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    @property
    def positions(self) -> np.ndarray:
        return self._pos[:len(self.nodes)]

    def add(self, state, parent: TreeNode | None, segment: Trajectory | None) -> TreeNode:
        i = len(self.nodes)
        if i == len(self._pos):
            self._pos = np.concatenate([self._pos, np.empty_like(self._pos)])
        seg_cost = 0.0 if segment is None else float(segment.cost)
        cost = 0.0 if parent is None else parent.cost_to_come + seg_cost
        node = TreeNode(i, np.asarray(state, float), None if parent is None else parent.id, cost,
                        segment, seg_cost)
        self.nodes.append(node)
        self._pos[i] = self.model.workspace(node.state)
        if parent is not None:
            parent.children.append(i)
        return node

    def is_ancestor(self, a: int, b: int) -> bool:
        """True if node ``a`` lies on the root path of node ``b`` (or a == b)."""
        cur = b
        while cur is not None:
            if cur == a:
                return True
            cur = self.nodes[cur].parent
        return False

    def reparent(self, node: TreeNode, new_parent: TreeNode, segment: Trajectory):
        if self.is_ancestor(node.id, new_parent.id):
            raise ValueError(f"reparenting {node.id} under {new_parent.id} would create a cycle")
        old = self.nodes[node.parent]
        old.children.remove(node.id)
        new_parent.children.append(node.id)
        node.parent = new_parent.id
        node.segment = segment
        node.segment_cost = float(segment.cost)
        self.propagate_costs(node)

    def propagate_costs(self, node: TreeNode):
        stack = [node.id]
        while stack:
            n = self.nodes[stack.pop()]
            n.cost_to_come = self.nodes[n.parent].cost_to_come + n.segment_cost
            stack.extend(n.children)

    def path_ids(self, i: int) -> list[int]:
        ids = []
        cur = i
        while cur is not None:
            ids.append(cur)
            cur = self.nodes[cur].parent
        return ids[::-1]

    def path_states(self, i: int) -> np.ndarray:
        """Concatenated segment states from the root to node ``i``."""
        ids = self.path_ids(i)
        chunks = [self.nodes[ids[0]].state[None, :]]
        for j in ids[1:]:
            chunks.append(self.nodes[j].segment.states[1:])
        return np.concatenate(chunks)

    def path_length(self, i: int) -> float:
        return float(sum(self.nodes[j].segment.length for j in self.path_ids(i)[1:]))

    def total_cost(self) -> float:
        return float(sum(n.cost_to_come for n in self.nodes))

    def all_states(self) -> np.ndarray:
        chunks = [self.root.state[None, :]]
        chunks += [n.segment.states for n in self.nodes[1:]]
        return np.concatenate(chunks)


@dataclass(frozen=True)
class PlannerConfig:
    iterations: int = 2000
    lam: float = 50.0
    eta: float = 5.0
    dim: int = 2
    goal: tuple = (30.0, 24.0)
    goal_radius: float = 1.5
    goal_attempt_radius: float | None = None
    seed: int = 0
    adaptive: bool = True
    rewire: bool = True
    duplicate_tol: float = 1e-6

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if not (self.lam > 0 and self.eta > 0 and self.goal_radius > 0):
            raise ValueError("lam, eta and goal_radius must be positive")
        object.__setattr__(self, "goal", tuple(float(v) for v in self.goal))

    @property
    def attempt_radius(self) -> float:
        return 2.0 * self.eta if self.goal_attempt_radius is None else self.goal_attempt_radius


def near_radius(n_nodes: int, lam: float, eta: float, dim: int = 2) -> float:
    """Shrinking ball ``min(lam * (ln n / n) ** (1 / (dim + 1)), eta)``."""
    if n_nodes < 1:
        raise ValueError("tree is empty")
    return min(lam * (math.log(n_nodes) / n_nodes) ** (1.0 / (dim + 1)), eta)


def nearest(tree: Tree, point) -> TreeNode:
    """Node closest to ``point`` in the workspace; ties go to the lowest id."""
    d = tree.positions - np.asarray(point, float)[None, :]
    return tree.nodes[int(np.argmin(np.einsum("ij,ij->i", d, d)))]


def near(tree: Tree, point, config: PlannerConfig) -> list[TreeNode]:
    r = near_radius(len(tree), config.lam, config.eta, config.dim)
    if r <= 0:
        return []
    d = tree.positions - np.asarray(point, float)[None, :]
    idx = np.flatnonzero(np.einsum("ij,ij->i", d, d) <= r * r)
    return [tree.nodes[i] for i in idx]


def choose_parent(tree: Tree, x_new, near_nodes, nearest_node: TreeNode, sigma_nearest: Trajectory,
                  steer: SteerFn) -> tuple[TreeNode, Trajectory]:
    """Cheapest parent among the nearest node and nearby nodes that reach ``x_new``."""
    best, best_seg = nearest_node, sigma_nearest
    best_cost = nearest_node.cost_to_come + sigma_nearest.cost
    for nn in near_nodes:
        # segment costs are nonnegative, so this candidate cannot win
        if nn.id == nearest_node.id or nn.cost_to_come >= best_cost:
            continue
        try:
            sigma = steer(nn.state, x_new)
        except EmptyExtension:
            continue
        if not sigma.reached:
            continue
        c = nn.cost_to_come + sigma.cost
        if c < best_cost:
            best, best_seg, best_cost = nn, sigma, c
    return best, best_seg


def rewire(tree: Tree, new_node: TreeNode, near_nodes, steer: SteerFn) -> int:
    """Route nearby nodes through ``new_node`` when that is cheaper; returns the count."""
    rewired = 0
    for nn in near_nodes:
        if nn.parent is None or nn.id == new_node.id or nn.id == new_node.parent:
            continue
        if new_node.cost_to_come >= nn.cost_to_come:
            continue
        try:
            sigma = steer(new_node.state, nn.state)
        except EmptyExtension:
            continue
        if not sigma.reached:
            continue
        if new_node.cost_to_come + sigma.cost < nn.cost_to_come and not tree.is_ancestor(nn.id, new_node.id):
            tree.reparent(nn, new_node, sigma)
            rewired += 1
    return rewired


class SolutionSet:
    """Goal-region nodes of the tree; costs track later rewiring."""

    def __init__(self, tree: Tree):
        self.tree = tree
        self.goal_ids: list[int] = []

    def __len__(self):
        return len(self.goal_ids)

    def add(self, node: TreeNode):
        if not node.is_goal:
            node.is_goal = True
            self.goal_ids.append(node.id)

    def costs(self) -> list[float]:
        return [self.tree[i].cost_to_come for i in self.goal_ids]

    def entries(self) -> list[tuple[np.ndarray, float]]:
        return [(self.tree.path_states(i), self.tree[i].cost_to_come) for i in self.goal_ids]

    def workspace_entries(self) -> list[tuple[np.ndarray, float]]:
        m = self.tree.model
        return [(m.workspace(s), c) for s, c in self.entries()]

    def best(self) -> TreeNode | None:
        if not self.goal_ids:
            return None
        return min((self.tree[i] for i in self.goal_ids), key=lambda n: (n.cost_to_come, n.id))

    def best_cost(self) -> float:
        b = self.best()
        return math.inf if b is None else b.cost_to_come


def extend_to_goal(tree: Tree, x_new: TreeNode, config: PlannerConfig, steer: SteerFn,
                   solutions: SolutionSet) -> TreeNode | None:
    """Try to connect ``x_new`` to the goal ball; returns the goal node if one was recorded."""
    goal = np.asarray(config.goal)
    dist = float(np.linalg.norm(tree.model.workspace(x_new.state) - goal))
    if dist <= config.goal_radius:
        solutions.add(x_new)
        return x_new
    if dist > config.attempt_radius:
        return None
    target = tree.model.lift(goal, x_new.state)
    try:
        sigma = steer(x_new.state, target)
    except EmptyExtension:
        return None
    if np.linalg.norm(tree.model.workspace(sigma.end) - goal) > config.goal_radius:
        return None
    node = tree.add(sigma.end, x_new, sigma)
    solutions.add(node)
    return node


@dataclass
class PlanResult:
    tree: Tree
    best_path: np.ndarray | None
    best_node: TreeNode | None
    solutions: SolutionSet
    cost_series: list[float]
    first_solution_iteration: int | None
    iterations: int
    snapshots: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)


class Planner:
    """One planner instance: tree, sampler state and RNG (single-threaded)."""

    def __init__(self, x_init, deps: SteerDeps, config: PlannerConfig,
                 sampler_config: SamplerConfig | None = None):
        self.deps = deps
        self.config = config
        self.model = deps.model
        x_init = np.asarray(x_init, float)
        if x_init.shape != (self.model.n,):
            raise ValueError(f"x_init must have {self.model.n} entries")
        if min_barrier(deps.obstacle_rows, self.model.workspace(x_init)[None, :])[0] < 0:
            raise InfeasibleStart(f"initial state {x_init.tolist()} lies inside an obstacle")
        self.tree = Tree(x_init, self.model)
        self.rng = np.random.default_rng(config.seed)
        self.sampler = AdaptiveSampler(sampler_config or SamplerConfig(), self.rng, adaptive=config.adaptive)
        self.solutions = SolutionSet(self.tree)
        self.cost_series: list[float] = []
        self.first_solution_iteration: int | None = None
        self.iteration = 0
        self.counters = {"skipped_duplicate": 0, "empty_extension": 0, "rewired": 0}

    def steer(self, a, b) -> Trajectory:
        return lqr_cbf_steer(a, b, self.deps)

    def step(self):
        cfg, tree = self.config, self.tree
        self.sampler.iteration = self.iteration
        point = self.sampler.sample(self.solutions.workspace_entries, n_solutions=len(self.solutions))
        x_nearest = nearest(tree, point)
        if np.sum((tree.positions[x_nearest.id] - point) ** 2) < cfg.duplicate_tol ** 2:
            self.counters["skipped_duplicate"] += 1
            return
        x_samp = self.model.lift(point, x_nearest.state)
        try:
            sigma = self.steer(x_nearest.state, x_samp)
        except EmptyExtension:
            self.counters["empty_extension"] += 1
            return
        x_new = sigma.end
        p_new = self.model.workspace(x_new)
        if np.sum((tree.positions[nearest(tree, p_new).id] - p_new) ** 2) < cfg.duplicate_tol ** 2:
            self.counters["skipped_duplicate"] += 1
            return
        if cfg.rewire:
            near_nodes = near(tree, p_new, cfg)
            parent, segment = choose_parent(tree, x_new, near_nodes, x_nearest, sigma, self.steer)
        else:
            near_nodes, parent, segment = [], x_nearest, sigma
        node = tree.add(x_new, parent, segment)
        if cfg.rewire:
            self.counters["rewired"] += rewire(tree, node, near_nodes, self.steer)
        extend_to_goal(tree, node, cfg, self.steer, self.solutions)

    def run(self, iterations: int | None = None) -> PlanResult:
        n = self.config.iterations if iterations is None else iterations
        for _ in range(n):
            self.step()
            self.iteration += 1
            best = self.solutions.best_cost()
            if self.first_solution_iteration is None and best < math.inf:
                self.first_solution_iteration = self.iteration
            self.cost_series.append(best)
        return self.result()

    def result(self) -> PlanResult:
        best = self.solutions.best()
        return PlanResult(
            tree=self.tree,
            best_path=None if best is None else self.tree.path_states(best.id),
            best_node=best,
            solutions=self.solutions,
            cost_series=list(self.cost_series),
            first_solution_iteration=self.first_solution_iteration,
            iterations=self.iteration,
            snapshots=list(self.sampler.snapshots),
            stats={**self.counters, "steer_calls": self.deps.calls, "care_solves": self.deps.cache.solves,
                   "cache_hits": self.deps.cache.hits, "nodes": len(self.tree), "sdf_fits": self.sampler.fits},
        )


def plan(x_init, deps: SteerDeps, config: PlannerConfig,
         sampler_config: SamplerConfig | None = None) -> PlanResult:
    return Planner(x_init, deps, config, sampler_config).run()


def audit_states(states: np.ndarray, model: DynamicsModel, obstacle_rows: np.ndarray) -> int:
    """Number of states with some ``h_i < 0``."""
    if len(obstacle_rows) == 0 or len(states) == 0:
        return 0
    return int(np.sum(min_barrier(obstacle_rows, model.workspace(states)) < 0))


def audit_tree(tree: Tree, obstacle_rows: np.ndarray) -> int:
    return audit_states(tree.all_states(), tree.model, obstacle_rows)
