"""Line-delimited JSON exports.

Files written per run into ``out_dir`` (``<stem>`` defaults to
``<scenario>_<baseline>_seed<seed>``):

``summary.jsonl``
    one ``{"type": "seed", ...}`` record per seed, then one
    ``{"type": "aggregate", ...}`` record with mean/std per metric.
``<stem>_tree.jsonl``
    a ``header`` record (model, obstacles, dt) followed by one ``node``
    record per tree node: id, parent, cost, state, is_goal and the states of
    the segment that enters it.
``<stem>_path.jsonl``
    the best path, one ``{"k": i, "state": [...]}`` per state (empty file if
    no solution).
``<stem>_sdf.jsonl``
    one record per sampling-density fit with its kernels.
``<stem>_costs.jsonl``
    ``{"iteration": i, "best_cost": c}`` per iteration; ``null`` before the
    first solution.

Numbers are written with Python's shortest round-trip repr, keys sorted, so
re-exporting the same run gives byte-identical files.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..cbf import min_barrier
from ..dynamics import make_model
from ..planner import PlanResult
from .runner import RunReport


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _dumps(record) -> str:
    return json.dumps(_clean(record), sort_keys=True, allow_nan=False, separators=(",", ":"))


def write_jsonl(path, records) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(_dumps(rec))
            fh.write("\n")
    return path


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def summary_records(report: RunReport) -> list[dict]:
    head = {"scenario": report.scenario, "model": report.model, "baseline": report.baseline}
    recs = [{"type": "seed", **head, **r.__dict__} for r in report.rows]
    recs.append({"type": "aggregate", **head, "metrics": report.aggregate()})
    return recs


def tree_records(result: PlanResult, obstacle_rows) -> list[dict]:
    tree = result.tree
    recs = [{"type": "header", "model": tree.model.name, "nodes": len(tree),
             "obstacles": np.asarray(obstacle_rows).reshape(-1, 3).tolist()}]
    for i in range(len(tree)):
        node = tree[i]
        recs.append({
            "type": "node",
            "id": node.id,
            "parent": node.parent,
            "cost": node.cost_to_come,
            "state": node.state,
            "is_goal": node.is_goal,
            "segment": [] if node.segment is None else node.segment.states,
        })
    return recs


def export_results(report: RunReport, result: PlanResult | None, out_dir, obstacle_rows=(),
                   seed: int | None = None, stem: str | None = None) -> dict[str, Path]:
    """Write the summary and, if ``result`` is given, the per-run files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {"summary": write_jsonl(out / "summary.jsonl", summary_records(report))}
    if result is None:
        return written
    if stem is None:
        stem = f"{report.scenario}_{report.baseline}" + ("" if seed is None else f"_seed{seed}")
    written["tree"] = write_jsonl(out / f"{stem}_tree.jsonl", tree_records(result, obstacle_rows))
    path = [] if result.best_path is None else result.best_path
    written["path"] = write_jsonl(out / f"{stem}_path.jsonl", ({"k": k, "state": s} for k, s in enumerate(path)))
    written["sdf"] = write_jsonl(out / f"{stem}_sdf.jsonl", (s.to_record() for s in result.snapshots))
    written["costs"] = write_jsonl(out / f"{stem}_costs.jsonl",
                                   ({"iteration": i + 1, "best_cost": c} for i, c in enumerate(result.cost_series)))
    return written


def audit_tree_dump(path) -> dict:
    """Re-check every stored state of a tree dump against its obstacles."""
    recs = read_jsonl(path)
    if not recs or recs[0].get("type") != "header":
        raise ValueError(f"{path}: missing header record")
    header = recs[0]
    model = make_model(header["model"])
    obstacles = np.asarray(header["obstacles"], float).reshape(-1, 3)
    states = []
    for rec in recs[1:]:
        states.append(rec["state"])
        states.extend(rec["segment"])
    states = np.asarray(states, float).reshape(-1, model.n)
    h = min_barrier(obstacles, model.workspace(states)) if len(states) else np.array([])
    bad = int(np.sum(h < 0))
    return {"nodes": len(recs) - 1, "states": len(states), "violations": bad,
            "min_h": float(h.min()) if len(h) and np.isfinite(h.min()) else None}
