"""``lqr-cbf-rrt`` command line: run, audit, compare."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..cbf import obstacle_array
from .config import BASELINES, ConfigParseError, ValidationError, load_config
from .export import audit_tree_dump, export_results, read_jsonl
from .runner import RunReport, SeedRow, run_scenario


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None


def _fmt(v, digits=2):
    return "-" if v is None else f"{v:.{digits}f}"


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    config = config.with_overrides(iterations=args.iterations, seeds=args.seeds)
    names = list(BASELINES) if args.baseline == "all" else [args.baseline]
    out = Path(args.out)
    rows = obstacle_array(config.obstacles)
    status = 0
    for name in names:
        keep = not args.no_dumps
        res = run_scenario(config, name, jobs=args.jobs, keep_results=keep)
        report, results = res if keep else (res, {})
        target = out / name if len(names) > 1 else out
        export_results(report, None, target)
        for seed, result in results.items():
            if result is not None:
                export_results(report, result, target, rows, seed=seed)
        for r in report.rows:
            if r.error:
                status = 1
                print(f"{name} seed {r.seed}: ERROR {r.error}")
            else:
                print(f"{name} seed {r.seed}: time {r.wall_time:.3f}s first {r.first_solution_iteration} "
                      f"cost {_fmt(r.best_cost, 4)} length {_fmt(r.path_length, 4)} violations {r.violations}")
                if r.violations:
                    status = 1
        agg = report.aggregate()["wall_time"]
        print(f"{name}: mean time {_fmt(agg['mean'], 3)}s std {_fmt(agg['std'], 3)}s -> {target}")
    return status


def cmd_audit(args) -> int:
    total = 0
    for path in args.trees:
        res = audit_tree_dump(path)
        total += res["violations"]
        print(f"{path}: {res['nodes']} nodes, {res['states']} states, {res['violations']} violations, "
              f"min h {_fmt(res['min_h'], 6)}")
    return 1 if total else 0


def load_report(path) -> RunReport:
    recs = [r for r in read_jsonl(path) if r.get("type") == "seed"]
    if not recs:
        raise ValueError(f"{path}: no seed records")
    head = recs[0]
    fields = SeedRow.__dataclass_fields__
    rows = [SeedRow(**{k: v for k, v in r.items() if k in fields}) for r in recs]
    return RunReport(head["scenario"], head["model"], head["baseline"], rows)


def compare_table(reports: list[RunReport]) -> str:
    seeds = sorted({r.seed for rep in reports for r in rep.rows})
    header = ["Baseline"] + [f"Seed {s}" for s in seeds] + ["Mean", "Std"]
    lines = [" | ".join(header)]
    for rep in reports:
        by_seed = {r.seed: r for r in rep.rows}
        cells = [rep.baseline]
        for s in seeds:
            r = by_seed.get(s)
            cells.append("-" if r is None or not r.ok else f"{r.wall_time:.2f}")
        cells += [_fmt(rep.mean("wall_time")), _fmt(rep.std("wall_time"))]
        lines.append(" | ".join(cells))
    return "\n".join(lines)


def cmd_compare(args) -> int:
    reports = [load_report(p) for p in args.summaries]
    print(compare_table(reports))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lqr-cbf-rrt", description="Safe kinodynamic RRT* benchmark harness")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="plan a scenario over seeds and export results")
    run.add_argument("--config", required=True, help="YAML file or bundled name (paper_env, paper_env_unicycle, obstacle_free)")
    run.add_argument("--baseline", default="ours", choices=[*BASELINES, "all"])
    run.add_argument("--seeds", type=_seeds, default=None, help="comma-separated, e.g. 0,20,42,45,100")
    run.add_argument("--iterations", type=int, default=None)
    run.add_argument("--out", default="results")
    run.add_argument("--jobs", type=int, default=1, help="parallel seeds (implies --no-dumps)")
    run.add_argument("--no-dumps", action="store_true", help="write only the summary")
    run.set_defaults(func=cmd_run)

    audit = sub.add_parser("audit", help="re-check tree dumps for barrier violations")
    audit.add_argument("trees", nargs="+")
    audit.set_defaults(func=cmd_audit)

    cmp_ = sub.add_parser("compare", help="Table-I style wall-time summary of several runs")
    cmp_.add_argument("summaries", nargs="+")
    cmp_.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) > 1:
        args.no_dumps = True
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
