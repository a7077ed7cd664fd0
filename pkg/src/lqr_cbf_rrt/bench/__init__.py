"""Benchmark harness: scenario configs, seeded runs, exports and the CLI."""
from .config import BASELINES, Baseline, ConfigParseError, ScenarioConfig, ValidationError, load_config, parse_config
from .export import audit_tree_dump, export_results, read_jsonl, write_jsonl
from .runner import RunReport, SeedRow, build_deps, run_scenario, run_seed

__all__ = [
    "BASELINES", "Baseline", "ConfigParseError", "RunReport", "ScenarioConfig", "SeedRow", "ValidationError",
    "audit_tree_dump", "build_deps", "export_results", "load_config", "parse_config", "read_jsonl",
    "run_scenario", "run_seed", "write_jsonl",
]
