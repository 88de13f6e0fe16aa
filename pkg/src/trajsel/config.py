"""Scenario configuration: a flat ``key = <JSON value>`` text file with a schema version."""

import json
import os
from dataclasses import dataclass, fields

__all__ = ["CONFIG_SCHEMA_VERSION", "ConfigError", "ScenarioConfig", "load_config", "data_root"]

CONFIG_SCHEMA_VERSION = 1
MODES = ("ELA", "TS", "ELA+TS")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists ``(field, message)`` pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.problems))


@dataclass(frozen=True)
class ScenarioConfig:
    label: str = "smoke"
    dimensions: tuple = (5,)
    a1_budget_per_dim: int = 30
    a2_budgets_per_dim: tuple = (20, 70, 170)
    functions: tuple = tuple(range(1, 25))
    n_instances: int = 2
    n_runs: int = 5
    seed_base: int = 0
    modes: tuple = MODES
    suites: tuple = ("train",)
    transfer_functions: tuple = ()
    transfer_instances: int = 1
    grid: str = "full"
    repeats: int = 5
    ts_threshold: float = 2e-3
    output_dir: str = "trajsel-out"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self):
        out = []

        def need(cond, key, msg):
            if not cond:
                out.append((key, msg))

        def ints(v):
            return isinstance(v, tuple) and all(isinstance(x, int) and not isinstance(x, bool) for x in v)

        need(isinstance(self.label, str) and self.label and "/" not in self.label, "label", "non-empty string without '/'")
        need(ints(self.dimensions) and self.dimensions and all(2 <= d <= 40 for d in self.dimensions),
             "dimensions", "non-empty list of integers in [2, 40]")
        need(isinstance(self.a1_budget_per_dim, int) and self.a1_budget_per_dim > 0, "a1_budget_per_dim", "positive integer")
        need(ints(self.a2_budgets_per_dim) and self.a2_budgets_per_dim and all(b > 0 for b in self.a2_budgets_per_dim)
             and len(set(self.a2_budgets_per_dim)) == len(self.a2_budgets_per_dim),
             "a2_budgets_per_dim", "non-empty list of distinct positive integers")
        need(ints(self.functions) and self.functions and all(1 <= f <= 24 for f in self.functions),
             "functions", "non-empty list of function ids in [1, 24]")
        need(isinstance(self.n_instances, int) and self.n_instances >= 1, "n_instances", "positive integer")
        need(isinstance(self.n_runs, int) and self.n_runs >= 1, "n_runs", "positive integer")
        need(isinstance(self.seed_base, int), "seed_base", "integer")
        need(isinstance(self.modes, tuple) and self.modes and all(m in MODES for m in self.modes)
             and len(set(self.modes)) == len(self.modes), "modes", f"non-empty subset of {list(MODES)}")
        need(isinstance(self.suites, tuple) and self.suites and set(self.suites) <= {"train", "transfer"},
             "suites", "non-empty subset of ['train', 'transfer']")
        if "transfer" in self.suites:
            from .bench_suite import TRANSFER_NAMES

            need(isinstance(self.transfer_functions, tuple) and self.transfer_functions
                 and set(self.transfer_functions) <= set(TRANSFER_NAMES),
                 "transfer_functions", f"non-empty subset of {list(TRANSFER_NAMES)}")
        need(isinstance(self.transfer_instances, int) and self.transfer_instances >= 1, "transfer_instances", "positive integer")
        need(self.grid in ("full", "reduced"), "grid", "'full' or 'reduced'")
        need(isinstance(self.repeats, int) and self.repeats >= 1, "repeats", "positive integer")
        need(isinstance(self.ts_threshold, (int, float)) and self.ts_threshold >= 0, "ts_threshold", "non-negative number")
        need(isinstance(self.output_dir, str) and self.output_dir, "output_dir", "non-empty path")
        return out

    def a1_budget(self, dim):
        return self.a1_budget_per_dim * dim

    def a2_budgets(self, dim):
        return [b * dim for b in self.a2_budgets_per_dim]

    def scenario(self, dim):
        return f"{self.label}-{dim}d"

    # -- file format ----------------------------------------------------------

    def to_text(self):
        lines = ["# trajsel scenario configuration", f"schema_version = {CONFIG_SCHEMA_VERSION}"]
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {json.dumps(list(v) if isinstance(v, tuple) else v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        known = {f.name for f in fields(cls)}
        values, problems, version = {}, [], None
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                problems.append((f"line {n}", "expected 'key = value'"))
                continue
            key, val = (s.strip() for s in line.split("=", 1))
            try:
                v = json.loads(val)
            except json.JSONDecodeError as exc:
                problems.append((key, f"value is not valid JSON ({exc.msg})"))
                continue
            if key == "schema_version":
                version = v
            elif key not in known:
                problems.append((key, "unknown key"))
            elif key in values:
                problems.append((key, "given twice"))
            else:
                values[key] = v
        if version != CONFIG_SCHEMA_VERSION:
            problems.append(("schema_version", f"expected {CONFIG_SCHEMA_VERSION}, got {version}"))
        if problems:
            raise ConfigError(problems)
        return cls(**values)


def load_config(path):
    with open(path) as fh:
        return ScenarioConfig.from_text(fh.read())


def data_root(cfg):
    """Output root; ``TRAJSEL_DATA_DIR`` overrides the configured directory."""
    return os.environ.get("TRAJSEL_DATA_DIR") or cfg.output_dir
