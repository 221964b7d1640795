"""Experiment harness behind the command line: instance generation, method
comparison, policy improvement runs and constrained-norm micro-benchmarks.

All randomness flows from ``make_rng``, a Philox counter-based generator, so a
seed reproduces bit-identical numbers on any platform.
"""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass

import numpy as np

from .gradient import rpg_run
from .mdp import Mdp, random_mdp
from .robust import (UncertaintySpec, baseline_local_bk, baseline_random_kernel, baseline_random_rank_one,
                     binary_search_evaluate)
from .spectral import local_refine, random_search, spectral_solve

METHODS = ("binary_search", "local_bk", "rank_one_sampling", "kernel_sampling")
MODES = ("equal_budget", "equal_time")
TIMING_COLUMNS = {"wall_ms", "spectral_ms", "refined_ms", "random_ms"}


def make_rng(seed: int, stream: int | None = None) -> np.random.Generator:
    """Philox generator for ``seed``; ``stream`` picks an independent substream."""
    ss = np.random.SeedSequence(seed)
    if stream is not None:
        ss = ss.spawn(stream + 1)[stream]
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class ExperimentConfig:
    seed: int = 42
    states: int = 20
    actions: int = 8
    gamma: float = 0.9
    beta: float = 0.01
    p: float = 2.0
    methods: tuple = METHODS
    samples: int = 10_000
    budget_ms: float | None = None
    mode: str = "equal_budget"
    restarts: int = 5
    tol: float = 1e-6
    iters: int = 100
    step0: float | None = None
    sizes: tuple = (50, 200, 500)
    trials: int = 1
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        if not self.methods:
            raise ValueError("methods must be nonempty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if self.samples <= 0 or self.restarts <= 0:
            raise ValueError("sample budgets must be positive")
        if self.budget_ms is not None and self.budget_ms <= 0:
            raise ValueError("budget-ms must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")

    @property
    def spec(self) -> UncertaintySpec:
        return UncertaintySpec(p=self.p, beta=self.beta)


def cmd_gen(config: ExperimentConfig) -> Mdp:
    """Random nominal MDP: positive normalized kernel rows, rewards in [0,1], uniform mu."""
    return random_mdp(config.states, config.actions, config.gamma, make_rng(config.seed),
                      name=f"random-S{config.states}-A{config.actions}-seed{config.seed}")


def cmd_eval(m: Mdp, pi, config: ExperimentConfig) -> list[dict]:
    """Run each requested method; a failing method yields a row with ``error`` set.

    In ``equal_time`` mode the samplers stop at ``budget_ms`` or, when unset,
    at the bisection's measured wall time.
    """
    spec = config.spec
    rows = []
    time_budget = None
    num_samples, restarts = config.samples, config.restarts
    if config.mode == "equal_time":
        num_samples, restarts = 10 ** 9, 10 ** 9
        if config.budget_ms is not None:
            time_budget = config.budget_ms / 1e3

    for i, method in enumerate(config.methods):
        rng = make_rng(config.seed, stream=i + 1)
        t0 = time.perf_counter()
        row = {"method": method, "penalty": np.nan, "robust_return": np.nan, "wall_ms": np.nan,
               "iterations": 0, "samples": 0, "skipped": 0, "error": ""}
        try:
            if method == "binary_search":
                cert = binary_search_evaluate(m, pi, spec, tol=config.tol, rng=rng)
                row.update(penalty=cert.penalty, robust_return=cert.robust_return, iterations=cert.iterations)
            else:
                if time_budget is None and config.mode == "equal_time":
                    anchor = binary_search_evaluate(m, pi, spec, tol=config.tol, rng=make_rng(config.seed, 0))
                    time_budget = sum(anchor.timings.values()) / 1e3
                    t0 = time.perf_counter()
                if method == "local_bk":
                    res = baseline_local_bk(m, pi, spec, rng, restarts=restarts, time_budget=time_budget)
                elif method == "rank_one_sampling":
                    res = baseline_random_rank_one(m, pi, spec, num_samples, rng, time_budget=time_budget)
                else:
                    res = baseline_random_kernel(m, pi, spec, num_samples, rng, time_budget=time_budget)
                row.update(penalty=res.penalty, robust_return=res.robust_return, samples=res.evaluated,
                           skipped=res.skipped)
        except (ValueError, RuntimeError, ArithmeticError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        row["wall_ms"] = 1e3 * (time.perf_counter() - t0)
        rows.append(row)
    return rows


def cmd_improve(m: Mdp, pi0, config: ExperimentConfig):
    step = None
    if config.step0 is not None:
        a0 = config.step0
        step = lambda n: a0 / np.sqrt(n)  # noqa: E731
    return rpg_run(m, config.spec, pi0, max_iters=config.iters, step_schedule=step, tol0=config.tol)


def cmd_normbench(config: ExperimentConfig) -> list[dict]:
    """Spectral vs refined vs random search on seeded Gaussian square matrices."""
    rows = []
    for n in config.sizes:
        for trial in range(config.trials):
            rng = make_rng(config.seed + trial, stream=n)
            A = rng.standard_normal((n, n))
            t0 = time.perf_counter()
            sol = spectral_solve(A, 1.0)
            t1 = time.perf_counter()
            ref = local_refine(A, 1.0, sol.x)
            t2 = time.perf_counter()
            rs, _ = random_search(A, 1.0, config.samples, rng)
            t3 = time.perf_counter()
            rows.append({"n": n, "trial": trial, "spectral_value": sol.value, "spectral_ms": 1e3 * (t1 - t0),
                         "refined_value": ref.value, "refined_ms": 1e3 * (t2 - t0),
                         "random_value": rs, "random_ms": 1e3 * (t3 - t2)})
    return rows


def _plain(x):
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def format_rows(rows: list[dict], fmt: str = "csv") -> str:
    if fmt == "json":
        return json.dumps([{k: _plain(v) for k, v in r.items()} for r in rows], indent=1) + "\n"
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})
    return buf.getvalue()


def parse_rows(text: str, fmt: str = "csv") -> list[dict]:
    """Inverse of ``format_rows``; numeric cells come back as int or float."""
    if fmt == "json":
        return json.loads(text)

    def num(cell):
        for cast in (int, float):
            try:
                return cast(cell)
            except ValueError:
                pass
        return cell

    return [{k: num(v) for k, v in r.items()} for r in csv.DictReader(io.StringIO(text))]
