"""Experiment orchestration: replication grids, metrics and reports.

A single experiment sweeps an (n, seed) grid; each cell simulates a dataset,
fits the reward block, evaluates a fixed policy pair, runs the pessimistic
learner and scores everything against the exact oracle.  Results land in
plain CSV files: ``report.csv`` (one row per metric per cell), ``summary.csv``
(per-n medians and interquartile ranges) and ``manifest.json`` (config hash
and code version).  ``report.csv`` and ``summary.csv`` are bytewise
deterministic given the config; wall-clock timings go to a separate
``timings.csv`` precisely because they are not.

All cell-level randomness derives from the per-cell seed alone, so cells can
run in any order or in parallel (``CONFGAME_THREADS``) without changing a
single emitted byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import ConfgameError
from .fixtures import FIXTURES, get_fixture
from .game import (
    BehaviorPolicyPair,
    GameSpec,
    constant_policy_pair,
    simulate_dataset,
    stationary_deterministic_pairs,
)
from .gameio import read_spec
from .learner import EtaConfig, LearnerEngine, learn_policy_pair, truth_covered
from .moments import MomentData, assemble_system, estimate_nuisances
from .ope import evaluate_policy
from . import oracle
from .sieve import build_basis
from .smd import fit_smd

METRICS = ("rmse_theta", "coverage", "j_error", "gap", "pess_value")


@dataclass
class ExperimentConfig:
    """Everything a benchmark run depends on; hashable and JSON-round-trip."""

    fixture: str = "t1"
    spec_path: Optional[str] = None
    n_grid: tuple = (1000,)
    seeds: tuple = (0,)
    basis: str = "saturated"
    alpha: float = 2.0
    varsigma: float = 0.0
    d: int = 1
    c_eta: float = 2.0
    k_members: int = 16
    mode: str = "oracle-nuisance"
    cross_fit: bool = False
    run_learner: bool = True
    max_candidates: int = 4096
    out_dir: str = "results"

    def __post_init__(self):
        self.n_grid = tuple(int(n) for n in self.n_grid)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ValueError("need at least one seed")
        if any(b >= a for a, b in zip(self.n_grid[1:], self.n_grid)):
            raise ValueError("n grid must be strictly increasing")
        if self.spec_path is None and self.fixture not in FIXTURES:
            raise ValueError(f"unknown fixture {self.fixture!r}")
        if self.mode not in ("oracle-nuisance", "joint"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def spec(self) -> GameSpec:
        if self.spec_path is not None:
            return read_spec(self.spec_path)
        return get_fixture(self.fixture)

    def eta(self) -> EtaConfig:
        return EtaConfig(
            alpha=self.alpha,
            varsigma=self.varsigma,
            d=self.d,
            c_eta=self.c_eta,
            k_members=self.k_members,
        )

    def canonical_json(self) -> str:
        payload = asdict(self)
        payload.pop("out_dir", None)  # output location is not experiment content
        return json.dumps(payload, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        raw.pop("experiment_id", None)
        for key in ("n_grid", "seeds"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


@dataclass
class _CellResult:
    n: int
    seed: int
    rows: list = field(default_factory=list)
    failed: bool = False
    error: str = ""
    runtime_ms: float = 0.0


def _fmt_value(v: float) -> str:
    if np.isnan(v):
        return "nan"
    return f"{v:.17g}"


def _run_cell(config, spec, behavior, basis, eta, targets, n, seed) -> _CellResult:
    t0 = time.perf_counter()
    out = _CellResult(n=n, seed=seed)
    try:
        ds = simulate_dataset(spec, behavior, n=n, seed=seed)
        data = MomentData(
            y=ds.r_a[:, 0], s=ds.s[:, 0], u=ds.u[:, 0], act=ds.a[:, 0], iv=ds.b_init
        )
        nuis = estimate_nuisances(data, basis)
        system = assemble_system(
            data, nuis, mode=config.mode, n_states=spec.n_states, n_u=spec.n_u
        )
        fit = fit_smd(system, basis)
        truth = targets["alice_truth"]
        rmse = float(np.abs(fit.coef_table() - truth).max())
        out.rows.append(("rmse_theta", rmse))

        engine = LearnerEngine(ds, basis, eta)
        covered = truth_covered(
            engine, spec, targets["eval_policy"], targets["exq"], targets["true_blocks"]
        )
        out.rows.append(("coverage", float(covered)))

        res = evaluate_policy(ds, targets["eval_policy"], basis, mode=config.mode, cross_fit=config.cross_fit)
        out.rows.append(("j_error", abs(res.j_total - targets["j_eval"])))

        if config.run_learner:
            best, pv = learn_policy_pair(ds, targets["pairs"], basis, eta, engine=engine)
            ja, jb = oracle.exact_policy_value(spec, best)
            out.rows.append(("gap", max(targets["j_star"] - ja - jb, 0.0)))
            out.rows.append(("pess_value", pv.value))
    except (ConfgameError, ValueError, np.linalg.LinAlgError) as exc:
        out.failed = True
        out.error = f"{type(exc).__name__}: {exc}"
        done = {name for name, _ in out.rows}
        for m in METRICS:
            if m not in done:
                out.rows.append((m, float("nan")))
    out.runtime_ms = (time.perf_counter() - t0) * 1000.0
    return out


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every (n, seed) cell and write the report files.

    A failing cell contributes NaN rows flagged ``failed`` without stopping
    the others.  Returns the paths of the emitted files.
    """
    spec = config.spec()
    behavior = BehaviorPolicyPair.from_spec(spec)
    basis = build_basis(config.basis, spec.n_states, spec.n_u, state_values=spec.state_values)
    eta = config.eta()
    eval_policy = constant_policy_pair(spec, 1.0, 0.5, 0.5)
    exq = oracle.exact_q(spec, eval_policy)
    targets = {
        "eval_policy": eval_policy,
        "exq": exq,
        "true_blocks": oracle.exact_recursion_blocks(spec, eval_policy, exq),
        "j_eval": exq.j_alice + exq.j_bob,
        "alice_truth": np.stack(
            [
                oracle.true_coefficients(spec)["alice_reward"].theta_a,
                oracle.true_coefficients(spec)["alice_reward"].theta_z,
                oracle.true_coefficients(spec)["alice_reward"].theta_az,
            ],
            axis=-1,
        ),
    }
    if config.run_learner:
        pairs = stationary_deterministic_pairs(spec, cap=config.max_candidates)
        _, j_star = oracle.exact_optimal_pair(spec, pairs)
        targets["pairs"] = pairs
        targets["j_star"] = j_star

    cells = [(n, seed) for n in config.n_grid for seed in config.seeds]
    workers = max(int(os.environ.get("CONFGAME_THREADS", "1")), 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    lambda c: _run_cell(config, spec, behavior, basis, eta, targets, *c),
                    cells,
                )
            )
    else:
        results = [
            _run_cell(config, spec, behavior, basis, eta, targets, n, seed)
            for n, seed in cells
        ]
    results.sort(key=lambda r: (r.n, r.seed))

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    exp_id = config.config_hash()

    report_lines = ["experiment,n,seed,metric,value,status"]
    for r in results:
        status = "failed" if r.failed else "ok"
        for metric, value in sorted(r.rows):
            report_lines.append(
                f"{exp_id},{r.n},{r.seed},{metric},{_fmt_value(value)},{status}"
            )
    report_path = out_dir / "report.csv"
    report_path.write_text("\n".join(report_lines) + "\n", encoding="utf-8")

    summary_lines = ["experiment,n,metric,median,iqr,n_ok"]
    for n in config.n_grid:
        for metric in METRICS:
            vals = [
                v
                for r in results
                if r.n == n and not r.failed
                for m, v in r.rows
                if m == metric and not np.isnan(v)
            ]
            if not vals:
                continue
            med = float(np.median(vals))
            iqr = float(np.quantile(vals, 0.75) - np.quantile(vals, 0.25))
            summary_lines.append(
                f"{exp_id},{n},{metric},{_fmt_value(med)},{_fmt_value(iqr)},{len(vals)}"
            )
    summary_path = out_dir / "summary.csv"
    summary_path.write_text("\n".join(summary_lines) + "\n", encoding="utf-8")

    manifest = {
        "experiment_id": exp_id,
        "config": json.loads(config.canonical_json()),
        "package_version": __version__,
        "numpy_version": np.__version__,
        "failures": [
            {"n": r.n, "seed": r.seed, "error": r.error} for r in results if r.failed
        ],
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    timing_lines = ["n,seed,runtime_ms"]
    for r in results:
        timing_lines.append(f"{r.n},{r.seed},{r.runtime_ms:.3f}")
    timings_path = out_dir / "timings.csv"
    timings_path.write_text("\n".join(timing_lines) + "\n", encoding="utf-8")

    return {
        "report": str(report_path),
        "summary": str(summary_path),
        "manifest": str(manifest_path),
        "timings": str(timings_path),
    }
