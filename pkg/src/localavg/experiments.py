"""Declarative experiment configs and the artifacts a run writes.

A run produces ``rounds.csv`` (one row per communication round) and
``run.json`` (the fully defaulted config, termination status, decay fits
and timing). The config echoed in ``run.json`` is enough to rerun it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .data import (describe_labels, load_libsvm, node_blocks, partition_even, scale_features,
                   synthetic_regression)
from .objectives import (DistributedProblem, beck_problem, least_squares_problem,
                         random_consistent_quadratic)
from .simulator import LocalUpdatePolicy, SimulationRun, StopRule, fit_gradient_decay, run
from .tradeoff import fit_decay_model

CSV_COLUMNS = ("round", "grad_sq", "loss", "dist_S", "decrement_lhs", "decrement_rhs", "cum_local_steps")
REFERENCE_COLUMN = "ref_C_over_n"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BeckConfig(_Strict):
    kind: Literal["beck"] = "beck"
    # the start point is drawn uniformly from this square
    start_box: tuple[float, float] = (-2.0, 2.0)

    @model_validator(mode="after")
    def _box(self):
        if not self.start_box[0] < self.start_box[1]:
            raise ValueError("start_box must be (low, high) with low < high")
        return self


class RegressionConfig(_Strict):
    kind: Literal["regression"] = "regression"
    path: str | None = None
    rows: int = Field(62, ge=1)
    features: int = Field(2000, ge=1)
    data_seed: int | None = None
    n_features: int | None = Field(None, ge=1)
    power: int = Field(1, ge=1, le=4)
    scale: bool = True
    shuffle_seed: int | None = None
    residual_bound: float | None = Field(None, gt=0)


class QuadraticConfig(_Strict):
    kind: Literal["custom-quadratic"] = "custom-quadratic"
    dimension: int = Field(10, ge=2)
    rows_per_node: list[int] | None = None


class PolicyConfig(_Strict):
    steps: int | None = Field(None, ge=1)
    grad_tol: float | None = Field(None, gt=0)
    max_steps: int = Field(1_000_000, ge=1)
    step_size: float | None = Field(None, gt=0)

    @model_validator(mode="after")
    def _one_mode(self):
        if self.steps is None and self.grad_tol is None:
            self.steps = 10
        if self.steps is not None and self.grad_tol is not None:
            raise ValueError("set either steps or grad_tol, not both")
        return self


class StopConfig(_Strict):
    max_rounds: int = Field(1000, ge=0)
    epsilon: float | None = Field(1e-10, gt=0)


class OutputConfig(_Strict):
    directory: str = "runs/latest"
    reference_anchor: int | None = Field(None, ge=1)
    fit_window: tuple[int, int] | None = None


ProblemConfig = Annotated[Union[BeckConfig, RegressionConfig, QuadraticConfig], Field(discriminator="kind")]


class ExperimentConfig(_Strict):
    problem: ProblemConfig
    nodes: int = Field(2, ge=1)
    policy: PolicyConfig | list[PolicyConfig] = Field(default_factory=PolicyConfig)
    stop: StopConfig = Field(default_factory=StopConfig)
    outputs: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = 0
    threads: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _consistent(self):
        if isinstance(self.problem, BeckConfig) and self.nodes != 2:
            raise ValueError("the beck problem has exactly 2 nodes")
        if isinstance(self.policy, list) and len(self.policy) != self.nodes:
            raise ValueError(f"policy list has {len(self.policy)} entries for {self.nodes} nodes")
        p = self.problem
        if isinstance(p, RegressionConfig) and p.path is None and self.nodes > p.rows:
            raise ValueError("more nodes than rows")
        if isinstance(p, QuadraticConfig) and p.rows_per_node is not None and len(p.rows_per_node) != self.nodes:
            raise ValueError("rows_per_node needs one entry per node")
        return self

    def node_policies(self) -> list:
        return list(self.policy) if isinstance(self.policy, list) else [self.policy] * self.nodes

    def echo(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        blob = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.model_validate(json.load(fh))


def build_problem(config: ExperimentConfig) -> tuple:
    """``(problem, x0, metadata)`` for a validated config."""
    p = config.problem
    rng = np.random.default_rng(config.seed)
    if isinstance(p, BeckConfig):
        x0 = rng.uniform(p.start_box[0], p.start_box[1], size=2)
        return beck_problem(), x0, {"start_box": list(p.start_box), "x0": x0.tolist()}

    if isinstance(p, QuadraticConfig):
        problem = random_consistent_quadratic(config.nodes, p.dimension, rng, p.rows_per_node)
        x0 = rng.standard_normal(p.dimension)
        rows = [o.n_rows for o in problem.oracles]
        return problem, x0, {"rows_per_node": rows, "x0": x0.tolist()}

    meta = {"power": p.power}
    if p.path is not None:
        ds = load_libsvm(p.path, p.n_features)
        meta["source"] = str(p.path)
        if p.scale:
            ds = scale_features(ds)
        meta["scaled_to_unit_box"] = p.scale
        planted = None
    else:
        data_seed = config.seed if p.data_seed is None else p.data_seed
        ds, planted = synthetic_regression(p.rows, p.features, data_seed)
        meta["source"] = f"synthetic(rows={p.rows}, features={p.features}, seed={data_seed})"
        # generator output is already min-max scaled per feature
        meta["scaled_to_unit_box"] = True
    part = partition_even(ds, config.nodes, p.shuffle_seed)
    blocks = node_blocks(ds, part, p.n_features)
    problem = least_squares_problem(blocks, p.power, planted, p.residual_bound)
    meta.update(rows=ds.row_count, features=problem.dimension, partition_sizes=list(part.sizes),
                labels=describe_labels(ds), solution_set_known=problem.solution_set is not None)
    return problem, np.zeros(problem.dimension), meta


def make_policies(config: ExperimentConfig, problem: DistributedProblem) -> list:
    out = []
    for cfg, oracle in zip(config.node_policies(), problem.oracles):
        eta = cfg.step_size if cfg.step_size is not None else 1.0 / oracle.smoothness()
        out.append(LocalUpdatePolicy(step_size=eta, steps=cfg.steps, grad_tol=cfg.grad_tol,
                                     max_steps=cfg.max_steps))
    return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    run: SimulationRun
    metadata: dict
    wall_time: float


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    problem, x0, meta = build_problem(config)
    policies = make_policies(config, problem)
    meta["step_sizes"] = [pol.step_size for pol in policies]
    stop = StopRule(max_rounds=config.stop.max_rounds, epsilon=config.stop.epsilon)
    t0 = time.perf_counter()
    result = run(problem.oracles, x0, policies, stop, problem.solution_set, threads=config.threads,
                 config_digest=config.digest(), seed=config.seed)
    return ExperimentResult(config, result, meta, time.perf_counter() - t0)


def _cell(v) -> str:
    return "" if v is None else repr(float(v)) if not isinstance(v, int) else str(v)


def reference_curve(grad_sq, anchor: int) -> list:
    """``C/n`` through the gradient residual at round ``anchor``; empty at ``n = 0``."""
    C = float(grad_sq[anchor]) * anchor
    return [None] + [C / n for n in range(1, len(grad_sq))]


def write_rounds_csv(sim: SimulationRun, path: Path, reference_anchor: int | None = None) -> None:
    columns = list(CSV_COLUMNS)
    ref = None
    if reference_anchor is not None and reference_anchor < len(sim.rounds):
        columns.append(REFERENCE_COLUMN)
        ref = reference_curve(sim.grad_sq, reference_anchor)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for rec in sim.rounds:
            row = [str(rec.round_index), _cell(rec.global_gradient_sq), _cell(rec.global_loss),
                   _cell(rec.distance_to_S), _cell(rec.decrement_lhs), _cell(rec.decrement_rhs),
                   str(rec.cumulative_local_steps)]
            if ref is not None:
                row.append(_cell(ref[rec.round_index]))
            w.writerow(row)


def read_rounds_csv(path: str | Path) -> dict:
    """Columns of a ``rounds.csv`` as lists; empty cells become ``None``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = {name: [] for name in reader.fieldnames}
        for row in reader:
            for k, v in row.items():
                cols[k].append(None if v == "" else float(v))
    return cols


def _fits(sim: SimulationRun, window) -> dict:
    out = {}
    gs = sim.grad_sq
    try:
        out["gradient_decay"] = fit_gradient_decay(gs, window).as_dict()
    except ValueError as exc:
        out["gradient_decay"] = {"error": str(exc)}
    try:
        out["decay_model"] = fit_decay_model(gs).as_dict()
    except ValueError as exc:
        out["decay_model"] = {"error": str(exc)}
    return out


def write_artifacts(result: ExperimentResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = result.run
    cfg = result.config
    write_rounds_csv(sim, out / "rounds.csv", cfg.outputs.reference_anchor)
    last = sim.rounds[-1]
    eps = cfg.stop.epsilon
    summary = {
        "config": cfg.echo(),
        "config_digest": sim.config_digest,
        "seed": cfg.seed,
        "termination": sim.termination.value,
        "rounds_recorded": len(sim.rounds),
        "final": {"round": last.round_index, "grad_sq": last.global_gradient_sq,
                  "loss": last.global_loss, "dist_S": last.distance_to_S},
        "rounds_to_epsilon": sim.rounds_to(eps) if eps is not None else None,
        "total_local_steps": last.cumulative_local_steps,
        "smoothness": list(sim.smoothness),
        "alphas": list(sim.alphas),
        "capped_rounds": [r.round_index for r in sim.rounds if r.capped_nodes],
        "fits": _fits(sim, cfg.outputs.fit_window),
        "problem": result.metadata,
        "rounds_file": "rounds.csv",
        "wall_time_s": result.wall_time,
    }
    path = out / "run.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return path
