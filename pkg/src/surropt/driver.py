"""Iterative surrogate-retrain / optimize / query loop with stopping criteria.

Each iteration trains a fresh surrogate (new weight initialization) on all
data collected so far, descends the objective from many Sobol starts, sends
the single best candidate to the real simulator, and grows the dataset with
the result. The loop stops when the goal loss is reached, when the best loss
has stopped improving, or when the iteration budget runs out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .inputopt import MultiStartConfig, optimize_inputs
from .objective import ObjectiveSpec, loss_physical
from .qmc import SobolSequence
from .simbench import Simulator, SimulatorError
from .surrogate import Standardizer, TrainConfig, train

STOP_GOAL = "goal"
STOP_CONVERGED = "converged"
STOP_MAX_ITERATIONS = "max-iterations"

MAX_CONSECUTIVE_QUERY_FAILURES = 3


@dataclass
class StoppingSpec:
    """Stopping criteria, checked each iteration in precedence order.

    1. goal: the latest true loss is at or below ``goal_loss`` (disabled when
       None).
    2. converged: the best loss improved by less than ``convergence_epsilon``
       over the last ``convergence_window`` intelligent queries.
    3. max-iterations: the iteration budget is exhausted.
    """

    goal_loss: float | None = None
    convergence_window: int = 5
    convergence_epsilon: float = 1e-3
    max_iterations: int = 50

    def __post_init__(self):
        if self.convergence_window < 1:
            raise ValueError("convergence_window must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")


def check_stopping(history: list[float], spec: StoppingSpec) -> str | None:
    """Stop decision for an ordered true-loss history; None means continue."""
    if history and spec.goal_loss is not None and history[-1] <= spec.goal_loss:
        return STOP_GOAL
    k = spec.convergence_window
    if len(history) > k:
        improvement = min(history[:-k]) - min(history[-k:])
        if improvement < spec.convergence_epsilon:
            return STOP_CONVERGED
    if len(history) >= spec.max_iterations:
        return STOP_MAX_ITERATIONS
    return None


@dataclass
class IterationRecord:
    iteration: int
    x_best: np.ndarray | None
    y_best: np.ndarray | None
    true_loss: float | None
    surrogate_loss_at_x_best: float | None
    train_summary: dict
    failed: bool = False
    stop_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "type": "iteration",
            "iteration": self.iteration,
            "x_best": None if self.x_best is None else [float(v) for v in self.x_best],
            "y_best": None if self.y_best is None else [float(v) for v in self.y_best],
            "true_loss": self.true_loss,
            "surrogate_loss_at_x_best": self.surrogate_loss_at_x_best,
            "train": self.train_summary,
            "failed": self.failed,
            "stop_reason": self.stop_reason,
        }


@dataclass
class RunLog:
    seed: int
    config_snapshot: dict
    initial_dataset_size: int
    initial_queries_performed: int
    iterations: list[IterationRecord] = field(default_factory=list)

    def true_losses(self) -> list[float]:
        return [r.true_loss for r in self.iterations if not r.failed]

    def save_jsonl(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            header = {
                "type": "run_header",
                "seed": self.seed,
                "config": self.config_snapshot,
                "initial_dataset_size": self.initial_dataset_size,
                "initial_queries_performed": self.initial_queries_performed,
            }
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for rec in self.iterations:
                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


@dataclass
class RunResult:
    x_best: np.ndarray
    y_best: np.ndarray
    true_loss: float  # scored with the final standardizer
    initial_best_loss: float  # best initial-dataset record, same scale
    stop_reason: str
    iterations_completed: int
    log: RunLog
    dataset: Dataset
    final_model: object | None = None
    final_opt_result: object | None = None  # last iteration's OptResult (paths live here)


def collect_initial(
    sim: Simulator, count: int, seq: SobolSequence, max_failure_fraction: float = 0.1
) -> Dataset:
    """Query the simulator at ``count`` Sobol-scaled points.

    Failed queries are skipped (they still consume their sample point); more
    than ``max_failure_fraction`` failures aborts.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    xs, ys, failures = [], [], 0
    for _ in range(count):
        x = seq.sample_batch(1, sim.bounds)[0]
        try:
            y = sim.evaluate(x)
        except SimulatorError:
            failures += 1
            if failures > max_failure_fraction * count:
                raise
            continue
        xs.append(x)
        ys.append(y)
    if not xs:
        raise SimulatorError("all initial queries failed")
    return Dataset(np.array(xs), np.array(ys), ["initial-sobol"] * len(xs))


def _scored_best(data: Dataset, spec: ObjectiveSpec) -> tuple[int, float, float, Standardizer]:
    """Best record over all queries, rescored under one full-dataset standardizer."""
    std = Standardizer.fit(data.inputs, data.outputs)
    losses = np.array(
        [
            loss_physical(spec, std, y, x)
            for x, y in zip(data.inputs, data.outputs)
        ]
    )
    initial = np.array([tag == "initial-sobol" for tag in data.provenance])
    best_idx = int(np.argmin(losses))
    initial_best = float(losses[initial].min()) if initial.any() else float("inf")
    return best_idx, float(losses[best_idx]), initial_best, std


def run(
    sim: Simulator,
    objective_spec: ObjectiveSpec,
    stopping: StoppingSpec,
    train_config: TrainConfig | None = None,
    multistart_config: MultiStartConfig | None = None,
    seed: int = 0,
    initial_samples: int = 400,
    initial_data: Dataset | None = None,
    config_snapshot: dict | None = None,
) -> RunResult:
    """Execute the full optimization loop against a simulator.

    ``initial_data`` skips initial collection (resume support). All
    randomness (initial Sobol offset, per-iteration weight seeds, multi-start
    offsets) derives from ``seed``; identical arguments reproduce identical
    results. Returns the queried record with the lowest true loss over the
    initial and intelligent queries combined.
    """
    train_config = train_config or TrainConfig()
    multistart_config = multistart_config or MultiStartConfig()
    base_offset = 1 + (seed % 4096) * 65536

    if initial_data is not None:
        # Copy so runs sharing one initial dataset never see each other's queries.
        data = Dataset(
            initial_data.inputs.copy(),
            initial_data.outputs.copy(),
            list(initial_data.provenance),
        )
        initial_queries = 0
    else:
        seq = SobolSequence(sim.input_dim, index=base_offset)
        data = collect_initial(sim, initial_samples, seq)
        initial_queries = len(data)

    log = RunLog(
        seed=seed,
        config_snapshot=config_snapshot or {},
        initial_dataset_size=len(data),
        initial_queries_performed=initial_queries,
    )
    ms_seq = SobolSequence(sim.input_dim, index=base_offset + len(data))

    history: list[float] = []
    stop_reason = STOP_MAX_ITERATIONS if stopping.max_iterations == 0 else None
    iteration = 0
    consecutive_failures = 0
    weight_seed = seed * 100003 + 1  # advanced every training, including retries
    final_model = None
    final_opt = None

    while stop_reason is None:
        iteration += 1
        cfg = TrainConfig(
            hidden_layers=list(train_config.hidden_layers),
            learning_rate=train_config.learning_rate,
            batch_size=train_config.batch_size,
            max_epochs=train_config.max_epochs,
            validation_fraction=train_config.validation_fraction,
            early_stop_patience=train_config.early_stop_patience,
            seed=weight_seed,
        )
        weight_seed += 1
        model, report = train(data, cfg)
        final_model = model
        train_summary = {**report.summary(), "weight_seed": cfg.seed}
        result = optimize_inputs(model, objective_spec, multistart_config, ms_seq)
        final_opt = result
        try:
            y = sim.evaluate(result.best_x)
        except SimulatorError:
            consecutive_failures += 1
            log.iterations.append(
                IterationRecord(
                    iteration=iteration,
                    x_best=result.best_x,
                    y_best=None,
                    true_loss=None,
                    surrogate_loss_at_x_best=result.best_loss,
                    train_summary=train_summary,
                    failed=True,
                )
            )
            if consecutive_failures >= MAX_CONSECUTIVE_QUERY_FAILURES:
                raise SimulatorError(
                    f"{consecutive_failures} consecutive intelligent-query failures"
                )
            continue
        consecutive_failures = 0
        true_loss = loss_physical(objective_spec, model.standardizer, y, result.best_x)
        data.append(result.best_x, y, "intelligent-query")
        history.append(true_loss)
        stop_reason = check_stopping(history, stopping)
        log.iterations.append(
            IterationRecord(
                iteration=iteration,
                x_best=result.best_x,
                y_best=y,
                true_loss=true_loss,
                surrogate_loss_at_x_best=result.best_loss,
                train_summary=train_summary,
                stop_reason=stop_reason,
            )
        )

    best_idx, best_loss, initial_best, _ = _scored_best(data, objective_spec)
    return RunResult(
        x_best=data.inputs[best_idx].copy(),
        y_best=data.outputs[best_idx].copy(),
        true_loss=best_loss,
        initial_best_loss=initial_best,
        stop_reason=stop_reason,
        iterations_completed=len(history),
        log=log,
        dataset=data,
        final_model=final_model,
        final_opt_result=final_opt,
    )
