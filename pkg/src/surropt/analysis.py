"""Study drivers: input sensitivity, loss landscapes, data-size sweeps,
prediction export, and the quasi-random search comparison.

All studies are deterministic given their seeds and emit plot-ready tables
(CSV) plus JSON-able summaries; no plotting happens here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._pool import parallel_map
from .dataset import Dataset
from .driver import StoppingSpec, collect_initial, run
from .inputopt import MultiStartConfig
from .objective import ObjectiveSpec, loss, loss_physical
from .qmc import SobolSequence
from .simbench import Simulator
from .surrogate import (
    Standardizer,
    SurrogateModel,
    TrainConfig,
    TrainingError,
    split_indices,
    train,
)


# ---------------------------------------------------------------------------
# Leave-one-out sensitivity


@dataclass
class SensitivityEntry:
    index: int
    name: str
    loss_without_input: float
    increase_abs: float
    increase_rel: float


@dataclass
class SensitivityReport:
    baseline_loss: float
    entries: list[SensitivityEntry]
    ranking: list[int]  # input indices, most important first
    seeds: list[int] = field(default_factory=list)

    def save_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["input_index", "name", "val_mae_without_input", "increase_abs", "increase_rel"]
            )
            writer.writerow(["baseline", "all-inputs", repr(float(self.baseline_loss)), "0.0", "0.0"])
            for e in self.entries:
                writer.writerow(
                    [e.index, e.name, repr(float(e.loss_without_input)), repr(float(e.increase_abs)), repr(float(e.increase_rel))]
                )

    def summary(self) -> dict:
        return {
            "baseline_loss": self.baseline_loss,
            "ranking": self.ranking,
            "ranking_names": [self.entries_by_index(i).name for i in self.ranking],
            "seeds": self.seeds,
        }

    def entries_by_index(self, index: int) -> SensitivityEntry:
        for e in self.entries:
            if e.index == index:
                return e
        raise KeyError(index)


def sensitivity(
    data: Dataset,
    config: TrainConfig,
    seeds: list[int],
    input_names: list[str] | None = None,
) -> SensitivityReport:
    """Rank inputs by how much excluding each from training hurts validation MAE.

    Trains one full model plus one column-dropped model per input for every
    seed, averages the validation MAE over seeds, and ranks inputs by the
    absolute loss increase against the full-model baseline.
    """
    m = data.input_dim
    if m < 2:
        raise ValueError("sensitivity needs at least 2 inputs")
    names = list(input_names) if input_names else [f"x_{i + 1}" for i in range(m)]
    if len(names) != m:
        raise ValueError("input_names length must match input dimension")

    jobs = [(None, s) for s in seeds] + [(i, s) for i in range(m) for s in seeds]

    def cell(job):
        drop, seed = job
        cfg = replace(config, seed=seed)
        subset = data if drop is None else data.drop_input(drop)
        try:
            _, report = train(subset, cfg)
        except TrainingError:
            return drop, seed, None
        return drop, seed, float(report.final_val_mae.mean())

    results = parallel_map(cell, jobs)
    by_drop: dict[int | None, list[float]] = {}
    for drop, _, value in results:
        if value is not None:
            by_drop.setdefault(drop, []).append(value)
    if None not in by_drop:
        raise TrainingError("sensitivity baseline training failed for every seed")
    baseline = float(np.mean(by_drop[None]))

    entries = []
    for i in range(m):
        if i not in by_drop:
            continue  # every seed failed for this input; entry invalidated
        without = float(np.mean(by_drop[i]))
        entries.append(
            SensitivityEntry(
                index=i,
                name=names[i],
                loss_without_input=without,
                increase_abs=without - baseline,
                increase_rel=(without - baseline) / baseline,
            )
        )
    ranking = [e.index for e in sorted(entries, key=lambda e: -e.increase_abs)]
    return SensitivityReport(
        baseline_loss=baseline, entries=entries, ranking=ranking, seeds=list(seeds)
    )


# ---------------------------------------------------------------------------
# Loss landscape grids


@dataclass
class LandscapeGrid:
    dims: tuple[int, int]
    grid_axis_1: np.ndarray
    grid_axis_2: np.ndarray
    frozen: np.ndarray
    losses: np.ndarray  # shape (len(axis1), len(axis2)); nan marks failed cells
    source: str  # "surrogate" or "simulator"

    def save_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        d1, d2 = self.dims
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x_{d1 + 1}", f"x_{d2 + 1}", "loss"])
            for i, a in enumerate(self.grid_axis_1):
                for j, b in enumerate(self.grid_axis_2):
                    writer.writerow([repr(float(a)), repr(float(b)), repr(float(self.losses[i, j]))])

    def summary(self) -> dict:
        finite = self.losses[np.isfinite(self.losses)]
        return {
            "dims": list(self.dims),
            "resolution": [len(self.grid_axis_1), len(self.grid_axis_2)],
            "source": self.source,
            "loss_min": float(finite.min()),
            "loss_max": float(finite.max()),
            "failed_cells": int(np.size(self.losses) - finite.size),
        }


def landscape(
    source,
    spec: ObjectiveSpec,
    dims: tuple[int, int],
    frozen: np.ndarray,
    resolution: int,
    standardizer: Standardizer | None = None,
) -> LandscapeGrid:
    """Objective loss over a 2-D slice of input space, other inputs frozen.

    ``source`` is either a trained surrogate (cheap grid) or a simulator
    (every cell is a counted query; failed cells become NaN). Simulator grids
    need an explicit ``standardizer`` so both grids share one loss scale.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    d1, d2 = dims
    frozen = np.asarray(frozen, dtype=float)
    if d1 == d2:
        raise ValueError("landscape dims must differ")
    if not spec.bounds.contains(frozen):
        raise ValueError("frozen point must lie inside the bounds")

    is_model = isinstance(source, SurrogateModel) or hasattr(source, "predict_std")
    if is_model:
        standardizer = source.standardizer
    elif standardizer is None:
        raise ValueError("simulator landscapes need a standardizer for the loss scale")

    axis1 = np.linspace(spec.bounds.x_min[d1], spec.bounds.x_max[d1], resolution)
    axis2 = np.linspace(spec.bounds.x_min[d2], spec.bounds.x_max[d2], resolution)
    losses = np.full((resolution, resolution), np.nan)
    for i, a in enumerate(axis1):
        for j, b in enumerate(axis2):
            x = frozen.copy()
            x[d1] = a
            x[d2] = b
            if is_model:
                y_std = source.predict_std(standardizer.standardize_input(x))
                losses[i, j] = loss(spec, y_std, x, standardizer)
            else:
                try:
                    y = source.evaluate(x)
                except Exception:
                    continue  # leave the cell NaN
                losses[i, j] = loss_physical(spec, standardizer, y, x)
    return LandscapeGrid(
        dims=(d1, d2),
        grid_axis_1=axis1,
        grid_axis_2=axis2,
        frozen=frozen,
        losses=losses,
        source="surrogate" if is_model else "simulator",
    )


# ---------------------------------------------------------------------------
# Training-size sweep


@dataclass
class SweepRow:
    size: int
    per_seed_mae: list[float]
    mean_mae: float


@dataclass
class SweepReport:
    rows: list[SweepRow]
    heldout_size: int
    seeds: list[int]
    pool: Dataset | None = None  # every record queried for the sweep

    def save_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["training_size", "mean_val_mae"] + [f"seed_{s}" for s in self.seeds]
            )
            for row in self.rows:
                writer.writerow(
                    [row.size, repr(float(row.mean_mae))] + [repr(float(v)) for v in row.per_seed_mae]
                )

    def summary(self) -> dict:
        return {
            "sizes": [r.size for r in self.rows],
            "mean_val_mae": [r.mean_mae for r in self.rows],
            "heldout_size": self.heldout_size,
            "seeds": self.seeds,
        }


def training_size_sweep(
    sim: Simulator,
    sizes: list[int],
    seeds: list[int],
    config: TrainConfig | None = None,
    heldout_size: int = 200,
    sobol_offset: int = 1,
) -> SweepReport:
    """Validation MAE versus training-set size on a fixed Sobol design.

    Each size trains on a prefix of one fixed Sobol dataset and is scored on
    a fixed held-out set drawn after the largest prefix, in the model's own
    standardized output units, averaged over seeds.
    """
    if list(sizes) != sorted(sizes):
        raise ValueError("sizes must be ascending")
    config = config or TrainConfig()
    seq = SobolSequence(sim.input_dim, index=sobol_offset)
    pool = collect_initial(sim, max(sizes) + heldout_size, seq)
    held_x = pool.inputs[max(sizes) :]
    held_y = pool.outputs[max(sizes) :]

    def cell(job):
        size, seed = job
        subset = pool.subset(np.arange(size))
        model, _ = train(subset, replace(config, seed=seed))
        pred = model.predict(held_x)
        err_std = np.abs(
            model.standardizer.standardize_output(pred)
            - model.standardizer.standardize_output(held_y)
        )
        return float(err_std.mean())

    jobs = [(size, seed) for size in sizes for seed in seeds]
    flat = parallel_map(cell, jobs)
    rows = []
    for k, size in enumerate(sizes):
        per_seed = flat[k * len(seeds) : (k + 1) * len(seeds)]
        rows.append(SweepRow(size=size, per_seed_mae=per_seed, mean_mae=float(np.mean(per_seed))))
    return SweepReport(rows=rows, heldout_size=heldout_size, seeds=list(seeds), pool=pool)


# ---------------------------------------------------------------------------
# Quasi-random search comparison


@dataclass
class BaselineComparison:
    intelligent_curves: np.ndarray  # (trials, budget) best-so-far true losses
    random_curves: np.ndarray
    reference_loss: float
    speedup_factor: float
    queries_intelligent: int  # queries to reach the reference loss (budget+1 if never)
    queries_random: int
    trials: int
    intelligent_logs: list = None  # per-trial RunLog (query-level record)
    random_datasets: list = None  # per-trial Dataset of quasi-random queries

    @property
    def mean_intelligent(self) -> np.ndarray:
        return self.intelligent_curves.mean(axis=0)

    @property
    def mean_random(self) -> np.ndarray:
        return self.random_curves.mean(axis=0)

    def save_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["query", "mean_intelligent", "mean_random"])
            for q, (a, b) in enumerate(zip(self.mean_intelligent, self.mean_random), start=1):
                writer.writerow([q, repr(float(a)), repr(float(b))])

    def summary(self) -> dict:
        return {
            "trials": self.trials,
            "budget": int(self.intelligent_curves.shape[1]),
            "reference_loss": self.reference_loss,
            "speedup_factor": self.speedup_factor,
            "queries_intelligent": self.queries_intelligent,
            "queries_random": self.queries_random,
            "mean_intelligent": [float(v) for v in self.mean_intelligent],
            "mean_random": [float(v) for v in self.mean_random],
        }


def _queries_to_reach(curve: np.ndarray, reference: float) -> int:
    hits = np.nonzero(curve <= reference)[0]
    return int(hits[0]) + 1 if hits.size else len(curve) + 1


def mc_baseline(
    sim: Simulator,
    spec: ObjectiveSpec,
    budget: int,
    trials: int,
    seed: int = 0,
    initial_samples: int = 400,
    train_config: TrainConfig | None = None,
    multistart_config: MultiStartConfig | None = None,
    reference_loss: float | None = None,
    initial_data: Dataset | None = None,
) -> BaselineComparison:
    """Best-so-far comparison of intelligent vs quasi-random querying.

    Both strategies share one initial dataset and one scoring standardizer
    fitted on it, and each spends exactly ``budget`` true-simulator queries
    per trial. The intelligent arm varies by run seed, the quasi-random arm
    by Sobol index offset. The speedup factor is the ratio of queries each
    strategy needs to reach the reference loss (by default the quasi-random
    arm's final mean best-so-far).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    base_offset = 1 + (seed % 4096) * 65536
    shared = initial_data
    if shared is None:
        shared = collect_initial(
            sim, initial_samples, SobolSequence(sim.input_dim, index=base_offset)
        )
    shared_std = Standardizer.fit(shared.inputs, shared.outputs)

    stopping = StoppingSpec(
        goal_loss=None,
        convergence_window=budget + 1,  # disabled: equal budgets by construction
        max_iterations=budget,
    )
    intelligent = np.empty((trials, budget))
    random_arm = np.empty((trials, budget))
    logs, random_sets = [], []
    for t in range(trials):
        result = run(
            sim,
            spec,
            stopping,
            train_config=train_config,
            multistart_config=multistart_config,
            seed=seed * 1009 + t,
            initial_samples=initial_samples,
            initial_data=shared,
        )
        losses = [
            loss_physical(spec, shared_std, rec.y_best, rec.x_best)
            for rec in result.log.iterations
            if not rec.failed
        ]
        if len(losses) != budget:
            raise RuntimeError(f"trial {t}: expected {budget} queries, got {len(losses)}")
        intelligent[t] = np.minimum.accumulate(losses)
        logs.append(result.log)

        rand_seq = SobolSequence(
            sim.input_dim, index=base_offset + initial_samples + (t + 1) * 100003
        )
        rand_points = collect_initial(sim, budget, rand_seq)
        rand_points.provenance = ["baseline"] * len(rand_points)
        rand_losses = [
            loss_physical(spec, shared_std, y, x)
            for x, y in zip(rand_points.inputs, rand_points.outputs)
        ]
        random_arm[t] = np.minimum.accumulate(rand_losses)
        random_sets.append(rand_points)

    mean_int = intelligent.mean(axis=0)
    mean_rand = random_arm.mean(axis=0)
    ref = float(mean_rand[-1]) if reference_loss is None else float(reference_loss)
    q_int = _queries_to_reach(mean_int, ref)
    q_rand = _queries_to_reach(mean_rand, ref)
    return BaselineComparison(
        intelligent_curves=intelligent,
        random_curves=random_arm,
        reference_loss=ref,
        speedup_factor=q_rand / q_int,
        queries_intelligent=q_int,
        queries_random=q_rand,
        trials=trials,
        intelligent_logs=logs,
        random_datasets=random_sets,
    )


# ---------------------------------------------------------------------------
# Prediction scatter export


def export_predictions(
    model: SurrogateModel, data: Dataset, validation_fraction: float = 0.2
) -> list[tuple[int, float, float]]:
    """Rows (output_index, actual, predicted) over the model's held-out split.

    The split replays the training shuffle from the model's seed, so passing
    the training dataset scores exactly the records the model never fit.
    """
    if len(data) == 0:
        raise ValueError("dataset is empty")
    _, val_idx = split_indices(len(data), validation_fraction, model.train_seed)
    pred = model.predict(data.inputs[val_idx])
    actual = data.outputs[val_idx]
    rows = []
    for k in range(data.output_dim):
        for a, p in zip(actual[:, k], pred[:, k]):
            rows.append((k, float(a), float(p)))
    return rows


def save_predictions_csv(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["output_index", "actual", "predicted"])
        for k, a, p in rows:
            writer.writerow([k, repr(a), repr(p)])
