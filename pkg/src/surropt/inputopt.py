"""Multi-start momentum gradient descent of the objective over candidate inputs.

Starts are Sobol-distributed across the bounds box and descend the surrogate
objective in standardized input space. Each start tracks its best visited
iterate (momentum can overshoot past a minimum, so the final iterate is not
necessarily the best one). A start hitting non-finite numerics is frozen at
its last finite point and flagged; the remaining starts continue.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .objective import ObjectiveSpec, loss_and_gradient
from .qmc import SobolSequence

# A returned best point may be snapped onto the bounds box; soft penalties
# keep overshoot below this much in unit-box coordinates.
UNIT_VIOLATION_TOLERANCE = 1e-2


@dataclass
class MultiStartConfig:
    num_starts: int = 100
    num_steps: int = 500
    learning_rate: float = 0.01  # standardized input space
    momentum: float = 0.9
    record_paths: bool = False

    def __post_init__(self):
        if self.num_starts < 1 or self.num_steps < 1:
            raise ValueError("num_starts and num_steps must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class OptResult:
    best_x: np.ndarray
    best_loss: float
    best_start: int
    all_finals: list[tuple[np.ndarray, float]]
    frozen_starts: list[int] = field(default_factory=list)
    max_unit_violation: float = 0.0  # worst pre-snap bound overshoot seen in any best
    paths: list[np.ndarray] | None = None  # per start: (num_steps+1, 2+m) rows [step, loss, x...]


def batched_gradients(model, spec: ObjectiveSpec, xs) -> list[tuple[float, np.ndarray]]:
    """Per-point (loss, gradient) pairs, identical to sequential evaluation.

    A point that fails to evaluate yields ``(nan, nan-vector)`` instead of
    aborting the batch.
    """
    results = []
    for x in xs:
        try:
            results.append(loss_and_gradient(spec, model, x))
        except (ValueError, FloatingPointError):
            results.append((math.nan, np.full(np.asarray(x).shape, np.nan)))
    return results


def _vectorized_loss_grad(model, spec: ObjectiveSpec, x_std: np.ndarray):
    """Loss and standardized-space gradient for a batch of standardized points."""
    std = model.standardizer
    y_std = model.predict_std(x_std)
    jac = model.batched_jacobian_std(x_std)
    target = std.standardize_output(spec.y_target)
    resid = y_std - target
    n = spec.output_dim
    grad = np.einsum("bn,bnm->bm", (spec.weights * np.sign(resid)) / n, jac)

    u = spec.bounds.to_unit(std.destandardize_input(x_std))
    penalty = spec.alpha * (
        np.maximum(0.0, -u).sum(axis=1) + np.maximum(0.0, u - 1.0).sum(axis=1)
    )
    grad += spec.alpha * ((u > 1.0).astype(float) - (u < 0.0).astype(float))
    value = (spec.weights * np.abs(resid)).mean(axis=1) + penalty
    return value, grad


def optimize_inputs(
    model,
    spec: ObjectiveSpec,
    config: MultiStartConfig,
    seq: SobolSequence,
) -> OptResult:
    """Descend the surrogate objective from ``config.num_starts`` Sobol starts.

    Runs ``num_steps`` updates of v <- momentum*v - lr*grad, x <- x + v per
    start in standardized input space, then returns the best visited point
    over all starts (ties broken by lowest start index). Returned points are
    snapped onto the bounds box; the worst pre-snap overshoot is reported in
    ``max_unit_violation``.
    """
    std = model.standardizer
    x_phys = seq.sample_batch(config.num_starts, spec.bounds)
    x_std = np.atleast_2d(std.standardize_input(x_phys))
    vel = np.zeros_like(x_std)
    n_starts, m = x_std.shape

    best_loss = np.full(n_starts, np.inf)
    best_x_std = x_std.copy()
    active = np.ones(n_starts, dtype=bool)
    frozen: list[int] = []
    paths = [np.empty((config.num_steps + 1, 2 + m)) for _ in range(n_starts)] if config.record_paths else None

    for step in range(config.num_steps + 1):
        value, grad = _vectorized_loss_grad(model, spec, x_std)

        bad = active & ~(
            np.isfinite(value) & np.all(np.isfinite(grad), axis=1)
        )
        if np.any(bad):
            for i in np.nonzero(bad)[0]:
                frozen.append(int(i))
                x_std[i] = best_x_std[i]  # freeze at last finite best
                vel[i] = 0.0
            active &= ~bad
            value, grad = _vectorized_loss_grad(model, spec, x_std)

        improved = active & (value < best_loss)
        best_loss[improved] = value[improved]
        best_x_std[improved] = x_std[improved]

        if paths is not None:
            phys = std.destandardize_input(x_std)
            for i in range(n_starts):
                paths[i][step, 0] = step
                paths[i][step, 1] = value[i]
                paths[i][step, 2:] = phys[i]

        if step == config.num_steps:
            break
        vel[active] = config.momentum * vel[active] - config.learning_rate * grad[active]
        x_std[active] += vel[active]

    best_phys = std.destandardize_input(best_x_std)
    unit = spec.bounds.to_unit(best_phys)
    violation = np.maximum(np.maximum(0.0, -unit), np.maximum(0.0, unit - 1.0)).max(axis=1)
    finals: list[tuple[np.ndarray, float]] = []
    for i in range(n_starts):
        x_i = best_phys[i]
        loss_i = float(best_loss[i])
        if violation[i] > 0.0:
            x_i = spec.bounds.clip(x_i)
            v_i, _ = _vectorized_loss_grad(
                model, spec, std.standardize_input(x_i).reshape(1, -1)
            )
            loss_i = float(v_i[0])
        finals.append((x_i, loss_i))

    losses = np.array([f[1] for f in finals])
    best_start = int(np.argmin(losses))  # argmin takes the first = lowest index on ties
    return OptResult(
        best_x=finals[best_start][0],
        best_loss=float(losses[best_start]),
        best_start=best_start,
        all_finals=finals,
        frozen_starts=frozen,
        max_unit_violation=float(violation.max()),
        paths=paths,
    )


def write_paths_csv(result: OptResult, path) -> None:
    """Dump recorded per-start trajectories as start_id,step,loss,x_1..x_m rows."""
    if result.paths is None:
        raise ValueError("optimization was run without record_paths")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    m = result.paths[0].shape[1] - 2
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start_id", "step", "loss"] + [f"x_{i + 1}" for i in range(m)])
        for sid, track in enumerate(result.paths):
            for row in track:
                writer.writerow([sid, int(row[0])] + [repr(float(v)) for v in row[1:]])
