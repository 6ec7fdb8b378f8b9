"""Weighted target-matching objective with soft box-constraint penalties.

The core term is a weighted mean absolute error between standardized
predicted and standardized target outputs. Bound violations add soft
penalties computed in unit-scaled input space (bounds mapped to [0, 1]) so
``alpha = 1`` means the same thing regardless of physical input scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qmc import BoundsSpec
from .surrogate import Standardizer


@dataclass
class ObjectiveSpec:
    """Target outputs, per-output weights, penalty coefficient, input bounds."""

    y_target: np.ndarray
    weights: np.ndarray
    bounds: BoundsSpec
    alpha: float = 1.0

    def __post_init__(self):
        self.y_target = np.asarray(self.y_target, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.y_target.shape != self.weights.shape:
            raise ValueError("y_target and weights must have equal length")
        if np.any(self.weights <= 0):
            raise ValueError("output weights must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")

    @property
    def output_dim(self) -> int:
        return self.y_target.shape[0]


def _penalty(spec: ObjectiveSpec, x: np.ndarray) -> float:
    u = spec.bounds.to_unit(x)
    low = np.maximum(0.0, -u)
    high = np.maximum(0.0, u - 1.0)
    return float(spec.alpha * (low.sum() + high.sum()))


def loss(
    spec: ObjectiveSpec,
    y_hat_std: np.ndarray,
    x: np.ndarray,
    standardizer: Standardizer,
) -> float:
    """Weighted MAE against the standardized target plus bound penalties.

    ``y_hat_std`` is a standardized output vector; the target is standardized
    with the same ``standardizer`` before comparison. ``x`` is the physical
    input, used only for the penalty terms.
    """
    y_hat_std = np.asarray(y_hat_std, dtype=float)
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(y_hat_std)) and np.all(np.isfinite(x))):
        raise ValueError("loss inputs must be finite")
    target_std = standardizer.standardize_output(spec.y_target)
    mae = float(np.mean(spec.weights * np.abs(target_std - y_hat_std)))
    return mae + _penalty(spec, x)


def loss_physical(
    spec: ObjectiveSpec,
    standardizer: Standardizer,
    y: np.ndarray,
    x: np.ndarray,
) -> float:
    """Score a true simulator output exactly as surrogate predictions are scored."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("output vector must be finite")
    return loss(spec, standardizer.standardize_output(y), x, standardizer)


def loss_and_gradient(spec: ObjectiveSpec, model, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Objective value and its gradient in the model's standardized input space.

    The MAE term's gradient is the chain rule through the surrogate Jacobian
    with sign(0) taken as 0. Each violated bound dimension contributes a
    constant restoring slope of magnitude ``alpha``.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("input vector must be finite")
    std = model.standardizer
    x_std = std.standardize_input(x)
    y_hat_std = model.predict_std(x_std)
    jac = model.input_jacobian_std(x_std)

    target_std = std.standardize_output(spec.y_target)
    resid = y_hat_std - target_std
    n = spec.output_dim
    grad = ((spec.weights * np.sign(resid)) / n) @ jac

    u = spec.bounds.to_unit(x)
    grad = grad - spec.alpha * (u < 0.0) + spec.alpha * (u > 1.0)

    value = float(np.mean(spec.weights * np.abs(resid))) + _penalty(spec, x)
    return value, np.asarray(grad, dtype=float)
