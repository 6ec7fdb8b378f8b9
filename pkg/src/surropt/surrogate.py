"""Feedforward neural-network surrogate of a simulator.

Hidden layers use tanh so the network's input Jacobian is smooth; the output
layer is linear. Training minimizes plain mean absolute error (averaged over
outputs and batch) with Adam, early-stops on validation MAE, and restores the
best-validation weights. All randomness flows from the config seed, so a
(data, config) pair reproduces the same weights bit-for-bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingError(RuntimeError):
    pass


@dataclass
class Standardizer:
    """Per-dimension affine map to zero mean / unit variance.

    Fitted from the training split only. Zero-variance dimensions get std 1
    and are flagged in ``input_degenerate`` / ``output_degenerate``.
    """

    input_mean: np.ndarray
    input_std: np.ndarray
    output_mean: np.ndarray
    output_std: np.ndarray
    input_degenerate: np.ndarray = field(default=None)
    output_degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("input_mean", "input_std", "output_mean", "output_std"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.input_degenerate is None:
            self.input_degenerate = np.zeros(self.input_mean.shape, dtype=bool)
        if self.output_degenerate is None:
            self.output_degenerate = np.zeros(self.output_mean.shape, dtype=bool)
        self.input_degenerate = np.asarray(self.input_degenerate, dtype=bool)
        self.output_degenerate = np.asarray(self.output_degenerate, dtype=bool)
        if np.any(self.input_std <= 0) or np.any(self.output_std <= 0):
            raise ValueError("standardizer stds must be positive")

    @classmethod
    def fit(cls, inputs: np.ndarray, outputs: np.ndarray) -> "Standardizer":
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
        in_std = inputs.std(axis=0)
        out_std = outputs.std(axis=0)
        in_deg = in_std == 0.0
        out_deg = out_std == 0.0
        return cls(
            inputs.mean(axis=0),
            np.where(in_deg, 1.0, in_std),
            outputs.mean(axis=0),
            np.where(out_deg, 1.0, out_std),
            in_deg,
            out_deg,
        )

    @classmethod
    def identity(cls, input_dim: int, output_dim: int) -> "Standardizer":
        return cls(
            np.zeros(input_dim), np.ones(input_dim), np.zeros(output_dim), np.ones(output_dim)
        )

    def standardize_input(self, x):
        return (np.asarray(x, dtype=float) - self.input_mean) / self.input_std

    def destandardize_input(self, x_std):
        return np.asarray(x_std, dtype=float) * self.input_std + self.input_mean

    def standardize_output(self, y):
        return (np.asarray(y, dtype=float) - self.output_mean) / self.output_std

    def destandardize_output(self, y_std):
        return np.asarray(y_std, dtype=float) * self.output_std + self.output_mean


@dataclass
class TrainConfig:
    hidden_layers: list[int] = field(default_factory=lambda: [64, 64])
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 500
    validation_fraction: float = 0.2
    early_stop_patience: int = 25
    seed: int = 0

    def __post_init__(self):
        if any(w < 1 for w in self.hidden_layers):
            raise ValueError("hidden layer widths must be positive")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning_rate, batch_size, max_epochs must be positive")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be positive")


@dataclass
class TrainReport:
    """Per-epoch MAE traces in standardized units. Row 0 is the untrained net."""

    train_mae: np.ndarray  # (epochs+1, n_outputs)
    val_mae: np.ndarray  # (epochs+1, n_outputs)
    best_epoch: int
    epochs_run: int
    n_train: int
    n_val: int

    @property
    def final_val_mae(self) -> np.ndarray:
        """Per-output validation MAE of the restored (best) weights."""
        return self.val_mae[self.best_epoch]

    def summary(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "val_mae": [float(v) for v in self.final_val_mae],
            "val_mae_mean": float(self.final_val_mae.mean()),
            "n_train": self.n_train,
            "n_val": self.n_val,
        }


def _forward(weights, biases, x):
    """Activations after each layer for a batch x of shape (B, m)."""
    acts = [x]
    last = len(weights) - 1
    for l, (w, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ w.T + b
        acts.append(np.tanh(z) if l < last else z)
    return acts


@dataclass
class SurrogateModel:
    """Trained network f̂ with its standardization statistics.

    ``predict`` maps physical inputs to physical outputs; ``input_gradient``
    returns the exact Jacobian of standardized outputs with respect to
    standardized inputs. Instances are immutable in use and freely shareable.
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    standardizer: Standardizer
    train_seed: int = 0
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation != "tanh":
            raise ValueError("only tanh hidden activation is supported")
        shapes = [w.shape for w in self.weights]
        expect = [
            (o, i) for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        ]
        if shapes != expect:
            raise ValueError(f"weight shapes {shapes} do not match layer sizes")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def num_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def predict_std(self, x_std: np.ndarray) -> np.ndarray:
        """Forward pass in standardized space; accepts (m,) or (B, m)."""
        x_std = np.asarray(x_std, dtype=float)
        single = x_std.ndim == 1
        out = _forward(self.weights, self.biases, np.atleast_2d(x_std))[-1]
        return out[0] if single else out

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.input_dim:
            raise ValueError(f"input length {x2.shape[1]} != model input dim {self.input_dim}")
        if not np.all(np.isfinite(x2)):
            raise ValueError("input contains non-finite values")
        y_std = self.predict_std(self.standardizer.standardize_input(x2))
        y = self.standardizer.destandardize_output(y_std)
        return y[0] if single else y

    def input_jacobian_std(self, x_std: np.ndarray) -> np.ndarray:
        """Jacobian d(y_std)/d(x_std), shape (n, m), by reverse accumulation."""
        acts = _forward(self.weights, self.biases, np.asarray(x_std, dtype=float).reshape(1, -1))
        for l, a in enumerate(acts):
            if not np.all(np.isfinite(a)):
                raise FloatingPointError(f"non-finite activation at layer {l}")
        jac = self.weights[-1]
        for l in range(len(self.weights) - 2, -1, -1):
            hidden = acts[l + 1][0]
            jac = (jac * (1.0 - hidden**2)) @ self.weights[l]
        return np.array(jac, dtype=float)

    def input_gradient(self, x) -> np.ndarray:
        """Jacobian of standardized outputs w.r.t. standardized inputs at physical x."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.input_dim,):
            raise ValueError(f"input length {x.shape} != model input dim {self.input_dim}")
        return self.input_jacobian_std(self.standardizer.standardize_input(x))

    def batched_jacobian_std(self, x_std: np.ndarray) -> np.ndarray:
        """Jacobians for a batch, shape (B, n, m)."""
        acts = _forward(self.weights, self.biases, np.asarray(x_std, dtype=float))
        jac = np.broadcast_to(
            self.weights[-1], (x_std.shape[0], *self.weights[-1].shape)
        )
        for l in range(len(self.weights) - 2, -1, -1):
            jac = (jac * (1.0 - acts[l + 1][:, None, :] ** 2)) @ self.weights[l]
        return np.asarray(jac, dtype=float)

    def save_json(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        std = self.standardizer
        doc = {
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activation": self.activation,
            "standardizer": {
                "input_mean": std.input_mean.tolist(),
                "input_std": std.input_std.tolist(),
                "output_mean": std.output_mean.tolist(),
                "output_std": std.output_std.tolist(),
                "input_degenerate": std.input_degenerate.tolist(),
                "output_degenerate": std.output_degenerate.tolist(),
            },
            "train_seed": self.train_seed,
        }
        path.write_text(json.dumps(doc, indent=1))

    @classmethod
    def load_json(cls, path) -> "SurrogateModel":
        doc = json.loads(Path(path).read_text())
        std = doc["standardizer"]
        return cls(
            layer_sizes=list(doc["layer_sizes"]),
            weights=[np.array(w, dtype=float) for w in doc["weights"]],
            biases=[np.array(b, dtype=float) for b in doc["biases"]],
            standardizer=Standardizer(
                std["input_mean"],
                std["input_std"],
                std["output_mean"],
                std["output_std"],
                std["input_degenerate"],
                std["output_degenerate"],
            ),
            train_seed=int(doc["train_seed"]),
            activation=doc["activation"],
        )


def _init_params(layer_sizes, rng):
    """Seeded uniform Glorot initialization; zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _mae_per_output(weights, biases, x, y):
    pred = _forward(weights, biases, x)[-1]
    return np.abs(pred - y).mean(axis=0)


def split_indices(n_records: int, validation_fraction: float, seed: int):
    """Seeded-shuffle split; the last fraction of the permutation is validation."""
    perm = np.random.default_rng(seed).permutation(n_records)
    n_val = int(round(n_records * validation_fraction))
    n_val = min(max(n_val, 0), n_records - 1)
    if n_val == 0:
        raise TrainingError("validation split is empty; need more records")
    return perm[: n_records - n_val], perm[n_records - n_val :]


def train(data: Dataset, config: TrainConfig | None = None) -> tuple[SurrogateModel, TrainReport]:
    """Fit a surrogate network to the dataset.

    The returned model carries the best-validation weights seen during
    training (including the untrained initialization), so its validation MAE
    never exceeds the untrained network's.
    """
    config = config or TrainConfig()
    if len(data) < 10:
        raise TrainingError(f"need at least 10 records, got {len(data)}")
    data.check_finite()

    train_idx, val_idx = split_indices(len(data), config.validation_fraction, config.seed)
    std = Standardizer.fit(data.inputs[train_idx], data.outputs[train_idx])
    xt = std.standardize_input(data.inputs[train_idx])
    yt = std.standardize_output(data.outputs[train_idx])
    xv = std.standardize_input(data.inputs[val_idx])
    yv = std.standardize_output(data.outputs[val_idx])

    layer_sizes = [data.input_dim, *config.hidden_layers, data.output_dim]
    rng = np.random.default_rng(config.seed)
    weights, biases = _init_params(layer_sizes, rng)

    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]
    step = 0
    last = len(weights) - 1

    train_trace = [_mae_per_output(weights, biases, xt, yt)]
    val_trace = [_mae_per_output(weights, biases, xv, yv)]
    best_val = float(val_trace[0].mean())
    best_epoch = 0
    best_weights = [w.copy() for w in weights]
    best_biases = [b.copy() for b in biases]
    stall = 0

    n_train = len(train_idx)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n_train)
        for lo in range(0, n_train, config.batch_size):
            batch = order[lo : lo + config.batch_size]
            xb, yb = xt[batch], yt[batch]
            acts = _forward(weights, biases, xb)
            # MAE averaged over batch and outputs: d|r|/dpred = sign(r)/(B*n).
            delta = np.sign(acts[-1] - yb) / (xb.shape[0] * yb.shape[1])
            step += 1
            corr1 = 1.0 - ADAM_BETA1**step
            corr2 = 1.0 - ADAM_BETA2**step
            for l in range(last, -1, -1):
                grad_w = delta.T @ acts[l]
                grad_b = delta.sum(axis=0)
                if l > 0:
                    delta = (delta @ weights[l]) * (1.0 - acts[l] ** 2)
                for g, p, m, v in (
                    (grad_w, weights[l], m_w[l], v_w[l]),
                    (grad_b, biases[l], m_b[l], v_b[l]),
                ):
                    m *= ADAM_BETA1
                    m += (1.0 - ADAM_BETA1) * g
                    v *= ADAM_BETA2
                    v += (1.0 - ADAM_BETA2) * g * g
                    p -= config.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + ADAM_EPS)

        train_trace.append(_mae_per_output(weights, biases, xt, yt))
        val_trace.append(_mae_per_output(weights, biases, xv, yv))
        val_mean = float(val_trace[-1].mean())
        if val_mean < best_val:
            best_val = val_mean
            best_epoch = epoch
            best_weights = [w.copy() for w in weights]
            best_biases = [b.copy() for b in biases]
            stall = 0
        else:
            stall += 1
            if stall >= config.early_stop_patience:
                break

    model = SurrogateModel(
        layer_sizes=layer_sizes,
        weights=best_weights,
        biases=best_biases,
        standardizer=std,
        train_seed=config.seed,
    )
    report = TrainReport(
        train_mae=np.array(train_trace),
        val_mae=np.array(val_trace),
        best_epoch=best_epoch,
        epochs_run=len(train_trace) - 1,
        n_train=len(train_idx),
        n_val=len(val_idx),
    )
    return model, report


def _config_parameter_count(config: TrainConfig, input_dim: int, output_dim: int) -> int:
    sizes = [input_dim, *config.hidden_layers, output_dim]
    return sum((i + 1) * o for i, o in zip(sizes[:-1], sizes[1:]))


def _best_trial(trials: list[tuple[float, int, TrainConfig]]) -> TrainConfig:
    """Lowest validation MAE wins; exact ties go to the smaller network."""
    if not trials:
        raise TrainingError("hyperparameter search: every candidate failed")
    return min(trials, key=lambda t: (t[0], t[1]))[2]


TUNE_WIDTHS = (16, 32, 64, 128)
TUNE_BATCHES = (16, 32, 64)


def _run_trials(data: Dataset, budget: int, seed: int) -> list[tuple[float, int, TrainConfig]]:
    """Sample and train ``budget`` random configs; failed trainings are skipped."""
    rng = np.random.default_rng(seed)
    trials = []
    for _ in range(budget):
        depth = int(rng.integers(1, 4))
        hidden = [int(rng.choice(TUNE_WIDTHS)) for _ in range(depth)]
        lr = float(10.0 ** rng.uniform(-4.0, -2.0))
        batch = int(rng.choice(TUNE_BATCHES))
        config = TrainConfig(
            hidden_layers=hidden, learning_rate=lr, batch_size=batch, seed=seed
        )
        try:
            _, report = train(data, config)
        except (TrainingError, ValueError, FloatingPointError):
            continue
        trials.append(
            (
                float(report.final_val_mae.mean()),
                _config_parameter_count(config, data.input_dim, data.output_dim),
                config,
            )
        )
    return trials


def tune_hyperparameters(data: Dataset, budget: int, seed: int = 0) -> TrainConfig:
    """Random-search ``budget`` configs over a fixed space and keep the best.

    Space: 1-3 tanh hidden layers with widths from {16, 32, 64, 128},
    learning rate log-uniform in [1e-4, 1e-2], batch size in {16, 32, 64}.
    Candidates whose training fails are skipped; ties on validation MAE go
    to the config with fewer parameters.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    return _best_trial(_run_trials(data, budget, seed))

