"""Growing collection of simulator input/output records with provenance tags."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROVENANCE_TAGS = ("initial-sobol", "intelligent-query", "baseline")


@dataclass
class Dataset:
    """Ordered (input vector, output vector) records accumulated during a run.

    ``inputs`` has shape (N, m), ``outputs`` (N, n); ``provenance`` tags each
    record with how it was obtained.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    provenance: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if len(self.inputs) != len(self.outputs):
            raise ValueError("inputs and outputs must have equal length")
        if not self.provenance:
            self.provenance = ["initial-sobol"] * len(self.inputs)
        if len(self.provenance) != len(self.inputs):
            raise ValueError("provenance must tag every record")
        for tag in self.provenance:
            if tag not in PROVENANCE_TAGS:
                raise ValueError(f"unknown provenance tag {tag!r}")

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.outputs.shape[1]

    def append(self, x: np.ndarray, y: np.ndarray, tag: str) -> None:
        if tag not in PROVENANCE_TAGS:
            raise ValueError(f"unknown provenance tag {tag!r}")
        x = np.asarray(x, dtype=float).reshape(1, -1)
        y = np.asarray(y, dtype=float).reshape(1, -1)
        if x.shape[1] != self.input_dim or y.shape[1] != self.output_dim:
            raise ValueError("record dimensions do not match dataset")
        self.inputs = np.vstack([self.inputs, x])
        self.outputs = np.vstack([self.outputs, y])
        self.provenance.append(tag)

    def drop_input(self, index: int) -> "Dataset":
        """Copy with one input column removed (leave-one-out sensitivity)."""
        if not 0 <= index < self.input_dim:
            raise ValueError(f"input index {index} out of range")
        return Dataset(
            np.delete(self.inputs, index, axis=1),
            self.outputs.copy(),
            list(self.provenance),
        )

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            self.inputs[idx], self.outputs[idx], [self.provenance[i] for i in idx]
        )

    def check_finite(self) -> None:
        """Raise naming the first record containing a non-finite value."""
        bad_x = ~np.all(np.isfinite(self.inputs), axis=1)
        bad_y = ~np.all(np.isfinite(self.outputs), axis=1)
        bad = np.nonzero(bad_x | bad_y)[0]
        if bad.size:
            raise ValueError(f"non-finite value in dataset record {int(bad[0])}")

    def save_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = (
            [f"x_{i + 1}" for i in range(self.input_dim)]
            + [f"y_{i + 1}" for i in range(self.output_dim)]
            + ["provenance"]
        )
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for x, y, tag in zip(self.inputs, self.outputs, self.provenance):
                writer.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in y] + [tag])

    @classmethod
    def load_csv(cls, path) -> "Dataset":
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            m = sum(1 for h in header if h.startswith("x_"))
            n = sum(1 for h in header if h.startswith("y_"))
            if m == 0 or n == 0 or header[-1] != "provenance":
                raise ValueError(f"{path}: not a dataset CSV (header {header})")
            xs, ys, tags = [], [], []
            for row in reader:
                xs.append([float(v) for v in row[:m]])
                ys.append([float(v) for v in row[m : m + n]])
                tags.append(row[m + n])
        return cls(np.array(xs), np.array(ys), tags)
