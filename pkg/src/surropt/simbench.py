"""Black-box simulator interface and shipped reference simulators.

``ToyFlareSim`` is a cheap 13-input/3-output landing-flare model used as the
default optimization target: six inputs shape the touchdown state through
smooth nonlinear couplings, the remaining seven inject only small periodic
ripples (amplitude 0.02), giving sensitivity studies a known ground truth.
"""

from __future__ import annotations

import math
import subprocess
import threading

import numpy as np

from .qmc import BoundsSpec

DEG = math.pi / 180.0
FTPS_TO_KNOTS = 0.592484

TOY_INPUT_NAMES = (
    "landing_velocity",
    "glide_angle",
    "flare_radius",
    "exit_angle",
    "flare_height",
    "brake_drag",
    "ripple_1",
    "ripple_2",
    "ripple_3",
    "ripple_4",
    "ripple_5",
    "ripple_6",
    "ripple_7",
)
TOY_OUTPUT_NAMES = ("sink_rate_ftps", "horizontal_velocity_kn", "downrange_ft")

# Touchdown targets and per-output weights for the default flare application.
TOY_DEFAULT_TARGETS = (2.0, 54.0, 400.0)
TOY_DEFAULT_WEIGHTS = (2.0, 1.0, 0.1)


def recommended_train_config():
    """Surrogate training settings tuned for the shipped flare simulator.

    Found by hyperparameter search over the standard space; trades some
    training time for the lower validation error the refinement loop needs
    on this application. The generic defaults favor speed.
    """
    from .surrogate import TrainConfig

    return TrainConfig(
        hidden_layers=[128, 128],
        learning_rate=3e-3,
        max_epochs=800,
        early_stop_patience=60,
        validation_fraction=0.1,
    )


class SimulatorError(RuntimeError):
    """A simulator query failed (bad input, child process failure, ...)."""


class Simulator:
    """Deterministic black-box map x -> y with box-bounded inputs.

    ``evaluate`` is pure apart from the query counter, which increments by
    exactly one per call (atomically; parallel evaluation is safe).
    """

    input_names: tuple[str, ...] = ()
    output_names: tuple[str, ...] = ()

    def __init__(self, input_dim: int, output_dim: int, bounds: BoundsSpec):
        if bounds.dimension != input_dim:
            raise ValueError("bounds dimension must equal input_dim")
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.bounds = bounds
        self._query_count = 0
        self._lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._query_count

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.input_dim,):
            raise SimulatorError(
                f"input must have shape ({self.input_dim},), got {x.shape}"
            )
        if not self.bounds.contains(x):
            raise SimulatorError(f"input {x.tolist()} violates simulator bounds")
        with self._lock:
            self._query_count += 1
        y = np.asarray(self._evaluate(x), dtype=float)
        return y

    def _evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ToyFlareSim(Simulator):
    """Toy flare-trajectory simulator on the unit 13-cube.

    Outputs (sink rate ft/s, horizontal velocity knots, downrange ft) at
    touchdown. ``perturbation`` = (drag_scale, lift_scale, pitch_scale)
    models vehicle changes; defaults (1, 1, 1).
    """

    input_names = TOY_INPUT_NAMES
    output_names = TOY_OUTPUT_NAMES

    def __init__(self, perturbation=(1.0, 1.0, 1.0)):
        super().__init__(13, 3, BoundsSpec.unit(13))
        perturbation = tuple(float(p) for p in perturbation)
        if len(perturbation) != 3 or any(p <= 0 for p in perturbation):
            raise ValueError("perturbation must be 3 positive scale factors")
        self.perturbation = perturbation

    def _evaluate(self, u: np.ndarray) -> np.ndarray:
        drag_scale, lift_scale, pitch_scale = self.perturbation
        v0 = 150.0 + 100.0 * u[0]
        g1 = (10.0 + 10.0 * u[1]) * DEG
        rf = 1000.0 + 4000.0 * u[2]
        g2 = (0.5 + 2.5 * u[3]) * DEG
        hf = 50.0 + 150.0 * u[4]
        b = (0.1 + 0.8 * u[5]) / drag_scale

        j = np.arange(7, 14)
        ripple_phase = np.sin(2.0 * math.pi * u[6:13] + j)
        ripple = 1.0 + 0.02 * float(np.sum(ripple_phase))

        decel = math.exp(-b * (hf / 100.0 + rf / 2000.0) / 3.0)
        v_td = v0 * decel * ripple
        geff = (g2 + (g1 - g2) * math.exp(-rf / 1500.0)) / lift_scale

        sink_rate = v_td * math.sin(geff)
        horizontal_velocity = FTPS_TO_KNOTS * v_td * math.cos(geff)
        downrange = pitch_scale * (
            0.03 * hf / math.tan(g2)
            + 0.02 * rf * (1.0 + 0.01 * float(np.sum(np.sin(2.0 * math.pi * u[6:13]))))
        )
        return np.array([sink_rate, horizontal_velocity, downrange])


def perturb_vehicle(sim: ToyFlareSim, drag: float, lift: float, pitch: float) -> ToyFlareSim:
    """New simulator with vehicle scales multiplied; the original is unchanged."""
    if drag <= 0 or lift <= 0 or pitch <= 0:
        raise ValueError("perturbation factors must be positive")
    d0, l0, p0 = sim.perturbation
    return ToyFlareSim((d0 * drag, l0 * lift, p0 * pitch))


class _SphereSim(Simulator):
    """y_k = sum((x - c_k)^2) with fixed distinct centers c_k."""

    CENTERS = np.array(
        [
            [0.5, 0.0, -0.5],
            [-0.5, 0.5, 0.0],
            [0.0, -0.5, 0.5],
        ]
    )

    def __init__(self):
        super().__init__(3, 3, BoundsSpec(-2.0 * np.ones(3), 2.0 * np.ones(3)))

    def _evaluate(self, x: np.ndarray) -> np.ndarray:
        return np.sum((x[None, :] - self.CENTERS) ** 2, axis=1)


class _Rosenbrock3Sim(Simulator):
    """Rosenbrock value plus its curvature and offset partial sums."""

    def __init__(self):
        super().__init__(3, 3, BoundsSpec(-2.0 * np.ones(3), 2.0 * np.ones(3)))

    def _evaluate(self, x: np.ndarray) -> np.ndarray:
        curv = float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2))
        offs = float(np.sum((1.0 - x[:-1]) ** 2))
        return np.array([curv + offs, curv, offs])


def benchmark_sim(name: str) -> Simulator:
    """Cheap analytic simulators for optimizer tests: 'sphere' or 'rosenbrock-3out'."""
    if name == "sphere":
        return _SphereSim()
    if name == "rosenbrock-3out":
        return _Rosenbrock3Sim()
    raise ValueError(f"unknown benchmark simulator {name!r}")


class ExternalSimulator(Simulator):
    """Adapter for out-of-process simulators.

    Per query, the command is invoked as a child process; the input vector is
    written to its stdin as one CSV line and the output vector read from its
    stdout as one CSV line. A nonzero exit status (or timeout) is a query
    failure.
    """

    def __init__(
        self,
        command: list[str],
        input_dim: int,
        output_dim: int,
        bounds: BoundsSpec,
        timeout_s: float = 600.0,
    ):
        super().__init__(input_dim, output_dim, bounds)
        if not command:
            raise ValueError("external simulator command must be non-empty")
        self.command = list(command)
        self.timeout_s = timeout_s

    def _evaluate(self, x: np.ndarray) -> np.ndarray:
        line = ",".join(repr(float(v)) for v in x) + "\n"
        try:
            proc = subprocess.run(
                self.command,
                input=line,
                capture_output=True,
                text=True,
                timeout=self.timeout_s,
            )
        except subprocess.TimeoutExpired as exc:
            raise SimulatorError(
                f"external simulator timed out after {self.timeout_s}s"
            ) from exc
        if proc.returncode != 0:
            raise SimulatorError(
                f"external simulator exited with {proc.returncode}: {proc.stderr.strip()}"
            )
        try:
            y = np.array([float(v) for v in proc.stdout.strip().splitlines()[0].split(",")])
        except (IndexError, ValueError) as exc:
            raise SimulatorError(
                f"external simulator produced unparseable output {proc.stdout!r}"
            ) from exc
        if y.shape != (self.output_dim,):
            raise SimulatorError(
                f"external simulator returned {y.shape[0]} values, expected {self.output_dim}"
            )
        return y
