"""surropt: surrogate-guided black-box simulation optimization."""

__version__ = "0.1.0"

from .dataset import Dataset
from .driver import RunResult, StoppingSpec, check_stopping, collect_initial, run
from .inputopt import MultiStartConfig, OptResult, optimize_inputs
from .objective import ObjectiveSpec, loss, loss_and_gradient, loss_physical
from .qmc import BoundsSpec, SobolSequence, discrepancy_check
from .simbench import (
    ExternalSimulator,
    Simulator,
    ToyFlareSim,
    benchmark_sim,
    perturb_vehicle,
    recommended_train_config,
)
from .surrogate import (
    Standardizer,
    SurrogateModel,
    TrainConfig,
    TrainReport,
    train,
    tune_hyperparameters,
)

__all__ = [
    "BoundsSpec",
    "Dataset",
    "ExternalSimulator",
    "MultiStartConfig",
    "ObjectiveSpec",
    "OptResult",
    "RunResult",
    "Simulator",
    "SobolSequence",
    "Standardizer",
    "StoppingSpec",
    "SurrogateModel",
    "ToyFlareSim",
    "TrainConfig",
    "TrainReport",
    "__version__",
    "benchmark_sim",
    "check_stopping",
    "collect_initial",
    "discrepancy_check",
    "loss",
    "loss_and_gradient",
    "loss_physical",
    "optimize_inputs",
    "perturb_vehicle",
    "recommended_train_config",
    "run",
    "train",
    "tune_hyperparameters",
]
