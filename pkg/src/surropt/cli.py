"""Command-line front end: end-to-end runs, sampling, and studies.

Commands read a strict JSON config (unknown keys are rejected) and write
their artifacts into the configured output directory. Exit codes: 0 when a
run stops on goal or convergence, 2 when the iteration budget ran out, 1 on
any error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, driver
from .dataset import Dataset
from .inputopt import MultiStartConfig, write_paths_csv
from .objective import ObjectiveSpec
from .qmc import BoundsSpec, SobolSequence
from .simbench import ExternalSimulator, Simulator, ToyFlareSim, benchmark_sim
from .surrogate import TrainConfig
from .surrogate import train as train_surrogate

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BUDGET = 2


class ConfigError(ValueError):
    pass


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"missing required key '{path}{key}'")
    return obj[key]


def _check_keys(obj: dict, allowed: set[str], path: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"unknown key '{path}{name}'")


def _build_simulator(cfg: dict, bounds_cfg) -> Simulator:
    _check_keys(
        cfg,
        {"builtin", "perturbation", "command", "input_dim", "output_dim", "timeout_s"},
        "simulator.",
    )
    if ("builtin" in cfg) == ("command" in cfg):
        raise ConfigError("simulator needs exactly one of 'builtin' or 'command'")
    if "builtin" in cfg:
        name = cfg["builtin"]
        if name == "toy-flare":
            pert = cfg.get("perturbation", {})
            _check_keys(pert, {"drag", "lift", "pitch"}, "simulator.perturbation.")
            return ToyFlareSim(
                (pert.get("drag", 1.0), pert.get("lift", 1.0), pert.get("pitch", 1.0))
            )
        if "perturbation" in cfg:
            raise ConfigError(f"simulator '{name}' does not take a perturbation")
        return benchmark_sim(name)
    if bounds_cfg is None:
        raise ConfigError("external simulators require explicit 'bounds'")
    bounds = BoundsSpec(bounds_cfg["lower"], bounds_cfg["upper"])
    return ExternalSimulator(
        command=list(_require(cfg, "command", "simulator.")),
        input_dim=int(_require(cfg, "input_dim", "simulator.")),
        output_dim=int(_require(cfg, "output_dim", "simulator.")),
        bounds=bounds,
        timeout_s=float(cfg.get("timeout_s", 600.0)),
    )


class RunConfig:
    """Validated view of a config file, with constructed component objects."""

    TOP_KEYS = {
        "schema_version",
        "simulator",
        "bounds",
        "objective",
        "initial_samples",
        "train",
        "multistart",
        "stopping",
        "seed",
        "output_dir",
        "study",
    }

    def __init__(self, doc: dict, seed_override=None, out_override=None):
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
        _check_keys(doc, self.TOP_KEYS, "")
        version = _require(doc, "schema_version", "")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")

        bounds_cfg = doc.get("bounds")
        if bounds_cfg is not None:
            _check_keys(bounds_cfg, {"lower", "upper"}, "bounds.")
            _require(bounds_cfg, "lower", "bounds.")
            _require(bounds_cfg, "upper", "bounds.")
        self.simulator = _build_simulator(_require(doc, "simulator", ""), bounds_cfg)
        self.bounds = (
            BoundsSpec(bounds_cfg["lower"], bounds_cfg["upper"])
            if bounds_cfg is not None
            else self.simulator.bounds
        )
        if self.bounds.dimension != self.simulator.input_dim:
            raise ConfigError("bounds dimension does not match simulator input_dim")

        obj = _require(doc, "objective", "")
        _check_keys(obj, {"targets", "weights", "alpha"}, "objective.")
        targets = np.asarray(_require(obj, "targets", "objective."), dtype=float)
        if targets.shape != (self.simulator.output_dim,):
            raise ConfigError("objective.targets length does not match simulator output_dim")
        weights = np.asarray(obj.get("weights", np.ones_like(targets)), dtype=float)
        self.objective = ObjectiveSpec(
            targets, weights, self.bounds, float(obj.get("alpha", 1.0))
        )

        self.initial_samples = int(doc.get("initial_samples", 400))
        if seed_override is not None:
            self.seed = int(seed_override)
        else:
            self.seed = int(_require(doc, "seed", ""))

        train_cfg = doc.get("train", {})
        _check_keys(
            train_cfg,
            {
                "hidden_layers",
                "learning_rate",
                "batch_size",
                "max_epochs",
                "validation_fraction",
                "early_stop_patience",
            },
            "train.",
        )
        self.train = TrainConfig(seed=self.seed, **train_cfg)

        ms_cfg = doc.get("multistart", {})
        _check_keys(
            ms_cfg,
            {"num_starts", "num_steps", "learning_rate", "momentum", "record_paths"},
            "multistart.",
        )
        self.multistart = MultiStartConfig(**ms_cfg)

        stop_cfg = doc.get("stopping", {})
        _check_keys(
            stop_cfg,
            {"goal_loss", "convergence_window", "convergence_epsilon", "max_iterations"},
            "stopping.",
        )
        self.stopping = driver.StoppingSpec(**stop_cfg)

        out = doc.get("output_dir", "surropt-out") if out_override is None else out_override
        self.output_dir = Path(out)
        self.study = doc.get("study", {})
        _check_keys(
            self.study,
            {"sensitivity", "landscape", "sweep", "baseline", "predictions"},
            "study.",
        )
        self.raw = doc


def load_config(path, seed_override=None, out_override=None) -> RunConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    try:
        return RunConfig(doc, seed_override, out_override)
    except TypeError as exc:
        # dataclass kwargs mismatch would escape as TypeError; surface cleanly
        raise ConfigError(str(exc)) from exc


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _summary_doc(cfg: RunConfig, result: driver.RunResult) -> dict:
    return {
        "x_best": [float(v) for v in result.x_best],
        "y_best": [float(v) for v in result.y_best],
        "true_loss": result.true_loss,
        "initial_best_loss": result.initial_best_loss,
        "iterations": result.iterations_completed,
        "stop_reason": result.stop_reason,
        "seed": cfg.seed,
        "initial_dataset_size": result.log.initial_dataset_size,
        "initial_queries_performed": result.log.initial_queries_performed,
        "total_queries": cfg.simulator.query_count,
    }


def cmd_run(cfg: RunConfig, resume: bool) -> int:
    out = cfg.output_dir
    initial_data = None
    dataset_path = out / "dataset.csv"
    if resume:
        if not dataset_path.exists():
            raise ConfigError(f"--resume: no dataset at {dataset_path}")
        initial_data = Dataset.load_csv(dataset_path)
    result = driver.run(
        cfg.simulator,
        cfg.objective,
        cfg.stopping,
        train_config=cfg.train,
        multistart_config=cfg.multistart,
        seed=cfg.seed,
        initial_samples=cfg.initial_samples,
        initial_data=initial_data,
        config_snapshot=cfg.raw,
    )
    result.dataset.save_csv(dataset_path)
    result.log.save_jsonl(out / "runlog.jsonl")
    if result.final_model is not None:
        result.final_model.save_json(out / "model.json")
    if result.final_opt_result is not None and result.final_opt_result.paths is not None:
        write_paths_csv(result.final_opt_result, out / "paths.csv")
    _write_json(out / "summary.json", _summary_doc(cfg, result))
    print(
        f"stop_reason={result.stop_reason} iterations={result.iterations_completed} "
        f"true_loss={result.true_loss:.6g}"
    )
    return EXIT_OK if result.stop_reason in (driver.STOP_GOAL, driver.STOP_CONVERGED) else EXIT_BUDGET


def cmd_sample(cfg: RunConfig, count: int | None) -> int:
    n = cfg.initial_samples if count is None else count
    if n < 1:
        raise ConfigError(f"sample count must be >= 1, got {n}")
    seq_offset = 1 + (cfg.seed % 4096) * 65536
    data = driver.collect_initial(
        cfg.simulator, n, SobolSequence(cfg.simulator.input_dim, index=seq_offset)
    )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    data.save_csv(cfg.output_dir / "dataset.csv")
    print(f"wrote {len(data)} records to {cfg.output_dir / 'dataset.csv'}")
    return EXIT_OK


def _study_dataset(cfg: RunConfig) -> Dataset:
    dataset_path = cfg.output_dir / "dataset.csv"
    if dataset_path.exists():
        return Dataset.load_csv(dataset_path)
    seq_offset = 1 + (cfg.seed % 4096) * 65536
    data = driver.collect_initial(
        cfg.simulator,
        cfg.initial_samples,
        SobolSequence(cfg.simulator.input_dim, index=seq_offset),
    )
    data.save_csv(dataset_path)
    return data


def cmd_study(cfg: RunConfig, which: str, dims=None, resolution=None) -> int:
    out = cfg.output_dir
    params = cfg.study.get(which, {})
    if which == "sensitivity":
        _check_keys(params, {"seeds"}, "study.sensitivity.")
        seeds = list(params.get("seeds", [0, 1, 2]))
        data = _study_dataset(cfg)
        names = list(getattr(cfg.simulator, "input_names", ())) or None
        report = analysis.sensitivity(data, cfg.train, seeds, names)
        report.save_csv(out / "sensitivity.csv")
        _write_json(out / "summary.json", report.summary())
    elif which == "landscape":
        _check_keys(params, {"dims", "resolution", "frozen", "source"}, "study.landscape.")
        d = dims if dims is not None else params.get("dims")
        if d is None or len(d) != 2:
            raise ConfigError("landscape needs two dim indices (study.landscape.dims)")
        res = resolution if resolution is not None else int(params.get("resolution", 21))
        frozen = params.get("frozen")
        frozen = (
            np.asarray(frozen, dtype=float)
            if frozen is not None
            else cfg.bounds.scale(np.full(cfg.bounds.dimension, 0.5))
        )
        data = _study_dataset(cfg)
        model, _ = train_surrogate(data, cfg.train)
        source = params.get("source", "surrogate")
        if source == "surrogate":
            grid = analysis.landscape(model, cfg.objective, tuple(d), frozen, res)
        elif source == "simulator":
            grid = analysis.landscape(
                cfg.simulator, cfg.objective, tuple(d), frozen, res, model.standardizer
            )
        else:
            raise ConfigError("study.landscape.source must be 'surrogate' or 'simulator'")
        grid.save_csv(out / "landscape.csv")
        _write_json(out / "summary.json", grid.summary())
    elif which == "sweep":
        _check_keys(params, {"sizes", "seeds", "heldout"}, "study.sweep.")
        sizes = list(params.get("sizes", [50, 100, 200, 400, 800]))
        seeds = list(params.get("seeds", [0, 1, 2]))
        report = analysis.training_size_sweep(
            cfg.simulator,
            sizes,
            seeds,
            cfg.train,
            heldout_size=int(params.get("heldout", 200)),
        )
        report.save_csv(out / "sweep.csv")
        if report.pool is not None:
            report.pool.save_csv(out / "sweep_dataset.csv")
        _write_json(out / "summary.json", report.summary())
    elif which == "baseline":
        _check_keys(params, {"budget", "trials", "reference_loss"}, "study.baseline.")
        comparison = analysis.mc_baseline(
            cfg.simulator,
            cfg.objective,
            budget=int(params.get("budget", 30)),
            trials=int(params.get("trials", 5)),
            seed=cfg.seed,
            initial_samples=cfg.initial_samples,
            train_config=cfg.train,
            multistart_config=cfg.multistart,
            reference_loss=params.get("reference_loss"),
            initial_data=_study_dataset(cfg),
        )
        comparison.save_csv(out / "baseline.csv")
        for t, log in enumerate(comparison.intelligent_logs):
            log.save_jsonl(out / f"baseline_intelligent_trial{t}.jsonl")
        for t, points in enumerate(comparison.random_datasets):
            points.save_csv(out / f"baseline_random_trial{t}.csv")
        _write_json(out / "summary.json", comparison.summary())
    elif which == "predictions":
        _check_keys(params, {"validation_fraction"}, "study.predictions.")
        data = _study_dataset(cfg)
        model, _ = train_surrogate(data, cfg.train)
        rows = analysis.export_predictions(
            model, data, float(params.get("validation_fraction", 0.2))
        )
        analysis.save_predictions_csv(rows, out / "predictions.csv")
        _write_json(
            out / "summary.json",
            {"rows": len(rows), "outputs": cfg.simulator.output_dim},
        )
    else:
        raise ConfigError(f"unknown study '{which}'")
    print(f"study '{which}' written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surropt",
        description="Surrogate-guided black-box simulation optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="path to JSON config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")

    p_run = sub.add_parser("run", help="execute the full optimization loop")
    add_common(p_run)
    p_run.add_argument(
        "--resume", action="store_true", help="reuse an existing dataset.csv, no initial queries"
    )

    p_sample = sub.add_parser("sample", help="collect the initial dataset only")
    add_common(p_sample)
    p_sample.add_argument("--count", type=int, default=None, help="number of samples")

    p_study = sub.add_parser("study", help="run an analysis study")
    p_study.add_argument(
        "subcommand",
        choices=["sensitivity", "landscape", "sweep", "baseline", "predictions"],
    )
    add_common(p_study)
    p_study.add_argument("--dims", type=int, nargs=2, default=None, help="landscape input dims")
    p_study.add_argument("--resolution", type=int, default=None, help="landscape grid resolution")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out)
        if args.command == "run":
            return cmd_run(cfg, args.resume)
        if args.command == "sample":
            return cmd_sample(cfg, args.count)
        return cmd_study(cfg, args.subcommand, args.dims, args.resolution)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # simulator/training failures and the like
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
