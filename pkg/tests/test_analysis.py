import numpy as np
import pytest

from surropt.analysis import (
    export_predictions,
    landscape,
    mc_baseline,
    save_predictions_csv,
    sensitivity,
    training_size_sweep,
)
from surropt.dataset import Dataset
from surropt.inputopt import MultiStartConfig
from surropt.objective import ObjectiveSpec, loss
from surropt.qmc import BoundsSpec, SobolSequence
from surropt.simbench import (
    TOY_DEFAULT_TARGETS,
    TOY_DEFAULT_WEIGHTS,
    Simulator,
    SimulatorError,
    ToyFlareSim,
    benchmark_sim,
)
from surropt.surrogate import Standardizer, SurrogateModel, TrainConfig, train

FAST = TrainConfig(hidden_layers=[16], max_epochs=60, early_stop_patience=15)


def identity_model(dim):
    return SurrogateModel(
        layer_sizes=[dim, dim],
        weights=[np.eye(dim)],
        biases=[np.zeros(dim)],
        standardizer=Standardizer.identity(dim, dim),
    )


class TestSensitivity:
    def test_single_relevant_input_ranks_first(self):
        rng = np.random.default_rng(0)
        x = rng.random((120, 3))
        y = x[:, [0]] * 2.0  # only input 0 matters
        report = sensitivity(Dataset(x, y), FAST, seeds=[0, 1])
        assert report.ranking[0] == 0
        assert report.entries_by_index(0).increase_abs > 0.1

    def test_duplicated_column_is_redundant(self):
        rng = np.random.default_rng(1)
        x = rng.random((120, 3))
        x[:, 1] = x[:, 0]  # duplicate of input 0
        y = (x[:, [0]] + 2.0 * x[:, [2]])
        report = sensitivity(Dataset(x, y), FAST, seeds=[0, 1])
        # dropping either duplicate keeps the information, so neither leads
        assert report.ranking[0] == 2
        for idx in (0, 1):
            assert abs(report.entries_by_index(idx).increase_abs) < 0.05

    def test_csv_has_baseline_plus_one_row_per_input(self, tmp_path):
        rng = np.random.default_rng(2)
        x = rng.random((40, 3))
        report = sensitivity(Dataset(x, x[:, [0]]), FAST, seeds=[0])
        path = tmp_path / "sensitivity.csv"
        report.save_csv(path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 1 + 1 + 3  # header, baseline, one per input

    def test_input_names_respected(self):
        rng = np.random.default_rng(3)
        x = rng.random((40, 2))
        report = sensitivity(Dataset(x, x[:, [0]]), FAST, seeds=[0], input_names=["a", "b"])
        assert {e.name for e in report.entries} == {"a", "b"}

    def test_needs_two_inputs(self):
        data = Dataset(np.random.rand(20, 1), np.random.rand(20, 1))
        with pytest.raises(ValueError):
            sensitivity(data, FAST, seeds=[0])


class TestLandscape:
    def _spec(self):
        return ObjectiveSpec([0.0], [1.0], BoundsSpec(np.zeros(3), np.ones(3)))

    def test_surrogate_grid_matches_pointwise_loss(self):
        rng = np.random.default_rng(4)
        model = SurrogateModel(
            layer_sizes=[3, 4, 1],
            weights=[rng.normal(0, 0.5, (4, 3)), rng.normal(0, 0.5, (1, 4))],
            biases=[np.zeros(4), np.zeros(1)],
            standardizer=Standardizer.identity(3, 1),
        )
        spec = self._spec()
        frozen = np.full(3, 0.5)
        grid = landscape(model, spec, (0, 2), frozen, resolution=3)
        assert grid.losses.shape == (3, 3)
        for i, a in enumerate(grid.grid_axis_1):
            for j, b in enumerate(grid.grid_axis_2):
                x = frozen.copy()
                x[0], x[2] = a, b
                y_std = model.predict_std(model.standardizer.standardize_input(x))
                assert grid.losses[i, j] == loss(spec, y_std, x, model.standardizer)

    def test_constant_surrogate_gives_flat_grid(self):
        model = SurrogateModel(
            layer_sizes=[3, 1],
            weights=[np.zeros((1, 3))],
            biases=[np.array([0.7])],
            standardizer=Standardizer.identity(3, 1),
        )
        grid = landscape(model, self._spec(), (0, 1), np.full(3, 0.5), resolution=4)
        assert np.all(grid.losses == grid.losses[0, 0])

    def test_simulator_grid_counts_queries_and_marks_failures(self):
        class HoleySim(Simulator):
            def __init__(self):
                super().__init__(2, 1, BoundsSpec(np.zeros(2), np.ones(2)))

            def _evaluate(self, x):
                if x[0] > 0.9:
                    raise SimulatorError("hole")
                return np.array([x.sum()])

        sim = HoleySim()
        spec = ObjectiveSpec([0.0], [1.0], sim.bounds)
        std = Standardizer.identity(2, 1)
        grid = landscape(sim, spec, (0, 1), np.full(2, 0.5), resolution=5, standardizer=std)
        assert sim.query_count == 25
        assert grid.source == "simulator"
        assert np.isnan(grid.losses[-1]).all()  # x0 = 1.0 column failed
        assert np.isfinite(grid.losses[0]).all()

    def test_validation(self):
        model = identity_model(3)
        spec = self._spec()
        with pytest.raises(ValueError):
            landscape(model, spec, (0, 0), np.full(3, 0.5), 3)
        with pytest.raises(ValueError):
            landscape(model, spec, (0, 1), np.full(3, 0.5), 1)
        with pytest.raises(ValueError):
            landscape(model, spec, (0, 1), np.full(3, 2.0), 3)

    def test_csv_cell_count(self, tmp_path):
        grid = landscape(identity_model(3), self._spec(), (1, 2), np.full(3, 0.5), 5)
        grid.save_csv(tmp_path / "grid.csv")
        lines = (tmp_path / "grid.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 25


class TestTrainingSizeSweep:
    def test_single_size_yields_one_row(self):
        sim = benchmark_sim("sphere")
        report = training_size_sweep(sim, [40], [0], FAST, heldout_size=30)
        assert len(report.rows) == 1
        assert report.rows[0].size == 40
        assert np.isfinite(report.rows[0].mean_mae)

    def test_more_data_helps_on_toy(self):
        sim = ToyFlareSim()
        report = training_size_sweep(sim, [50, 300], [0, 1], TrainConfig(), heldout_size=100)
        assert report.rows[1].mean_mae < report.rows[0].mean_mae

    def test_rejects_unsorted_sizes(self):
        with pytest.raises(ValueError):
            training_size_sweep(benchmark_sim("sphere"), [100, 50], [0], FAST)

    def test_csv_shape(self, tmp_path):
        sim = benchmark_sim("sphere")
        report = training_size_sweep(sim, [30, 60], [0, 1], FAST, heldout_size=20)
        report.save_csv(tmp_path / "sweep.csv")
        lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "training_size,mean_val_mae,seed_0,seed_1"
        assert len(lines) == 3


class TestMcBaseline:
    def _setup(self):
        sim = ToyFlareSim()
        spec = ObjectiveSpec(TOY_DEFAULT_TARGETS, TOY_DEFAULT_WEIGHTS, sim.bounds)
        return sim, spec

    def test_budget_one_single_point_curves(self):
        sim, spec = self._setup()
        comp = mc_baseline(
            sim, spec, budget=1, trials=1, seed=0, initial_samples=24,
            train_config=FAST, multistart_config=MultiStartConfig(num_starts=4, num_steps=30),
        )
        assert comp.intelligent_curves.shape == (1, 1)
        assert comp.random_curves.shape == (1, 1)

    def test_equal_query_budgets(self):
        sim, spec = self._setup()
        mc_baseline(
            sim, spec, budget=3, trials=2, seed=1, initial_samples=24,
            train_config=FAST, multistart_config=MultiStartConfig(num_starts=4, num_steps=30),
        )
        # shared initial collection + per-trial equal budgets for both arms
        assert sim.query_count == 24 + 2 * (3 + 3)

    def test_determinism(self):
        curves = []
        for _ in range(2):
            sim, spec = self._setup()
            comp = mc_baseline(
                sim, spec, budget=2, trials=1, seed=2, initial_samples=24,
                train_config=FAST, multistart_config=MultiStartConfig(num_starts=4, num_steps=30),
            )
            curves.append((comp.intelligent_curves.copy(), comp.random_curves.copy(), comp.speedup_factor))
        assert np.array_equal(curves[0][0], curves[1][0])
        assert np.array_equal(curves[0][1], curves[1][1])
        assert curves[0][2] == curves[1][2]

    def test_curves_are_non_increasing(self):
        sim, spec = self._setup()
        comp = mc_baseline(
            sim, spec, budget=4, trials=1, seed=3, initial_samples=24,
            train_config=FAST, multistart_config=MultiStartConfig(num_starts=4, num_steps=30),
        )
        assert np.all(np.diff(comp.intelligent_curves[0]) <= 0)
        assert np.all(np.diff(comp.random_curves[0]) <= 0)

    def test_csv_rows(self, tmp_path):
        sim, spec = self._setup()
        comp = mc_baseline(
            sim, spec, budget=3, trials=1, seed=4, initial_samples=24,
            train_config=FAST, multistart_config=MultiStartConfig(num_starts=4, num_steps=30),
        )
        comp.save_csv(tmp_path / "baseline.csv")
        lines = (tmp_path / "baseline.csv").read_text().strip().splitlines()
        assert lines[0] == "query,mean_intelligent,mean_random"
        assert len(lines) == 4


class TestExportPredictions:
    def test_identity_model_predicts_exactly(self):
        rng = np.random.default_rng(6)
        x = rng.random((50, 3))
        model = identity_model(3)
        rows = export_predictions(model, Dataset(x, x.copy()))
        assert len(rows) == 3 * 10  # 20% of 50 per output
        for _, actual, predicted in rows:
            assert abs(actual - predicted) < 1e-6

    def test_toy_model_correlation_above_0p9(self):
        sim = ToyFlareSim()
        x = SobolSequence(13).sample_batch(400, sim.bounds)
        y = np.array([sim.evaluate(v) for v in x])
        data = Dataset(x, y)
        model, _ = train(data, TrainConfig(seed=0))
        rows = np.array(export_predictions(model, data), dtype=float)
        for k in range(3):
            sel = rows[rows[:, 0] == k]
            corr = np.corrcoef(sel[:, 1], sel[:, 2])[0, 1]
            assert corr > 0.9, f"output {k}: r={corr}"

    def test_empty_heldout_split_rejected(self):
        x = np.random.rand(2, 2)
        model = identity_model(2)
        with pytest.raises(Exception):
            export_predictions(model, Dataset(x, x.copy()))

    def test_csv_output(self, tmp_path):
        x = np.random.default_rng(7).random((20, 2))
        rows = export_predictions(identity_model(2), Dataset(x, x.copy()))
        save_predictions_csv(rows, tmp_path / "pred.csv")
        lines = (tmp_path / "pred.csv").read_text().strip().splitlines()
        assert lines[0] == "output_index,actual,predicted"
        assert len(lines) == 1 + len(rows)


class TestParallelism:
    def test_thread_pool_matches_serial_results(self, monkeypatch):
        rng = np.random.default_rng(11)
        x = rng.random((60, 3))
        data = Dataset(x, x[:, [0]] + x[:, [2]])
        monkeypatch.delenv("SURROPT_THREADS", raising=False)
        serial = sensitivity(data, FAST, seeds=[0, 1])
        monkeypatch.setenv("SURROPT_THREADS", "2")
        threaded = sensitivity(data, FAST, seeds=[0, 1])
        assert serial.ranking == threaded.ranking
        assert serial.baseline_loss == threaded.baseline_loss
        for a, b in zip(serial.entries, threaded.entries):
            assert a.loss_without_input == b.loss_without_input


class TestLandscapeAgreement:
    def test_surrogate_grid_tracks_true_grid_gradients(self):
        # Adjacent-cell loss differences must mostly agree in sign between
        # the surrogate landscape and the true simulator landscape.
        sim = ToyFlareSim()
        x = SobolSequence(13).sample_batch(400, sim.bounds)
        y = np.array([sim.evaluate(v) for v in x])
        model, _ = train(Dataset(x, y), TrainConfig(seed=0))
        spec = ObjectiveSpec(TOY_DEFAULT_TARGETS, TOY_DEFAULT_WEIGHTS, sim.bounds)
        frozen = np.full(13, 0.5)
        surrogate_grid = landscape(model, spec, (5, 2), frozen, 21)
        true_grid = landscape(sim, spec, (5, 2), frozen, 21, standardizer=model.standardizer)
        agree = total = 0
        for axis in (0, 1):
            d_s = np.diff(surrogate_grid.losses, axis=axis)
            d_t = np.diff(true_grid.losses, axis=axis)
            agree += int(np.sum(np.sign(d_s) == np.sign(d_t)))
            total += d_s.size
        assert agree / total >= 0.7
