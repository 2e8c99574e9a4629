"""
本文件应该做什么：
1. 约束模型预测（分布 / 分位）与经验损失的口径。
2. 用中心差分校验 loss_gradient（每个可训练规则 100 条样本）。
3. 约束 sgd_fit / ir_fit 的行为：沿求和梯度步进、0 轮不动参数、确定性、单轮退化、在合成真值上恢复分布（10 个种子）。

运行方法（在项目根目录执行）：
   python -m unittest survscore.tests.test_training_contract -v
"""

from __future__ import annotations

import math
import unittest

import numpy as np

from survscore.domain import SurvivalDataset, uniform_quantile_grid, uniform_time_grid
from survscore.errors import DomainError, TrainingDivergedError
from survscore.scoring.rules import WeightVector, cen_log
from survscore.scoring.weights import WeightPolicy, batch_distribution_weights, row_weights
from survscore.services.models import (
    GroupTableModel,
    LinearModel,
    LogitModel,
    predict_distribution,
    predict_quantiles,
    predictions_for,
    quantiles_from_masses,
    tails_from_masses,
)
from survscore.services.oracle import default_truths, sample_dataset, sample_grouped_dataset, total_variation
from survscore.services.training import TrainConfig, empirical_loss, ir_fit, loss_gradient, sgd_fit

FD_STEP = 1e-5


def _finite_difference(model: LogitModel, data: SurvivalDataset, rule: str, weights: np.ndarray | None) -> np.ndarray:
    base = model.get_params()
    grad = np.zeros_like(base)
    for k in range(base.size):
        step = np.zeros_like(base)
        step[k] = FD_STEP
        model.set_params(base + step)
        up = empirical_loss(model, data, rule, weights)
        model.set_params(base - step)
        down = empirical_loss(model, data, rule, weights)
        grad[k] = (up - down) / (2.0 * FD_STEP)
    model.set_params(base)
    return grad


def _feature_dataset(rng: np.random.Generator, n: int, low: float, high: float, z_max: float) -> SurvivalDataset:
    return SurvivalDataset(
        rng.uniform(low, high, size=n),
        rng.integers(0, 2, size=n),
        z_max,
        features=rng.normal(size=(n, 2)),
    )


def _group_masses(model: GroupTableModel, label: str) -> np.ndarray:
    return predict_distribution(model, label).masses


class TestPredictionContract(unittest.TestCase):
    """模型预测契约测试。"""

    def test_group_table_distribution(self) -> None:
        grid = uniform_time_grid(4.0, 4, eps=0.0)
        model = GroupTableModel(("a", "b"), 4, time_grid=grid)
        np.testing.assert_allclose(_group_masses(model, "a"), [0.25] * 4, atol=1e-15)
        params = model.params.copy()
        params[1] = np.log([1.0, 2.0, 3.0, 4.0])
        model.set_params(params.ravel())
        np.testing.assert_allclose(_group_masses(model, "b"), [0.1, 0.2, 0.3, 0.4], atol=1e-12)

        data = SurvivalDataset(np.array([1.0, 2.0]), np.array([1, 0]), 4.0, groups=("b", "a"))
        preds = predictions_for(model, data)
        np.testing.assert_allclose(preds[0].masses, [0.1, 0.2, 0.3, 0.4], atol=1e-12)
        with self.assertRaises(DomainError):
            predict_distribution(model, "zzz")

    def test_quantile_output(self) -> None:
        grid = uniform_quantile_grid(4)
        model = GroupTableModel(("a",), 4, quantile_grid=grid, z_max=10.0)
        curve = predict_quantiles(model, "a", grid, 10.0)
        np.testing.assert_allclose(curve.values, [0.0, 2.5, 5.0, 7.5, 10.0], atol=1e-12)
        with self.assertRaises(DomainError):
            predict_distribution(model, "a")
        with self.assertRaises(DomainError):
            predict_quantiles(model, "a", uniform_quantile_grid(2), 10.0)

    def test_model_construction_errors(self) -> None:
        grid = uniform_time_grid(4.0, 4, eps=0.0)
        with self.assertRaises(DomainError):
            GroupTableModel(("a",), 3, time_grid=grid)
        with self.assertRaises(DomainError):
            GroupTableModel(("a",), 4)
        with self.assertRaises(DomainError):
            GroupTableModel(("a",), 4, quantile_grid=uniform_quantile_grid(4))
        with self.assertRaises(DomainError):
            LinearModel(2, 4, scale=np.array([1.0, 0.0]), time_grid=grid)


class TestEmpiricalLossContract(unittest.TestCase):
    """经验损失与梯度契约测试。"""

    def setUp(self) -> None:
        self.rng = np.random.default_rng(17)
        self.grid = uniform_time_grid(4.0, 4, eps=0.0)

    def test_loss_is_sum_of_row_scores(self) -> None:
        model = GroupTableModel(("a", "b"), 4, time_grid=self.grid)
        model.set_params(self.rng.normal(scale=0.5, size=8))
        n = 60
        data = SurvivalDataset(
            self.rng.uniform(0.01, 2.9, size=n),
            self.rng.integers(0, 2, size=n),
            4.0,
            groups=tuple(self.rng.choice(["a", "b"], size=n).tolist()),
        )
        weights = self.rng.uniform(size=(n, 4))
        expected = math.fsum(
            cen_log(predict_distribution(model, label), obs, WeightVector(weights[r]))
            for r, (label, obs) in enumerate(data.rows())
        )
        self.assertAlmostEqual(empirical_loss(model, data, "cen_log", weights), expected, places=9)

        first, second = np.arange(0, 25), np.arange(25, n)
        split = empirical_loss(model, data.subset(first), "cen_log", weights[first]) + empirical_loss(
            model, data.subset(second), "cen_log", weights[second]
        )
        self.assertAlmostEqual(split, expected, places=9)

    def test_distribution_rule_gradients(self) -> None:
        sizes = {"cen_log": 4, "cen_log_simple": None, "cen_cont_log": None, "cen_brier": 4, "cen_rps": 3}
        for rule, width in sizes.items():
            data = _feature_dataset(self.rng, 100, 0.01, 2.9, 4.0)
            model = LinearModel(2, 4, time_grid=self.grid)
            model.set_params(self.rng.normal(scale=0.5, size=12))
            weights = None if width is None else self.rng.uniform(size=(data.n, width))
            analytic = loss_gradient(model, data, rule, weights)
            numeric = _finite_difference(model, data, rule, weights)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-6, err_msg=rule)

    def test_portnoy_gradient_away_from_kinks(self) -> None:
        qgrid = uniform_quantile_grid(4)
        model = LinearModel(2, 4, quantile_grid=qgrid, z_max=10.0)
        model.set_params(self.rng.normal(scale=0.5, size=12))
        data = _feature_dataset(self.rng, 150, 0.05, 9.0, 10.0)
        quantiles = quantiles_from_masses(model.masses_for(data), 10.0)[:, 1:-1]
        keep = np.flatnonzero(np.min(np.abs(quantiles - data.times[:, None]), axis=1) > 1e-3)
        data = data.subset(keep[:100])
        weights = self.rng.uniform(size=(data.n, 3))
        analytic = loss_gradient(model, data, "portnoy", weights)
        numeric = _finite_difference(model, data, "portnoy", weights)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-6)

    def test_infinite_rows(self) -> None:
        """
        删失点落在最后一箱时 Cen-log-simple 为 +∞：默认损失为 +∞，skip_infinite 时跳过该行。
        """
        model = GroupTableModel(("a",), 4, time_grid=self.grid)
        data = SurvivalDataset(np.array([0.5, 3.5]), np.array([1, 0]), 4.0, groups=("a", "a"))
        self.assertEqual(empirical_loss(model, data, "cen_log_simple"), math.inf)
        self.assertAlmostEqual(
            empirical_loss(model, data, "cen_log_simple", skip_infinite=True), math.log(4.0), places=12
        )
        with self.assertRaises(TrainingDivergedError):
            sgd_fit(model, data, "cen_log_simple", None, TrainConfig("cen_log_simple", skip_infinite=False))
        report = sgd_fit(model, data, "cen_log_simple", None, TrainConfig("cen_log_simple", epochs=5))
        self.assertEqual(report.skipped_rows, 1)

    def test_rule_must_match_model_output(self) -> None:
        model = GroupTableModel(("a",), 4, time_grid=self.grid)
        data = SurvivalDataset(np.array([0.5]), np.array([1]), 4.0, groups=("a",))
        with self.assertRaises(DomainError):
            empirical_loss(model, data, "portnoy", np.zeros((1, 3)))
        with self.assertRaises(DomainError):
            empirical_loss(model, data, "cen_log")


class TestTrainingContract(unittest.TestCase):
    """sgd_fit / ir_fit 契约测试。"""

    def test_train_config_validation(self) -> None:
        bad = (
            {"rule": "log"},
            {"rule": "cen_log", "learning_rate": 0.0},
            {"rule": "cen_log", "epochs": -1},
            {"rule": "cen_log", "max_outer_iters": 0},
            {"rule": "cen_log", "tol": 0.0},
            {"rule": "cen_log", "z_inf_factor": 1.0},
            {"rule": "cen_log", "fallback_w": 1.5},
        )
        for kwargs in bad:
            with self.assertRaises(DomainError, msg=str(kwargs)):
                TrainConfig(**kwargs)

    def test_zero_epochs_keeps_params(self) -> None:
        truth = default_truths()[0]
        data = sample_dataset(truth, 200, seed=0)
        model = GroupTableModel(("a",), 4, time_grid=truth.grid)
        model.set_params(np.array([0.3, -0.2, 0.1, 0.0]))
        report = sgd_fit(model, data, "cen_log_simple", None, TrainConfig("cen_log_simple", epochs=0))
        np.testing.assert_array_equal(model.get_params(), [0.3, -0.2, 0.1, 0.0])
        self.assertEqual(report.initial_loss, report.final_loss)
        self.assertEqual(report.epochs_run, 0)

    def test_sgd_recovers_uncensored_distribution(self) -> None:
        truth = default_truths()[0].with_censoring(((10.0, 1.0),))
        data = sample_dataset(truth, 5000, seed=1)
        self.assertEqual(data.censored_fraction, 0.0)
        model = GroupTableModel(("a",), 4, time_grid=truth.grid)
        cfg = TrainConfig("cen_log_simple", learning_rate=1.0 / data.n, epochs=500)
        report = sgd_fit(model, data, "cen_log_simple", None, cfg)
        self.assertLess(report.final_loss, report.initial_loss)

        frequencies = np.bincount(truth.grid.bin_indices(data.times), minlength=4) / data.n
        np.testing.assert_allclose(_group_masses(model, "a"), frequencies, atol=1e-6)
        self.assertLess(total_variation(_group_masses(model, "a"), truth.event_cdf.masses), 0.05)

    def test_fits_are_deterministic(self) -> None:
        truths = default_truths()
        data = sample_grouped_dataset(truths, 400, seed=3)
        cfg = TrainConfig("cen_log", learning_rate=0.5 / data.n, epochs=50, max_outer_iters=3)
        params = []
        for _ in range(2):
            model = GroupTableModel(("a", "b"), 4, time_grid=truths[0].grid)
            ir_fit(model, data, "cen_log", cfg)
            params.append(model.get_params())
        np.testing.assert_array_equal(params[0], params[1])

    def test_ir_single_pass_cases(self) -> None:
        truth = default_truths()[0]
        censored = sample_dataset(truth, 300, seed=2)
        model = GroupTableModel(("a",), 4, time_grid=truth.grid)
        report = ir_fit(model, censored, "cen_log_simple", TrainConfig("cen_log_simple", epochs=10))
        self.assertEqual(report.outer_iters, 1)
        self.assertTrue(report.converged)

        uncensored = sample_dataset(truth.with_censoring(((10.0, 1.0),)), 300, seed=2)
        model = GroupTableModel(("a",), 4, time_grid=truth.grid)
        report = ir_fit(model, uncensored, "cen_log", TrainConfig("cen_log", epochs=10, max_outer_iters=5))
        self.assertEqual(report.outer_iters, 1)

    def test_one_outer_iteration_equals_sgd_fit(self) -> None:
        truth = default_truths()[1]
        data = sample_dataset(truth, 500, seed=6)
        cfg = TrainConfig("cen_log", learning_rate=0.5 / data.n, epochs=40, max_outer_iters=1)

        via_ir = GroupTableModel(("b",), 4, time_grid=truth.grid)
        report = ir_fit(via_ir, data, "cen_log", cfg)
        self.assertEqual(report.outer_iters, 1)

        direct = GroupTableModel(("b",), 4, time_grid=truth.grid)
        weights, _ = row_weights(
            "cen_log", tails_from_masses(direct.masses_for(data)), data.times, data.events, direct.grid, WeightPolicy()
        )
        sgd_fit(direct, data, "cen_log", weights, cfg)
        np.testing.assert_allclose(via_ir.get_params(), direct.get_params(), rtol=1e-12, atol=1e-14)

    def test_one_epoch_steps_on_summed_gradient(self) -> None:
        truth = default_truths()[0]
        data = sample_dataset(truth, 300, seed=4)
        model = GroupTableModel(("a",), 4, time_grid=truth.grid)
        model.set_params(np.array([0.2, -0.1, 0.0, 0.3]))
        before = model.get_params()
        weights, _ = row_weights(
            "cen_log", tails_from_masses(model.masses_for(data)), data.times, data.events, model.grid, WeightPolicy()
        )
        expected = before - 1e-3 * loss_gradient(model, data, "cen_log", weights)
        sgd_fit(model, data, "cen_log", weights, TrainConfig("cen_log", epochs=1))
        np.testing.assert_allclose(model.get_params(), expected, rtol=1e-12, atol=1e-14)

    def test_ir_recovers_censored_distribution(self) -> None:
        """
        默认两组真值（约 3 成删失）、8 箱、2 万行，种子 0..9：IR 估计与真值的 TV < 0.05；
        用真值权重训练的结果不应明显更好。
        """
        grid = uniform_time_grid(10.0, 8, eps=0.0)
        truths = tuple(truth.rebin(grid) for truth in default_truths())
        by_group = {truth.group: truth for truth in truths}

        def true_weights(d: SurvivalDataset) -> np.ndarray:
            assert d.groups is not None
            tails = np.vstack([by_group[label].event_cdf.tail_knots for label in d.groups])
            matrix, _ = batch_distribution_weights("cen_log", tails, d.times, d.events, grid)
            return matrix

        for seed in range(10):
            data = sample_grouped_dataset(truths, 20000, seed=seed)
            cfg = TrainConfig("cen_log", learning_rate=1.0 / data.n, epochs=500, max_outer_iters=100, tol=1e-6)

            estimated = GroupTableModel(("a", "b"), 8, time_grid=grid)
            ir_fit(estimated, data, "cen_log", cfg)
            oracle = GroupTableModel(("a", "b"), 8, time_grid=grid)
            ir_fit(oracle, data, "cen_log", cfg, weight_provider=true_weights)

            for label, truth in by_group.items():
                with self.subTest(seed=seed, group=label):
                    tv_est = total_variation(_group_masses(estimated, label), truth.event_cdf.masses)
                    tv_true = total_variation(_group_masses(oracle, label), truth.event_cdf.masses)
                    self.assertLess(tv_est, 0.05)
                    self.assertLessEqual(tv_true, tv_est + 0.01)

    def test_portnoy_ir_runs_on_quantile_model(self) -> None:
        truth = default_truths()[0]
        data = sample_dataset(truth, 400, seed=9)
        model = GroupTableModel(("a",), 4, quantile_grid=uniform_quantile_grid(4), z_max=data.z_max)
        cfg = TrainConfig("portnoy", learning_rate=0.05 / data.n, epochs=100, max_outer_iters=4)
        report = ir_fit(model, data, "portnoy", cfg)
        self.assertGreaterEqual(report.outer_iters, 1)
        curve = predict_quantiles(model, "a", uniform_quantile_grid(4), data.z_max)
        self.assertTrue(np.all(np.diff(curve.values) > 0.0))


if __name__ == "__main__":
    unittest.main()
