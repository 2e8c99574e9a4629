"""
评分规则契约测试。

覆盖点：
1. 各规则在手算样例上的取值。
2. δ=1 时删失规则退化为对应参考规则（逐位一致）。
3. 批量评分与单条评分一致；log(0) 以 +∞ 返回而不是抛异常；分位型评分与模型预测使用同一条截断曲线。

运行方法（在项目根目录执行）：
   python -m unittest survscore.tests.test_scoring_contract -v
"""

from __future__ import annotations

import math
import unittest

import numpy as np
from scipy.special import softmax

from survscore.domain import BinMassCdf, CensoredObservation, QuantileCurve, TimeGrid, uniform_quantile_grid
from survscore.domain import uniform_time_grid
from survscore.errors import DomainError
from survscore.scoring.batch import batch_scores
from survscore.scoring.rules import (
    PortnoyConfig,
    WeightVector,
    brier,
    cen_binary_brier,
    cen_brier,
    cen_cont_log,
    cen_log,
    cen_log_simple,
    cen_rps,
    get_rule,
    log_score,
    pinball,
    portnoy,
    rps,
)
from survscore.scoring.weights import cen_brier_weights, cen_log_weights, cen_rps_weights
from survscore.services.models import GroupTableModel, predict_quantiles

LOG2 = math.log(2.0)


def _cdf(knots: tuple[float, ...], masses: tuple[float, ...]) -> BinMassCdf:
    return BinMassCdf(TimeGrid(np.array(knots)), np.array(masses))


def _random_cdf(rng: np.random.Generator) -> BinMassCdf:
    n_bins = int(rng.integers(2, 7))
    upper = float(rng.uniform(1.0, 20.0))
    return BinMassCdf(uniform_time_grid(upper, n_bins, eps=0.0), rng.dirichlet(np.ones(n_bins)))


def _random_time(rng: np.random.Generator, upper: float) -> float:
    # (0, upper]
    return upper * (1.0 - float(rng.random()))


class TestScoringContract(unittest.TestCase):
    """单条评分规则契约测试。"""

    def test_pinball_examples(self) -> None:
        self.assertAlmostEqual(pinball(2.0, 1.0, 0.9), 0.1, places=12)
        self.assertEqual(pinball(3.0, 3.0, 0.3), 0.0)
        self.assertAlmostEqual(pinball(1.0, 3.0, 0.25), 0.5, places=12)
        with self.assertRaises(DomainError):
            pinball(1.0, 2.0, 1.5)

    def test_portnoy_examples(self) -> None:
        grid = uniform_quantile_grid(10)
        values = np.array([0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 2.0, 2.5])
        curve = QuantileCurve(grid, values)
        cfg = PortnoyConfig(tau=0.9, z_infinity=10.0, w=0.5)
        self.assertAlmostEqual(portnoy(curve, CensoredObservation(1.0, 1), cfg), 0.1, places=12)

        half = QuantileCurve(uniform_quantile_grid(2), np.array([0.0, 2.0, 3.0]))
        censored = CensoredObservation(1.0, 0)
        self.assertAlmostEqual(portnoy(half, censored, PortnoyConfig(0.5, 10.0, 0.5)), 2.25, places=12)
        self.assertEqual(portnoy(half, censored, PortnoyConfig(0.5, 10.0, 1.0)), pinball(2.0, 1.0, 0.5))

    def test_portnoy_rejects_off_grid_level_and_small_z_infinity(self) -> None:
        curve = QuantileCurve(uniform_quantile_grid(2), np.array([0.0, 2.0, 3.0]))
        with self.assertRaises(DomainError):
            portnoy(curve, CensoredObservation(1.0, 0), PortnoyConfig(0.3, 10.0, 0.5))
        with self.assertRaises(DomainError):
            portnoy(curve, CensoredObservation(1.0, 0), PortnoyConfig(0.5, 2.0, 0.5))

    def test_log_family_examples(self) -> None:
        half = _cdf((0.0, 1.0, 2.0), (0.5, 0.5))
        skew = _cdf((0.0, 1.0, 2.0), (0.25, 0.75))
        self.assertAlmostEqual(log_score(half, 0.5), LOG2, places=12)
        self.assertAlmostEqual(log_score(skew, 1.5), 0.287682072451781, places=12)

        censored = CensoredObservation(0.5, 0)
        self.assertAlmostEqual(cen_log(skew, censored, WeightVector(np.array([0.0, 0.0]))), 0.287682072451781)
        self.assertAlmostEqual(cen_log(skew, censored, WeightVector(np.array([1.0, 0.0]))), 1.386294361119891)
        self.assertAlmostEqual(cen_log_simple(skew, censored), 0.287682072451781, places=12)
        self.assertEqual(cen_log_simple(skew, CensoredObservation(1.5, 1)), log_score(skew, 1.5))

        near_perfect = _cdf((0.0, 1.0, 2.0, 3.0), (0.0, 1.0, 0.0))
        self.assertLess(log_score(near_perfect, 1.5), 1e-10)

    def test_log_of_zero_is_infinite(self) -> None:
        """
        z=ζ_B 的删失行在 w=0 时得分为 +∞，以数值返回。
        """
        cdf = _cdf((0.0, 1.0, 2.0), (0.5, 0.5))
        score = cen_log_simple(cdf, CensoredObservation(2.0, 0))
        self.assertEqual(score, math.inf)

    def test_cen_cont_log_examples(self) -> None:
        cdf = _cdf((0.0, 2.0), (1.0,))
        self.assertAlmostEqual(cen_cont_log(cdf, CensoredObservation(1.0, 1)), LOG2, places=12)
        self.assertAlmostEqual(cen_cont_log(cdf, CensoredObservation(1.0, 0)), LOG2, places=12)
        unit = _cdf((0.0, 1.0, 2.0), (0.25, 0.75))
        self.assertAlmostEqual(
            cen_cont_log(unit, CensoredObservation(1.5, 1)), cen_log_simple(unit, CensoredObservation(1.5, 1))
        )

    def test_brier_family_examples(self) -> None:
        half = _cdf((0.0, 1.0, 2.0), (0.5, 0.5))
        skew = _cdf((0.0, 1.0, 2.0), (0.25, 0.75))
        self.assertAlmostEqual(brier(half, 0.5), 0.5, places=12)
        self.assertAlmostEqual(brier(skew, 1.5), 0.125, places=12)
        self.assertLess(brier(_cdf((0.0, 1.0, 2.0), (1.0, 0.0)), 0.5), 1e-20)

        censored = CensoredObservation(0.5, 0)
        self.assertAlmostEqual(cen_brier(half, censored, WeightVector(np.array([0.0, 1.0]))), 0.5, places=12)
        self.assertAlmostEqual(
            cen_brier(half, censored, WeightVector(np.array([1.0 / 3.0, 2.0 / 3.0]))), 0.5, places=12
        )

    def test_cen_binary_brier_examples(self) -> None:
        cdf = _cdf((0.0, 0.8, 2.0), (0.7, 0.3))
        self.assertAlmostEqual(cen_binary_brier(cdf, CensoredObservation(0.5, 0), 0.8, 0.6), 0.25, places=12)
        zero_before = _cdf((0.0, 0.8, 2.0), (0.0, 1.0))
        self.assertLess(cen_binary_brier(zero_before, CensoredObservation(1.5, 0), 0.8, 0.6), 1e-20)
        one_before = _cdf((0.0, 0.8, 2.0), (1.0, 0.0))
        self.assertLess(cen_binary_brier(one_before, CensoredObservation(0.5, 1), 0.8, 0.0), 1e-20)
        with self.assertRaises(DomainError):
            cen_binary_brier(cdf, CensoredObservation(0.5, 0), 2.0, 0.6)

    def test_rps_family_examples(self) -> None:
        half = _cdf((0.0, 1.0, 2.0), (0.5, 0.5))
        skew = _cdf((0.0, 1.0, 2.0), (0.25, 0.75))
        self.assertAlmostEqual(rps(half, 0.5), 0.25, places=12)
        self.assertAlmostEqual(rps(skew, 1.5), 0.0625, places=12)
        self.assertEqual(rps(_cdf((0.0, 1.0), (1.0,)), 0.5), 0.0)

        censored = CensoredObservation(0.5, 0)
        value = cen_rps(skew, censored, WeightVector(np.array([1.0 / 3.0])))
        self.assertAlmostEqual(value, (1.0 / 3.0) * 0.75**2 + (2.0 / 3.0) * 0.25**2, places=12)
        self.assertEqual(value, cen_binary_brier(skew, censored, 1.0, 1.0 / 3.0))

    def test_weight_length_is_checked(self) -> None:
        cdf = _cdf((0.0, 1.0, 2.0), (0.5, 0.5))
        with self.assertRaises(DomainError):
            cen_log(cdf, CensoredObservation(0.5, 0), WeightVector(np.array([0.0])))
        with self.assertRaises(DomainError):
            cen_rps(cdf, CensoredObservation(0.5, 0), WeightVector(np.array([0.0, 0.0])))
        with self.assertRaises(DomainError):
            WeightVector(np.array([1.5]))

    def test_uncensored_reduction_is_bit_exact(self) -> None:
        """
        δ=1 时：cen_log=log，cen_brier(one-hot)=brier，cen_rps=rps，portnoy=pinball。
        """
        rng = np.random.default_rng(7)
        for _ in range(1000):
            cdf = _random_cdf(rng)
            z = _random_time(rng, cdf.upper)
            obs = CensoredObservation(z, 1)
            n_bins = cdf.n_bins

            noise = WeightVector(rng.random(n_bins))
            self.assertEqual(cen_log(cdf, obs, noise), log_score(cdf, z))
            one_hot = np.zeros(n_bins)
            one_hot[cdf.grid.bin_index(z)] = 1.0
            self.assertEqual(cen_brier(cdf, obs, WeightVector(one_hot)), brier(cdf, z))
            self.assertEqual(cen_rps(cdf, obs, WeightVector(rng.random(n_bins - 1))), rps(cdf, z))

            grid = uniform_quantile_grid(n_bins)
            curve = QuantileCurve.from_cdf(cdf, grid)
            level = int(rng.integers(0, n_bins + 1))
            tau = float(grid.levels[level])
            cfg = PortnoyConfig(tau, 2.0 * cdf.upper, float(rng.random()))
            self.assertEqual(portnoy(curve, obs, cfg), pinball(float(curve.values[level]), z, tau))

    def test_registry(self) -> None:
        self.assertEqual(get_rule("cen_rps").weight_size, -1)
        self.assertTrue(get_rule("portnoy").needs_weights)
        self.assertFalse(get_rule("cen_log_simple").needs_weights)
        with self.assertRaises(KeyError):
            get_rule("crps")


class TestBatchScoringContract(unittest.TestCase):
    """批量评分与单条评分一致性测试。"""

    def _random_instance(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray, TimeGrid]:
        n_bins = int(rng.integers(2, 6))
        grid = uniform_time_grid(float(rng.uniform(1.0, 10.0)), n_bins, eps=0.0)
        n = 12
        logits = rng.normal(size=(n, n_bins))
        times = np.array([_random_time(rng, grid.upper) for _ in range(n)])
        events = rng.integers(0, 2, size=n)
        return logits, times, events, grid

    def test_distribution_rules_match_scalar(self) -> None:
        scalar_rules = {
            "log": lambda cdf, obs, w: log_score(cdf, obs.z),
            "cen_log_simple": lambda cdf, obs, w: cen_log_simple(cdf, obs),
            "cen_cont_log": lambda cdf, obs, w: cen_cont_log(cdf, obs),
            "cen_log": lambda cdf, obs, w: cen_log(cdf, obs, w),
            "cen_brier": lambda cdf, obs, w: cen_brier(cdf, obs, w),
            "cen_rps": lambda cdf, obs, w: cen_rps(cdf, obs, w),
        }
        weight_fns = {"cen_log": cen_log_weights, "cen_brier": cen_brier_weights, "cen_rps": cen_rps_weights}
        rng = np.random.default_rng(11)
        for rule, scalar in scalar_rules.items():
            for _ in range(20):
                logits, times, events, grid = self._random_instance(rng)
                if rule == "log":
                    events = np.ones_like(events)
                preds = [BinMassCdf(grid, softmax(row)) for row in logits]
                obs = [CensoredObservation(float(z), int(d)) for z, d in zip(times, events)]
                weights = None
                vectors: list[WeightVector | None] = [None] * len(obs)
                if rule in weight_fns:
                    vectors = [weight_fns[rule](pred, ob, grid) for pred, ob in zip(preds, obs)]
                    weights = np.vstack([v.weights for v in vectors if v is not None])
                result = batch_scores(rule, logits, times, events, grid, weights)
                expected = [scalar(pred, ob, vec) for pred, ob, vec in zip(preds, obs, vectors)]
                for got, want in zip(result.scores.tolist(), expected):
                    if math.isinf(want):
                        self.assertEqual(got, math.inf)
                    else:
                        self.assertAlmostEqual(got, want, places=9, msg=rule)

    def test_infinite_rows_are_masked(self) -> None:
        grid = uniform_time_grid(2.0, 2, eps=0.0)
        logits = np.zeros((2, 2))
        result = batch_scores(
            "cen_log_simple", logits, np.array([2.0, 0.5]), np.array([0, 1]), grid, with_grad=True
        )
        np.testing.assert_array_equal(result.infinite, [True, False])
        assert result.grad is not None
        np.testing.assert_array_equal(result.grad[0], [0.0, 0.0])
        self.assertAlmostEqual(float(result.scores[1]), LOG2, places=12)

    def test_pinball_uses_same_quantiles_as_prediction(self) -> None:
        """
        极端 logits 下中间增量被截断到 1e-12：批量 pinball 与 predict_quantiles 给出的曲线逐点一致。
        """
        qgrid = uniform_quantile_grid(4)
        model = GroupTableModel(("a",), 4, quantile_grid=qgrid, z_max=10.0)
        model.set_params(np.array([0.0, -60.0, -60.0, 0.0]))
        curve = predict_quantiles(model, "a", qgrid, 10.0)
        self.assertTrue(np.all(np.diff(curve.values) > 0.0))

        y = 5.0
        logits = model.get_params().reshape(1, -1)
        result = batch_scores("pinball", logits, np.array([y]), np.array([1]), qgrid, scale=10.0)
        expected = math.fsum(
            pinball(float(curve.values[k]), y, float(qgrid.levels[k])) for k in range(1, qgrid.n_bins)
        )
        self.assertAlmostEqual(float(result.scores[0]), expected, delta=1e-15)
        self.assertGreater(float(result.scores[0]), 1e-12)

    def test_shape_mismatch_rejected(self) -> None:
        grid = uniform_time_grid(2.0, 2, eps=0.0)
        with self.assertRaises(DomainError):
            batch_scores("log", np.zeros((2, 3)), np.array([0.5, 1.0]), np.array([1, 1]), grid)
        with self.assertRaises(DomainError):
            batch_scores("cen_log", np.zeros((2, 2)), np.array([0.5, 1.0]), np.array([1, 0]), grid)


if __name__ == "__main__":
    unittest.main()
