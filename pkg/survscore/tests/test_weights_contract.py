"""
本文件应该做什么：
1. 约束四种删失权重在手算样例上的取值与退化标记。
2. 约束权重不变量：取值在 [0, 1]、cen_brier 权重和为 1、网格加密时 cen_log 权重不增。
3. 保证批量权重与单条权重一致。
"""

from __future__ import annotations

import unittest

import numpy as np

from survscore.domain import BinMassCdf, CensoredObservation, TimeGrid, uniform_quantile_grid, uniform_time_grid
from survscore.errors import DomainError
from survscore.scoring.weights import (
    WeightPolicy,
    batch_distribution_weights,
    batch_portnoy_weights,
    cen_brier_weights,
    cen_log_weights,
    cen_rps_weights,
    portnoy_level_weights,
    portnoy_weight,
    portnoy_weights_from_levels,
    row_weights,
)


def _uniform(upper: float, knots: tuple[float, ...] | None = None) -> BinMassCdf:
    grid = TimeGrid(np.array(knots if knots is not None else (0.0, upper)))
    return BinMassCdf(grid, grid.widths / upper)


class _StepSurvival:
    """全部质量位于 t0 之前的参考分布：t ≥ t0 时 S(t)=0。"""

    def __init__(self, t0: float) -> None:
        self.t0 = t0

    def cdf_at(self, t: float) -> float:
        return 1.0 if t >= self.t0 else t / self.t0

    def survival_at(self, t: float) -> float:
        return 1.0 - self.cdf_at(t)


class TestPortnoyWeightContract(unittest.TestCase):
    """Portnoy 权重契约测试。"""

    def test_examples(self) -> None:
        ref = _uniform(1.0)
        policy = WeightPolicy()
        self.assertAlmostEqual(portnoy_weight(ref, 0.5, 0.75, policy), 0.5, places=12)
        self.assertEqual(portnoy_weight(ref, 0.5, 0.5, policy), 0.0)
        self.assertEqual(portnoy_weight(ref, 0.5, 0.25, policy), 1.0)
        self.assertEqual(portnoy_weight(ref, 0.5, 0.25, WeightPolicy(fallback_w=0.3)), 0.3)

    def test_invalid_inputs(self) -> None:
        ref = _uniform(1.0)
        with self.assertRaises(DomainError):
            portnoy_weight(ref, 0.0, 0.5, WeightPolicy())
        with self.assertRaises(DomainError):
            portnoy_weight(ref, 0.5, 1.5, WeightPolicy())
        with self.assertRaises(DomainError):
            WeightPolicy(fallback_w=1.5)

    def test_tau_c_one(self) -> None:
        """
        τ_c = 1：τ=1 时取极限值 1；内部水平都有 τ_c > τ，走回退值。
        """
        ref = _uniform(1.0)
        self.assertEqual(portnoy_weight(ref, 1.0, 1.0, WeightPolicy(0.2)), 1.0)
        vector = portnoy_level_weights(ref, CensoredObservation(1.0, 0), uniform_quantile_grid(2), WeightPolicy(0.2))
        np.testing.assert_array_equal(vector.weights, [0.2])
        matrix, flagged = portnoy_weights_from_levels(
            np.array([1.0]), np.array([0]), uniform_quantile_grid(2), WeightPolicy(0.2)
        )
        self.assertEqual(flagged, 0)
        np.testing.assert_array_equal(matrix, [[0.2]])

    def test_level_weights_and_batch(self) -> None:
        grid = uniform_quantile_grid(4)
        policy = WeightPolicy()
        matrix, flagged = portnoy_weights_from_levels(np.array([0.5, 0.5]), np.array([0, 1]), grid, policy)
        self.assertEqual(flagged, 0)
        np.testing.assert_allclose(matrix[0], [1.0, 0.0, 0.5], atol=1e-15)
        np.testing.assert_array_equal(matrix[1], [0.0, 0.0, 0.0])

        ref = _uniform(1.0)
        vector = portnoy_level_weights(ref, CensoredObservation(0.5, 0), grid, policy)
        np.testing.assert_allclose(vector.weights, matrix[0], atol=1e-15)

        values = np.tile(np.linspace(0.0, 1.0, 5), (1, 1))
        batch, _ = batch_portnoy_weights(values, np.array([0.5]), np.array([0]), grid, policy)
        np.testing.assert_allclose(batch[0], matrix[0], atol=1e-12)


class TestDistributionWeightContract(unittest.TestCase):
    """cen_log / cen_brier / cen_rps 权重契约测试。"""

    def setUp(self) -> None:
        self.grid = TimeGrid(np.array([0.0, 1.0, 2.0]))
        self.ref = _uniform(2.0)

    def test_cen_log_examples(self) -> None:
        w = cen_log_weights(self.ref, CensoredObservation(0.5, 0), self.grid)
        np.testing.assert_allclose(w.weights, [1.0 / 3.0, 0.0], atol=1e-12)
        at_knot = cen_log_weights(self.ref, CensoredObservation(1.0, 0), self.grid)
        np.testing.assert_allclose(at_knot.weights, [0.0, 0.0], atol=1e-15)
        late = cen_log_weights(self.ref, CensoredObservation(1.5, 0), self.grid)
        np.testing.assert_allclose(late.weights, [0.0, 1.0], atol=1e-12)
        self.assertFalse(late.flagged)
        uncensored = cen_log_weights(self.ref, CensoredObservation(0.5, 1), self.grid)
        np.testing.assert_array_equal(uncensored.weights, [0.0, 0.0])

    def test_cen_brier_examples(self) -> None:
        w = cen_brier_weights(self.ref, CensoredObservation(0.5, 0), self.grid)
        np.testing.assert_allclose(w.weights, [1.0 / 3.0, 2.0 / 3.0], atol=1e-12)
        np.testing.assert_array_equal(
            cen_brier_weights(self.ref, CensoredObservation(0.5, 1), self.grid).weights, [1.0, 0.0]
        )
        boundary = cen_brier_weights(self.ref, CensoredObservation(1.0, 0), self.grid)
        np.testing.assert_allclose(boundary.weights, [0.0, 1.0], atol=1e-12)

    def test_cen_rps_examples(self) -> None:
        ref = _uniform(1.0, (0.0, 0.8, 1.0))
        grid = TimeGrid(np.array([0.0, 0.8, 1.0]))
        np.testing.assert_allclose(cen_rps_weights(ref, CensoredObservation(0.5, 0), grid).weights, [0.6])
        np.testing.assert_allclose(
            cen_rps_weights(ref, CensoredObservation(0.8, 0), grid).weights, [0.0], atol=1e-12
        )
        np.testing.assert_allclose(
            cen_rps_weights(self.ref, CensoredObservation(0.5, 0), self.grid).weights, [1.0 / 3.0], atol=1e-12
        )
        np.testing.assert_array_equal(
            cen_rps_weights(self.ref, CensoredObservation(1.5, 0), self.grid).weights, [0.0]
        )

    def test_degenerate_reference_is_flagged(self) -> None:
        """
        F(c)=1（c 在上端点）时：cen_log 取 1，cen_brier 集中到最后一箱，均打标记；
        cen_rps 在最后一箱没有 c ≤ ζ 的阈值，不打标记。
        """
        obs = CensoredObservation(2.0, 0)
        log_w = cen_log_weights(self.ref, obs, self.grid)
        self.assertTrue(log_w.flagged)
        np.testing.assert_array_equal(log_w.weights, [0.0, 1.0])
        brier_w = cen_brier_weights(self.ref, obs, self.grid)
        self.assertTrue(brier_w.flagged)
        np.testing.assert_array_equal(brier_w.weights, [0.0, 1.0])
        rps_w = cen_rps_weights(self.ref, obs, self.grid)
        self.assertFalse(rps_w.flagged)
        np.testing.assert_array_equal(rps_w.weights, [0.0])

    def test_cen_rps_flags_only_active_thresholds(self) -> None:
        step = _StepSurvival(1.0)
        active = cen_rps_weights(step, CensoredObservation(1.0, 0), self.grid)
        self.assertTrue(active.flagged)
        np.testing.assert_array_equal(active.weights, [1.0])
        inactive = cen_rps_weights(step, CensoredObservation(1.5, 0), self.grid)
        self.assertFalse(inactive.flagged)
        np.testing.assert_array_equal(inactive.weights, [0.0])

        tails = np.array([[1.0, 0.0, 0.0], [1.0, 0.5, 0.0]])
        times, events = np.array([1.0, 2.0]), np.array([0, 0])
        matrix, flagged = batch_distribution_weights("cen_rps", tails, times, events, self.grid)
        self.assertEqual(flagged, 1)
        np.testing.assert_array_equal(matrix, [[1.0], [0.0]])
        _, log_flagged = batch_distribution_weights("cen_log", tails, times, events, self.grid)
        self.assertEqual(log_flagged, 2)

    def test_invariants_on_random_references(self) -> None:
        rng = np.random.default_rng(3)
        for _ in range(300):
            n_bins = int(rng.integers(2, 7))
            grid = uniform_time_grid(float(rng.uniform(1.0, 5.0)), n_bins, eps=0.0)
            ref = BinMassCdf(grid, rng.dirichlet(np.ones(n_bins)))
            c = grid.upper * float(rng.uniform(0.01, 0.99))
            obs = CensoredObservation(c, 0)
            for fn in (cen_log_weights, cen_brier_weights, cen_rps_weights):
                weights = fn(ref, obs, grid).weights
                self.assertTrue(np.all((weights >= 0.0) & (weights <= 1.0)))
            self.assertAlmostEqual(float(cen_brier_weights(ref, obs, grid).weights.sum()), 1.0, delta=1e-12)
            rps_w = cen_rps_weights(ref, obs, grid).weights
            active = rps_w[grid.interior >= c]
            self.assertTrue(np.all(np.diff(active) >= -1e-15))

    def test_cen_log_weight_shrinks_with_finer_grid(self) -> None:
        ref = _uniform(8.0)
        for c in (0.3, 2.3, 5.9):
            previous = np.inf
            for n_bins in (2, 4, 8, 16, 32, 64):
                grid = uniform_time_grid(8.0, n_bins, eps=0.0)
                w = cen_log_weights(ref, CensoredObservation(c, 0), grid)
                current = w[grid.bin_index(c)]
                self.assertLessEqual(current, previous + 1e-15)
                previous = current
            self.assertLess(previous, 0.1)

    def test_batch_matches_scalar(self) -> None:
        rng = np.random.default_rng(5)
        scalar = {"cen_log": cen_log_weights, "cen_brier": cen_brier_weights, "cen_rps": cen_rps_weights}
        for rule, fn in scalar.items():
            n_bins = 5
            grid = uniform_time_grid(4.0, n_bins, eps=0.0)
            refs = [BinMassCdf(grid, rng.dirichlet(np.ones(n_bins))) for _ in range(40)]
            times = np.array([4.0 * (1.0 - rng.random()) for _ in refs])
            events = rng.integers(0, 2, size=len(refs))
            tails = np.vstack([ref.tail_knots for ref in refs])
            matrix, _ = batch_distribution_weights(rule, tails, times, events, grid)
            for row, (ref, z, d) in enumerate(zip(refs, times, events)):
                expected = fn(ref, CensoredObservation(float(z), int(d)), grid).weights
                np.testing.assert_allclose(matrix[row], expected, atol=1e-12, err_msg=rule)

    def test_row_weights_dispatch(self) -> None:
        grid = uniform_time_grid(2.0, 2, eps=0.0)
        tails = np.array([[1.0, 0.5, 0.0]])
        none, flagged = row_weights("cen_log_simple", tails, np.array([0.5]), np.array([0]), grid, WeightPolicy())
        self.assertIsNone(none)
        self.assertEqual(flagged, 0)
        matrix, _ = row_weights("cen_log", tails, np.array([0.5]), np.array([0]), grid, WeightPolicy())
        assert matrix is not None
        np.testing.assert_allclose(matrix, [[1.0 / 3.0, 0.0]], atol=1e-12)
        with self.assertRaises(DomainError):
            row_weights("portnoy", tails, np.array([0.5]), np.array([0]), grid, WeightPolicy())


if __name__ == "__main__":
    unittest.main()
