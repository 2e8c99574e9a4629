"""
网格搜索分位估计。

本文件应该做什么：
1. 对每个分组，按 τ_1 < τ_2 < … 的顺序逐个估计分位值 F̂^{-1}(τ_j)。
2. 删失行的权重由已拟合的更低分位给出：取满足 F̂^{-1}(τ'_c) ≥ c 的最小 τ'_c，
   w = (τ_j − τ'_c) / (1 − τ'_c)；找不到时使用 policy.fallback_w。
3. 每个一维子问题用三分搜索最小化加权 Portnoy 目标（目标在 q 上为凸分段线性）。
4. 拟合完成后做保序修复，并记录修复次数。
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from survscore.domain import QuantileCurve, QuantileGrid, SurvivalDataset
from survscore.errors import DomainError
from survscore.scoring.weights import WeightPolicy
from survscore.services.training import TrainConfig

LOGGER = logging.getLogger(__name__)

# 三分搜索最大轮数与相对收敛宽度
TERNARY_MAX_ITERS = 200
TERNARY_REL_TOL = 1e-12
# 严格递增修复的最小间距（相对 z_max）
MIN_SPACING = 1e-9


@dataclass(slots=True)
class GridSearchResult:
    """
    字段说明：
    - curves: 分组标签 → 分位曲线。
    - repairs: 分组标签 → 保序修复中被改动的分位个数。
    """

    curves: dict[str, QuantileCurve] = field(default_factory=dict)
    repairs: dict[str, int] = field(default_factory=dict)


def _pinball_sum(q: float, y: np.ndarray, tau: float, coef: np.ndarray) -> float:
    diff = y - q
    return float(np.dot(coef, np.where(diff >= 0.0, tau * diff, (tau - 1.0) * diff)))


def ternary_search(objective: Callable[[float], float], low: float, high: float) -> float:
    """在 [low, high] 上最小化凸函数，返回最终区间中点。"""
    width_tol = TERNARY_REL_TOL * max(abs(high), 1.0)
    for _ in range(TERNARY_MAX_ITERS):
        if high - low <= width_tol:
            break
        third = (high - low) / 3.0
        left, right = low + third, high - third
        if objective(left) <= objective(right):
            high = right
        else:
            low = left
    return 0.5 * (low + high)


def _level_weights(
    censor_times: np.ndarray,
    fitted: list[float],
    levels: np.ndarray,
    tau: float,
    fallback_w: float,
) -> np.ndarray:
    """每个删失行在当前分位水平上的权重。fitted[k] 对应 levels[k + 1]。"""
    weights = np.full(censor_times.size, fallback_w)
    if not fitted or censor_times.size == 0:
        return weights
    reached = np.asarray(fitted)[None, :] >= censor_times[:, None]
    found = np.any(reached, axis=1)
    first = np.argmax(reached, axis=1)
    tau_c = levels[first + 1]
    weights[found] = (tau - tau_c[found]) / (1.0 - tau_c[found])
    return weights


def repair_monotone(values: np.ndarray, z_max: float) -> tuple[np.ndarray, int]:
    """
    把内部分位值修复为严格递增并落在 (0, z_max) 内。

    参数：
    - values: 内部分位值 F̂^{-1}(τ_1..τ_{B-1})。

    返回：
    - tuple[np.ndarray, int]: 修复后的值与被改动的个数。
    """
    raw = np.asarray(values, dtype=float)
    if raw.size == 0:
        return raw.copy(), 0
    fixed = np.asarray(isotonic_regression(raw, increasing=True).x, dtype=float)
    gap = MIN_SPACING * z_max
    lower = 0.0
    for k in range(fixed.size):
        fixed[k] = max(fixed[k], lower + gap)
        lower = fixed[k]
    upper = z_max
    for k in range(fixed.size - 1, -1, -1):
        fixed[k] = min(fixed[k], upper - gap)
        upper = fixed[k]
    return fixed, int(np.count_nonzero(fixed != raw))


def _fit_group(
    times: np.ndarray,
    events: np.ndarray,
    grid: QuantileGrid,
    z_max: float,
    z_infinity: float,
    fallback_w: float,
) -> list[float]:
    observed = times[events == 1]
    censored = times[events == 0]
    levels = grid.levels
    fitted: list[float] = []
    for tau in grid.interior:
        tau = float(tau)
        w = _level_weights(censored, fitted, levels, tau, fallback_w)
        far = np.full(censored.size, z_infinity)
        ones = np.ones(observed.size)

        def objective(q: float) -> float:
            return (
                _pinball_sum(q, observed, tau, ones)
                + _pinball_sum(q, censored, tau, w)
                + _pinball_sum(q, far, tau, 1.0 - w)
            )

        fitted.append(ternary_search(objective, 0.0, z_max))
    return fitted


def grid_search_fit_quantiles(
    data: SurvivalDataset,
    grid: QuantileGrid,
    policy: WeightPolicy,
    cfg: TrainConfig,
) -> GridSearchResult:
    """
    分组数据上的网格搜索分位估计。

    参数：
    - data: 带分组标签的数据集。
    - grid: 分位网格。
    - policy: 权重回退策略。
    - cfg: 提供 z_inf_factor。

    返回：
    - GridSearchResult
    """
    if data.groups is None:
        raise DomainError("网格搜索只支持分组数据")
    labels = np.asarray(data.groups, dtype=object)
    z_max = data.z_max
    z_infinity = cfg.z_inf_factor * z_max
    result = GridSearchResult()
    for label in data.group_labels:
        mask = labels == label
        if not np.any(mask):
            raise DomainError(f"分组 {label} 没有样本")
        fitted = _fit_group(data.times[mask], data.events[mask], grid, z_max, z_infinity, policy.fallback_w)
        interior, repairs = repair_monotone(np.asarray(fitted), z_max)
        values = np.concatenate(([0.0], interior, [z_max]))
        result.curves[label] = QuantileCurve(grid, values)
        result.repairs[label] = repairs
        if repairs:
            LOGGER.warning("grid_search monotone repair: group=%s repaired=%d", label, repairs)
        LOGGER.info("grid_search group=%s rows=%d levels=%d", label, int(mask.sum()), grid.n_bins - 1)
    return result
