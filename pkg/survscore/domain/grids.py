"""
离散化网格。

本文件应该做什么：
1. TimeGrid：时间轴阈值 ζ_0..ζ_B，分箱为右闭区间 (ζ_i, ζ_{i+1}]。
2. QuantileGrid：概率轴分位水平 τ_0..τ_B。
3. 提供等长网格构造函数。
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from survscore.errors import DomainError

# 分位水平精确匹配容差
LEVEL_MATCH_TOL = 1e-12


def _frozen_array(values: object) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """
    时间轴网格。

    字段说明：
    - thresholds: ζ_0=0 < ζ_1 < ... < ζ_B，只读数组。
    """

    thresholds: np.ndarray

    def __post_init__(self) -> None:
        knots = _frozen_array(self.thresholds)
        if knots.ndim != 1 or knots.size < 2:
            raise DomainError("TimeGrid 至少需要 2 个阈值（B ≥ 1）")
        if not np.all(np.isfinite(knots)):
            raise DomainError("TimeGrid 阈值必须为有限数")
        if knots[0] != 0.0:
            raise DomainError("TimeGrid 第一个阈值必须为 0")
        if np.any(np.diff(knots) <= 0.0):
            raise DomainError("TimeGrid 阈值必须严格递增")
        object.__setattr__(self, "thresholds", knots)

    @property
    def n_bins(self) -> int:
        return int(self.thresholds.size - 1)

    @property
    def upper(self) -> float:
        return float(self.thresholds[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.thresholds)

    @property
    def interior(self) -> np.ndarray:
        """内部阈值 ζ_1..ζ_{B-1}。"""
        return self.thresholds[1:-1]

    def bin_index(self, t: float) -> int:
        """
        返回 t 所在分箱下标。

        参数：
        - t: 时间，要求 0 ≤ t ≤ ζ_B；t=0 归入第 0 箱。

        返回：
        - int: 满足 ζ_i < t ≤ ζ_{i+1} 的 i。
        """
        if not (0.0 <= t <= self.upper):
            raise DomainError(f"时间 {t} 超出网格范围 [0, {self.upper}]")
        return int(self.bin_indices(np.array([t], dtype=float))[0])

    def bin_indices(self, times: np.ndarray) -> np.ndarray:
        """向量化分箱（不做范围校验）。"""
        index = np.searchsorted(self.thresholds, times, side="left") - 1
        return np.clip(index, 0, self.n_bins - 1)

    def same_as(self, other: "TimeGrid") -> bool:
        return self.thresholds.shape == other.thresholds.shape and bool(
            np.array_equal(self.thresholds, other.thresholds)
        )


@dataclass(frozen=True, eq=False)
class QuantileGrid:
    """
    分位水平网格。

    字段说明：
    - levels: τ_0=0 < τ_1 < ... < τ_B=1，只读数组。
    """

    levels: np.ndarray

    def __post_init__(self) -> None:
        levels = _frozen_array(self.levels)
        if levels.ndim != 1 or levels.size < 2:
            raise DomainError("QuantileGrid 至少需要 2 个水平")
        if levels[0] != 0.0 or levels[-1] != 1.0:
            raise DomainError("QuantileGrid 首尾水平必须为 0 和 1")
        if np.any(np.diff(levels) <= 0.0):
            raise DomainError("QuantileGrid 水平必须严格递增")
        object.__setattr__(self, "levels", levels)

    @property
    def n_bins(self) -> int:
        return int(self.levels.size - 1)

    @property
    def interior(self) -> np.ndarray:
        return self.levels[1:-1]

    def index_of(self, tau: float) -> int:
        """
        查找 τ 在网格中的下标；不在网格上时报错（不做插值）。
        """
        if not (0.0 <= tau <= 1.0):
            raise DomainError(f"分位水平 {tau} 必须位于 [0, 1]")
        hits = np.flatnonzero(np.abs(self.levels - tau) <= LEVEL_MATCH_TOL)
        if hits.size == 0:
            raise DomainError(f"分位水平 {tau} 不在网格上")
        return int(hits[0])

    def same_as(self, other: "QuantileGrid") -> bool:
        return self.levels.shape == other.levels.shape and bool(np.array_equal(self.levels, other.levels))


def uniform_time_grid(z_max: float, n_bins: int, eps: float = 1e-3) -> TimeGrid:
    """
    把 [0, z_max+eps) 等分为 n_bins 段。

    参数：
    - z_max: 最大观测时间，必须为正。
    - n_bins: 分箱数 B ≥ 1。
    - eps: 上端留白，≥ 0（eps=0 时 ζ_B = z_max）。

    返回：
    - TimeGrid
    """
    if not math.isfinite(z_max) or z_max <= 0:
        raise DomainError("z_max 必须为正数")
    if int(n_bins) != n_bins or n_bins < 1:
        raise DomainError("n_bins 必须为正整数")
    if not math.isfinite(eps) or eps < 0:
        raise DomainError("eps 必须为非负数")
    return TimeGrid(np.linspace(0.0, z_max + eps, int(n_bins) + 1))


def uniform_quantile_grid(n_bins: int) -> QuantileGrid:
    """把 [0,1] 等分为 n_bins 段。"""
    if int(n_bins) != n_bins or n_bins < 1:
        raise DomainError("n_bins 必须为正整数")
    return QuantileGrid(np.linspace(0.0, 1.0, int(n_bins) + 1))
