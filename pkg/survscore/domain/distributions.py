"""
离散 CDF 与分位曲线。

本文件应该做什么：
1. BinMassCdf：按分箱质量 f̂_i 表示的分段线性 CDF（t 轴离散）。
2. QuantileCurve：按分位水平给出分位值的分段线性曲线（p 轴离散）。
3. CdfLike：权重计算只需要 cdf_at / survival_at 两个方法。
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.special import softmax

from survscore.domain.grids import QuantileGrid, TimeGrid
from survscore.errors import DomainError

# softmax 下溢保护：构造时把质量抬到此下限后重新归一化
MASS_FLOOR = 1e-12
# 两个网格上端视为一致的相对容差
UPPER_MATCH_RTOL = 1e-12


def clamped_softmax(logits: np.ndarray) -> np.ndarray:
    """按行 softmax，质量截断到 1e-12 后重新归一化；模型预测与分位型评分共用。"""
    probs = np.maximum(softmax(np.atleast_2d(logits), axis=1), MASS_FLOOR)
    return probs / probs.sum(axis=1, keepdims=True)


class CdfLike(Protocol):
    """可在单点求值的 CDF。"""

    def cdf_at(self, t: float) -> float: ...

    def survival_at(self, t: float) -> float: ...


@dataclass(frozen=True, eq=False)
class BinMassCdf:
    """
    分箱质量形式的 CDF。

    字段说明：
    - grid: 时间网格。
    - masses: f̂_0..f̂_{B-1}，构造后全部 ≥ 1e-12 且和为 1。
    - cdf_knots: F̂(ζ_0..ζ_B)，首尾精确为 0 和 1。
    - tail_knots: 1 − F̂(ζ_0..ζ_B)，按逆向累加得到，末项精确为 0。
    """

    grid: TimeGrid
    masses: np.ndarray

    def __post_init__(self) -> None:
        masses = np.array(self.masses, dtype=float)
        if masses.ndim != 1 or masses.size != self.grid.n_bins:
            raise DomainError(f"masses 长度必须等于分箱数 {self.grid.n_bins}")
        if not np.all(np.isfinite(masses)) or np.any(masses < 0.0):
            raise DomainError("masses 必须为有限非负数")
        masses = np.maximum(masses, MASS_FLOOR)
        masses = masses / masses.sum()
        masses.setflags(write=False)

        cdf_knots = np.concatenate(([0.0], np.cumsum(masses)))
        cdf_knots[-1] = 1.0
        cdf_knots.setflags(write=False)
        tail_knots = np.concatenate((np.cumsum(masses[::-1])[::-1], [0.0]))
        tail_knots[0] = 1.0
        tail_knots.setflags(write=False)

        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "cdf_knots", cdf_knots)
        object.__setattr__(self, "tail_knots", tail_knots)

    @property
    def n_bins(self) -> int:
        return self.grid.n_bins

    @property
    def upper(self) -> float:
        return self.grid.upper

    def _check_time(self, t: float) -> None:
        if not (0.0 <= t <= self.grid.upper):
            raise DomainError(f"时间 {t} 超出 [0, {self.grid.upper}]")

    def cdf_at(self, t: float) -> float:
        """F̂(t)，分段线性插值。"""
        self._check_time(t)
        return float(np.interp(t, self.grid.thresholds, self.cdf_knots))

    def survival_at(self, t: float) -> float:
        """1 − F̂(t)，直接在尾部累计值上插值，避免 1 − F 的抵消误差。"""
        self._check_time(t)
        return float(np.interp(t, self.grid.thresholds, self.tail_knots))

    def quantile_at(self, tau: float) -> float:
        """F̂ 的分段线性反函数。"""
        if not (0.0 <= tau <= 1.0):
            raise DomainError(f"分位水平 {tau} 必须位于 [0, 1]")
        return float(np.interp(tau, self.cdf_knots, self.grid.thresholds))

    def density_at(self, t: float) -> float:
        """t 所在分箱的密度 f̂_i / (ζ_{i+1} − ζ_i)。"""
        index = self.grid.bin_index(t)
        return float(self.masses[index] / self.grid.widths[index])

    def cdf_values(self, times: np.ndarray) -> np.ndarray:
        """向量化 F̂（调用方保证范围）。"""
        return np.interp(times, self.grid.thresholds, self.cdf_knots)

    def bin_probabilities(self) -> np.ndarray:
        return np.array(self.masses)

    def rebin(self, grid: TimeGrid) -> "BinMassCdf":
        """
        重新离散到上端相同的另一网格。

        参数：
        - grid: 目标网格，ζ_B 必须与当前网格一致。

        返回：
        - BinMassCdf: 质量为 F(新阈值) 的差分。
        """
        if not math.isclose(grid.upper, self.grid.upper, rel_tol=UPPER_MATCH_RTOL, abs_tol=0.0):
            raise DomainError(f"rebin 目标网格上端 {grid.upper} 与 {self.grid.upper} 不一致")
        return self.project(grid)

    def project(self, grid: TimeGrid) -> "BinMassCdf":
        """投影到任意网格：超出当前上端的部分 F=1，超出目标上端的剩余质量并入最后一箱。"""
        knots = np.minimum(grid.thresholds, self.grid.upper)
        values = self.cdf_values(knots)
        values[-1] = 1.0
        return BinMassCdf(grid, np.maximum(np.diff(values), 0.0))


@dataclass(frozen=True, eq=False)
class QuantileCurve:
    """
    分位曲线 F̂^{-1}(τ_0..τ_B)。

    字段说明：
    - grid: 分位水平网格。
    - values: 严格递增，首项为 0，末项为 z_max。
    """

    grid: QuantileGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size != self.grid.levels.size:
            raise DomainError(f"values 长度必须等于分位水平数 {self.grid.levels.size}")
        if not np.all(np.isfinite(values)):
            raise DomainError("values 必须为有限数")
        if values[0] != 0.0:
            raise DomainError("分位曲线首项必须为 0")
        if np.any(np.diff(values) <= 0.0):
            raise DomainError("分位曲线必须严格递增")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def upper(self) -> float:
        return float(self.values[-1])

    def value_at_level(self, tau: float) -> float:
        return float(self.values[self.grid.index_of(tau)])

    def cdf_at(self, t: float) -> float:
        """分位曲线的反函数；超过 z_max 时截为 1。"""
        if not math.isfinite(t) or t < 0.0:
            raise DomainError(f"时间 {t} 必须为非负有限数")
        if t >= self.upper:
            return 1.0
        return float(np.interp(t, self.values, self.grid.levels))

    def survival_at(self, t: float) -> float:
        return 1.0 - self.cdf_at(t)

    def to_bin_mass_cdf(self, time_grid: TimeGrid) -> BinMassCdf:
        """转换为时间网格上的分箱质量（用于指标计算）。"""
        knots = np.minimum(time_grid.thresholds, self.upper)
        values = np.interp(knots, self.values, self.grid.levels)
        values[-1] = 1.0
        return BinMassCdf(time_grid, np.maximum(np.diff(values), 0.0))

    @classmethod
    def from_cdf(cls, cdf: BinMassCdf, grid: QuantileGrid) -> "QuantileCurve":
        """在每个分位水平上读取 cdf 的分位值。"""
        values = np.interp(grid.levels, cdf.cdf_knots, cdf.grid.thresholds)
        values[0] = 0.0
        values[-1] = cdf.upper
        return cls(grid, values)
