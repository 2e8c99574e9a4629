"""
Kaplan-Meier 乘积极限估计。
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from survscore.domain import BinMassCdf, SurvivalDataset, TimeGrid
from survscore.errors import DomainError


@dataclass(frozen=True, eq=False)
class KaplanMeierCurve:
    """
    右连续阶梯生存函数 κ(t)，κ(0)=1。

    字段说明：
    - event_times: 去重后的事件时间（升序）。
    - survival: 各事件时间处（含该时刻）的 κ 值。
    """

    event_times: np.ndarray
    survival: np.ndarray

    def survival_at(self, t: float) -> float:
        index = int(np.searchsorted(self.event_times, t, side="right"))
        if index == 0:
            return 1.0
        return float(self.survival[index - 1])

    def survival_values(self, times: np.ndarray) -> np.ndarray:
        index = np.searchsorted(self.event_times, times, side="right")
        padded = np.concatenate(([1.0], self.survival))
        return padded[index]

    def bin_masses(self, grid: TimeGrid) -> np.ndarray:
        """
        各分箱的 KM 质量 κ(ζ_i) − κ(ζ_{i+1})；κ(ζ_B) 强制为 0，尾部剩余质量并入最后一箱。
        """
        values = self.survival_values(grid.thresholds)
        values[-1] = 0.0
        return np.maximum(values[:-1] - values[1:], 0.0)


def kaplan_meier_arrays(times: np.ndarray, events: np.ndarray) -> KaplanMeierCurve:
    """
    由观测数组计算 KM 曲线。

    参数：
    - times: 观测时间 z。
    - events: 删失指示 δ。

    返回：
    - KaplanMeierCurve
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    if times.size == 0:
        raise DomainError("KM 估计需要非空数据")
    sorted_times = np.sort(times)
    event_times, deaths = np.unique(times[events == 1], return_counts=True)
    at_risk = times.size - np.searchsorted(sorted_times, event_times, side="left")
    survival = np.cumprod(1.0 - deaths / at_risk)
    return KaplanMeierCurve(event_times=event_times, survival=survival)


def kaplan_meier(data: SurvivalDataset) -> KaplanMeierCurve:
    """数据集上的 KM 曲线。"""
    return kaplan_meier_arrays(data.times, data.events)


def km_bin_cdf(km: KaplanMeierCurve, grid: TimeGrid) -> BinMassCdf:
    """KM 分箱质量包装成 BinMassCdf（作为基线预测）。"""
    return BinMassCdf(grid, km.bin_masses(grid))
