"""
评估指标。

本文件应该做什么：
1. mean_cen_log_simple：测试集上 Cen-log-simple 平均得分（判别能力）。
2. d_calibration：预测 CDF 值直方图与均匀分布的平方偏差（删失点按比例摊到 [F̂(c), 1]）。
3. km_calibration：KM 分箱质量与平均预测分箱质量之间的 KL 散度。

约定：
- 所有归约使用 math.fsum，结果与行顺序无关。
- KL 两侧先以 1e-12 下限截断再归一化。
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
from scipy.special import rel_entr

from survscore.domain import BinMassCdf, CensoredObservation
from survscore.errors import DomainError
from survscore.metrics.kaplan_meier import KaplanMeierCurve, kaplan_meier_arrays
from survscore.scoring.rules import cen_log_simple

LOGGER = logging.getLogger(__name__)

# KL 计算的概率下限
KL_FLOOR = 1e-12
# D-calibration 默认分箱数
D_CALIBRATION_BINS = 20


@dataclass(slots=True)
class CalibrationReport:
    """
    指标汇总。

    字段说明：
    - d_calibration: D-calibration 统计量（≥ 0）。
    - km_calibration: KM-calibration（KL 散度，nats，≥ 0）。
    - mean_cen_log_simple: 平均 Cen-log-simple 得分，可能为 +∞。
    - flagged_count: 得分为 +∞ 的行数 + D-calibration 中 F̂(c)=1 的删失行数。
    """

    d_calibration: float
    km_calibration: float
    mean_cen_log_simple: float
    flagged_count: int

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


def _check_aligned(preds: Sequence[BinMassCdf], obs: Sequence[CensoredObservation]) -> None:
    if len(preds) == 0:
        raise DomainError("预测与观测不能为空")
    if len(preds) != len(obs):
        raise DomainError(f"预测条数 {len(preds)} 与观测条数 {len(obs)} 不一致")


def binned_kl(p: np.ndarray, q: np.ndarray) -> float:
    """
    两个分箱分布的 KL(p‖q)，两侧先截断到 1e-12 再归一化。
    """
    p = np.maximum(np.asarray(p, dtype=float), KL_FLOOR)
    q = np.maximum(np.asarray(q, dtype=float), KL_FLOOR)
    if p.shape != q.shape:
        raise DomainError("KL 两侧分箱数不一致")
    p = p / math.fsum(p.tolist())
    q = q / math.fsum(q.tolist())
    return max(0.0, math.fsum(rel_entr(p, q).tolist()))


def average_prediction(preds: Sequence[BinMassCdf]) -> BinMassCdf:
    """逐点平均预测 CDF（同一网格上即分箱质量的平均）。"""
    if not preds:
        raise DomainError("预测不能为空")
    grid = preds[0].grid
    for pred in preds:
        if not pred.grid.same_as(grid):
            raise DomainError("平均预测要求所有预测使用同一网格")
    stacked = np.vstack([pred.masses for pred in preds])
    masses = [math.fsum(column) / len(preds) for column in stacked.T.tolist()]
    return BinMassCdf(grid, np.array(masses))


def km_calibration(km: KaplanMeierCurve, avg_pred: BinMassCdf) -> float:
    """
    KM-calibration。

    参数：
    - km: 测试集上的 KM 曲线。
    - avg_pred: 测试集平均预测。

    返回：
    - float: Σ_i p_i (log p_i − log q_i)，p 为 KM 分箱质量，q 为平均预测分箱质量。
    """
    return binned_kl(km.bin_masses(avg_pred.grid), avg_pred.masses)


def d_calibration_histogram(
    preds: Sequence[BinMassCdf],
    obs: Sequence[CensoredObservation],
    n_bins: int = D_CALIBRATION_BINS,
) -> tuple[np.ndarray, int]:
    """
    D-calibration 直方图。

    返回：
    - tuple[np.ndarray, int]:
      1) 归一化后的各箱比例 p_b；
      2) F̂(c)=1 的删失行数（整行质量计入最高箱）。
    """
    _check_aligned(preds, obs)
    if n_bins < 1:
        raise DomainError("n_bins 必须为正整数")
    width = 1.0 / n_bins
    contributions = np.zeros((len(preds), n_bins))
    flagged = 0
    for row, (pred, ob) in enumerate(zip(preds, obs)):
        value = pred.cdf_at(ob.z)
        index = min(int(math.floor(value * n_bins)), n_bins - 1)
        if ob.delta == 1:
            contributions[row, index] = 1.0
            continue
        remaining = pred.survival_at(ob.z)
        if remaining <= 0.0:
            contributions[row, -1] = 1.0
            flagged += 1
            continue
        contributions[row, index] = ((index + 1) * width - value) / remaining
        contributions[row, index + 1 :] = width / remaining
    total = len(preds)
    histogram = np.array([math.fsum(column) / total for column in contributions.T.tolist()])
    if flagged:
        LOGGER.warning("d_calibration flagged censored rows with F(c)=1: count=%d", flagged)
    return histogram, flagged


def d_calibration(
    preds: Sequence[BinMassCdf],
    obs: Sequence[CensoredObservation],
    n_bins: int = D_CALIBRATION_BINS,
) -> float:
    """D-calibration 统计量 Σ_b (p_b − 1/n_bins)²。"""
    histogram, _ = d_calibration_histogram(preds, obs, n_bins)
    return math.fsum(((histogram - 1.0 / n_bins) ** 2).tolist())


def _row_scores(preds: Sequence[BinMassCdf], obs: Sequence[CensoredObservation]) -> list[float]:
    _check_aligned(preds, obs)
    return [cen_log_simple(pred, ob) for pred, ob in zip(preds, obs)]


def count_infinite(preds: Sequence[BinMassCdf], obs: Sequence[CensoredObservation]) -> int:
    return sum(1 for score in _row_scores(preds, obs) if math.isinf(score))


def mean_cen_log_simple(preds: Sequence[BinMassCdf], obs: Sequence[CensoredObservation]) -> float:
    """平均 Cen-log-simple；存在 +∞ 行时结果为 +∞。"""
    scores = _row_scores(preds, obs)
    infinite = sum(1 for score in scores if math.isinf(score))
    if infinite:
        LOGGER.warning("mean_cen_log_simple infinite rows: count=%d", infinite)
        return math.inf
    return math.fsum(scores) / len(scores)


def evaluate_predictions(
    preds: Sequence[BinMassCdf],
    obs: Sequence[CensoredObservation],
    n_bins: int = D_CALIBRATION_BINS,
) -> CalibrationReport:
    """
    计算三项指标。

    参数：
    - preds: 每行预测分布（同一网格）。
    - obs: 对应观测。
    - n_bins: D-calibration 分箱数。

    返回：
    - CalibrationReport
    """
    scores = _row_scores(preds, obs)
    infinite = sum(1 for score in scores if math.isinf(score))
    mean_score = math.inf if infinite else math.fsum(scores) / len(scores)
    histogram, d_flagged = d_calibration_histogram(preds, obs, n_bins)
    km = kaplan_meier_arrays(
        np.array([ob.z for ob in obs], dtype=float),
        np.array([ob.delta for ob in obs], dtype=np.int64),
    )
    return CalibrationReport(
        d_calibration=math.fsum(((histogram - 1.0 / n_bins) ** 2).tolist()),
        km_calibration=km_calibration(km, average_prediction(preds)),
        mean_cen_log_simple=mean_score,
        flagged_count=infinite + d_flagged,
    )

