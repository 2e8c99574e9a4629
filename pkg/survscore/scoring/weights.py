"""
删失权重。

本文件应该做什么：
1. 按闭式公式由参考 CDF 计算 Portnoy 的 w、cen_log / cen_brier / cen_rps 的 w_i。
2. 提供按行向量化版本 row_weights，供迭代重加权（IR）每轮批量更新。

约定：
- 参考 CDF 在删失时间处已到 1（1−F(c)=0）视为退化：按极限取值并打标记。
- cen_brier 采用“删失点之前为 0、所在箱为条件剩余质量、之后为条件箱质量”的权重形式，
  删失观测的权重和为 1。
- 所有权重截断到 [0, 1] 以吸收舍入误差。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from survscore.domain import CdfLike, CensoredObservation, QuantileGrid, TimeGrid
from survscore.errors import DomainError
from survscore.scoring.rules import WeightVector, get_rule

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class WeightPolicy:
    """
    权重策略。

    字段说明：
    - fallback_w: Portnoy 在 τ_c > τ 时允许取任意常数，此处取该值。
    """

    fallback_w: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.fallback_w <= 1.0):
            raise DomainError(f"fallback_w={self.fallback_w} 必须位于 [0, 1]")


def _survival(ref: CdfLike, t: float) -> float:
    upper = getattr(ref, "upper", None)
    if upper is not None and t >= upper:
        return 0.0
    return ref.survival_at(t)


def _clip(value: float) -> float:
    return min(1.0, max(0.0, value))


def _portnoy_value(tau_c: float, tau: float, fallback_w: float) -> tuple[float, bool]:
    if tau_c > tau:
        return fallback_w, False
    remaining = 1.0 - tau_c
    if remaining <= 0.0:
        return 1.0, True
    return _clip((tau - tau_c) / remaining), False


def portnoy_weight(ref: CdfLike, c: float, tau: float, policy: WeightPolicy) -> float:
    """
    Portnoy 权重 w。

    参数：
    - ref: 参考 CDF（真值或当前估计）。
    - c: 删失时间，> 0。
    - tau: 分位水平。
    - policy: τ_c > τ 时的取值策略。

    返回：
    - float: τ_c ≤ τ 时 (τ−τ_c)/(1−τ_c)，否则 policy.fallback_w；τ_c=1 时取 1。
    """
    if c <= 0.0:
        raise DomainError(f"删失时间 c={c} 必须为正数")
    if not (0.0 <= tau <= 1.0):
        raise DomainError(f"分位水平 tau={tau} 必须位于 [0, 1]")
    value, flagged = _portnoy_value(ref.cdf_at(c), tau, policy.fallback_w)
    if flagged:
        LOGGER.warning("portnoy weight degenerate: c=%s tau=%s", c, tau)
    return value


def portnoy_level_weights(
    ref: CdfLike,
    obs: CensoredObservation,
    grid: QuantileGrid,
    policy: WeightPolicy,
) -> WeightVector:
    """
    所有内部分位水平 τ_1..τ_{B−1} 上的 Portnoy 权重；未删失观测返回全 0（不会被读取）。
    """
    size = grid.n_bins - 1
    if obs.delta == 1:
        return WeightVector.zeros(size)
    tau_c = ref.cdf_at(obs.z)
    values = []
    flagged = False
    for tau in grid.interior.tolist():
        value, degenerate = _portnoy_value(tau_c, tau, policy.fallback_w)
        values.append(value)
        flagged = flagged or degenerate
    return WeightVector(np.array(values), flagged=flagged)


def cen_log_weights(ref: CdfLike, obs: CensoredObservation, grid: TimeGrid) -> WeightVector:
    """
    cen_log 权重：z 所在箱 i 上 w_i = (F(ζ_{i+1}) − F(c)) / (1 − F(c))，其余为 0。

    未删失观测返回全 0。
    """
    index = grid.bin_index(obs.z)
    weights = np.zeros(grid.n_bins)
    if obs.delta == 1:
        return WeightVector(weights)
    surv_c = _survival(ref, obs.z)
    if surv_c <= 0.0:
        weights[index] = 1.0
        LOGGER.warning("cen_log weight degenerate: c=%s", obs.z)
        return WeightVector(weights, flagged=True)
    surv_next = _survival(ref, float(grid.thresholds[index + 1]))
    weights[index] = _clip((surv_c - surv_next) / surv_c)
    return WeightVector(weights)


def cen_brier_weights(ref: CdfLike, obs: CensoredObservation, grid: TimeGrid) -> WeightVector:
    """
    cen_brier 权重。

    返回：
    - δ=1：z 所在箱为 1，其余为 0。
    - δ=0（c 在第 j 箱）：i<j 为 0；i=j 为 (F(ζ_{j+1})−F(c))/(1−F(c))；
      i>j 为 (F(ζ_{i+1})−F(ζ_i))/(1−F(c))；和为 1。
    """
    index = grid.bin_index(obs.z)
    weights = np.zeros(grid.n_bins)
    if obs.delta == 1:
        weights[index] = 1.0
        return WeightVector(weights)
    surv_c = _survival(ref, obs.z)
    if surv_c <= 0.0:
        weights[-1] = 1.0
        LOGGER.warning("cen_brier weight degenerate: c=%s", obs.z)
        return WeightVector(weights, flagged=True)
    knots = [_survival(ref, float(t)) for t in grid.thresholds[index + 1 : -1].tolist()] + [0.0]
    previous = surv_c
    for offset, surv in enumerate(knots):
        weights[index + offset] = _clip((previous - surv) / surv_c)
        previous = surv
    return WeightVector(weights)


def cen_rps_weights(ref: CdfLike, obs: CensoredObservation, grid: TimeGrid) -> WeightVector:
    """
    cen_rps 权重（长度 B−1，第 k 项对应 ζ_{k+1}）。

    δ=0 且 c ≤ ζ 时 w = (F(ζ) − F(c)) / (1 − F(c))；其余项不使用，置 0。
    只有存在 c ≤ ζ 的项且 S(c)=0 时才记为退化。
    """
    grid.bin_index(obs.z)
    interior = grid.interior.tolist()
    weights = np.zeros(len(interior))
    if obs.delta == 1:
        return WeightVector(weights)
    active = [k for k, zeta in enumerate(interior) if obs.z <= zeta]
    surv_c = _survival(ref, obs.z)
    flagged = bool(active) and surv_c <= 0.0
    for k in active:
        weights[k] = 1.0 if flagged else _clip((surv_c - _survival(ref, interior[k])) / surv_c)
    if flagged:
        LOGGER.warning("cen_rps weight degenerate: c=%s", obs.z)
    return WeightVector(weights, flagged=flagged)


def _row_survival_at(tails: np.ndarray, grid: TimeGrid, times: np.ndarray, bins: np.ndarray) -> np.ndarray:
    rows = np.arange(times.size)
    left = grid.thresholds[bins]
    width = grid.widths[bins]
    s_left = tails[rows, bins]
    s_right = tails[rows, bins + 1]
    return s_left + (times - left) / width * (s_right - s_left)


def _safe_ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    safe = np.where(denominator > 0.0, denominator, 1.0)
    return np.clip(numerator / safe, 0.0, 1.0)


def batch_distribution_weights(
    rule: str,
    tails: np.ndarray,
    times: np.ndarray,
    events: np.ndarray,
    grid: TimeGrid,
) -> tuple[np.ndarray, int]:
    """
    分布型规则的按行权重。

    参数：
    - rule: cen_log / cen_brier / cen_rps。
    - tails: 每行参考分布在网格阈值上的生存值 1−F(ζ_k)，形状 (n, B+1)，末列为 0。
    - times / events: 观测。
    - grid: 时间网格。

    返回：
    - tuple[np.ndarray, int]: 权重矩阵与退化行数。
    """
    n, n_bins = times.size, grid.n_bins
    rows = np.arange(n)
    bins = grid.bin_indices(times)
    censored = events == 0
    surv_c = _row_survival_at(tails, grid, times, bins)
    degenerate = censored & (surv_c <= 0.0)
    flagged = int(np.count_nonzero(degenerate))

    if rule == "cen_log":
        matrix = np.zeros((n, n_bins))
        own = _safe_ratio(surv_c - tails[rows, bins + 1], surv_c)
        matrix[rows, bins] = np.where(censored, np.where(degenerate, 1.0, own), 0.0)
    elif rule == "cen_brier":
        bin_mass = tails[:, :-1] - tails[:, 1:]
        columns = np.arange(n_bins)[None, :]
        after = columns > bins[:, None]
        matrix = np.where(after, _safe_ratio(bin_mass, surv_c[:, None]), 0.0)
        matrix[rows, bins] = _safe_ratio(surv_c - tails[rows, bins + 1], surv_c)
        matrix[degenerate] = 0.0
        matrix[degenerate, -1] = 1.0
        uncensored = ~censored
        matrix[uncensored] = 0.0
        matrix[rows[uncensored], bins[uncensored]] = 1.0
    elif rule == "cen_rps":
        columns = np.arange(n_bins - 1)[None, :]
        active = censored[:, None] & (columns >= bins[:, None])
        ratio = _safe_ratio(surv_c[:, None] - tails[:, 1:-1], surv_c[:, None])
        ratio = np.where(degenerate[:, None], 1.0, ratio)
        matrix = np.where(active, ratio, 0.0)
        flagged = int(np.count_nonzero(degenerate & active.any(axis=1)))
    else:
        raise DomainError(f"规则 {rule} 不是分布型加权规则")
    return matrix, flagged


def batch_portnoy_weights(
    values: np.ndarray,
    times: np.ndarray,
    events: np.ndarray,
    grid: QuantileGrid,
    policy: WeightPolicy,
) -> tuple[np.ndarray, int]:
    """
    Portnoy 的按行权重（每行长度 B−1）。

    参数：
    - values: 每行参考分位曲线 F̂^{-1}(τ_0..τ_B)，形状 (n, B+1)。

    返回：
    - tuple[np.ndarray, int]: 权重矩阵与退化行数。
    """
    n = times.size
    rows = np.arange(n)
    levels = grid.levels
    upper_index = np.count_nonzero(values < times[:, None], axis=1)
    beyond = upper_index >= levels.size
    k = np.clip(upper_index, 1, levels.size - 1)
    low_v, high_v = values[rows, k - 1], values[rows, k]
    low_t, high_t = levels[k - 1], levels[k]
    tau_c = low_t + (times - low_v) / (high_v - low_v) * (high_t - low_t)
    tau_c = np.where(beyond, 1.0, np.minimum(tau_c, 1.0))
    return portnoy_weights_from_levels(tau_c, events, grid, policy)


def portnoy_weights_from_levels(
    tau_c: np.ndarray,
    events: np.ndarray,
    grid: QuantileGrid,
    policy: WeightPolicy,
) -> tuple[np.ndarray, int]:
    """
    由每行 τ_c = F(c) 直接给出 Portnoy 权重矩阵 (n, B−1)；未删失行为 0。
    """
    tau_c = np.asarray(tau_c, dtype=float)
    interior = grid.interior[None, :]
    remaining = (1.0 - tau_c)[:, None]
    reached = tau_c[:, None] <= interior
    own = _safe_ratio(interior - tau_c[:, None], remaining)
    own = np.where(remaining > 0.0, own, 1.0)
    matrix = np.where(reached, own, policy.fallback_w)
    censored = events == 0
    matrix = np.where(censored[:, None], matrix, 0.0)
    flagged = int(np.count_nonzero(censored & (tau_c >= 1.0) & np.any(reached, axis=1)))
    return matrix, flagged


def row_weights(
    rule: str,
    reference: np.ndarray,
    times: np.ndarray,
    events: np.ndarray,
    grid: TimeGrid | QuantileGrid,
    policy: WeightPolicy,
) -> tuple[np.ndarray | None, int]:
    """
    按规则分派的按行权重；不需要权重的规则返回 (None, 0)。

    参数：
    - reference: 分布型规则传每行生存值 (n, B+1)；Portnoy 传每行分位值 (n, B+1)。
    """
    info = get_rule(rule)
    if not info.needs_weights:
        return None, 0
    if rule == "portnoy":
        if not isinstance(grid, QuantileGrid):
            raise DomainError("portnoy 权重需要 QuantileGrid")
        matrix, flagged = batch_portnoy_weights(reference, times, events, grid, policy)
    else:
        if not isinstance(grid, TimeGrid):
            raise DomainError(f"{rule} 权重需要 TimeGrid")
        matrix, flagged = batch_distribution_weights(rule, reference, times, events, grid)
    if flagged:
        LOGGER.warning("degenerate weights flagged: rule=%s rows=%d", rule, flagged)
    return matrix, flagged
