"""
评分规则（单条观测）。

本文件应该做什么：
1. 未删失参考规则：pinball / log / brier / rps。
2. 删失扩展：portnoy / cen_log / cen_log_simple / cen_cont_log / cen_brier /
   cen_binary_brier / cen_rps。
3. 规则注册表 RULES 与 get_rule。

约定：
- 分箱为右闭区间 (ζ_i, ζ_{i+1}]，z = ζ_B 属于最后一箱。
- log(0) 对应的得分返回 math.inf，不抛异常。
- δ=1 时删失规则与对应参考规则走同一段代码，结果逐位一致。
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from survscore.domain import BinMassCdf, CensoredObservation, QuantileCurve
from survscore.errors import DomainError


@dataclass(frozen=True, slots=True)
class PortnoyConfig:
    """
    Portnoy 规则参数。

    字段说明：
    - tau: 分位水平。
    - z_infinity: 删失点的远端伪观测，必须大于 z_max（调用时校验）。
    - w: 删失点落在 z 处的权重，位于 [0, 1]。
    """

    tau: float
    z_infinity: float
    w: float

    def __post_init__(self) -> None:
        _check_tau(self.tau)
        if not math.isfinite(self.z_infinity) or self.z_infinity <= 0.0:
            raise DomainError("z_infinity 必须为正有限数")
        _check_probability(self.w, "w")


@dataclass(frozen=True, eq=False)
class WeightVector:
    """
    删失权重向量。

    字段说明：
    - weights: 每个分箱（cen_log / cen_brier，长度 B）或每个内部阈值/水平
      （cen_rps / portnoy，长度 B−1）的权重，均位于 [0, 1]。
    - flagged: 参考 CDF 在删失时间处已到 1，权重按极限取值。
    """

    weights: np.ndarray
    flagged: bool = False

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=float)
        if weights.ndim != 1:
            raise DomainError("weights 必须为一维向量")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0.0) or np.any(weights > 1.0):
            raise DomainError("weights 每一项必须位于 [0, 1]")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return int(self.weights.size)

    def __getitem__(self, index: int) -> float:
        return float(self.weights[index])

    @classmethod
    def zeros(cls, size: int) -> "WeightVector":
        return cls(np.zeros(size))


@dataclass(frozen=True, slots=True)
class RuleInfo:
    """
    规则元信息。

    字段说明：
    - name: 规则标识。
    - output: "distribution"（分箱质量）或 "quantile"（分位曲线）。
    - needs_weights: 是否需要删失权重。
    - censored: 是否接受删失观测。
    - weight_size: 权重长度相对 B 的偏移（0 表示 B，-1 表示 B−1）。
    """

    name: str
    output: str
    needs_weights: bool
    censored: bool
    weight_size: int = 0


RULES: dict[str, RuleInfo] = {
    "pinball": RuleInfo("pinball", "quantile", needs_weights=False, censored=False),
    "portnoy": RuleInfo("portnoy", "quantile", needs_weights=True, censored=True, weight_size=-1),
    "log": RuleInfo("log", "distribution", needs_weights=False, censored=False),
    "cen_log": RuleInfo("cen_log", "distribution", needs_weights=True, censored=True),
    "cen_log_simple": RuleInfo("cen_log_simple", "distribution", needs_weights=False, censored=True),
    "cen_cont_log": RuleInfo("cen_cont_log", "distribution", needs_weights=False, censored=True),
    "brier": RuleInfo("brier", "distribution", needs_weights=False, censored=False),
    "cen_brier": RuleInfo("cen_brier", "distribution", needs_weights=True, censored=True),
    "rps": RuleInfo("rps", "distribution", needs_weights=False, censored=False),
    "cen_rps": RuleInfo("cen_rps", "distribution", needs_weights=True, censored=True, weight_size=-1),
}

# 可用于训练的删失规则
TRAINABLE_RULES = ("portnoy", "cen_log", "cen_log_simple", "cen_cont_log", "cen_brier", "cen_rps")


def get_rule(name: str) -> RuleInfo:
    """按名称取规则元信息。"""
    try:
        return RULES[name]
    except KeyError:
        raise KeyError(f"未知评分规则 {name}，可选: " + ", ".join(RULES)) from None


def _check_tau(tau: float) -> None:
    if not (0.0 <= tau <= 1.0):
        raise DomainError(f"分位水平 tau={tau} 必须位于 [0, 1]")


def _check_probability(value: float, name: str) -> None:
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name}={value} 必须位于 [0, 1]")


def _neg_log(value: float) -> float:
    if value <= 0.0:
        return math.inf
    return -math.log(value)


def _bin_of(pred: BinMassCdf, y: float) -> int:
    if not (0.0 < y <= pred.upper):
        raise DomainError(f"观测时间 {y} 超出 (0, {pred.upper}]")
    return pred.grid.bin_index(y)


def _check_weights(weights: WeightVector, size: int, rule: str) -> None:
    if len(weights) != size:
        raise DomainError(f"{rule} 权重长度必须为 {size}，实际 {len(weights)}")


def pinball(predicted_quantile: float, y: float, tau: float) -> float:
    """
    分位损失 ρ_τ(q, y)。

    返回：
    - float: q ≥ y 时 (1−τ)(q−y)，否则 τ(y−q)。
    """
    _check_tau(tau)
    if predicted_quantile >= y:
        return (1.0 - tau) * (predicted_quantile - y)
    return tau * (y - predicted_quantile)


def portnoy(pred: QuantileCurve, obs: CensoredObservation, cfg: PortnoyConfig) -> float:
    """
    Portnoy 删失分位损失。

    参数：
    - pred: 预测分位曲线，cfg.tau 必须在其网格上。
    - obs: 删失观测。
    - cfg: τ、z_∞ 与权重 w。

    返回：
    - float: δ=1 时 ρ_τ(q, z)；δ=0 时 w·ρ_τ(q, z) + (1−w)·ρ_τ(q, z_∞)。
    """
    if cfg.z_infinity <= pred.upper:
        raise DomainError(f"z_infinity={cfg.z_infinity} 必须大于 z_max={pred.upper}")
    if obs.z > pred.upper:
        raise DomainError(f"观测时间 {obs.z} 超过 z_max={pred.upper}")
    quantile = pred.value_at_level(cfg.tau)
    at_z = pinball(quantile, obs.z, cfg.tau)
    if obs.delta == 1:
        return at_z
    return cfg.w * at_z + (1.0 - cfg.w) * pinball(quantile, cfg.z_infinity, cfg.tau)


def log_score(pred: BinMassCdf, y: float) -> float:
    """对数得分 −log f̂_i。"""
    return _neg_log(float(pred.masses[_bin_of(pred, y)]))


def cen_log(pred: BinMassCdf, obs: CensoredObservation, weights: WeightVector) -> float:
    """
    删失对数得分。

    参数：
    - weights: 长度 B，只读取 z 所在分箱的 w_i。

    返回：
    - float: δ=1 时 −log f̂_i；δ=0 时 −(w_i·log f̂_i + (1−w_i)·log(1−F̂(ζ_{i+1})))。
    """
    _check_weights(weights, pred.n_bins, "cen_log")
    index = _bin_of(pred, obs.z)
    if obs.delta == 1:
        return _neg_log(float(pred.masses[index]))
    w = weights[index]
    tail = float(pred.tail_knots[index + 1])
    score = 0.0
    # 系数为 0 的项直接跳过，避免 0·log 0
    if w > 0.0:
        score += w * _neg_log(float(pred.masses[index]))
    if w < 1.0:
        score += (1.0 - w) * _neg_log(tail)
    return score


def cen_log_simple(pred: BinMassCdf, obs: CensoredObservation) -> float:
    """w_i 全取 0 的删失对数得分。"""
    return cen_log(pred, obs, WeightVector.zeros(pred.n_bins))


def cen_cont_log(pred: BinMassCdf, obs: CensoredObservation) -> float:
    """连续版删失对数得分：−δ·log f̂(z) − (1−δ)·log(1−F̂(z))。"""
    _bin_of(pred, obs.z)
    if obs.delta == 1:
        return _neg_log(pred.density_at(obs.z))
    return _neg_log(pred.survival_at(obs.z))


def _weighted_brier(masses: np.ndarray, weights: np.ndarray) -> float:
    total = 0.0
    for f, w in zip(masses.tolist(), weights.tolist()):
        total += w * (1.0 - f) ** 2 + (1.0 - w) * f**2
    return total


def brier(pred: BinMassCdf, y: float) -> float:
    """Brier 得分 Σ_i (1(y ∈ 第 i 箱) − f̂_i)²。"""
    indicator = np.zeros(pred.n_bins)
    indicator[_bin_of(pred, y)] = 1.0
    return _weighted_brier(pred.masses, indicator)


def cen_brier(pred: BinMassCdf, obs: CensoredObservation, weights: WeightVector) -> float:
    """删失 Brier 得分 Σ_i (w_i(1−f̂_i)² + (1−w_i)f̂_i²)。"""
    _check_weights(weights, pred.n_bins, "cen_brier")
    _bin_of(pred, obs.z)
    return _weighted_brier(pred.masses, weights.weights)


def _binary_brier(cdf_value: float, z: float, delta: int, zeta: float, w: float) -> float:
    if z > zeta:
        return cdf_value**2
    if delta == 1:
        return (1.0 - cdf_value) ** 2
    return w * (1.0 - cdf_value) ** 2 + (1.0 - w) * cdf_value**2


def cen_binary_brier(pred: BinMassCdf, obs: CensoredObservation, zeta: float, w: float) -> float:
    """
    单阈值 ζ 上的删失二元 Brier 得分。

    参数：
    - zeta: 阈值，0 < ζ < ζ_B。
    - w: 删失且 z ≤ ζ 时使用的权重。
    """
    if not (0.0 < zeta < pred.upper):
        raise DomainError(f"阈值 zeta={zeta} 必须位于 (0, {pred.upper})")
    _check_probability(w, "w")
    _bin_of(pred, obs.z)
    return _binary_brier(pred.cdf_at(zeta), obs.z, obs.delta, zeta, w)


def rps(pred: BinMassCdf, y: float) -> float:
    """排序概率得分 Σ_{i=1}^{B−1} (1(y ≤ ζ_i) − F̂(ζ_i))²；B=1 时为 0。"""
    _bin_of(pred, y)
    total = 0.0
    for zeta in pred.grid.interior.tolist():
        total += _binary_brier(pred.cdf_at(zeta), y, 1, zeta, 0.0)
    return total


def cen_rps(pred: BinMassCdf, obs: CensoredObservation, weights: WeightVector) -> float:
    """
    删失排序概率得分：各内部阈值上 cen_binary_brier 之和。

    参数：
    - weights: 长度 B−1，第 k 项对应阈值 ζ_{k+1}。
    """
    _check_weights(weights, pred.n_bins - 1, "cen_rps")
    total = 0.0
    for k, zeta in enumerate(pred.grid.interior.tolist()):
        total += cen_binary_brier(pred, obs, zeta, weights[k])
    return total
