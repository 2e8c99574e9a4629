"""
批量评分与梯度。

本文件应该做什么：
1. 以 logits (n, B) 为输入，按行计算评分规则得分。
2. 可选地给出得分对 logits 的梯度（权重视为常数，不参与求导）。
3. 作为 empirical_loss / loss_gradient / 蒙特卡洛校验的唯一计算入口。

约定：
- 分布型规则：softmax(logits) 为分箱质量。
- 分位型规则：clamped_softmax(logits) 为分位增量，乘以 scale(z_max) 后累加得到分位曲线，与 predict_quantiles 一致。
- 得分为 +∞ 的行记入 infinite 掩码，梯度置 0。
- pinball 在拐点 q=y 处取左导数 −τ。
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from survscore.domain import QuantileGrid, TimeGrid
from survscore.domain.distributions import clamped_softmax
from survscore.errors import DomainError
from survscore.scoring.rules import get_rule


@dataclass(slots=True)
class BatchResult:
    """
    批量评分结果。

    字段说明：
    - scores: 每行得分，形状 (n,)。
    - infinite: 得分为 +∞ 的行。
    - grad: 每行得分对 logits 的梯度 (n, B)；未请求时为 None。
    """

    scores: np.ndarray
    infinite: np.ndarray
    grad: np.ndarray | None


def _softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    inner = np.sum(dprobs * probs, axis=1, keepdims=True)
    return probs * (dprobs - inner)


def _suffix_sum(values: np.ndarray, width: int) -> np.ndarray:
    """out[:, m] = Σ_{c ≥ m} values[:, c]，补零到 width 列。"""
    out = np.zeros((values.shape[0], width))
    if values.shape[1]:
        out[:, : values.shape[1]] = np.cumsum(values[:, ::-1], axis=1)[:, ::-1]
    return out


def _require_weights(rule: str, weights: np.ndarray | None, shape: tuple[int, int]) -> np.ndarray:
    if weights is None:
        raise DomainError(f"{rule} 需要按行权重")
    matrix = np.asarray(weights, dtype=float)
    if matrix.shape != shape:
        raise DomainError(f"{rule} 权重形状应为 {shape}，实际 {matrix.shape}")
    return matrix


def _log_family(
    rule: str,
    logits: np.ndarray,
    bins: np.ndarray,
    events: np.ndarray,
    weights: np.ndarray | None,
    with_grad: bool,
) -> tuple[np.ndarray, np.ndarray | None]:
    n, n_bins = logits.shape
    rows = np.arange(n)
    log_probs = log_softmax(logits, axis=1)
    own = log_probs[rows, bins]
    if rule == "log":
        a, b = np.ones(n), np.zeros(n)
    else:
        w = np.zeros(n) if rule == "cen_log_simple" else _require_weights(rule, weights, (n, n_bins))[rows, bins]
        a = np.where(events == 1, 1.0, w)
        b = np.where(events == 1, 0.0, 1.0 - w)

    tail_mask = np.arange(n_bins)[None, :] > bins[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        masked = np.where(tail_mask, logits, -np.inf)
        lse_tail = logsumexp(masked, axis=1)
        log_tail = lse_tail - logsumexp(logits, axis=1)
        term_a = np.where(a > 0.0, a * own, 0.0)
        term_b = np.where(b > 0.0, b * log_tail, 0.0)
    scores = -(term_a + term_b)
    if not with_grad:
        return scores, None

    probs = np.exp(log_probs)
    onehot = np.zeros_like(probs)
    onehot[rows, bins] = 1.0
    finite_tail = np.isfinite(lse_tail)
    with np.errstate(over="ignore", invalid="ignore"):
        tail_soft = np.where(tail_mask & finite_tail[:, None], np.exp(logits - lse_tail[:, None]), 0.0)
    grad = a[:, None] * (probs - onehot)
    grad += np.where((b > 0.0)[:, None], b[:, None] * (probs - tail_soft), 0.0)
    return scores, grad


def _cont_log(
    logits: np.ndarray,
    times: np.ndarray,
    bins: np.ndarray,
    events: np.ndarray,
    grid: TimeGrid,
    with_grad: bool,
) -> tuple[np.ndarray, np.ndarray | None]:
    n, n_bins = logits.shape
    rows = np.arange(n)
    log_probs = log_softmax(logits, axis=1)
    widths = grid.widths[bins]
    position = (grid.thresholds[bins + 1] - times) / widths
    columns = np.arange(n_bins)[None, :]
    survival_weight = (columns > bins[:, None]).astype(float)
    survival_weight[rows, bins] = position
    with np.errstate(divide="ignore", invalid="ignore"):
        lse_surv = logsumexp(logits, axis=1, b=survival_weight)
        log_surv = lse_surv - logsumexp(logits, axis=1)
    uncensored = events == 1
    scores = np.where(uncensored, -log_probs[rows, bins] + np.log(widths), -log_surv)
    if not with_grad:
        return scores, None

    probs = np.exp(log_probs)
    onehot = np.zeros_like(probs)
    onehot[rows, bins] = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        surv_soft = np.where(
            np.isfinite(lse_surv)[:, None],
            survival_weight * np.exp(logits - lse_surv[:, None]),
            0.0,
        )
    grad = np.where(uncensored[:, None], probs - onehot, probs - surv_soft)
    return scores, grad


def _brier_family(
    rule: str,
    logits: np.ndarray,
    bins: np.ndarray,
    weights: np.ndarray | None,
    with_grad: bool,
) -> tuple[np.ndarray, np.ndarray | None]:
    n, n_bins = logits.shape
    probs = softmax(logits, axis=1)
    if rule == "brier":
        target = np.zeros((n, n_bins))
        target[np.arange(n), bins] = 1.0
    else:
        target = _require_weights(rule, weights, (n, n_bins))
    scores = np.sum(target * (1.0 - probs) ** 2 + (1.0 - target) * probs**2, axis=1)
    if not with_grad:
        return scores, None
    return scores, _softmax_backward(probs, 2.0 * (probs - target))


def _rps_family(
    rule: str,
    logits: np.ndarray,
    bins: np.ndarray,
    events: np.ndarray,
    weights: np.ndarray | None,
    with_grad: bool,
) -> tuple[np.ndarray, np.ndarray | None]:
    n, n_bins = logits.shape
    probs = softmax(logits, axis=1)
    cdf = np.cumsum(probs, axis=1)[:, : n_bins - 1]
    reached = np.arange(n_bins - 1)[None, :] >= bins[:, None]
    if rule == "rps":
        target = reached.astype(float)
    else:
        w = _require_weights(rule, weights, (n, n_bins - 1))
        target = np.where(reached, np.where((events == 1)[:, None], 1.0, w), 0.0)
    scores = np.sum(target * (1.0 - cdf) ** 2 + (1.0 - target) * cdf**2, axis=1)
    if not with_grad:
        return scores, None
    dprobs = _suffix_sum(2.0 * (cdf - target), n_bins)
    return scores, _softmax_backward(probs, dprobs)


def _pinball_matrix(quantiles: np.ndarray, y: np.ndarray, taus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    above = quantiles > y
    at_or_above = quantiles >= y
    loss = np.where(at_or_above, (1.0 - taus) * (quantiles - y), taus * (y - quantiles))
    slope = np.where(above, 1.0 - taus, -taus)
    return loss, slope


def _quantile_family(
    rule: str,
    logits: np.ndarray,
    times: np.ndarray,
    events: np.ndarray,
    grid: QuantileGrid,
    weights: np.ndarray | None,
    scale: float,
    z_infinity: float | None,
    with_grad: bool,
) -> tuple[np.ndarray, np.ndarray | None]:
    n, n_bins = logits.shape
    probs = clamped_softmax(logits)
    quantiles = scale * np.cumsum(probs, axis=1)[:, : n_bins - 1]
    taus = grid.interior[None, :]
    loss_z, slope_z = _pinball_matrix(quantiles, times[:, None], taus)
    if rule == "pinball":
        loss, slope = loss_z, slope_z
    else:
        if z_infinity is None or z_infinity <= scale:
            raise DomainError("portnoy 需要 z_infinity > z_max")
        w = _require_weights(rule, weights, (n, n_bins - 1))
        w = np.where((events == 1)[:, None], 1.0, w)
        loss_inf, slope_inf = _pinball_matrix(quantiles, np.full((n, 1), z_infinity), taus)
        loss = w * loss_z + (1.0 - w) * loss_inf
        slope = w * slope_z + (1.0 - w) * slope_inf
    scores = np.sum(loss, axis=1)
    if not with_grad:
        return scores, None
    dprobs = scale * _suffix_sum(slope, n_bins)
    return scores, _softmax_backward(probs, dprobs)


def batch_scores(
    rule: str,
    logits: np.ndarray,
    times: np.ndarray,
    events: np.ndarray,
    grid: TimeGrid | QuantileGrid,
    weights: np.ndarray | None = None,
    *,
    scale: float | None = None,
    z_infinity: float | None = None,
    with_grad: bool = False,
) -> BatchResult:
    """
    批量评分入口。

    参数：
    - rule: 规则标识（见 rules.RULES）。
    - logits: (n, B) 未归一化对数概率。
    - times / events: 观测 z 与 δ。
    - grid: 分布型规则传 TimeGrid，分位型规则传 QuantileGrid。
    - weights: 按行权重矩阵（规则需要时）。
    - scale: 分位型规则的 z_max。
    - z_infinity: Portnoy 的远端伪观测。
    - with_grad: 是否返回对 logits 的梯度。

    返回：
    - BatchResult
    """
    info = get_rule(rule)
    logits = np.asarray(logits, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    if logits.ndim != 2 or logits.shape[0] != times.size or events.shape != times.shape:
        raise DomainError("logits / times / events 形状不一致")
    if logits.shape[1] != grid.n_bins:
        raise DomainError(f"logits 列数 {logits.shape[1]} 与网格分箱数 {grid.n_bins} 不一致")

    if info.output == "quantile":
        if not isinstance(grid, QuantileGrid) or scale is None:
            raise DomainError(f"{rule} 需要 QuantileGrid 与 scale")
        if np.any(times > scale):
            raise DomainError("存在观测时间超过 z_max")
        scores, grad = _quantile_family(
            rule, logits, times, events, grid, weights, float(scale), z_infinity, with_grad
        )
    else:
        if not isinstance(grid, TimeGrid):
            raise DomainError(f"{rule} 需要 TimeGrid")
        if np.any(times <= 0.0) or np.any(times > grid.upper):
            raise DomainError(f"观测时间必须位于 (0, {grid.upper}]")
        bins = grid.bin_indices(times)
        if rule in ("log", "cen_log", "cen_log_simple"):
            scores, grad = _log_family(rule, logits, bins, events, weights, with_grad)
        elif rule == "cen_cont_log":
            scores, grad = _cont_log(logits, times, bins, events, grid, with_grad)
        elif rule in ("brier", "cen_brier"):
            scores, grad = _brier_family(rule, logits, bins, weights, with_grad)
        else:
            scores, grad = _rps_family(rule, logits, bins, events, weights, with_grad)

    infinite = ~np.isfinite(scores)
    if grad is not None:
        grad[infinite] = 0.0
    return BatchResult(scores=scores, infinite=infinite, grad=grad)
