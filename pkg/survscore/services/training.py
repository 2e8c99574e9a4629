"""
模型训练。

本文件应该做什么：
1. empirical_loss / loss_gradient：给定按行权重时的经验损失与梯度。
2. sgd_fit：全批量梯度下降，沿经验损失（求和）的梯度更新参数，步长即 learning_rate。
3. ir_fit：迭代重加权。每轮用当前模型算权重，再做一次 sgd_fit，直到预测不再变化。

约定：
- 权重在一次 sgd_fit 内固定，不参与求导。
- 只依赖 (分组, 分箱, δ, 权重行) 的规则会把重复行合并为带重数的唯一行。
- 得分为 +∞ 的行：skip_infinite 为真时跳过并计数，否则损失为 +∞ 并触发发散错误。
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from survscore.domain import QuantileGrid, SurvivalDataset, TimeGrid
from survscore.errors import DomainError, TrainingDivergedError
from survscore.scoring.batch import batch_scores
from survscore.scoring.rules import TRAINABLE_RULES, get_rule
from survscore.scoring.weights import WeightPolicy, row_weights
from survscore.services.models import LogitModel, quantiles_from_masses, tails_from_masses

LOGGER = logging.getLogger(__name__)

# 这些规则的得分只依赖观测所在分箱
BIN_ONLY_RULES = frozenset({"cen_log", "cen_log_simple", "cen_brier", "cen_rps"})

WeightProvider = Callable[[SurvivalDataset], np.ndarray]


@dataclass(slots=True)
class TrainConfig:
    """
    训练配置。

    字段说明：
    - rule: 训练目标规则（TRAINABLE_RULES 之一）。
    - learning_rate / epochs: 每次 sgd_fit 的步长与轮数。
    - max_outer_iters / tol: IR 外层最大轮数与收敛阈值（预测节点最大变化）。
    - z_inf_factor: Portnoy 远端伪观测 z∞ = z_inf_factor · z_max。
    - fallback_w: Portnoy 权重无定义时的回退值。
    - skip_infinite: 是否跳过得分为 +∞ 的行。
    """

    rule: str
    learning_rate: float = 1e-3
    epochs: int = 300
    seed: int = 0
    max_outer_iters: int = 20
    tol: float = 1e-4
    z_inf_factor: float = 1.05
    fallback_w: float = 1.0
    skip_infinite: bool = True

    def __post_init__(self) -> None:
        if self.rule not in TRAINABLE_RULES:
            raise DomainError(f"规则 {self.rule} 不可训练，可选: " + ", ".join(TRAINABLE_RULES))
        if not self.learning_rate > 0.0:
            raise DomainError("learning_rate 必须为正数")
        if self.epochs < 0:
            raise DomainError("epochs 不能为负")
        if self.max_outer_iters < 1:
            raise DomainError("max_outer_iters 至少为 1")
        if not self.tol > 0.0:
            raise DomainError("tol 必须为正数")
        if not self.z_inf_factor > 1.0:
            raise DomainError("z_inf_factor 必须大于 1")
        if not 0.0 <= self.fallback_w <= 1.0:
            raise DomainError("fallback_w 必须位于 [0, 1]")


@dataclass(slots=True)
class FitReport:
    """
    训练报告。

    字段说明：
    - initial_loss / final_loss: 训练前后的经验损失（求和）。
    - epochs_run: 最后一次 sgd_fit 的轮数。
    - outer_iters: IR 外层轮数（sgd_fit 为 1）。
    - max_cdf_changes: 每轮外层迭代后预测节点的最大变化。
    - flagged: 退化权重行数（各轮累计）。
    - skipped_rows: 因得分为 +∞ 被跳过的行数。
    - converged: 是否在 max_outer_iters 内收敛。
    """

    initial_loss: float
    final_loss: float
    epochs_run: int
    outer_iters: int = 1
    max_cdf_changes: list[float] = field(default_factory=list)
    flagged: int = 0
    skipped_rows: int = 0
    converged: bool = True

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(slots=True)
class _Batch:
    encoded: np.ndarray
    times: np.ndarray
    events: np.ndarray
    weights: np.ndarray | None
    counts: np.ndarray


def _check_rule(model: LogitModel, rule: str) -> None:
    info = get_rule(rule)
    if info.output != model.output:
        raise DomainError(f"规则 {rule} 的输出类型 {info.output} 与模型 {model.output} 不一致")


def _prepare(model: LogitModel, data: SurvivalDataset, rule: str, weights: np.ndarray | None) -> _Batch:
    encoded = model.encode(data)
    times, events = data.times, data.events
    matrix = None if weights is None else np.asarray(weights, dtype=float)
    if matrix is not None and matrix.shape[0] != data.n:
        raise DomainError(f"权重行数 {matrix.shape[0]} 与数据集行数 {data.n} 不一致")
    if rule not in BIN_ONLY_RULES or not isinstance(model.grid, TimeGrid):
        return _Batch(encoded, times, events, matrix, np.ones(data.n))

    columns = [model.row_keys(encoded), model.grid.bin_indices(times)[:, None], events[:, None]]
    if matrix is not None:
        columns.append(matrix)
    keys = np.hstack([np.asarray(c, dtype=float) for c in columns])
    _, first, counts = np.unique(keys, axis=0, return_index=True, return_counts=True)
    LOGGER.debug("collapsed rows: rule=%s rows=%d unique=%d", rule, data.n, first.size)
    return _Batch(
        encoded[first],
        times[first],
        events[first],
        None if matrix is None else matrix[first],
        counts.astype(float),
    )


def _z_infinity(model: LogitModel, z_inf_factor: float) -> float | None:
    return None if model.z_max is None else z_inf_factor * model.z_max


def _evaluate(
    model: LogitModel,
    batch: _Batch,
    rule: str,
    *,
    z_inf_factor: float,
    skip_infinite: bool,
    with_grad: bool,
) -> tuple[float, np.ndarray | None, int, float]:
    """返回 (损失求和, 参数梯度, 跳过行数, 计入行数)。"""
    result = batch_scores(
        rule,
        model.logits_from(batch.encoded),
        batch.times,
        batch.events,
        model.grid,
        batch.weights,
        scale=model.z_max,
        z_infinity=_z_infinity(model, z_inf_factor),
        with_grad=with_grad,
    )
    infinite = result.infinite
    skipped = int(batch.counts[infinite].sum())
    if np.any(infinite) and not skip_infinite:
        return math.inf, None, 0, float(batch.counts.sum())
    counts = np.where(infinite, 0.0, batch.counts)
    loss = float(np.dot(counts, np.where(infinite, 0.0, result.scores)))
    grad = None
    if with_grad:
        assert result.grad is not None
        grad = model.backprop(batch.encoded, result.grad * counts[:, None])
    return loss, grad, skipped, float(counts.sum())


def empirical_loss(
    model: LogitModel,
    data: SurvivalDataset,
    rule: str,
    weights_per_row: np.ndarray | None = None,
    *,
    z_inf_factor: float = 1.05,
    skip_infinite: bool = False,
) -> float:
    """
    经验损失 L = Σ_r S(pred(x_r), (z_r, δ_r); w_r)。

    参数：
    - weights_per_row: 规则需要权重时的 (n, k) 矩阵。
    - skip_infinite: 为真时得分为 +∞ 的行不计入。

    返回：
    - float: 损失求和；存在 +∞ 行且不跳过时为 +∞。
    """
    _check_rule(model, rule)
    batch = _prepare(model, data, rule, weights_per_row)
    loss, _, _, _ = _evaluate(
        model, batch, rule, z_inf_factor=z_inf_factor, skip_infinite=skip_infinite, with_grad=False
    )
    return loss


def loss_gradient(
    model: LogitModel,
    data: SurvivalDataset,
    rule: str,
    weights_per_row: np.ndarray | None = None,
    *,
    z_inf_factor: float = 1.05,
    skip_infinite: bool = False,
) -> np.ndarray:
    """经验损失对扁平参数的梯度（权重视为常数）。"""
    _check_rule(model, rule)
    batch = _prepare(model, data, rule, weights_per_row)
    loss, grad, _, _ = _evaluate(
        model, batch, rule, z_inf_factor=z_inf_factor, skip_infinite=skip_infinite, with_grad=True
    )
    if grad is None:
        raise DomainError(f"损失为 {loss}，梯度无定义")
    return grad


def sgd_fit(
    model: LogitModel,
    data: SurvivalDataset,
    rule: str,
    weights_per_row: np.ndarray | None,
    cfg: TrainConfig,
) -> FitReport:
    """
    固定权重下的全批量梯度下降（原地更新模型参数）。

    每轮 θ ← θ − learning_rate · ∇L，L 为经验损失求和；
    折算到平均损失上的步长为 learning_rate × 计入行数。

    参数：
    - model: 待训练模型。
    - data: 训练数据。
    - rule: 训练目标。
    - weights_per_row: 固定权重矩阵。
    - cfg: 训练配置。

    返回：
    - FitReport

    异常：
    - TrainingDivergedError: 损失变为非有限值。
    """
    _check_rule(model, rule)
    batch = _prepare(model, data, rule, weights_per_row)

    def step() -> tuple[float, np.ndarray | None, int, float]:
        return _evaluate(
            model, batch, rule, z_inf_factor=cfg.z_inf_factor, skip_infinite=cfg.skip_infinite, with_grad=True
        )

    loss, grad, skipped, counted = step()
    if counted <= 0.0:
        raise DomainError("没有可计入损失的行")
    if skipped:
        LOGGER.warning("rows with infinite score skipped: rule=%s rows=%d", rule, skipped)
    initial_loss = loss
    params = model.get_params()
    for epoch in range(cfg.epochs):
        if grad is None or not math.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        params = params - cfg.learning_rate * grad
        model.set_params(params)
        loss, grad, skipped, counted = step()
        if counted <= 0.0:
            raise TrainingDivergedError(epoch + 1, math.inf)
    if cfg.epochs and not math.isfinite(loss):
        raise TrainingDivergedError(cfg.epochs, loss)
    LOGGER.debug("sgd_fit done: rule=%s epochs=%d loss=%.6f", rule, cfg.epochs, loss)
    return FitReport(
        initial_loss=initial_loss,
        final_loss=loss,
        epochs_run=cfg.epochs,
        skipped_rows=skipped,
    )


def _reference(model: LogitModel, data: SurvivalDataset) -> np.ndarray:
    masses = model.masses_for(data)
    if isinstance(model.grid, QuantileGrid):
        assert model.z_max is not None
        return quantiles_from_masses(masses, model.z_max)
    return tails_from_masses(masses)


def ir_fit(
    model: LogitModel,
    data: SurvivalDataset,
    rule: str,
    cfg: TrainConfig,
    weight_provider: WeightProvider | None = None,
) -> FitReport:
    """
    迭代重加权训练。

    每轮：按当前模型（或 weight_provider）计算权重 → sgd_fit → 比较预测节点变化。
    规则不需要权重或数据无删失行时只跑一轮。

    参数：
    - weight_provider: 给定时替代模型自身权重（例如由真值分布给出的权重）。

    返回：
    - FitReport：converged 为假表示达到 max_outer_iters 仍未收敛。
    """
    info = get_rule(rule)
    _check_rule(model, rule)
    policy = WeightPolicy(fallback_w=cfg.fallback_w)
    single_pass = not info.needs_weights or not np.any(data.events == 0)
    max_iters = 1 if single_pass else cfg.max_outer_iters

    previous = model.knots_for(data)
    changes: list[float] = []
    flagged_total = 0
    initial_loss: float | None = None
    last: FitReport | None = None
    converged = False
    for outer in range(1, max_iters + 1):
        if weight_provider is not None:
            weights, flagged = np.asarray(weight_provider(data), dtype=float), 0
        else:
            weights, flagged = row_weights(
                rule, _reference(model, data), data.times, data.events, model.grid, policy
            )
        last = sgd_fit(model, data, rule, weights, cfg)
        if initial_loss is None:
            initial_loss = last.initial_loss
        flagged_total += flagged
        current = model.knots_for(data)
        change = float(np.max(np.abs(current - previous)))
        changes.append(change)
        previous = current
        LOGGER.info(
            "ir_fit outer=%d rule=%s loss=%.6f max_cdf_change=%.3e flagged=%d",
            outer, rule, last.final_loss, change, flagged,
        )
        if single_pass or change < cfg.tol:
            converged = True
            break
    if not converged:
        LOGGER.warning("ir_fit not converged: rule=%s outer_iters=%d last_change=%.3e", rule, max_iters, changes[-1])

    assert last is not None and initial_loss is not None
    return FitReport(
        initial_loss=initial_loss,
        final_loss=last.final_loss,
        epochs_run=last.epochs_run,
        outer_iters=len(changes),
        max_cdf_changes=changes,
        flagged=flagged_total,
        skipped_rows=last.skipped_rows,
        converged=converged,
    )
