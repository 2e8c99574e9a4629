"""
softmax 输出模型。

本文件应该做什么：
1. GroupTableModel：每个分组一行 logits（长度 B）。
2. LinearModel：标准化特征上的仿射映射，输出 B 个 logits。
3. 两种输出：分布（分箱质量，带 TimeGrid）或分位（分位增量 × z_max，带 QuantileGrid）。

约定：
- 参数初始化为 0，即初始模型为均匀分布/等间距分位。
- 预测时质量以 1e-12 为下限截断后归一化，与 BinMassCdf 构造一致。
"""

from __future__ import annotations

import copy
from abc import ABC, abstractmethod
from collections.abc import Sequence
from typing import Any

import numpy as np

from survscore.domain import BinMassCdf, QuantileCurve, QuantileGrid, SurvivalDataset, TimeGrid
from survscore.domain.distributions import clamped_softmax
from survscore.errors import DomainError


def tails_from_masses(masses: np.ndarray) -> np.ndarray:
    """每行分箱质量 → 阈值处生存值 (n, B+1)，首列为 1，末列为 0。"""
    tails = np.zeros((masses.shape[0], masses.shape[1] + 1))
    tails[:, :-1] = np.cumsum(masses[:, ::-1], axis=1)[:, ::-1]
    tails[:, 0] = 1.0
    return tails


def quantiles_from_masses(masses: np.ndarray, z_max: float) -> np.ndarray:
    """每行分位增量 → 分位曲线 (n, B+1)，首列为 0，末列为 z_max。"""
    values = np.zeros((masses.shape[0], masses.shape[1] + 1))
    values[:, 1:] = z_max * np.cumsum(masses, axis=1)
    values[:, -1] = z_max
    return values


class LogitModel(ABC):
    """
    softmax 输出模型基类。

    参数：
    - n_bins: 输出维度 B。
    - time_grid: 分布输出时的时间网格。
    - quantile_grid / z_max: 分位输出时的分位网格与上界。
    """

    def __init__(
        self,
        n_bins: int,
        *,
        time_grid: TimeGrid | None = None,
        quantile_grid: QuantileGrid | None = None,
        z_max: float | None = None,
    ) -> None:
        if n_bins < 1:
            raise DomainError("n_bins 必须为正整数")
        if (time_grid is None) == (quantile_grid is None):
            raise DomainError("time_grid 与 quantile_grid 必须恰好提供一个")
        if time_grid is not None and time_grid.n_bins != n_bins:
            raise DomainError("time_grid 分箱数与 n_bins 不一致")
        if quantile_grid is not None:
            if quantile_grid.n_bins != n_bins:
                raise DomainError("quantile_grid 分箱数与 n_bins 不一致")
            if z_max is None or z_max <= 0.0:
                raise DomainError("分位输出需要正的 z_max")
        self.n_bins = int(n_bins)
        self.time_grid = time_grid
        self.quantile_grid = quantile_grid
        self.z_max = None if z_max is None else float(z_max)

    @property
    def output(self) -> str:
        return "distribution" if self.time_grid is not None else "quantile"

    @property
    def grid(self) -> TimeGrid | QuantileGrid:
        return self.time_grid if self.time_grid is not None else self.quantile_grid  # type: ignore[return-value]

    @abstractmethod
    def encode(self, data: SurvivalDataset) -> np.ndarray:
        """把数据集特征编码为模型输入（分组下标或标准化特征矩阵）。"""

    @abstractmethod
    def encode_one(self, x: Any) -> np.ndarray:
        """编码单条特征。"""

    @abstractmethod
    def logits_from(self, encoded: np.ndarray) -> np.ndarray:
        """编码输入 → logits (n, B)。"""

    @abstractmethod
    def backprop(self, encoded: np.ndarray, dlogits: np.ndarray) -> np.ndarray:
        """logits 梯度 → 扁平参数梯度（按行求和）。"""

    @abstractmethod
    def get_params(self) -> np.ndarray: ...

    @abstractmethod
    def set_params(self, params: np.ndarray) -> None: ...

    def row_keys(self, encoded: np.ndarray) -> np.ndarray:
        """用于合并重复行的键（二维）。"""
        return np.asarray(encoded, dtype=float).reshape(encoded.shape[0], -1)

    def copy(self) -> "LogitModel":
        return copy.deepcopy(self)

    def masses_for(self, data: SurvivalDataset) -> np.ndarray:
        return clamped_softmax(self.logits_from(self.encode(data)))

    def knots_for(self, data: SurvivalDataset) -> np.ndarray:
        """
        每行预测在网格节点上的取值，用于 IR 的收敛判断。

        返回：
        - 分布输出：F̂(ζ_0..ζ_B)；分位输出：F̂^{-1}(τ_0..τ_B) / z_max。
        """
        masses = self.masses_for(data)
        if self.output == "distribution":
            return 1.0 - tails_from_masses(masses)
        assert self.z_max is not None
        return quantiles_from_masses(masses, self.z_max) / self.z_max


class GroupTableModel(LogitModel):
    """分组查表模型：每组一行 logits。"""

    def __init__(self, groups: Sequence[str], n_bins: int, **grids: Any) -> None:
        super().__init__(n_bins, **grids)
        labels = tuple(dict.fromkeys(str(g) for g in groups))
        if not labels:
            raise DomainError("groups 不能为空")
        self.groups = labels
        self._index = {label: i for i, label in enumerate(labels)}
        self.params = np.zeros((len(labels), self.n_bins))

    def _lookup(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise DomainError(f"未知分组标签: {label}") from None

    def encode(self, data: SurvivalDataset) -> np.ndarray:
        if data.groups is None:
            raise DomainError("分组查表模型需要带分组标签的数据集")
        return np.array([self._lookup(label) for label in data.groups], dtype=np.int64)

    def encode_one(self, x: Any) -> np.ndarray:
        return np.array([self._lookup(str(x))], dtype=np.int64)

    def logits_from(self, encoded: np.ndarray) -> np.ndarray:
        return self.params[encoded]

    def backprop(self, encoded: np.ndarray, dlogits: np.ndarray) -> np.ndarray:
        grad = np.zeros_like(self.params)
        np.add.at(grad, encoded, dlogits)
        return grad.ravel()

    def get_params(self) -> np.ndarray:
        return self.params.ravel().copy()

    def set_params(self, params: np.ndarray) -> None:
        self.params = np.array(params, dtype=float).reshape(self.params.shape)


class LinearModel(LogitModel):
    """
    线性 softmax 模型 logits = ((x − center) / scale) W + b。

    参数：
    - n_features: 特征维度 d（可为 0，此时退化为只有偏置的无条件模型）。
    - center / scale: 特征标准化参数，缺省为 0 / 1。
    """

    def __init__(
        self,
        n_features: int,
        n_bins: int,
        *,
        center: np.ndarray | None = None,
        scale: np.ndarray | None = None,
        **grids: Any,
    ) -> None:
        super().__init__(n_bins, **grids)
        if n_features < 0:
            raise DomainError("n_features 不能为负")
        self.n_features = int(n_features)
        self.center = np.zeros(self.n_features) if center is None else np.asarray(center, dtype=float)
        self.scale = np.ones(self.n_features) if scale is None else np.asarray(scale, dtype=float)
        if self.center.shape != (self.n_features,) or self.scale.shape != (self.n_features,):
            raise DomainError("center / scale 维度与 n_features 不一致")
        if np.any(self.scale <= 0.0):
            raise DomainError("scale 必须为正")
        self.weights = np.zeros((self.n_features, self.n_bins))
        self.bias = np.zeros(self.n_bins)

    @classmethod
    def for_dataset(cls, data: SurvivalDataset, n_bins: int, **grids: Any) -> "LinearModel":
        """按数据集特征的均值与标准差构造（标准差为 0 的列按 1 处理）。"""
        if data.features is None:
            raise DomainError("线性模型需要数值特征")
        center = data.features.mean(axis=0)
        spread = data.features.std(axis=0)
        scale = np.where(spread > 0.0, spread, 1.0)
        return cls(data.features.shape[1], n_bins, center=center, scale=scale, **grids)

    def _standardize(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float).reshape(-1, self.n_features)
        return (features - self.center) / self.scale

    def encode(self, data: SurvivalDataset) -> np.ndarray:
        if data.features is None:
            raise DomainError("线性模型需要数值特征")
        if data.features.shape[1] != self.n_features:
            raise DomainError(f"特征维度 {data.features.shape[1]} 与模型 {self.n_features} 不一致")
        return self._standardize(data.features)

    def encode_one(self, x: Any) -> np.ndarray:
        values = np.atleast_1d(np.asarray(x, dtype=float))
        if values.size != self.n_features:
            raise DomainError(f"特征维度 {values.size} 与模型 {self.n_features} 不一致")
        return self._standardize(values)

    def logits_from(self, encoded: np.ndarray) -> np.ndarray:
        return encoded @ self.weights + self.bias

    def backprop(self, encoded: np.ndarray, dlogits: np.ndarray) -> np.ndarray:
        return np.concatenate(((encoded.T @ dlogits).ravel(), dlogits.sum(axis=0)))

    def get_params(self) -> np.ndarray:
        return np.concatenate((self.weights.ravel(), self.bias))

    def set_params(self, params: np.ndarray) -> None:
        params = np.asarray(params, dtype=float)
        split = self.n_features * self.n_bins
        self.weights = params[:split].reshape(self.n_features, self.n_bins).copy()
        self.bias = params[split:].copy()


def predict_distribution(model: LogitModel, x: Any) -> BinMassCdf:
    """
    单条特征的分布预测。

    参数：
    - model: 分布输出模型。
    - x: 分组标签或特征向量。

    返回：
    - BinMassCdf: softmax(logits) 作为分箱质量。
    """
    if model.time_grid is None:
        raise DomainError("该模型不是分布输出")
    logits = model.logits_from(model.encode_one(x))[0]
    return BinMassCdf(model.time_grid, clamped_softmax(logits)[0])


def predict_quantiles(model: LogitModel, x: Any, grid: QuantileGrid, z_max: float) -> QuantileCurve:
    """
    单条特征的分位预测：softmax 增量乘以 z_max 后累加，首尾为 0 与 z_max。
    """
    if grid.n_bins != model.n_bins:
        raise DomainError("分位网格分箱数与模型输出维度不一致")
    if z_max <= 0.0:
        raise DomainError("z_max 必须为正数")
    increments = clamped_softmax(model.logits_from(model.encode_one(x)))
    return QuantileCurve(grid, quantiles_from_masses(increments, z_max)[0])


def predictions_for(model: LogitModel, data: SurvivalDataset) -> list[BinMassCdf]:
    """数据集每行的分布预测（分位输出模型先转换到 time_grid 上）。"""
    if model.time_grid is None:
        raise DomainError("该模型不是分布输出")
    masses = model.masses_for(data)
    return [BinMassCdf(model.time_grid, row) for row in masses]
