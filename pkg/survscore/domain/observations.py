"""
删失观测与数据集。

本文件应该做什么：
1. CensoredObservation：(z, δ)，z = min(t, c)，δ = 1(t ≤ c)。
2. SurvivalDataset：按列存放的观测集合，附带分组标签或数值特征矩阵。
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from survscore.errors import DomainError


@dataclass(frozen=True, slots=True)
class CensoredObservation:
    """
    单条删失观测。

    字段说明：
    - z: 观测时间，> 0。
    - delta: 1 表示事件发生（未删失），0 表示删失。
    """

    z: float
    delta: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.z) or self.z <= 0.0:
            raise DomainError(f"观测时间 z={self.z} 必须为正有限数")
        if self.delta not in (0, 1):
            raise DomainError(f"删失指示 delta={self.delta} 必须为 0 或 1")

    @property
    def is_censored(self) -> bool:
        return self.delta == 0


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """
    生存数据集（列式）。

    字段说明：
    - times: 观测时间 z，形状 (n,)。
    - events: 删失指示 δ，形状 (n,)，取值 0/1。
    - z_max: 数据上界，所有 z ≤ z_max。
    - groups: 分组标签（分组查表模型使用），与 features 二选一。
    - features: 数值特征矩阵 (n, d)（线性模型使用）。
    """

    times: np.ndarray
    events: np.ndarray
    z_max: float
    groups: tuple[str, ...] | None = None
    features: np.ndarray | None = None

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        events = np.array(self.events, dtype=np.int64)
        if times.ndim != 1 or times.size == 0:
            raise DomainError("数据集不能为空")
        if events.shape != times.shape:
            raise DomainError("times 与 events 长度不一致")
        if not np.all(np.isfinite(times)) or np.any(times <= 0.0):
            raise DomainError("所有观测时间必须为正有限数")
        if np.any((events != 0) & (events != 1)):
            raise DomainError("events 只能取 0 或 1")
        if not math.isfinite(self.z_max) or np.any(times > self.z_max):
            raise DomainError(f"存在观测时间超过 z_max={self.z_max}")
        # 分组与特征二选一
        if (self.groups is None) == (self.features is None):
            raise DomainError("groups 与 features 必须恰好提供一个")

        if self.groups is not None:
            groups = tuple(str(label) for label in self.groups)
            if len(groups) != times.size:
                raise DomainError("groups 长度与观测数不一致")
            object.__setattr__(self, "groups", groups)
        else:
            features = np.array(self.features, dtype=float)
            if features.ndim == 1:
                features = features.reshape(times.size, -1)
            if features.ndim != 2 or features.shape[0] != times.size:
                raise DomainError("features 必须为 (n, d) 矩阵")
            if not np.all(np.isfinite(features)):
                raise DomainError("features 必须为有限数")
            features.setflags(write=False)
            object.__setattr__(self, "features", features)

        times.setflags(write=False)
        events.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "z_max", float(self.z_max))

    @classmethod
    def from_rows(
        cls,
        rows: Sequence[tuple[Any, CensoredObservation]],
        z_max: float | None = None,
    ) -> "SurvivalDataset":
        """
        由 (特征或分组标签, 观测) 行构造数据集。

        参数：
        - rows: 行列表；特征为 str 时视为分组标签，否则视为数值向量。
        - z_max: 缺省取最大观测时间。
        """
        if not rows:
            raise DomainError("数据集不能为空")
        times = np.array([obs.z for _, obs in rows], dtype=float)
        events = np.array([obs.delta for _, obs in rows], dtype=np.int64)
        upper = float(times.max()) if z_max is None else float(z_max)
        first = rows[0][0]
        if isinstance(first, str):
            return cls(times, events, upper, groups=tuple(str(x) for x, _ in rows))
        features = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in rows])
        return cls(times, events, upper, features=features)

    @property
    def n(self) -> int:
        return int(self.times.size)

    @property
    def is_grouped(self) -> bool:
        return self.groups is not None

    @property
    def group_labels(self) -> tuple[str, ...]:
        """按首次出现顺序排列的去重分组标签。"""
        if self.groups is None:
            return ()
        return tuple(dict.fromkeys(self.groups))

    @property
    def observations(self) -> tuple[CensoredObservation, ...]:
        return tuple(CensoredObservation(float(z), int(d)) for z, d in zip(self.times, self.events))

    def rows(self) -> Iterator[tuple[Any, CensoredObservation]]:
        """逐行产出 (特征或分组标签, 观测)。"""
        for index, obs in enumerate(self.observations):
            yield self.feature_of(index), obs

    @property
    def censored_fraction(self) -> float:
        return float(np.count_nonzero(self.events == 0)) / self.n

    def feature_of(self, index: int) -> Any:
        if self.groups is not None:
            return self.groups[index]
        assert self.features is not None
        return tuple(float(v) for v in self.features[index])

    def subset(self, indices: Sequence[int] | np.ndarray) -> "SurvivalDataset":
        """按下标取子集（z_max 保持不变）。"""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise DomainError("子集不能为空")
        if self.groups is not None:
            return SurvivalDataset(
                self.times[idx], self.events[idx], self.z_max, groups=tuple(self.groups[i] for i in idx)
            )
        assert self.features is not None
        return SurvivalDataset(self.times[idx], self.events[idx], self.z_max, features=self.features[idx])

    def concat(self, other: "SurvivalDataset") -> "SurvivalDataset":
        """拼接两个同类数据集。"""
        z_max = max(self.z_max, other.z_max)
        times = np.concatenate((self.times, other.times))
        events = np.concatenate((self.events, other.events))
        if self.groups is not None and other.groups is not None:
            return SurvivalDataset(times, events, z_max, groups=self.groups + other.groups)
        if self.features is not None and other.features is not None:
            return SurvivalDataset(times, events, z_max, features=np.vstack((self.features, other.features)))
        raise DomainError("分组数据集与特征数据集不能拼接")
