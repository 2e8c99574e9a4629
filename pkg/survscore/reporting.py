"""
运行配置与报告模型。

本文件应该做什么：
1. RunConfig / RunReport：CLI 一次运行的配置回显与 JSON 报告。
2. TruthSpecModel / PropernessSweepModel：truth 规格与 properness 扫描配置的校验。
3. 报告的确定性序列化与读回（json.dumps(ensure_ascii=False, indent=2)）。
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from survscore.domain import BinMassCdf, TimeGrid, uniform_time_grid
from survscore.scoring.rules import RULES
from survscore.services.oracle import PROPERNESS_RULES, PiecewiseLinearTruth

LOGGER = logging.getLogger(__name__)


class RunConfig(BaseModel):
    """一次 CLI 运行的配置回显。"""

    command: str = Field(..., min_length=1, description="子命令")
    input: str | None = Field(None, description="观测 CSV 路径")
    predictions: str | None = Field(None, description="预测 CSV 路径（eval）")
    rule: str | None = Field(None, description="评分规则标识")
    bins: int = Field(32, ge=1, description="分箱数 B")
    grid_kind: Literal["time", "quantile"] = Field("time", description="网格类型")
    grid_eps: float = Field(1e-3, ge=0.0, description="时间网格上端余量 ε")
    seed: int = Field(0, description="随机种子")
    learning_rate: float = Field(1e-3, gt=0.0, description="学习率")
    epochs: int = Field(300, ge=0, description="每次 sgd_fit 的轮数")
    ir_max_iters: int = Field(20, ge=1, description="IR 外层最大轮数")
    ir_tol: float = Field(1e-4, gt=0.0, description="IR 收敛阈值")
    fallback_w: float = Field(1.0, ge=0.0, le=1.0, description="Portnoy 回退权重")
    z_inf_factor: float = Field(1.05, gt=1.0, description="z∞ / z_max")
    out: str | None = Field(None, description="输出路径")
    group_column: str | None = Field(None, description="分组列名")
    fit_method: Literal["ir", "grid-search"] = Field("ir", description="训练方法")
    repeats: int = Field(1, ge=1, description="重复切分次数")
    truth: str | None = Field(None, description="truth 规格 JSON 路径")
    n: int | None = Field(None, ge=1, description="抽样行数")
    n_perturbations: int | None = Field(None, ge=0, description="properness 候选数")
    perturbation_scale: float | None = Field(None, ge=0.0, description="logit 噪声尺度")
    corrupt_weights: bool = Field(False, description="负对照：删失行使用回退权重")
    bins_list: list[int] | None = Field(None, description="B 收敛实验的分箱序列")
    seeds: list[int] | None = Field(None, description="B 收敛实验的种子序列")
    config: str | None = Field(None, description="用户 JSON 配置路径")

    @field_validator("rule")
    @classmethod
    def _known_rule(cls, value: str | None) -> str | None:
        if value is not None and value not in RULES:
            raise ValueError(f"未知评分规则 {value}，可选: " + ", ".join(RULES))
        return value

    @field_validator("input", "predictions", "out", "truth", "config")
    @classmethod
    def _non_empty_path(cls, value: str | None) -> str | None:
        if value is not None and not value.strip():
            raise ValueError("路径不能为空字符串")
        return value


class RunReport(BaseModel):
    """一次运行的 JSON 报告；不适用的键为 null。"""

    command: str
    config: RunConfig
    metrics: dict[str, float | int | None] | None = None
    fit: dict[str, Any] | None = None
    baseline: dict[str, float | int | None] | None = None
    oracle: dict[str, Any] | None = None
    repeats: dict[str, Any] | None = None
    properness: list[dict[str, Any]] | None = None
    km: dict[str, Any] | None = None
    bconv: dict[str, Any] | None = None
    output: dict[str, str] | None = None
    wall_clock_seconds: float = 0.0
    version: str
    seed: int


class TruthGroupModel(BaseModel):
    """单组 truth 规格。"""

    label: str = Field(..., min_length=1, description="分组标签")
    masses: list[float] = Field(..., min_length=1, description="事件分箱质量")
    censor_atoms: list[tuple[float, float]] | None = Field(None, description="删失原子 (c, π)")
    censor_masses: list[float] | None = Field(None, description="同网格连续删失质量")

    @model_validator(mode="after")
    def _one_censoring(self) -> "TruthGroupModel":
        if (self.censor_atoms is None) == (self.censor_masses is None):
            raise ValueError(f"分组 {self.label}: censor_atoms 与 censor_masses 必须恰好提供一个")
        return self


class TruthSpecModel(BaseModel):
    """truth 规格：共享网格 + 各组事件分布与删失分布。"""

    upper: float = Field(..., gt=0.0, description="网格上端 ζ_B")
    n_bins: int = Field(..., ge=1, description="分箱数")
    thresholds: list[float] | None = Field(None, description="非等长网格阈值（缺省为等长）")
    groups: list[TruthGroupModel] = Field(..., min_length=1, description="各组规格")

    @model_validator(mode="after")
    def _consistent(self) -> "TruthSpecModel":
        labels = [group.label for group in self.groups]
        if len(set(labels)) != len(labels):
            raise ValueError("分组标签必须互不相同")
        if self.thresholds is not None and len(self.thresholds) != self.n_bins + 1:
            raise ValueError("thresholds 长度必须为 n_bins + 1")
        for group in self.groups:
            if len(group.masses) != self.n_bins:
                raise ValueError(f"分组 {group.label}: masses 长度必须为 {self.n_bins}")
            if group.censor_masses is not None and len(group.censor_masses) != self.n_bins:
                raise ValueError(f"分组 {group.label}: censor_masses 长度必须为 {self.n_bins}")
        return self

    def grid(self) -> TimeGrid:
        if self.thresholds is not None:
            return TimeGrid(np.array(self.thresholds, dtype=float))
        return uniform_time_grid(self.upper, self.n_bins, eps=0.0)

    def to_truths(self) -> tuple[PiecewiseLinearTruth, ...]:
        """构造各组真值；领域校验失败时抛 DomainError。"""
        grid = self.grid()
        truths = []
        for group in self.groups:
            event_cdf = BinMassCdf(grid, np.array(group.masses, dtype=float))
            if group.censor_atoms is not None:
                truths.append(
                    PiecewiseLinearTruth(event_cdf, tuple(group.censor_atoms), group=group.label)
                )
            else:
                censor = BinMassCdf(grid, np.array(group.censor_masses, dtype=float))
                truths.append(PiecewiseLinearTruth(event_cdf, censor_cdf=censor, group=group.label))
        return tuple(truths)

    @classmethod
    def from_truths(cls, truths: tuple[PiecewiseLinearTruth, ...] | list[PiecewiseLinearTruth]) -> "TruthSpecModel":
        grid = truths[0].grid
        groups = []
        for truth in truths:
            groups.append(
                TruthGroupModel(
                    label=truth.group,
                    masses=truth.event_cdf.masses.tolist(),
                    censor_atoms=None if truth.censor_atoms is None else list(truth.censor_atoms),
                    censor_masses=None if truth.censor_cdf is None else truth.censor_cdf.masses.tolist(),
                )
            )
        return cls(
            upper=grid.upper,
            n_bins=grid.n_bins,
            thresholds=grid.thresholds.tolist(),
            groups=groups,
        )


class PropernessSweepModel(BaseModel):
    """properness 扫描配置。"""

    rules: list[str] = Field(default_factory=lambda: list(PROPERNESS_RULES), min_length=1)
    bins: list[int] = Field(default_factory=lambda: [2, 4, 8], min_length=1)
    patterns: list[str] = Field(default_factory=lambda: ["light", "heavy", "boundary"], min_length=1)
    n_perturbations: int = Field(500, ge=0, description="每个组合的候选数")
    perturbation_scale: float = Field(0.5, ge=0.0, description="logit 噪声尺度")
    tolerance: float = Field(1e-10, ge=0.0, description="违例容差")
    group: str | None = Field(None, description="作为基准的 truth 分组，缺省取第一组")
    truth: TruthSpecModel

    @field_validator("rules")
    @classmethod
    def _known_rules(cls, value: list[str]) -> list[str]:
        for rule in value:
            if rule not in RULES:
                raise ValueError(f"未知评分规则 {rule}")
        return value

    @field_validator("bins")
    @classmethod
    def _positive_bins(cls, value: list[int]) -> list[int]:
        if any(b < 1 for b in value):
            raise ValueError("bins 必须为正整数")
        return value

    def base_truth(self) -> PiecewiseLinearTruth:
        truths = self.truth.to_truths()
        if self.group is None:
            return truths[0]
        for truth in truths:
            if truth.group == self.group:
                return truth
        raise ValueError(f"truth 中没有分组 {self.group}")


def dump_report(report: RunReport) -> str:
    """确定性序列化报告（+∞ 写为 Infinity）。"""
    return json.dumps(report.model_dump(mode="python"), ensure_ascii=False, indent=2)


def write_report(report: RunReport, path: str | Path | None) -> str:
    """序列化报告；给定路径时同时写文件。"""
    text = dump_report(report)
    if path is not None:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text + "\n", encoding="utf-8")
        LOGGER.info("report written: path=%s command=%s", target, report.command)
    return text


def read_report(path: str | Path) -> RunReport:
    return RunReport.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
