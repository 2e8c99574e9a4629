"""
运行配置装配。

本文件应该做什么：
1. SurvScoreSettings：参数优先，其次 SURVSCORE_* 环境变量，最后默认值。
2. JSON 配置读取与深合并（默认配置 + 用户 --config）。
3. truth 规格与 properness 扫描配置的加载与校验（失败统一抛 ConfigError）。
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from survscore.errors import ConfigError, DomainError
from survscore.reporting import PropernessSweepModel, TruthSpecModel
from survscore.services.oracle import PiecewiseLinearTruth

ENV_PREFIX = "SURVSCORE_"
PACKAGE_DIR = Path(__file__).resolve().parent
DEFAULT_CONFIG_DIR = PACKAGE_DIR.parent / "config"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass
class SurvScoreSettings:
    """
    运行配置。

    字段说明：
    - bins: 分箱数 B。
    - seed: 随机种子。
    - learning_rate / epochs: 梯度下降参数。
    - ir_max_iters / ir_tol: IR 外层参数。
    - fallback_w: Portnoy 回退权重。
    - z_inf_factor: z∞ / z_max。
    - grid_eps: 时间网格上端余量。
    - log_dir / log_level: 日志目录与级别。
    """

    bins: int
    seed: int
    learning_rate: float
    epochs: int
    ir_max_iters: int
    ir_tol: float
    fallback_w: float
    z_inf_factor: float
    grid_eps: float
    log_dir: str
    log_level: str


def load_survscore_settings(
    bins: int | None = None,
    seed: int | None = None,
    learning_rate: float | None = None,
    epochs: int | None = None,
    ir_max_iters: int | None = None,
    ir_tol: float | None = None,
    fallback_w: float | None = None,
    z_inf_factor: float | None = None,
    grid_eps: float | None = None,
    log_dir: str | None = None,
    log_level: str | None = None,
) -> SurvScoreSettings:
    """
    加载运行配置（参数优先，其次环境变量，最后默认值）。
    """
    try:
        resolved_bins = _resolve_int(bins, "BINS", 32)
        resolved_seed = _resolve_int(seed, "SEED", 0)
        resolved_lr = _resolve_float(learning_rate, "LR", 1e-3)
        resolved_epochs = _resolve_int(epochs, "EPOCHS", 300)
        resolved_ir_max_iters = _resolve_int(ir_max_iters, "IR_MAX_ITERS", 20)
        resolved_ir_tol = _resolve_float(ir_tol, "IR_TOL", 1e-4)
        resolved_fallback_w = _resolve_float(fallback_w, "FALLBACK_W", 1.0)
        resolved_z_inf_factor = _resolve_float(z_inf_factor, "Z_INF_FACTOR", 1.05)
        resolved_grid_eps = _resolve_float(grid_eps, "GRID_EPS", 1e-3)
    except ValueError as exc:
        raise ConfigError(f"配置值无法解析: {exc}") from exc
    resolved_log_dir = log_dir or os.getenv(ENV_PREFIX + "LOG_DIR") or str(PACKAGE_DIR / "logs")
    resolved_log_level = (log_level or os.getenv(ENV_PREFIX + "LOG_LEVEL") or "INFO").strip().upper()

    if resolved_bins <= 0:
        raise ConfigError("bins 必须为正整数")
    if resolved_lr <= 0.0:
        raise ConfigError("learning_rate 必须为正数")
    if resolved_epochs < 0:
        raise ConfigError("epochs 不能为负")
    if resolved_ir_max_iters <= 0:
        raise ConfigError("ir_max_iters 必须为正整数")
    if resolved_ir_tol <= 0.0:
        raise ConfigError("ir_tol 必须为正数")
    if not 0.0 <= resolved_fallback_w <= 1.0:
        raise ConfigError("fallback_w 必须位于 [0, 1]")
    if resolved_z_inf_factor <= 1.0:
        raise ConfigError("z_inf_factor 必须大于 1")
    if resolved_grid_eps < 0.0:
        raise ConfigError("grid_eps 不能为负")
    if resolved_log_level not in LOG_LEVELS:
        raise ConfigError(f"log_level 必须为 {', '.join(LOG_LEVELS)} 之一")

    return SurvScoreSettings(
        bins=resolved_bins,
        seed=resolved_seed,
        learning_rate=resolved_lr,
        epochs=resolved_epochs,
        ir_max_iters=resolved_ir_max_iters,
        ir_tol=resolved_ir_tol,
        fallback_w=resolved_fallback_w,
        z_inf_factor=resolved_z_inf_factor,
        grid_eps=resolved_grid_eps,
        log_dir=resolved_log_dir,
        log_level=resolved_log_level,
    )


def deep_merge_dict(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """递归合并两个字典，返回新字典（列表整体覆盖）。"""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge_dict(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_json_file(path: Path) -> dict[str, Any]:
    """读取 JSON 对象文件。"""
    with path.open("r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ConfigError(f"配置文件不是对象类型: {path}")
    return data


def _merged(defaults: dict[str, Any], user_config: str | Path | None) -> dict[str, Any]:
    if user_config is None:
        return defaults
    return deep_merge_dict(defaults, load_json_file(Path(user_config)))


def load_truth_spec(user_config: str | Path | None = None, config_dir: Path = DEFAULT_CONFIG_DIR) -> TruthSpecModel:
    """默认 truth 规格深合并用户配置后校验。"""
    data = _merged(load_json_file(config_dir / "truth.default.json"), user_config)
    try:
        return TruthSpecModel.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"truth 规格非法: {exc}") from exc


def build_truths(spec: TruthSpecModel) -> tuple[PiecewiseLinearTruth, ...]:
    try:
        return spec.to_truths()
    except DomainError as exc:
        raise ConfigError(f"truth 规格非法: {exc}") from exc


def load_truth_file(path: str | Path) -> tuple[PiecewiseLinearTruth, ...]:
    """读取 simulate 写出的 truth JSON（不与默认值合并）。"""
    try:
        spec = TruthSpecModel.model_validate(load_json_file(Path(path)))
    except ValidationError as exc:
        raise ConfigError(f"truth 文件非法: {path}: {exc}") from exc
    return build_truths(spec)


def load_properness_sweep(
    user_config: str | Path | None = None,
    config_dir: Path = DEFAULT_CONFIG_DIR,
) -> PropernessSweepModel:
    """默认扫描配置（含默认 truth）深合并用户配置后校验。"""
    defaults = {"truth": load_json_file(config_dir / "truth.default.json")}
    defaults = deep_merge_dict(defaults, load_json_file(config_dir / "properness.default.json"))
    data = _merged(defaults, user_config)
    try:
        sweep = PropernessSweepModel.model_validate(data)
        sweep.base_truth()
    except (ValidationError, ValueError) as exc:
        raise ConfigError(f"properness 配置非法: {exc}") from exc
    return sweep


def _env(key: str) -> str | None:
    value = os.getenv(ENV_PREFIX + key)
    if value is None or value == "":
        return None
    return value


def _resolve_int(primary: int | None, env_key: str, fallback: int) -> int:
    """解析整数配置值。"""
    if primary is not None:
        return int(primary)
    env_value = _env(env_key)
    if env_value is not None:
        return int(env_value)
    return int(fallback)


def _resolve_float(primary: float | None, env_key: str, fallback: float) -> float:
    """解析浮点配置值。"""
    if primary is not None:
        return float(primary)
    env_value = _env(env_key)
    if env_value is not None:
        return float(env_value)
    return float(fallback)
