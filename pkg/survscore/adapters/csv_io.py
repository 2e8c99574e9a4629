"""
CSV 读写适配层。

本文件应该做什么：
1. load_csv：读取 time / event 与其余列（分组标签或数值特征），返回 SurvivalDataset。
2. load_predictions_csv：读取 f_0..f_{B-1} 预测质量并校验行数与质量和。
3. write_dataset_csv / write_csv：确定性地写出 CSV（浮点数使用 repr，保证逐字节可复现）。
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np

from survscore.domain import SurvivalDataset
from survscore.errors import CsvParseError, DomainError, PredictionsMismatchError

LOGGER = logging.getLogger(__name__)

TIME_COLUMN = "time"
EVENT_COLUMN = "event"
# 预测质量之和的容差
MASS_SUM_TOL = 1e-6


def _parse_float(value: str) -> float | None:
    try:
        return float(value)
    except (TypeError, ValueError):
        return None


def _read_rows(path: Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise CsvParseError(str(path), [(1, "文件为空")])
        header = [name.strip() for name in header]
        rows: list[tuple[int, list[str]]] = []
        for row in reader:
            if not any(cell.strip() for cell in row):
                continue
            rows.append((reader.line_num, [cell.strip() for cell in row]))
    return header, rows


def _detect_group_column(extra: list[str], rows: list[tuple[int, list[str]]], index: dict[str, int]) -> str | None:
    """只有一个附加列且存在非数值取值时，视为分组列。"""
    if len(extra) != 1:
        return None
    column = index[extra[0]]
    for _, row in rows:
        if column < len(row) and _parse_float(row[column]) is None:
            return extra[0]
    return None


def load_csv(path: str | Path, group_column: str | None = None) -> SurvivalDataset:
    """
    读取观测 CSV。

    参数：
    - path: 文件路径；表头必须含 time 与 event。
    - group_column: 分组列名；缺省时自动识别唯一的非数值附加列。

    返回：
    - SurvivalDataset: z_max 取最大观测时间。

    异常：
    - CsvParseError: 缺列、time 非正、event 不是 0/1、空文件等，附行号。
    """
    path = Path(path)
    header, rows = _read_rows(path)
    index = {name: i for i, name in enumerate(header)}
    missing = [name for name in (TIME_COLUMN, EVENT_COLUMN) if name not in index]
    if group_column is not None and group_column not in index:
        missing.append(group_column)
    if missing:
        raise CsvParseError(str(path), [(1, "缺少列: " + ", ".join(missing))])
    if not rows:
        raise CsvParseError(str(path), [(1, "没有数据行")])

    extra = [name for name in header if name not in (TIME_COLUMN, EVENT_COLUMN)]
    group = group_column or _detect_group_column(extra, rows, index)
    feature_columns = [name for name in extra if name != group]

    issues: list[tuple[int, str]] = []
    times: list[float] = []
    events: list[int] = []
    labels: list[str] = []
    features: list[list[float]] = []
    for line, row in rows:
        if len(row) != len(header):
            issues.append((line, f"列数 {len(row)} 与表头 {len(header)} 不一致"))
            continue
        time = _parse_float(row[index[TIME_COLUMN]])
        if time is None or not math.isfinite(time) or time <= 0.0:
            issues.append((line, f"time={row[index[TIME_COLUMN]]!r} 必须为正有限数"))
            continue
        event = row[index[EVENT_COLUMN]]
        if event not in ("0", "1"):
            issues.append((line, f"event={event!r} 必须为 0 或 1"))
            continue
        values: list[float] = []
        for name in feature_columns:
            value = _parse_float(row[index[name]])
            if value is None or not math.isfinite(value):
                issues.append((line, f"特征 {name}={row[index[name]]!r} 不是有限数值"))
                break
            values.append(value)
        else:
            times.append(time)
            events.append(int(event))
            features.append(values)
            if group is not None:
                labels.append(row[index[group]])
    if issues:
        raise CsvParseError(str(path), issues)

    z_max = max(times)
    LOGGER.info(
        "csv loaded: path=%s rows=%d group_column=%s features=%d",
        path, len(times), group, len(feature_columns),
    )
    if group is not None:
        return SurvivalDataset(np.array(times), np.array(events), z_max, groups=tuple(labels))
    matrix = np.array(features, dtype=float).reshape(len(times), len(feature_columns))
    return SurvivalDataset(np.array(times), np.array(events), z_max, features=matrix)


def load_predictions_csv(path: str | Path, n_rows: int, n_bins: int | None = None) -> np.ndarray:
    """
    读取预测质量 CSV（列 f_0..f_{B-1}，每行一个测试样本）。

    参数：
    - n_rows: 期望行数（与观测 CSV 一致）。
    - n_bins: 期望分箱数；缺省按表头推断。

    返回：
    - np.ndarray: (n_rows, B) 质量矩阵。

    异常：
    - PredictionsMismatchError: 列布局、行数或质量和不符。
    - CsvParseError: 数值无法解析。
    """
    path = Path(path)
    header, rows = _read_rows(path)
    n_bins = len(header) if n_bins is None else n_bins
    expected = [f"f_{i}" for i in range(n_bins)]
    if header != expected:
        raise PredictionsMismatchError(f"预测文件列必须为 {','.join(expected)}，实际 {','.join(header)}")
    if len(rows) != n_rows:
        raise PredictionsMismatchError(f"预测行数 {len(rows)} 与观测行数 {n_rows} 不一致")

    issues: list[tuple[int, str]] = []
    matrix = np.zeros((n_rows, n_bins))
    for r, (line, row) in enumerate(rows):
        values = [_parse_float(cell) for cell in row]
        if len(values) != n_bins or any(v is None or not math.isfinite(v) or v < 0.0 for v in values):
            issues.append((line, "预测质量必须为非负有限数"))
            continue
        matrix[r] = values
    if issues:
        raise CsvParseError(str(path), issues)
    sums = matrix.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > MASS_SUM_TOL)
    if bad.size:
        line = rows[int(bad[0])][0]
        raise PredictionsMismatchError(f"第 {line} 行预测质量之和为 {sums[bad[0]]!r}，偏离 1 超过 {MASS_SUM_TOL}")
    return matrix


def _format(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, rows: list[dict[str, Any]], fieldnames: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({name: _format(row.get(name, "")) for name in fieldnames})


def write_dataset_csv(path: Path, data: SurvivalDataset) -> None:
    """写出数据集：分组数据为 group,time,event；特征数据为 x_0..x_{d-1},time,event。"""
    if data.groups is not None:
        fieldnames = ["group", TIME_COLUMN, EVENT_COLUMN]
        rows = [
            {"group": label, TIME_COLUMN: float(z), EVENT_COLUMN: int(d)}
            for label, z, d in zip(data.groups, data.times.tolist(), data.events.tolist())
        ]
    else:
        assert data.features is not None
        names = [f"x_{k}" for k in range(data.features.shape[1])]
        fieldnames = names + [TIME_COLUMN, EVENT_COLUMN]
        rows = []
        for feature, z, d in zip(data.features.tolist(), data.times.tolist(), data.events.tolist()):
            row: dict[str, Any] = dict(zip(names, feature))
            row[TIME_COLUMN] = float(z)
            row[EVENT_COLUMN] = int(d)
            rows.append(row)
    write_csv(path, rows, fieldnames)
    LOGGER.info("dataset written: path=%s rows=%d", path, data.n)


def write_predictions_csv(path: Path, masses: np.ndarray) -> None:
    """写出 f_0..f_{B-1} 预测质量。"""
    if masses.ndim != 2:
        raise DomainError("预测质量必须为二维矩阵")
    fieldnames = [f"f_{i}" for i in range(masses.shape[1])]
    write_csv(path, [dict(zip(fieldnames, row)) for row in masses.tolist()], fieldnames)
