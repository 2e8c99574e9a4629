"""
统一异常定义。

约定：
1. 数学上为 +∞ 的得分按数值返回，不抛异常。
2. 退化权重只打标记，不抛异常。
3. CLI 根据异常类型映射退出码（见 main.py）。
"""

from __future__ import annotations


class SurvScoreError(Exception):
    """survscore 异常基类。"""


class DomainError(SurvScoreError, ValueError):
    """参数越界或领域对象不变量被破坏。"""


class ConfigError(SurvScoreError, ValueError):
    """运行配置或 truth 规格非法。"""


class CsvParseError(SurvScoreError):
    """
    CSV 解析失败。

    字段说明：
    - path: 出错文件路径。
    - issues: (行号, 原因) 列表；行号从 1 开始，表头为第 1 行。
    """

    def __init__(self, path: str, issues: list[tuple[int, str]]) -> None:
        self.path = path
        self.issues = list(issues)
        head = "; ".join(f"line {line}: {reason}" for line, reason in self.issues[:5])
        more = f" (共 {len(self.issues)} 处)" if len(self.issues) > 5 else ""
        super().__init__(f"CSV 解析失败 {path}: {head}{more}")


class PredictionsMismatchError(SurvScoreError):
    """预测文件与观测文件不匹配（行数、列数或质量和）。"""


class TrainingDivergedError(SurvScoreError):
    """训练损失出现 NaN/∞。"""

    def __init__(self, epoch: int, loss: float) -> None:
        self.epoch = int(epoch)
        self.loss = float(loss)
        super().__init__(f"训练发散: epoch={self.epoch} loss={self.loss}")
