"""
survscore 包入口。

职责：
1. 暴露版本号，供报告写入 `version` 字段。
2. 约束模块依赖方向（domain 不依赖 scoring/services，services 不依赖 main）。
"""

__version__ = "0.1.0"
