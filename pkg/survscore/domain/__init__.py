"""
领域层。

职责：
1. 定义时间网格、分位点网格、离散 CDF、分位曲线与删失观测。
2. 只做纯计算与不变量校验，不依赖评分、训练或文件读写。
"""

from survscore.domain.distributions import BinMassCdf, CdfLike, QuantileCurve
from survscore.domain.grids import QuantileGrid, TimeGrid, uniform_quantile_grid, uniform_time_grid
from survscore.domain.observations import CensoredObservation, SurvivalDataset

__all__ = [
    "BinMassCdf",
    "CdfLike",
    "CensoredObservation",
    "QuantileCurve",
    "QuantileGrid",
    "SurvivalDataset",
    "TimeGrid",
    "uniform_quantile_grid",
    "uniform_time_grid",
]
