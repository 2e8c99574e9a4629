"""
评估指标层。

职责：
1. Kaplan-Meier 乘积极限估计。
2. 评估指标：平均 Cen-log-simple、D-calibration、KM-calibration。
"""

from survscore.metrics.calibration import (
    CalibrationReport,
    average_prediction,
    binned_kl,
    count_infinite,
    d_calibration,
    d_calibration_histogram,
    evaluate_predictions,
    km_calibration,
    mean_cen_log_simple,
)
from survscore.metrics.kaplan_meier import KaplanMeierCurve, kaplan_meier, km_bin_cdf

__all__ = [
    "CalibrationReport",
    "KaplanMeierCurve",
    "average_prediction",
    "binned_kl",
    "count_infinite",
    "d_calibration",
    "d_calibration_histogram",
    "evaluate_predictions",
    "kaplan_meier",
    "km_bin_cdf",
    "km_calibration",
    "mean_cen_log_simple",
]
