"""
survscore 命令行入口。

子命令：
- simulate：按 truth 规格抽样，写出数据集 CSV 与 truth JSON。
- train：切分 60/20/20，训练模型并在测试集上报告指标。
- eval：对给定预测 CSV 计算指标。
- properness：精确期望 properness 扫描，存在违例时退出码为 1。
- km：Kaplan-Meier 曲线与分箱质量。
- bconv：cen_log 与 cen_log_simple 的 B 收敛实验。

退出码：0 成功；1 违例或校验失败；2 用法错误；3 I/O 或解析错误。
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from survscore import __version__
from survscore.adapters.csv_io import load_csv, load_predictions_csv, write_dataset_csv
from survscore.domain import (
    BinMassCdf,
    QuantileCurve,
    SurvivalDataset,
    TimeGrid,
    uniform_quantile_grid,
    uniform_time_grid,
)
from survscore.errors import (
    ConfigError,
    CsvParseError,
    DomainError,
    PredictionsMismatchError,
    TrainingDivergedError,
)
from survscore.metrics import evaluate_predictions, kaplan_meier, km_bin_cdf, mean_cen_log_simple
from survscore.reporting import RunConfig, RunReport, TruthSpecModel, write_report
from survscore.scoring.rules import TRAINABLE_RULES, get_rule
from survscore.scoring.weights import WeightPolicy
from survscore.services.grid_search import grid_search_fit_quantiles
from survscore.services.models import (
    GroupTableModel,
    LinearModel,
    LogitModel,
    predictions_for,
    quantiles_from_masses,
)
from survscore.services.oracle import (
    censored_fraction,
    cen_log_b_convergence,
    properness_sweep,
    sample_grouped_dataset,
)
from survscore.services.training import TrainConfig, ir_fit
from survscore.wiring import (
    SurvScoreSettings,
    build_truths,
    load_properness_sweep,
    load_survscore_settings,
    load_truth_file,
    load_truth_spec,
)

LOGGER = logging.getLogger(__name__)

# 切分比例（训练 / 验证），其余为测试
TRAIN_FRACTION = 0.6
VALIDATION_FRACTION = 0.2
DEFAULT_SIMULATE_ROWS = 1000
DEFAULT_BCONV_ROWS = 20000
DEFAULT_BCONV_BINS = (8, 16, 32)
DEFAULT_BCONV_SEEDS = (0, 1, 2, 3, 4)


def _int_list(text: str) -> list[int]:
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的整数列表: {text}") from exc


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", dest="seed", type=int, default=None, help="随机种子")
    parser.add_argument("--out", dest="out", default=None, help="输出路径")
    parser.add_argument("--config", dest="config", default=None, help="用户 JSON 配置（深合并到默认值）")


def _add_data(parser: argparse.ArgumentParser, needs_input: bool = True) -> None:
    parser.add_argument("--input", dest="input", required=needs_input, default=None, help="观测 CSV 路径")
    parser.add_argument("--bins", dest="bins", type=int, default=None, help="分箱数 B")
    parser.add_argument("--group-column", dest="group_column", default=None, help="分组列名")


def _add_training(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rule", dest="rule", default="cen_log", help="训练目标规则")
    parser.add_argument("--lr", dest="lr", type=float, default=None, help="学习率（作用于求和损失的梯度）")
    parser.add_argument("--epochs", dest="epochs", type=int, default=None, help="每次 sgd_fit 的轮数")
    parser.add_argument("--ir-max-iters", dest="ir_max_iters", type=int, default=None, help="IR 外层最大轮数")
    parser.add_argument("--ir-tol", dest="ir_tol", type=float, default=None, help="IR 收敛阈值")
    parser.add_argument("--fallback-w", dest="fallback_w", type=float, default=None, help="Portnoy 回退权重")
    parser.add_argument("--z-inf-factor", dest="z_inf_factor", type=float, default=None, help="z∞ / z_max")


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """解析命令行参数。"""
    parser = argparse.ArgumentParser(prog="survscore", description="删失 proper scoring rule 评估与训练")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="按 truth 规格抽样数据集")
    _add_common(simulate)
    simulate.add_argument("--n", dest="n", type=int, default=None, help="抽样行数")

    train = commands.add_parser("train", help="训练并在测试集上评估")
    _add_common(train)
    _add_data(train)
    _add_training(train)
    train.add_argument(
        "--fit-method",
        dest="fit_method",
        choices=("ir", "grid-search"),
        default="ir",
        help="训练方法（grid-search 仅用于 portnoy + 分组数据）",
    )
    train.add_argument("--repeats", dest="repeats", type=int, default=1, help="重复切分次数")
    train.add_argument("--truth", dest="truth", default=None, help="simulate 写出的 truth JSON")

    evaluate = commands.add_parser("eval", help="评估预测 CSV")
    _add_common(evaluate)
    _add_data(evaluate)
    evaluate.add_argument("--predictions", dest="predictions", required=True, help="预测 CSV（f_0..f_{B-1}）")

    properness = commands.add_parser("properness", help="精确期望 properness 扫描")
    _add_common(properness)
    properness.add_argument("--rule", dest="rule", default=None, help="只检查该规则")
    properness.add_argument(
        "--bins-list", "--bins", dest="bins_list", type=_int_list, default=None, help="分箱数列表，逗号分隔，如 2,4,8"
    )
    properness.add_argument("--n-perturbations", dest="n_perturbations", type=int, default=None, help="候选数")
    properness.add_argument(
        "--perturbation-scale", dest="perturbation_scale", type=float, default=None, help="logit 噪声尺度"
    )
    properness.add_argument(
        "--corrupt-weights", dest="corrupt_weights", action="store_true", help="负对照：删失行使用回退权重"
    )
    properness.add_argument("--fallback-w", dest="fallback_w", type=float, default=None, help="Portnoy 回退权重")
    properness.add_argument("--z-inf-factor", dest="z_inf_factor", type=float, default=None, help="z∞ / z_max")

    km = commands.add_parser("km", help="Kaplan-Meier 曲线")
    _add_common(km)
    _add_data(km)

    bconv = commands.add_parser("bconv", help="cen_log 与 cen_log_simple 的 B 收敛实验")
    _add_common(bconv)
    bconv.add_argument(
        "--bins-list", "--bins", dest="bins_list", type=_int_list, default=None, help="分箱数列表，逗号分隔，如 8,16,32"
    )
    bconv.add_argument("--seeds", dest="seeds", type=_int_list, default=None, help="种子列表")
    bconv.add_argument("--n", dest="n", type=int, default=None, help="抽样行数")
    return parser.parse_args(argv)


def build_settings_from_args(args: argparse.Namespace) -> SurvScoreSettings:
    """根据命令行参数构建运行配置。"""
    return load_survscore_settings(
        bins=getattr(args, "bins", None),
        seed=getattr(args, "seed", None),
        learning_rate=getattr(args, "lr", None),
        epochs=getattr(args, "epochs", None),
        ir_max_iters=getattr(args, "ir_max_iters", None),
        ir_tol=getattr(args, "ir_tol", None),
        fallback_w=getattr(args, "fallback_w", None),
        z_inf_factor=getattr(args, "z_inf_factor", None),
    )


def build_run_config(args: argparse.Namespace, settings: SurvScoreSettings) -> RunConfig:
    """合并命令行参数与运行配置，得到报告中回显的 RunConfig。"""
    rule = getattr(args, "rule", None)
    try:
        return RunConfig(
            command=args.command,
            input=getattr(args, "input", None),
            predictions=getattr(args, "predictions", None),
            rule=rule,
            bins=settings.bins,
            grid_kind="quantile" if rule == "portnoy" else "time",
            grid_eps=settings.grid_eps,
            seed=settings.seed,
            learning_rate=settings.learning_rate,
            epochs=settings.epochs,
            ir_max_iters=settings.ir_max_iters,
            ir_tol=settings.ir_tol,
            fallback_w=settings.fallback_w,
            z_inf_factor=settings.z_inf_factor,
            out=getattr(args, "out", None),
            group_column=getattr(args, "group_column", None),
            fit_method=getattr(args, "fit_method", "ir"),
            repeats=getattr(args, "repeats", 1),
            truth=getattr(args, "truth", None),
            n=getattr(args, "n", None),
            n_perturbations=getattr(args, "n_perturbations", None),
            perturbation_scale=getattr(args, "perturbation_scale", None),
            corrupt_weights=getattr(args, "corrupt_weights", False),
            bins_list=getattr(args, "bins_list", None),
            seeds=getattr(args, "seeds", None),
            config=getattr(args, "config", None),
        )
    except ValidationError as exc:
        raise ConfigError(f"运行配置非法: {exc}") from exc


def configure_logging(settings: SurvScoreSettings) -> None:
    log_dir = Path(settings.log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, settings.log_level),
        format="%(asctime)s %(levelname)s %(name)s - %(message)s",
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(log_dir / "survscore.log", encoding="utf-8"),
        ],
    )


def _new_report(cfg: RunConfig, **sections: Any) -> RunReport:
    return RunReport(command=cfg.command, config=cfg, version=__version__, seed=cfg.seed, **sections)


def run_simulate(cfg: RunConfig) -> RunReport:
    """抽样写出数据集 CSV 与 <out>.truth.json。"""
    if cfg.out is None:
        raise ConfigError("simulate 需要 --out")
    truths = build_truths(load_truth_spec(cfg.config))
    n = cfg.n or DEFAULT_SIMULATE_ROWS
    data = sample_grouped_dataset(truths, n, cfg.seed)
    out = Path(cfg.out)
    write_dataset_csv(out, data)
    truth_path = Path(str(out) + ".truth.json")
    spec = TruthSpecModel.from_truths(truths)
    truth_path.write_text(
        json.dumps(spec.model_dump(mode="python"), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    LOGGER.info("simulate finished: rows=%d csv=%s truth=%s", n, out, truth_path)

    counts = np.bincount(np.arange(n) % len(truths), minlength=len(truths))
    analytic = math.fsum(float(c) * censored_fraction(t) for c, t in zip(counts.tolist(), truths)) / n
    return _new_report(
        cfg,
        metrics={"rows": n, "censored_fraction": data.censored_fraction, "analytic_censored_fraction": analytic},
        output={"csv": str(out), "truth": str(truth_path)},
    )


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """按种子打乱后切分 60/20/20，返回排序后的 (训练, 验证, 测试) 下标。"""
    if n < 3:
        raise DomainError("数据集至少需要 3 行才能切分")
    order = np.random.default_rng(seed).permutation(n)
    n_train = max(1, int(round(TRAIN_FRACTION * n)))
    n_val = int(round(VALIDATION_FRACTION * n))
    if n_train + n_val >= n:
        n_val = max(0, n - n_train - 1)
    return (
        np.sort(order[:n_train]),
        np.sort(order[n_train : n_train + n_val]),
        np.sort(order[n_train + n_val :]),
    )


def _build_model(data: SurvivalDataset, train: SurvivalDataset, rule: str, grid: TimeGrid) -> LogitModel:
    n_bins = grid.n_bins
    if get_rule(rule).output == "quantile":
        grids: dict[str, Any] = {"quantile_grid": uniform_quantile_grid(n_bins), "z_max": data.z_max}
    else:
        grids = {"time_grid": grid}
    if data.is_grouped:
        return GroupTableModel(data.group_labels, n_bins, **grids)
    return LinearModel.for_dataset(train, n_bins, **grids)


def _model_predictions(model: LogitModel, test: SurvivalDataset, grid: TimeGrid) -> list[BinMassCdf]:
    if model.output == "distribution":
        return predictions_for(model, test)
    assert model.quantile_grid is not None and model.z_max is not None
    values = quantiles_from_masses(model.masses_for(test), model.z_max)
    return [QuantileCurve(model.quantile_grid, row).to_bin_mass_cdf(grid) for row in values]


def _fit_split(
    cfg: RunConfig,
    data: SurvivalDataset,
    grid: TimeGrid,
    seed: int,
) -> tuple[dict[str, Any], dict[str, Any], dict[str, Any], SurvivalDataset, list[BinMassCdf]]:
    rule = cfg.rule or "cen_log"
    train_idx, val_idx, test_idx = split_indices(data.n, seed)
    train, test = data.subset(train_idx), data.subset(test_idx)
    LOGGER.info("split seed=%d train=%d validation=%d test=%d", seed, train.n, val_idx.size, test.n)

    if cfg.fit_method == "grid-search":
        if rule != "portnoy" or not data.is_grouped:
            raise ConfigError("grid-search 只支持 portnoy 规则与分组数据")
        train_cfg = TrainConfig(rule=rule, seed=seed, z_inf_factor=cfg.z_inf_factor, fallback_w=cfg.fallback_w)
        result = grid_search_fit_quantiles(
            train, uniform_quantile_grid(grid.n_bins), WeightPolicy(cfg.fallback_w), train_cfg
        )
        assert test.groups is not None
        missing = sorted(set(test.groups) - set(result.curves))
        if missing:
            raise DomainError("测试集中出现训练集没有的分组: " + ", ".join(missing))
        preds = [result.curves[label].to_bin_mass_cdf(grid) for label in test.groups]
        fit = {
            "method": "grid-search",
            "outer_iters": 1,
            "converged": True,
            "final_loss": None,
            "flagged": 0,
            "repairs": dict(result.repairs),
        }
    else:
        train_cfg = TrainConfig(
            rule=rule,
            learning_rate=cfg.learning_rate,
            epochs=cfg.epochs,
            seed=seed,
            max_outer_iters=cfg.ir_max_iters,
            tol=cfg.ir_tol,
            z_inf_factor=cfg.z_inf_factor,
            fallback_w=cfg.fallback_w,
        )
        model = _build_model(data, train, rule, grid)
        report = ir_fit(model, train, rule, train_cfg)
        preds = _model_predictions(model, test, grid)
        fit = {"method": "ir", **report.as_dict()}

    metrics = evaluate_predictions(preds, test.observations).as_dict()
    baseline_cdf = km_bin_cdf(kaplan_meier(train), grid)
    baseline = evaluate_predictions([baseline_cdf] * test.n, test.observations).as_dict()
    return metrics, fit, baseline, test, preds


def _oracle_section(truth_path: str, test: SurvivalDataset, grid: TimeGrid, model_score: float) -> dict[str, Any]:
    if test.groups is None:
        raise ConfigError("--truth 只适用于分组数据")
    projected = {truth.group: truth.event_cdf.project(grid) for truth in load_truth_file(truth_path)}
    missing = sorted(set(test.groups) - set(projected))
    if missing:
        raise ConfigError("truth 文件缺少分组: " + ", ".join(missing))
    value = mean_cen_log_simple([projected[label] for label in test.groups], test.observations)
    return {"mean_cen_log_simple": value, "model_minus_oracle": model_score - value}


def _summarize(runs: list[dict[str, Any]]) -> dict[str, Any]:
    keys = ("mean_cen_log_simple", "d_calibration", "km_calibration")
    mean: dict[str, float] = {}
    std: dict[str, float | None] = {}
    for key in keys:
        values = [float(run[key]) for run in runs]
        if any(math.isinf(v) for v in values):
            mean[key], std[key] = math.inf, None
            continue
        center = math.fsum(values) / len(values)
        mean[key] = center
        std[key] = math.sqrt(math.fsum((v - center) ** 2 for v in values) / len(values))
    return {"mean": mean, "std": std}


def run_train(cfg: RunConfig) -> RunReport:
    """切分、训练、在测试集上评估；repeats > 1 时追加均值与标准差。"""
    if cfg.input is None:
        raise ConfigError("train 需要 --input")
    rule = cfg.rule or "cen_log"
    if rule not in TRAINABLE_RULES:
        raise ConfigError(f"规则 {rule} 不可训练，可选: " + ", ".join(TRAINABLE_RULES))
    if cfg.bins < 2:
        raise DomainError("评估指标要求 B ≥ 2")
    data = load_csv(cfg.input, cfg.group_column)
    grid = uniform_time_grid(data.z_max, cfg.bins, cfg.grid_eps)

    runs: list[dict[str, Any]] = []
    first: tuple[dict[str, Any], dict[str, Any], dict[str, Any], SurvivalDataset] | None = None
    for offset in range(cfg.repeats):
        metrics, fit, baseline, test, _ = _fit_split(cfg, data, grid, cfg.seed + offset)
        runs.append(metrics)
        if first is None:
            first = (metrics, fit, baseline, test)
    assert first is not None
    metrics, fit, baseline, test = first

    oracle = None
    if cfg.truth is not None:
        oracle = _oracle_section(cfg.truth, test, grid, float(metrics["mean_cen_log_simple"]))
    repeats = None
    if cfg.repeats > 1:
        repeats = {"count": cfg.repeats, "seeds": [cfg.seed + k for k in range(cfg.repeats)], "runs": runs}
        repeats.update(_summarize(runs))
    report = _new_report(cfg, metrics=metrics, fit=fit, baseline=baseline, oracle=oracle, repeats=repeats)
    LOGGER.info(
        "train finished: rule=%s bins=%d mean_cen_log_simple=%s converged=%s",
        rule, cfg.bins, metrics["mean_cen_log_simple"], fit["converged"],
    )
    return report


def run_eval(cfg: RunConfig) -> RunReport:
    """对预测 CSV 计算三项指标。"""
    if cfg.input is None or cfg.predictions is None:
        raise ConfigError("eval 需要 --input 与 --predictions")
    data = load_csv(cfg.input, cfg.group_column)
    masses = load_predictions_csv(cfg.predictions, data.n)
    grid = uniform_time_grid(data.z_max, masses.shape[1], cfg.grid_eps)
    preds = [BinMassCdf(grid, row) for row in masses]
    metrics = evaluate_predictions(preds, data.observations).as_dict()
    return _new_report(cfg, metrics=metrics)


def run_properness(cfg: RunConfig) -> RunReport:
    """properness 扫描；报告中 metrics.violations 为违例总数。"""
    sweep = load_properness_sweep(cfg.config)
    rules = [cfg.rule] if cfg.rule is not None else sweep.rules
    bins = cfg.bins_list or sweep.bins
    n_perturbations = sweep.n_perturbations if cfg.n_perturbations is None else cfg.n_perturbations
    scale = sweep.perturbation_scale if cfg.perturbation_scale is None else cfg.perturbation_scale
    reports = properness_sweep(
        sweep.base_truth(),
        rules,
        bins,
        sweep.patterns,
        n_perturbations,
        scale,
        cfg.seed,
        sweep.tolerance,
        policy=WeightPolicy(cfg.fallback_w),
        z_inf_factor=cfg.z_inf_factor,
        corrupt_weights=cfg.corrupt_weights,
    )
    violations = sum(report.violations for report in reports)
    return _new_report(
        cfg,
        metrics={"checks": len(reports), "violations": violations},
        properness=[report.as_dict() for report in reports],
    )


def run_km(cfg: RunConfig) -> RunReport:
    """KM 曲线与 B 个等长分箱上的质量。"""
    if cfg.input is None:
        raise ConfigError("km 需要 --input")
    data = load_csv(cfg.input, cfg.group_column)
    curve = kaplan_meier(data)
    grid = uniform_time_grid(data.z_max, cfg.bins, cfg.grid_eps)
    section = {
        "event_times": curve.event_times.tolist(),
        "survival": curve.survival.tolist(),
        "thresholds": grid.thresholds.tolist(),
        "bin_masses": curve.bin_masses(grid).tolist(),
    }
    return _new_report(cfg, km=section)


def run_bconv(cfg: RunConfig) -> RunReport:
    """在默认（或配置的）truth 第一组上做 B 收敛实验。"""
    truth = build_truths(load_truth_spec(cfg.config))[0]
    bins = cfg.bins_list or list(DEFAULT_BCONV_BINS)
    seeds = cfg.seeds or list(DEFAULT_BCONV_SEEDS)
    n = cfg.n or DEFAULT_BCONV_ROWS
    runs = []
    for seed in seeds:
        differences = cen_log_b_convergence(truth, bins, n, seed)
        nonincreasing = all(later <= earlier for earlier, later in zip(differences, differences[1:]))
        runs.append({"seed": seed, "differences": differences, "nonincreasing": nonincreasing})
    section = {
        "group": truth.group,
        "bins": list(bins),
        "n": n,
        "runs": runs,
        "all_nonincreasing": all(run["nonincreasing"] for run in runs),
    }
    return _new_report(cfg, bconv=section)


RUNNERS: dict[str, Callable[[RunConfig], RunReport]] = {
    "simulate": run_simulate,
    "train": run_train,
    "eval": run_eval,
    "properness": run_properness,
    "km": run_km,
    "bconv": run_bconv,
}


def _exit_code(report: RunReport) -> int:
    if report.command == "properness" and report.metrics and report.metrics.get("violations"):
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    """CLI 主入口。"""
    args = parse_args(argv)
    try:
        settings = build_settings_from_args(args)
        cfg = build_run_config(args, settings)
    except ConfigError as exc:
        print(f"配置错误: {exc}", file=sys.stderr)
        return 2
    configure_logging(settings)

    started = time.perf_counter()
    try:
        report = RUNNERS[cfg.command](cfg)
    except ConfigError as exc:
        LOGGER.error("config error: %s", exc)
        return 2
    except (PredictionsMismatchError, TrainingDivergedError, DomainError) as exc:
        LOGGER.error("validation failed: %s", exc)
        return 1
    except (OSError, CsvParseError, json.JSONDecodeError) as exc:
        LOGGER.error("io or parse error: %s", exc)
        return 3

    report.wall_clock_seconds = time.perf_counter() - started
    report_path = None if cfg.command == "simulate" else cfg.out
    print(write_report(report, report_path))
    return _exit_code(report)


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
