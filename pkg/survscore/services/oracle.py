"""
合成真值与精确期望。

本文件应该做什么：
1. PiecewiseLinearTruth：分段线性事件 CDF（箱内均匀）+ 离散删失原子或同网格连续删失。
2. sample_dataset / sample_grouped_dataset：按真值抽样 (min(t, c), 1(t ≤ c))。
3. expected_score：在 (t, c) 上精确求期望（按删失原子外层求和，事件时间按箱闭式积分）。
4. properness_check / properness_sweep：对真值 logits 加噪得到候选，检查期望得分差是否非负。
5. cen_log_b_convergence、monte_carlo_score 与 cen_log / cen_brier 的期望差闭式。

约定：
- 删失权重一律由真值 F 计算；corrupt_weights 为负对照，删失行改用回退权重。
- 连续删失按箱切分，并在候选分位与真值分位处继续切分，每段用 3 点 Gauss-Legendre 积分，
  被积函数在每段内为至多二次多项式，因此积分精确。
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, replace
from typing import Any

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import rel_entr, softmax

from survscore.domain import (
    BinMassCdf,
    CensoredObservation,
    QuantileCurve,
    QuantileGrid,
    SurvivalDataset,
    TimeGrid,
    uniform_quantile_grid,
    uniform_time_grid,
)
from survscore.errors import DomainError
from survscore.scoring.batch import batch_scores
from survscore.scoring.rules import get_rule
from survscore.scoring.weights import (
    WeightPolicy,
    cen_brier_weights,
    cen_log_weights,
    cen_rps_weights,
    portnoy_weights_from_levels,
    row_weights,
)

LOGGER = logging.getLogger(__name__)

# 精确期望支持的规则（cen_cont_log 的条件期望不是多项式，不在此列）
EXPECTATION_RULES = ("log", "brier", "rps", "cen_log", "cen_log_simple", "cen_brier", "cen_rps", "portnoy")
# properness 的默认检查规则
PROPERNESS_RULES = ("portnoy", "cen_log", "cen_brier", "cen_rps")
# 候选与真值“可区分”的 TV 下限
SEPARATION_TV = 0.01
# 原子概率和的容差
ATOM_SUM_TOL = 1e-9

_GL_NODES, _GL_WEIGHTS = leggauss(3)


@dataclass(frozen=True, eq=False)
class PiecewiseLinearTruth:
    """
    合成真值。

    字段说明：
    - event_cdf: 事件时间分布 F（箱内均匀）。
    - censor_atoms: 离散删失 ((c, π_c), ...)，c ∈ (0, ζ_B]，π 之和为 1。
    - censor_cdf: 同网格上的连续删失分布；与 censor_atoms 二选一。
    - group: 分组标签。
    """

    event_cdf: BinMassCdf
    censor_atoms: tuple[tuple[float, float], ...] | None = None
    censor_cdf: BinMassCdf | None = None
    group: str = "g0"

    def __post_init__(self) -> None:
        if (self.censor_atoms is None) == (self.censor_cdf is None):
            raise DomainError("censor_atoms 与 censor_cdf 必须恰好提供一个")
        if self.censor_cdf is not None and not self.censor_cdf.grid.same_as(self.event_cdf.grid):
            raise DomainError("连续删失分布必须与事件分布在同一网格上")
        if self.censor_atoms is not None:
            atoms = tuple((float(c), float(p)) for c, p in self.censor_atoms)
            if not atoms:
                raise DomainError("censor_atoms 不能为空")
            for c, p in atoms:
                if not (0.0 < c <= self.upper):
                    raise DomainError(f"删失原子 c={c} 必须位于 (0, {self.upper}]")
                if not (math.isfinite(p) and p >= 0.0):
                    raise DomainError(f"删失原子概率 {p} 必须为非负有限数")
            if abs(math.fsum(p for _, p in atoms) - 1.0) > ATOM_SUM_TOL:
                raise DomainError("删失原子概率之和必须为 1")
            object.__setattr__(self, "censor_atoms", atoms)
        object.__setattr__(self, "group", str(self.group))

    @property
    def grid(self) -> TimeGrid:
        return self.event_cdf.grid

    @property
    def upper(self) -> float:
        return self.event_cdf.upper

    def with_censoring(self, atoms: Iterable[tuple[float, float]]) -> "PiecewiseLinearTruth":
        return replace(self, censor_atoms=tuple(atoms), censor_cdf=None)

    def rebin(self, grid: TimeGrid) -> "PiecewiseLinearTruth":
        """事件分布重分箱；连续删失一并重分箱。"""
        censor = None if self.censor_cdf is None else self.censor_cdf.rebin(grid)
        return replace(self, event_cdf=self.event_cdf.rebin(grid), censor_cdf=censor)


@dataclass(slots=True)
class PropernessReport:
    """
    properness 检查报告。

    字段说明：
    - min_gap: 最小期望得分差 E[S(F̂)] − E[S(F)]；无候选时为 None。
    - min_gap_separated: TV ≥ 0.01 的候选上的最小差；没有这样的候选时为 None。
    - violations: 差小于 −tolerance 的候选数（NaN 也计入）。
    """

    rule: str
    n_bins: int
    pattern: str
    n_perturbations: int
    perturbation_scale: float
    tolerance: float
    min_gap: float | None
    min_gap_separated: float | None
    violations: int
    corrupt_weights: bool = False

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """两个质量向量的 TV 距离 0.5·Σ|p − q|。"""
    return 0.5 * math.fsum(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).tolist())


def default_truths() -> tuple[PiecewiseLinearTruth, PiecewiseLinearTruth]:
    """
    默认 2 组真值：[0, 10] 上 4 箱，删失原子紧贴在粗网格节点之上，外加一个位于上端点的原子。
    """
    grid = uniform_time_grid(10.0, 4, eps=0.0)
    atoms = ((2.51, 0.3), (5.01, 0.3), (10.0, 0.4))
    return (
        PiecewiseLinearTruth(BinMassCdf(grid, np.array([0.1, 0.1, 0.3, 0.5])), atoms, group="a"),
        PiecewiseLinearTruth(BinMassCdf(grid, np.array([0.2, 0.2, 0.2, 0.4])), atoms, group="b"),
    )


def censoring_patterns(grid: TimeGrid) -> dict[str, tuple[tuple[float, float], ...]]:
    """
    三种删失模式（相对上端点 U）。

    返回：
    - light: 轻删失；heavy: 重删失；boundary: 原子恰在网格节点上。
    """
    upper = grid.upper
    knots = grid.thresholds
    boundary = tuple(dict.fromkeys(float(knots[k]) for k in (1, max(grid.n_bins // 2, 1), grid.n_bins)))
    return {
        "light": ((0.8 * upper, 0.2), (upper, 0.8)),
        "heavy": ((0.15 * upper, 0.4), (0.35 * upper, 0.3), (0.6 * upper, 0.2), (upper, 0.1)),
        "boundary": tuple((c, 1.0 / len(boundary)) for c in boundary),
    }


def _gl_atoms(cdf: BinMassCdf, breakpoints: Sequence[float] = ()) -> list[tuple[float, float]]:
    """把同网格连续删失转换为 Gauss-Legendre 节点上的加权原子。"""
    knots = cdf.grid.thresholds
    extra = np.asarray([b for b in breakpoints if 0.0 < b < cdf.upper], dtype=float)
    atoms: list[tuple[float, float]] = []
    for m in range(cdf.n_bins):
        low, high = float(knots[m]), float(knots[m + 1])
        density = float(cdf.masses[m]) / (high - low)
        inner = np.unique(extra[(extra > low) & (extra < high)])
        edges = np.concatenate(([low], inner, [high]))
        for a, b in zip(edges[:-1].tolist(), edges[1:].tolist()):
            half = 0.5 * (b - a)
            for node, weight in zip(_GL_NODES.tolist(), _GL_WEIGHTS.tolist()):
                atoms.append((0.5 * (a + b) + half * node, density * half * weight))
    return atoms


def _censor_atoms(truth: PiecewiseLinearTruth, breakpoints: Sequence[float] = ()) -> list[tuple[float, float]]:
    if truth.censor_atoms is not None:
        return list(truth.censor_atoms)
    assert truth.censor_cdf is not None
    return _gl_atoms(truth.censor_cdf, breakpoints)


def censored_fraction(truth: PiecewiseLinearTruth) -> float:
    """解析删失比例 Σ_c π_c (1 − F(c))。"""
    return math.fsum(p * truth.event_cdf.survival_at(c) for c, p in _censor_atoms(truth))


def _draw_times(cdf: BinMassCdf, n: int, rng: np.random.Generator) -> np.ndarray:
    bins = rng.choice(cdf.n_bins, size=n, p=cdf.masses)
    # 1 − U ∈ (0, 1]，使 t 落在右闭区间 (ζ_j, ζ_{j+1}] 内
    position = 1.0 - rng.random(n)
    knots = cdf.grid.thresholds
    return np.minimum(knots[bins] + position * (knots[bins + 1] - knots[bins]), knots[bins + 1])


def _draw_censoring(truth: PiecewiseLinearTruth, n: int, rng: np.random.Generator) -> np.ndarray:
    if truth.censor_cdf is not None:
        return _draw_times(truth.censor_cdf, n, rng)
    assert truth.censor_atoms is not None
    values = np.array([c for c, _ in truth.censor_atoms])
    probs = np.array([p for _, p in truth.censor_atoms])
    return rng.choice(values, size=n, p=probs / probs.sum())


def _draw_observations(
    truth: PiecewiseLinearTruth, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    t = _draw_times(truth.event_cdf, n, rng)
    c = _draw_censoring(truth, n, rng)
    return np.minimum(t, c), (t <= c).astype(np.int64)


def sample_dataset(truth: PiecewiseLinearTruth, n: int, seed: int) -> SurvivalDataset:
    """
    按真值抽样删失数据集。

    参数：
    - truth: 合成真值。
    - n: 行数，≥ 1。
    - seed: 随机种子。

    返回：
    - SurvivalDataset: 分组标签均为 truth.group，z_max = ζ_B。
    """
    if n < 1:
        raise DomainError("n 必须为正整数")
    times, events = _draw_observations(truth, n, np.random.default_rng(seed))
    return SurvivalDataset(times, events, truth.upper, groups=(truth.group,) * n)


def sample_grouped_dataset(truths: Sequence[PiecewiseLinearTruth], n: int, seed: int) -> SurvivalDataset:
    """多组抽样：第 r 行属于第 r mod G 组。"""
    if n < 1:
        raise DomainError("n 必须为正整数")
    if not truths:
        raise DomainError("truths 不能为空")
    labels = [truth.group for truth in truths]
    if len(set(labels)) != len(labels):
        raise DomainError("各组真值的分组标签必须互不相同")
    rng = np.random.default_rng(seed)
    assignment = np.arange(n) % len(truths)
    times = np.zeros(n)
    events = np.zeros(n, dtype=np.int64)
    for index, truth in enumerate(truths):
        rows = np.flatnonzero(assignment == index)
        if rows.size:
            times[rows], events[rows] = _draw_observations(truth, rows.size, rng)
    z_max = max(truth.upper for truth in truths)
    return SurvivalDataset(times, events, z_max, groups=tuple(labels[g] for g in assignment))


def _check_rule(rule: str) -> None:
    get_rule(rule)
    if rule not in EXPECTATION_RULES:
        raise DomainError(f"规则 {rule} 不支持精确期望，可选: " + ", ".join(EXPECTATION_RULES))


def _corrupt_row(rule: str, grid: TimeGrid, c: float, fallback_w: float) -> np.ndarray:
    if rule == "cen_brier":
        weights = np.zeros(grid.n_bins)
        weights[grid.bin_index(c)] = 1.0
        return weights
    size = grid.n_bins if rule == "cen_log" else grid.n_bins - 1
    return np.full(size, fallback_w)


def _true_row(rule: str, truth: PiecewiseLinearTruth, obs: CensoredObservation) -> np.ndarray:
    if rule == "cen_log":
        return cen_log_weights(truth.event_cdf, obs, truth.grid).weights
    if rule == "cen_brier":
        return cen_brier_weights(truth.event_cdf, obs, truth.grid).weights
    return cen_rps_weights(truth.event_cdf, obs, truth.grid).weights


@dataclass(slots=True)
class _DistributionPlan:
    """分布型规则的期望展开：代表行 + 概率 + 真值权重（与候选无关）。"""

    rule: str
    grid: TimeGrid
    times: np.ndarray
    events: np.ndarray
    probs: np.ndarray
    weights: np.ndarray | None

    def expected(self, masses: np.ndarray) -> float:
        logits = np.tile(np.log(masses), (self.times.size, 1))
        result = batch_scores(self.rule, logits, self.times, self.events, self.grid, self.weights)
        return math.fsum((self.probs * result.scores).tolist())


def _distribution_plan(
    truth: PiecewiseLinearTruth,
    rule: str,
    policy: WeightPolicy,
    corrupt_weights: bool,
) -> _DistributionPlan:
    grid = truth.grid
    knots = grid.thresholds
    masses = truth.event_cdf.masses
    cdf_knots = truth.event_cdf.cdf_knots
    rows: list[tuple[float, int, float]] = []
    info = get_rule(rule)
    if not info.censored:
        rows = [(float(knots[j + 1]), 1, float(masses[j])) for j in range(grid.n_bins)]
    else:
        for c, pi in _censor_atoms(truth):
            if pi <= 0.0:
                continue
            i = grid.bin_index(c)
            rows.extend((float(knots[j + 1]), 1, pi * float(masses[j])) for j in range(i))
            rows.append((c, 1, pi * max(truth.event_cdf.cdf_at(c) - float(cdf_knots[i]), 0.0)))
            rows.append((c, 0, pi * truth.event_cdf.survival_at(c)))
    rows = [row for row in rows if row[2] > 0.0]
    times = np.array([r[0] for r in rows])
    events = np.array([r[1] for r in rows], dtype=np.int64)
    probs = np.array([r[2] for r in rows])

    weights = None
    if info.needs_weights:
        matrix = []
        for z, delta, _ in rows:
            if delta == 0 and corrupt_weights:
                matrix.append(_corrupt_row(rule, grid, z, policy.fallback_w))
            else:
                matrix.append(_true_row(rule, truth, CensoredObservation(z, delta)))
        weights = np.vstack(matrix)
    return _DistributionPlan(rule, grid, times, events, probs, weights)


def _segment_pinball(q: np.ndarray, tau: np.ndarray, a: float, b: float, density: float) -> np.ndarray:
    """∫_a^b ρ_τ(q, t)·density dt，q 与 tau 为同形状数组。"""
    m = np.clip(q, a, b)
    below = (1.0 - tau) * density * (q * (m - a) - 0.5 * (m * m - a * a))
    above = tau * density * (0.5 * (b * b - m * m) - q * (b - m))
    return below + above


def _pinball_values(q: np.ndarray, y: float, tau: np.ndarray) -> np.ndarray:
    return np.where(q >= y, (1.0 - tau) * (q - y), tau * (y - q))


def _expected_portnoy(
    truth: PiecewiseLinearTruth,
    candidate: QuantileCurve,
    z_infinity: float,
    policy: WeightPolicy,
    corrupt_weights: bool,
) -> float:
    grid = candidate.grid
    taus = grid.interior
    q = candidate.values[1:-1]
    breakpoints = list(q.tolist()) + [truth.event_cdf.quantile_at(float(t)) for t in taus.tolist()]
    knots = truth.grid.thresholds
    masses = truth.event_cdf.masses
    widths = truth.grid.widths
    terms: list[float] = []
    for c, pi in _censor_atoms(truth, breakpoints):
        if pi <= 0.0:
            continue
        total = np.zeros(taus.size)
        for j in range(truth.grid.n_bins):
            a = float(knots[j])
            if a >= c:
                break
            b = min(float(knots[j + 1]), c)
            total += _segment_pinball(q, taus, a, b, float(masses[j]) / float(widths[j]))
        surv = truth.event_cdf.survival_at(c)
        if surv > 0.0:
            if corrupt_weights:
                w = np.full(taus.size, policy.fallback_w)
            else:
                w, _ = portnoy_weights_from_levels(
                    np.array([truth.event_cdf.cdf_at(c)]), np.zeros(1, dtype=np.int64), grid, policy
                )
                w = w[0]
            total += surv * (w * _pinball_values(q, c, taus) + (1.0 - w) * _pinball_values(q, z_infinity, taus))
        terms.extend((pi * total).tolist())
    return math.fsum(terms)


def _check_candidate(truth: PiecewiseLinearTruth, candidate: BinMassCdf | QuantileCurve, rule: str) -> None:
    if rule == "portnoy":
        if not isinstance(candidate, QuantileCurve):
            raise DomainError("portnoy 的候选必须是 QuantileCurve")
        if not math.isclose(candidate.upper, truth.upper, rel_tol=1e-12):
            raise DomainError("候选分位曲线上端点与真值不一致")
        return
    if not isinstance(candidate, BinMassCdf):
        raise DomainError(f"{rule} 的候选必须是 BinMassCdf")
    if not candidate.grid.same_as(truth.grid):
        raise DomainError("候选分布与真值不在同一网格上")


def expected_score(
    truth: PiecewiseLinearTruth,
    candidate: BinMassCdf | QuantileCurve,
    rule: str,
    *,
    policy: WeightPolicy | None = None,
    z_inf_factor: float = 1.05,
    corrupt_weights: bool = False,
) -> float:
    """
    候选预测在真值下的精确期望得分（权重由真值 F 计算）。

    参数：
    - truth: 合成真值。
    - candidate: 分布型规则传同网格 BinMassCdf；portnoy 传 QuantileCurve。
    - rule: EXPECTATION_RULES 之一；log / brier / rps 忽略删失。
    - policy: Portnoy 回退权重。
    - z_inf_factor: z∞ = z_inf_factor · ζ_B。
    - corrupt_weights: 负对照，删失行使用回退权重。

    返回：
    - float: 期望得分。
    """
    _check_rule(rule)
    _check_candidate(truth, candidate, rule)
    policy = policy or WeightPolicy()
    if rule == "portnoy":
        assert isinstance(candidate, QuantileCurve)
        return _expected_portnoy(truth, candidate, z_inf_factor * truth.upper, policy, corrupt_weights)
    assert isinstance(candidate, BinMassCdf)
    return _distribution_plan(truth, rule, policy, corrupt_weights).expected(candidate.masses)


def cen_log_gap_closed_form(truth: PiecewiseLinearTruth, candidate: BinMassCdf) -> float:
    """
    cen_log 期望差闭式：Σ_c π_c [Σ_{j≤i} f_j log(f_j/f̂_j) + S_{i+1} log(S_{i+1}/Ŝ_{i+1})]。
    """
    _check_candidate(truth, candidate, "cen_log")
    f, g = truth.event_cdf.masses, candidate.masses
    tail, tail_hat = truth.event_cdf.tail_knots, candidate.tail_knots
    terms: list[float] = []
    for c, pi in _censor_atoms(truth):
        i = truth.grid.bin_index(c)
        terms.extend((pi * rel_entr(f[: i + 1], g[: i + 1])).tolist())
        terms.append(pi * float(rel_entr(tail[i + 1], tail_hat[i + 1])))
    return math.fsum(terms)


def cen_brier_gap_closed_form(truth: PiecewiseLinearTruth, candidate: BinMassCdf) -> float:
    """cen_brier 期望差闭式：Σ_c π_c Σ_i (f̂_i − f_i)²。"""
    _check_candidate(truth, candidate, "cen_brier")
    squared = math.fsum(((candidate.masses - truth.event_cdf.masses) ** 2).tolist())
    return math.fsum(pi * squared for _, pi in _censor_atoms(truth))


def truth_quantile_curve(truth: PiecewiseLinearTruth, grid: QuantileGrid) -> QuantileCurve:
    return QuantileCurve.from_cdf(truth.event_cdf, grid)


def perturb_candidate(
    reference: BinMassCdf | QuantileCurve,
    scale: float,
    rng: np.random.Generator,
) -> BinMassCdf | QuantileCurve:
    """
    在 logit 空间加高斯噪声得到候选（分布：log 质量；分位：log 增量）。
    """
    if scale < 0.0:
        raise DomainError("perturbation_scale 不能为负")
    if isinstance(reference, BinMassCdf):
        logits = np.log(reference.masses) + scale * rng.standard_normal(reference.n_bins)
        return BinMassCdf(reference.grid, softmax(logits))
    increments = np.diff(reference.values) / reference.upper
    logits = np.log(increments) + scale * rng.standard_normal(increments.size)
    probs = softmax(logits)
    values = np.concatenate(([0.0], reference.upper * np.cumsum(probs)))
    values[-1] = reference.upper
    return QuantileCurve(reference.grid, values)


def _candidate_tv(reference: BinMassCdf | QuantileCurve, candidate: BinMassCdf | QuantileCurve) -> float:
    if isinstance(reference, BinMassCdf) and isinstance(candidate, BinMassCdf):
        return total_variation(reference.masses, candidate.masses)
    assert isinstance(reference, QuantileCurve) and isinstance(candidate, QuantileCurve)
    return total_variation(np.diff(reference.values) / reference.upper, np.diff(candidate.values) / candidate.upper)


def properness_check(
    truth: PiecewiseLinearTruth,
    rule: str,
    n_perturbations: int,
    perturbation_scale: float,
    seed: int,
    tolerance: float = 1e-10,
    *,
    policy: WeightPolicy | None = None,
    z_inf_factor: float = 1.05,
    corrupt_weights: bool = False,
    pattern: str = "custom",
) -> PropernessReport:
    """
    properness 检查：gap = E[S(候选)] − E[S(真值)]，gap < −tolerance 记为违例。

    参数：
    - n_perturbations: 候选个数，≥ 0（0 时 min_gap 为 None）。
    - perturbation_scale: logit 噪声标准差。
    - corrupt_weights: 负对照开关。

    返回：
    - PropernessReport
    """
    _check_rule(rule)
    if n_perturbations < 0:
        raise DomainError("n_perturbations 不能为负")
    if tolerance < 0.0:
        raise DomainError("tolerance 不能为负")
    policy = policy or WeightPolicy()
    rng = np.random.default_rng(seed)

    reference: BinMassCdf | QuantileCurve
    if rule == "portnoy":
        reference = truth_quantile_curve(truth, uniform_quantile_grid(truth.grid.n_bins))

        def score(candidate: BinMassCdf | QuantileCurve) -> float:
            assert isinstance(candidate, QuantileCurve)
            return _expected_portnoy(truth, candidate, z_inf_factor * truth.upper, policy, corrupt_weights)

    else:
        reference = truth.event_cdf
        plan = _distribution_plan(truth, rule, policy, corrupt_weights)

        def score(candidate: BinMassCdf | QuantileCurve) -> float:
            assert isinstance(candidate, BinMassCdf)
            return plan.expected(candidate.masses)

    baseline = score(reference)
    gaps: list[float] = []
    separated: list[float] = []
    violations = 0
    for _ in range(n_perturbations):
        candidate = perturb_candidate(reference, perturbation_scale, rng)
        gap = score(candidate) - baseline
        gaps.append(gap)
        if _candidate_tv(reference, candidate) >= SEPARATION_TV:
            separated.append(gap)
        if math.isnan(gap) or gap < -tolerance:
            violations += 1

    report = PropernessReport(
        rule=rule,
        n_bins=truth.grid.n_bins,
        pattern=pattern,
        n_perturbations=n_perturbations,
        perturbation_scale=perturbation_scale,
        tolerance=tolerance,
        min_gap=min(gaps) if gaps else None,
        min_gap_separated=min(separated) if separated else None,
        violations=violations,
        corrupt_weights=corrupt_weights,
    )
    if violations:
        LOGGER.warning(
            "properness violations: rule=%s bins=%d pattern=%s violations=%d min_gap=%s",
            rule, report.n_bins, pattern, violations, report.min_gap,
        )
    return report


def properness_sweep(
    base: PiecewiseLinearTruth,
    rules: Sequence[str],
    bins: Sequence[int],
    patterns: Sequence[str],
    n_perturbations: int,
    perturbation_scale: float,
    seed: int,
    tolerance: float = 1e-10,
    *,
    policy: WeightPolicy | None = None,
    z_inf_factor: float = 1.05,
    corrupt_weights: bool = False,
) -> list[PropernessReport]:
    """
    规则 × 分箱数 × 删失模式的 properness 扫描；真值先重分箱到各 B 的等长网格上。
    """
    reports: list[PropernessReport] = []
    for n_bins in bins:
        grid = uniform_time_grid(base.upper, n_bins, eps=0.0)
        rebinned = base.rebin(grid)
        available = censoring_patterns(grid)
        for name in patterns:
            if name not in available:
                raise DomainError(f"未知删失模式 {name}，可选: " + ", ".join(available))
            truth = rebinned.with_censoring(available[name])
            for rule in rules:
                report = properness_check(
                    truth,
                    rule,
                    n_perturbations,
                    perturbation_scale,
                    seed,
                    tolerance,
                    policy=policy,
                    z_inf_factor=z_inf_factor,
                    corrupt_weights=corrupt_weights,
                    pattern=name,
                )
                reports.append(report)
                LOGGER.info(
                    "properness rule=%s bins=%d pattern=%s violations=%d min_gap=%s",
                    rule, n_bins, name, report.violations, report.min_gap,
                )
    return reports


def cen_log_b_convergence(
    truth: PiecewiseLinearTruth,
    b_list: Sequence[int],
    n: int,
    seed: int,
) -> list[float]:
    """
    |mean cen_log − mean cen_log_simple|，分别在 B ∈ b_list 的等长网格上用真值（重分箱）评估。

    数据集只抽样一次；cen_log 的权重由真值 F 计算。
    """
    values = [int(b) for b in b_list]
    if not values or any(b < 1 for b in values):
        raise DomainError("b_list 必须为正整数列表")
    if any(later <= earlier for earlier, later in zip(values, values[1:])):
        raise DomainError("b_list 必须严格递增")
    data = sample_dataset(truth, n, seed)
    differences: list[float] = []
    for n_bins in values:
        grid = uniform_time_grid(truth.upper, n_bins, eps=0.0)
        cdf = truth.event_cdf.rebin(grid)
        logits = np.tile(np.log(cdf.masses), (data.n, 1))
        tails = np.tile(cdf.tail_knots, (data.n, 1))
        weights, _ = row_weights("cen_log", tails, data.times, data.events, grid, WeightPolicy())
        full = batch_scores("cen_log", logits, data.times, data.events, grid, weights).scores
        simple = batch_scores("cen_log_simple", logits, data.times, data.events, grid).scores
        difference = abs(math.fsum(full.tolist()) - math.fsum(simple.tolist())) / data.n
        differences.append(difference)
        LOGGER.info("bconv bins=%d n=%d difference=%.6e", n_bins, data.n, difference)
    return differences


def monte_carlo_score(
    truth: PiecewiseLinearTruth,
    candidate: BinMassCdf | QuantileCurve,
    rule: str,
    n: int,
    seed: int,
    *,
    policy: WeightPolicy | None = None,
    z_inf_factor: float = 1.05,
) -> tuple[float, float]:
    """
    蒙特卡洛期望得分（权重由真值 F 计算）。

    返回：
    - tuple[float, float]: (样本均值, 标准误)。
    """
    _check_rule(rule)
    _check_candidate(truth, candidate, rule)
    if n < 2:
        raise DomainError("蒙特卡洛样本数至少为 2")
    policy = policy or WeightPolicy()
    info = get_rule(rule)
    weights: np.ndarray | None = None
    if info.censored:
        data = sample_dataset(truth, n, seed)
        times, events = data.times, data.events
    else:
        # 未删失参考规则直接使用事件时间
        times = _draw_times(truth.event_cdf, n, np.random.default_rng(seed))
        events = np.ones(n, dtype=np.int64)
    if rule == "portnoy":
        assert isinstance(candidate, QuantileCurve)
        logits = np.tile(np.log(np.diff(candidate.values) / candidate.upper), (n, 1))
        tau_c = truth.event_cdf.cdf_values(times)
        weights, _ = portnoy_weights_from_levels(tau_c, events, candidate.grid, policy)
        result = batch_scores(
            rule, logits, times, events, candidate.grid, weights,
            scale=candidate.upper, z_infinity=z_inf_factor * truth.upper,
        )
    else:
        assert isinstance(candidate, BinMassCdf)
        logits = np.tile(np.log(candidate.masses), (n, 1))
        if info.needs_weights:
            tails = np.tile(truth.event_cdf.tail_knots, (n, 1))
            weights, _ = row_weights(rule, tails, times, events, truth.grid, policy)
        result = batch_scores(rule, logits, times, events, truth.grid, weights)
    scores = result.scores
    mean = math.fsum(scores.tolist()) / n
    std_error = float(np.std(scores, ddof=1)) / math.sqrt(n)
    return mean, std_error
