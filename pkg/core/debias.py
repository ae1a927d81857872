"""
基于最优传输的后处理去偏。

每组打分的经验分位数函数 Q_k 在固定网格 u_r = r/(R-1) 上估计；
一维 W1 重心的分位数函数逐点取各组分位数的加权中位数。
α 约束通过公共插值系数 t 实现：Q_k^α = (1-t)Q_k + tQ̄，t = max(0, 1 - α/D)，
D 为各组分位数函数两两之间的最大上确界距离。
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from core.domain import Dataset, GroupAssignment, Partition, assign_groups
from core.errors import DomainError, UndefinedGroupError
from core.metrics import accuracy, hgr, pr_auc
from core.synth import make_rng

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 16
DEFAULT_ALPHAS = (1.0, 0.5, 0.25, 0.0)


@dataclass(frozen=True)
class BarycenterSpec:
    resolution: int = 512

    def __post_init__(self):
        if self.resolution < MIN_RESOLUTION:
            raise DomainError(f"quantile grid resolution must be at least {MIN_RESOLUTION}, got {self.resolution}")

    def knots(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.resolution)


@dataclass(frozen=True, eq=False)
class TransportMap:
    """
    source[i] / target[i] 为第 groups[i] 组在 knots 上的原始与目标分位数函数。
    构造后不可变，可在线程间共享。
    """
    knots: np.ndarray
    groups: Tuple[int, ...]
    source: np.ndarray
    target: np.ndarray
    barycenter: np.ndarray
    weights: np.ndarray
    alpha: float
    t: float
    distance: float
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("knots", "source", "target", "barycenter", "weights"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "groups", tuple(int(g) for g in self.groups))
        if self.source.shape != (len(self.groups), self.knots.size) or self.target.shape != self.source.shape:
            raise DomainError("quantile tables do not match the groups and knots")
        if np.any(np.diff(self.source, axis=1) < 0) or np.any(np.diff(self.target, axis=1) < 0):
            raise DomainError("quantile functions must be nondecreasing")

    @property
    def resolution(self) -> int:
        return self.knots.size

    @property
    def is_identity(self) -> bool:
        return self.t == 0.0

    def _row(self, group: int) -> Optional[int]:
        try:
            return self.groups.index(int(group))
        except ValueError:
            return None

    def apply(self, score: float, group: int) -> float:
        return float(self.apply_array(np.array([score]), np.array([group]))[0])

    def apply_array(self, scores, groups) -> np.ndarray:
        scores = np.clip(np.asarray(scores, dtype=float), 0.0, 1.0)
        groups = np.asarray(groups, dtype=np.int64)
        if scores.shape != groups.shape:
            raise DomainError(f"{scores.size} scores for {groups.size} group labels")
        out = scores.copy()
        if self.is_identity:
            return out
        for g in np.unique(groups):
            row = self._row(g)
            mask = groups == g
            if row is None:
                logger.warning(f"group {g} was not seen when fitting; its {int(mask.sum())} scores are left unchanged")
                continue
            u = np.interp(scores[mask], self.source[row], self.knots)
            out[mask] = np.interp(u, self.knots, self.target[row])
        return out


def _weighted_median(columns: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """逐列加权中位数；累计权重恰为一半时取较小值"""
    order = np.argsort(columns, axis=0, kind="stable")
    ordered = np.take_along_axis(columns, order, axis=0)
    cum = np.cumsum(weights[order], axis=0)
    first = np.argmax(cum >= 0.5 * weights.sum() - 1e-12, axis=0)
    return ordered[first, np.arange(columns.shape[1])]


def fit_postprocessor(scores, assignment, alpha: float, spec: BarycenterSpec = BarycenterSpec()) -> TransportMap:
    scores = np.asarray(scores, dtype=float)
    labels = assignment.labels if isinstance(assignment, GroupAssignment) else np.asarray(assignment, dtype=np.int64)
    if scores.shape != labels.shape:
        raise DomainError(f"{scores.size} scores for {labels.size} group labels")
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    if np.any((scores < 0.0) | (scores > 1.0)):
        raise DomainError("training scores must lie in [0, 1]")
    k = assignment.k if isinstance(assignment, GroupAssignment) else int(labels.max())
    groups = tuple(range(1, k + 1))
    knots = spec.knots()
    source = np.empty((k, knots.size))
    counts = np.empty(k)
    for i, g in enumerate(groups):
        values = scores[labels == g]
        if np.unique(values).size < 2:
            raise UndefinedGroupError(g, f"group {g} has fewer than 2 distinct scores; its score distribution is degenerate")
        source[i] = np.quantile(values, knots)
        counts[i] = values.size
    weights = counts / counts.sum()
    barycenter = _weighted_median(source, weights)
    distance = float(np.max(source.max(axis=0) - source.min(axis=0)))
    t = 0.0 if distance <= alpha else 1.0 - alpha / distance
    target = np.clip((1.0 - t) * source + t * barycenter[None, :], 0.0, 1.0)
    logger.info(f"transport fitted: K={k}, R={knots.size}, alpha={alpha}, D={distance:.4f}, t={t:.4f}")
    return TransportMap(
        knots=knots,
        groups=groups,
        source=source,
        target=target,
        barycenter=barycenter,
        weights=weights,
        alpha=float(alpha),
        t=float(t),
        distance=distance,
    )


def apply_postprocessor(transport: TransportMap, score: float, group: int) -> float:
    """Q_k^α(F̂_k(score))。单点调用时未知组报错；批量推断用 apply_array，未见过的组原样返回并告警"""
    if transport._row(group) is None:
        raise UndefinedGroupError(group, f"group {group} is not part of the transport map")
    return transport.apply(score, group)


def barycenter_objective(transport: TransportMap, barycenter: Optional[np.ndarray] = None) -> float:
    """Σ_k w_k W1(Q_k, Q̄)，W1 在分位数网格上用梯形积分近似"""
    bary = transport.barycenter if barycenter is None else np.asarray(barycenter, dtype=float)
    gaps = np.abs(transport.source - bary[None, :])
    return float(np.dot(transport.weights, trapezoid(gaps, transport.knots, axis=1)))


@dataclass(frozen=True, eq=False)
class DebiasReport:
    rows: List[Dict]
    transports: Dict[float, TransportMap]
    train_size: int
    test_size: int
    test_index: np.ndarray


def _sensitive_for_hgr(dataset: Dataset) -> np.ndarray:
    return dataset.l if dataset.dimension == 2 else dataset.l[:, 0]


def split_indices(n: int, test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    if not 0.0 < test_fraction < 1.0:
        raise DomainError(f"test fraction must lie in (0, 1), got {test_fraction}")
    order = make_rng(seed).permutation(n)
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test >= n:
        raise DomainError(f"a test fraction of {test_fraction} leaves an empty split for N={n}")
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def debias_report(
    dataset: Dataset,
    partition: Partition,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    spec: BarycenterSpec = BarycenterSpec(),
    test_fraction: float = 0.5,
    seed: int = 7,
    hgr_bins: int = 20,
    threshold: float = 0.5,
) -> DebiasReport:
    """
    单次划分训练 / 测试集：在训练集上拟合传输映射，在测试集上报告
    accuracy、PR-AUC 与 HGR(score', L)。首行为未处理的基线。
    """
    if dataset.score is None:
        raise DomainError("debiasing needs a score column")
    train_idx, test_idx = split_indices(len(dataset), test_fraction, seed)
    train, test = dataset.subset(train_idx), dataset.subset(test_idx)
    train_groups = assign_groups(train, partition, clamp=True)
    test_groups = assign_groups(test, partition, clamp=True)
    sensitive = _sensitive_for_hgr(test)

    def metrics_row(alpha, t, scores):
        return {
            "alpha": alpha,
            "t": t,
            "accuracy": accuracy((scores > threshold).astype(np.int8), test.y),
            "pr_auc": pr_auc(scores, test.y),
            "hgr": hgr(scores, sensitive, hgr_bins),
        }

    rows = [metrics_row(None, 0.0, test.score)]
    transports = {}
    for alpha in alphas:
        transport = fit_postprocessor(train.score, train_groups, float(alpha), spec)
        repaired = transport.apply_array(test.score, test_groups.labels)
        rows.append(metrics_row(float(alpha), transport.t, repaired))
        transports[float(alpha)] = transport
    for row in rows:
        label = "baseline" if row["alpha"] is None else f"alpha={row['alpha']}"
        logger.info(f"{label}: accuracy {row['accuracy']:.4f}, PR-AUC {row['pr_auc']:.4f}, HGR {row['hgr']:.4f}")
    return DebiasReport(rows=rows, transports=transports, train_size=len(train), test_size=len(test), test_index=test_idx)


def group_cdf_table(scores, assignment, transport: TransportMap, points: int = 101) -> List[Dict]:
    """各组处理前后打分的经验 CDF，在 [0, 1] 的等距网格上取值"""
    scores = np.clip(np.asarray(scores, dtype=float), 0.0, 1.0)
    labels = assignment.labels if isinstance(assignment, GroupAssignment) else np.asarray(assignment, dtype=np.int64)
    after = transport.apply_array(scores, labels)
    grid = np.linspace(0.0, 1.0, points)
    rows = []
    for g in transport.groups:
        mask = labels == g
        if not np.any(mask):
            continue
        before_sorted = np.sort(scores[mask])
        after_sorted = np.sort(after[mask])
        n = before_sorted.size
        cdf_before = np.searchsorted(before_sorted, grid, side="right") / n
        cdf_after = np.searchsorted(after_sorted, grid, side="right") / n
        rows.extend(
            {"group": g, "score": float(x), "cdf_before": float(b), "cdf_after": float(a)}
            for x, b, a in zip(grid, cdf_before, cdf_after)
        )
    return rows
