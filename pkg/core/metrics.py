"""
公平性度量、方差目标、划分比较与模型评估指标。

Φ(k) = P(Y=1 | S=k) - P(Y=1)（一组对全体的差异），方差目标为
Σ_k w_k (Φ(k) - Φ̄)²，其中 Φ̄ = Σ_k w_k Φ(k)，对该度量恒为 0。
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.stats import norm, rankdata
from sklearn.metrics import accuracy_score, auc, precision_recall_curve, rand_score

from core.domain import Dataset, GroupAssignment, GroupStats, Partition, Target, assign_groups
from core.errors import DomainError

logger = logging.getLogger(__name__)

MIN_CI_GROUP_SIZE = 30


class FairnessMeasure(str, Enum):
    ONE_VS_ALL_DI = "one_vs_all_di"


@dataclass(frozen=True)
class ConfidenceInterval:
    low: float
    high: float
    level: float


class BinaryDICheck(NamedTuple):
    variance: float
    pi: float
    di: float
    identity: float


def phi(assignment: GroupAssignment, k: int) -> float:
    """k 从 1 开始编号"""
    assignment.require_nonempty(k)
    n_k = assignment.counts[k - 1]
    return float(assignment.positives[k - 1] / n_k - assignment.total_positive / assignment.n)


def phi_values(assignment: GroupAssignment, measure: FairnessMeasure = FairnessMeasure.ONE_VS_ALL_DI) -> np.ndarray:
    FairnessMeasure(measure)
    assignment.require_nonempty()
    return assignment.positives / assignment.counts - assignment.total_positive / assignment.n


def variance_of_assignment(assignment: GroupAssignment, measure: FairnessMeasure = FairnessMeasure.ONE_VS_ALL_DI) -> float:
    values = phi_values(assignment, measure)
    weights = assignment.counts / assignment.n
    mean = float(np.dot(weights, values))
    return float(np.dot(weights, (values - mean) ** 2))


def partition_variance(
    dataset: Dataset,
    partition: Partition,
    measure: FairnessMeasure = FairnessMeasure.ONE_VS_ALL_DI,
    target: Target = Target.Y,
    threshold: float = 0.5,
    clamp: bool = False,
) -> float:
    assignment = assign_groups(dataset, partition, target=target, clamp=clamp, threshold=threshold)
    return variance_of_assignment(assignment, measure)


def binary_di_identity_check(
    dataset: Dataset,
    partition: Partition,
    target: Target = Target.Y,
    threshold: float = 0.5,
) -> BinaryDICheck:
    """K=2 时方差应等于 π(1-π)·DI²；组 1 记为 S=0，组 2 记为 S=1"""
    if partition.k != 2:
        raise DomainError(f"the disparate-impact identity needs K=2, got K={partition.k}")
    assignment = assign_groups(dataset, partition, target=target, threshold=threshold)
    return binary_di_from_assignment(assignment)


def binary_di_from_assignment(assignment: GroupAssignment) -> BinaryDICheck:
    variance = variance_of_assignment(assignment)
    pi = assignment.counts[1] / assignment.n
    rates = assignment.positives / assignment.counts
    di = float(rates[1] - rates[0])
    return BinaryDICheck(variance=variance, pi=float(pi), di=di, identity=float(pi * (1 - pi) * di ** 2))


def rand_index(a, b) -> float:
    """两种分组在所有样本对上（同组 / 不同组）一致的比例"""
    labels_a = a.labels if isinstance(a, GroupAssignment) else np.asarray(a)
    labels_b = b.labels if isinstance(b, GroupAssignment) else np.asarray(b)
    if labels_a.size != labels_b.size:
        raise DomainError(f"assignments cover {labels_a.size} and {labels_b.size} samples")
    if labels_a.size < 2:
        raise DomainError("the Rand index needs at least 2 samples")
    return float(rand_score(labels_a, labels_b))


def phi_confidence_interval(assignment: GroupAssignment, k: int, level: float = 0.95) -> ConfidenceInterval:
    """
    Delta 方法渐近区间。四个格子（组内正、组内负、组外正、组外负）视为多项分布，
    Φ = p_a/(p_a+p_b) - (p_a+p_c)，方差为 (Σ g_i² p_i - (Σ g_i p_i)²) / N。
    """
    if not 0.0 < level < 1.0:
        raise DomainError(f"confidence level must lie in (0, 1), got {level}")
    value = phi(assignment, k)
    n = assignment.n
    n_k = int(assignment.counts[k - 1])
    if n_k < MIN_CI_GROUP_SIZE:
        logger.warning(f"group {k} has only {n_k} samples; the asymptotic interval may be unreliable")
    if n_k == n:
        return ConfidenceInterval(low=0.0, high=0.0, level=level)
    a = assignment.positives[k - 1]
    b = n_k - a
    c = assignment.total_positive - a
    d = n - n_k - c
    p = np.array([a, b, c, d], dtype=float) / n
    in_group = p[0] + p[1]
    grad = np.array([p[1] / in_group ** 2 - 1.0, -p[0] / in_group ** 2, -1.0, 0.0])
    var = (np.dot(grad ** 2, p) - np.dot(grad, p) ** 2) / n
    half = norm.ppf(0.5 + level / 2.0) * np.sqrt(max(var, 0.0))
    return ConfidenceInterval(low=value - half, high=value + half, level=level)


def group_stats(assignment: GroupAssignment, level: float = 0.95) -> GroupStats:
    values = phi_values(assignment)
    intervals = [phi_confidence_interval(assignment, k, level) for k in range(1, assignment.k + 1)]
    return GroupStats(
        counts=assignment.counts,
        positives=assignment.positives,
        weights=assignment.counts / assignment.n,
        rates=assignment.positives / assignment.counts,
        phi=values,
        ci_low=np.array([ci.low for ci in intervals]),
        ci_high=np.array([ci.high for ci in intervals]),
        rate=assignment.total_positive / assignment.n,
        level=level,
    )


def _equal_frequency_bins(values: np.ndarray, bins: int) -> np.ndarray:
    # 相同取值落在同一个箱内，秩不受严格单调变换影响
    ranks = rankdata(values, method="min")
    return ((ranks - 1) * bins // values.size).astype(np.int64)


def hgr(scores, sensitive, bins: int = 20) -> float:
    """
    分箱 HGR 估计：两变量按等频分箱，构造 Q_ij = p_ij / sqrt(p_i· p_·j)，
    返回其第二大奇异值。二维敏感属性按每轴 ceil(sqrt(bins)) 箱联合编码。
    """
    x = np.asarray(scores, dtype=float)
    s = np.asarray(sensitive, dtype=float)
    if s.ndim == 2 and s.shape[1] == 1:
        s = s[:, 0]
    if x.ndim != 1 or s.shape[0] != x.size:
        raise DomainError(f"hgr inputs have {x.size} and {s.shape[0]} values")
    if bins < 2:
        raise DomainError(f"hgr needs at least 2 bins, got {bins}")
    bx = _equal_frequency_bins(x, bins)
    if s.ndim == 2:
        per_axis = int(np.ceil(np.sqrt(bins)))
        codes = [_equal_frequency_bins(s[:, j], per_axis) for j in range(s.shape[1])]
        bs = codes[0] * per_axis + codes[1]
    else:
        bs = _equal_frequency_bins(s, bins)
    _, bx = np.unique(bx, return_inverse=True)
    _, bs = np.unique(bs, return_inverse=True)
    if bx.max() == 0 or bs.max() == 0:
        logger.warning("hgr input is constant; returning 0")
        return 0.0
    joint = np.zeros((bx.max() + 1, bs.max() + 1))
    np.add.at(joint, (bx, bs), 1.0)
    joint /= x.size
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    q = joint / np.sqrt(np.outer(px, py))
    singular = np.linalg.svd(q, compute_uv=False)
    return float(np.clip(singular[1], 0.0, 1.0))


def accuracy(y_hat, y) -> float:
    y_hat = np.asarray(y_hat)
    y = np.asarray(y)
    if y_hat.shape != y.shape:
        raise DomainError(f"accuracy inputs have {y_hat.size} and {y.size} values")
    return float(accuracy_score(y, y_hat))


def pr_auc(score, y) -> float:
    """
    梯形积分的 PR 曲线下面积。召回率为 0 处的精确率取最高阈值处的精确率，
    因此常数打分的面积等于正例比例。
    """
    score = np.asarray(score, dtype=float)
    y = np.asarray(y)
    if score.shape != y.shape:
        raise DomainError(f"pr_auc inputs have {score.size} and {y.size} values")
    if not np.any(y == 1):
        raise DomainError("PR-AUC is undefined without positive labels")
    precision, recall, _ = precision_recall_curve(y, score)
    precision = precision.copy()
    precision[-1] = precision[-2]
    return float(auc(recall, precision))
