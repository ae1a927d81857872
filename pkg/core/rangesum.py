"""
区间统计的动态规划预计算。

count_on_all_ranges 以 O(M²) 递推出所有区间 [λ_{j1}, λ_{j2+1}) 上的累加值，
psi_matrix 由计数表与正例计数表逐元素相除得到 Ψ 上三角矩阵；
二维情形用前缀和（summed-area table）以四角容斥回答任意矩形的计数查询。
下标一律从 0 开始：表项 (i, j) 对应第 i..j 个区间（含两端）。
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from core.domain import Dataset, Grid, Target
from core.errors import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RangeSumTable:
    values: np.ndarray

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def range_sum(self, j1: int, j2: int) -> float:
        if not 0 <= j1 <= j2 < self.m:
            raise DomainError(f"invalid range ({j1}, {j2}) for {self.m} bins")
        return float(self.values[j1, j2])


def count_on_all_ranges(sum_by_bin) -> RangeSumTable:
    """
    第 0 行为前缀和；第 j1 行由上一行减去 sum_by_bin[j1-1] 得到：
    table[j1][j2] = table[j1-1][j2] - sum_by_bin[j1-1]，严格下三角为 0。
    """
    sum_by_bin = np.asarray(sum_by_bin, dtype=float)
    if sum_by_bin.ndim != 1 or sum_by_bin.size < 1:
        raise DomainError("sum_by_bin must be a non-empty vector")
    m = sum_by_bin.size
    table = np.zeros((m, m), dtype=float)
    table[0] = np.cumsum(sum_by_bin)
    for j1 in range(1, m):
        table[j1, j1:] = table[j1 - 1, j1:] - sum_by_bin[j1 - 1]
    table.setflags(write=False)
    return RangeSumTable(values=table)


@dataclass(frozen=True, eq=False)
class PsiMatrix:
    """
    psi[i, j] = P̂(Y=1 | L ∈ 区间 i..j) - P̂(Y=1)；weights[i, j] = P̂(L ∈ 区间 i..j)。
    计数为 0 的区间 defined=False，psi 取 NaN，搜索时跳过。
    """
    psi: np.ndarray
    weights: np.ndarray
    counts: np.ndarray
    positives: np.ndarray
    defined: np.ndarray
    n: int
    n_positive: int

    @property
    def m(self) -> int:
        return self.psi.shape[0]

    @property
    def rate(self) -> float:
        return self.n_positive / self.n

    def diagonal(self) -> np.ndarray:
        """单个区间上的 ψ_j"""
        return np.diagonal(self.psi).copy()

    def entry(self, j1: int, j2: int) -> float:
        if not self.defined[j1, j2]:
            raise DomainError(f"Ψ is undefined on empty range ({j1}, {j2})")
        return float(self.psi[j1, j2])


def bin_sums(dataset: Dataset, grid: Grid, target: Target = Target.Y, threshold: float = 0.5) -> Tuple[np.ndarray, np.ndarray]:
    """每个区间的样本数与正例数"""
    if grid.dimension != 1 or dataset.dimension != 1:
        raise DomainError("bin_sums expects a 1D dataset and grid")
    index, _ = grid.bin_index(dataset.l)
    m = grid.shape[0]
    outcome = dataset.outcome(target, threshold)
    counts = np.bincount(index[:, 0], minlength=m).astype(float)
    positives = np.bincount(index[:, 0], weights=outcome, minlength=m)
    return counts, positives


def psi_matrix(dataset: Dataset, grid: Grid, target: Target = Target.Y, threshold: float = 0.5) -> PsiMatrix:
    counts_by_bin, positives_by_bin = bin_sums(dataset, grid, target, threshold)
    counts = count_on_all_ranges(counts_by_bin).values
    positives = count_on_all_ranges(positives_by_bin).values
    n = len(dataset)
    n_positive = int(round(positives_by_bin.sum()))
    upper = np.triu(np.ones(counts.shape, dtype=bool))
    defined = upper & (counts > 0)
    psi = np.full(counts.shape, np.nan)
    psi[defined] = positives[defined] / counts[defined] - n_positive / n
    weights = np.where(upper, counts / n, 0.0)
    undefined = int(upper.sum() - defined.sum())
    if undefined:
        logger.debug(f"Ψ matrix: {undefined} of {int(upper.sum())} ranges are empty and flagged undefined")
    for arr in (psi, weights, defined):
        arr.setflags(write=False)
    return PsiMatrix(
        psi=psi,
        weights=weights,
        counts=counts,
        positives=positives,
        defined=defined,
        n=n,
        n_positive=n_positive,
    )


@dataclass(frozen=True, eq=False)
class RectPrefixSums:
    """
    count[x, y] 为前 x 个 L 区间与前 y 个 h 区间内的样本数（首行首列为 0），
    positive 同理。矩形 [x0, x1) × [y0, y1) 的统计由四角容斥得到。
    """
    count: np.ndarray
    positive: np.ndarray
    n: int
    n_positive: int

    @property
    def shape(self) -> Tuple[int, int]:
        return self.count.shape[0] - 1, self.count.shape[1] - 1

    def query(self, x0: int, x1: int, y0: int, y1: int) -> Tuple[int, int]:
        c, p = self.count, self.positive
        n = c[x1, y1] - c[x0, y1] - c[x1, y0] + c[x0, y0]
        pos = p[x1, y1] - p[x0, y1] - p[x1, y0] + p[x0, y0]
        return int(n), int(pos)

    def cut_counts(self, x0: int, x1: int, y0: int, y1: int, axis: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        沿 axis 切开矩形时所有内部切线 c 的 (切线, 计数, 正例数)，统计针对靠近原点的一侧：
        axis=0 为 [x0, c) × [y0, y1)，axis=1 为 [x0, x1) × [y0, c)。另一侧等于整体减去该侧。
        """
        c, p = self.count, self.positive
        if axis == 0:
            cuts = np.arange(x0 + 1, x1)
            n = c[cuts, y1] - c[x0, y1] - c[cuts, y0] + c[x0, y0]
            pos = p[cuts, y1] - p[x0, y1] - p[cuts, y0] + p[x0, y0]
        else:
            cuts = np.arange(y0 + 1, y1)
            n = c[x1, cuts] - c[x0, cuts] - c[x1, y0] + c[x0, y0]
            pos = p[x1, cuts] - p[x0, cuts] - p[x1, y0] + p[x0, y0]
        return cuts, n, pos


def rect_prefix_sums(dataset: Dataset, grid2d: Grid, target: Target = Target.Y, threshold: float = 0.5) -> RectPrefixSums:
    if dataset.dimension != 2 or grid2d.dimension != 2:
        raise DomainError("rect_prefix_sums expects a 2D dataset and grid")
    index, _ = grid2d.bin_index(dataset.l)
    mx, my = grid2d.shape
    outcome = dataset.outcome(target, threshold)
    flat = index[:, 0] * my + index[:, 1]
    cell_count = np.bincount(flat, minlength=mx * my).reshape(mx, my)
    cell_pos = np.bincount(flat, weights=outcome, minlength=mx * my).round().astype(np.int64).reshape(mx, my)
    count = np.zeros((mx + 1, my + 1), dtype=np.int64)
    positive = np.zeros((mx + 1, my + 1), dtype=np.int64)
    count[1:, 1:] = cell_count.cumsum(axis=0).cumsum(axis=1)
    positive[1:, 1:] = cell_pos.cumsum(axis=0).cumsum(axis=1)
    count.setflags(write=False)
    positive.setflags(write=False)
    return RectPrefixSums(count=count, positive=positive, n=len(dataset), n_positive=int(outcome.sum()))
