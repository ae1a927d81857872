"""
划分搜索：FairGroups 穷举（一维 / 二维）、K-Means 启发式、固定阈值基线，
以及划分迁移评估与偏差放大报告。

一维 FairGroups 在网格上枚举全部 C(M-1, K-1) 种切点，用预计算的 Ψ 矩阵在 O(K)
内评估每个候选。Φ̄ = 0 时目标对线段可加，默认走 O(M²K) 的动态规划（fast_path），
穷举保留为一般度量的路径与测试基准。
平局规则：目标值相差不超过 tol 时取字典序最小的切点向量；穷举按首个切点分块，
块内和块间使用同一规则，因此结果与 worker 数无关。
"""
import itertools
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from core.domain import Dataset, GroupAssignment, GroupStats, Grid, Partition, Target, assign_groups
from core.errors import DomainError, InfeasibleError
from core.metrics import (
    FairnessMeasure,
    group_stats,
    phi_confidence_interval,
    phi_values,
    rand_index,
    variance_of_assignment,
)
from core.rangesum import PsiMatrix, RectPrefixSums, psi_matrix, rect_prefix_sums

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12
MAX_K_2D = 16
MAX_GRID_2D = 128
# 二维记忆化 DP 的状态数上限，见 guillotine_state_bound
MAX_DP_STATES = 1_000_000


class SearchMethod(str, Enum):
    FAIRGROUPS = "fairgroups"
    KMEANS = "kmeans"
    FIXED = "fixed"


class FixedScheme(str, Enum):
    FITZPATRICK_ITA = "fitzpatrick_ita"
    L60 = "l60"
    DEFAULT_2D = "default_2d"


# 常用 ITA 类别界限：dark < -30° < brown < 10° < tan < 28° < intermediate < 41° < light < 55° < very light
FITZPATRICK_ITA_EDGES = (-30.0, 10.0, 28.0, 41.0, 55.0)

SCHEME_DEFAULTS = {
    FixedScheme.FITZPATRICK_ITA: {"thresholds": FITZPATRICK_ITA_EDGES, "low": -90.0, "high": 90.0},
    FixedScheme.L60: {"thresholds": (60.0,), "low": 0.0, "high": 100.0},
    FixedScheme.DEFAULT_2D: {"thresholds": ((60.0,), (55.0,)), "low": (0.0, 0.0), "high": (100.0, 360.0)},
}


@dataclass(frozen=True)
class SearchConfig:
    k: int = 5
    m: Union[int, Tuple[int, int]] = 100
    edges: Optional[Sequence] = None
    low: Optional[Union[float, Tuple]] = None
    high: Optional[Union[float, Tuple]] = None
    method: SearchMethod = SearchMethod.FAIRGROUPS
    target: Target = Target.Y
    threshold: float = 0.5
    min_group_count: int = 1
    fast_path: bool = True
    threads: int = 1
    tolerance: float = TIE_TOLERANCE
    measure: FairnessMeasure = FairnessMeasure.ONE_VS_ALL_DI
    scheme: Optional[FixedScheme] = None
    thresholds: Optional[Sequence] = None
    level: float = 0.95

    def __post_init__(self):
        if self.k < 1:
            raise DomainError(f"K must be at least 1, got {self.k}")
        if self.min_group_count < 1:
            raise DomainError(f"min group count must be at least 1, got {self.min_group_count}")
        if self.threads < 1:
            raise DomainError(f"threads must be at least 1, got {self.threads}")

    def grid_for(self, dataset: Dataset) -> Grid:
        if self.edges is not None:
            return Grid(self.edges)
        return Grid.covering(dataset, self.m, self.low, self.high)


@dataclass(frozen=True, eq=False)
class SearchResult:
    partition: Partition
    objective: float
    stats: GroupStats
    assignment: GroupAssignment
    diagnostics: Dict = field(default_factory=dict)


def _finish(dataset: Dataset, partition: Partition, objective: float, config: SearchConfig, diagnostics: Dict) -> SearchResult:
    assignment = assign_groups(dataset, partition, target=config.target, threshold=config.threshold)
    recomputed = variance_of_assignment(assignment, config.measure)
    if abs(recomputed - objective) > 1e-12:
        logger.warning(f"search objective {objective!r} differs from recomputed variance {recomputed!r}")
    diagnostics.setdefault("n", len(dataset))
    partition = partition.with_result(
        objective=float(objective),
        measure=FairnessMeasure(config.measure).value,
        metadata={**partition.metadata, "n": len(dataset), "target": Target(config.target).value},
    )
    return SearchResult(
        partition=partition,
        objective=float(objective),
        stats=group_stats(assignment, config.level),
        assignment=assignment,
        diagnostics=diagnostics,
    )


@dataclass(frozen=True, eq=False)
class SegmentTerms:
    """
    以边界下标 (a, b)（0 ≤ a < b ≤ M）索引的线段项：
    s1 = w·Ψ，s2 = w·Ψ²，valid 表示线段样本数不少于下限。
    """
    s1: np.ndarray
    s2: np.ndarray
    valid: np.ndarray

    @property
    def m(self) -> int:
        return self.s1.shape[0] - 1

    @classmethod
    def from_psi(cls, psi: PsiMatrix, min_count: int = 1) -> "SegmentTerms":
        m = psi.m
        s1 = np.zeros((m + 1, m + 1))
        s2 = np.zeros((m + 1, m + 1))
        valid = np.zeros((m + 1, m + 1), dtype=bool)
        ok = psi.defined & (psi.counts >= min_count)
        w = np.where(ok, psi.weights, 0.0)
        v = np.where(ok, psi.psi, 0.0)
        s1[:m, 1:] = w * v
        s2[:m, 1:] = w * v * v
        valid[:m, 1:] = ok
        return cls(s1=s1, s2=s2, valid=valid)

    def objective(self, bounds: Sequence[int]) -> float:
        pairs = list(zip(bounds, bounds[1:]))
        if not all(self.valid[a, b] for a, b in pairs):
            return -np.inf
        a2 = sum(self.s2[a, b] for a, b in pairs)
        a1 = sum(self.s1[a, b] for a, b in pairs)
        return float(a2 - a1 * a1)


def _segment_dp(terms: SegmentTerms, k: int, tol: float) -> Tuple[Optional[Tuple[int, ...]], float, int]:
    """
    后缀 DP：best[r][a] 为用 r 段覆盖区间 a..M-1 的最大 Σ w Ψ²。
    前向重建时每步取满足容差的最小切点，得到字典序最小的最优解。
    """
    m = terms.m
    best = np.full((k + 1, m + 1), -np.inf)
    best[1, :m] = np.where(terms.valid[:m, m], terms.s2[:m, m], -np.inf)
    evaluated = m
    for r in range(2, k + 1):
        for a in range(0, m - r + 1):
            cand = np.where(terms.valid[a, a + 1:m], terms.s2[a, a + 1:m] + best[r - 1, a + 1:m], -np.inf)
            evaluated += cand.size
            best[r, a] = cand.max()
    total = best[k, 0]
    if not np.isfinite(total):
        return None, -np.inf, evaluated
    bounds = [0]
    a = 0
    for r in range(k, 1, -1):
        cand = np.where(terms.valid[a, a + 1:m], terms.s2[a, a + 1:m] + best[r - 1, a + 1:m], -np.inf)
        b = a + 1 + int(np.flatnonzero(cand >= best[r, a] - tol)[0])
        bounds.append(b)
        a = b
    bounds.append(m)
    return tuple(bounds), float(total), evaluated


def _exhaustive_block(terms: SegmentTerms, k: int, first: Optional[int], tol: float) -> Tuple[float, Optional[Tuple[int, ...]], int]:
    """
    枚举一个块内的全部切点组合。first 为首个切点（K ≥ 4 时分块），
    最后两个切点在二维数组上向量化计算，其余切点逐个枚举。
    返回 (块内最优值, 对应边界向量, 评估的候选数)。
    """
    m = terms.m
    s1, s2, valid = terms.s1, terms.s2, terms.valid
    best_val, best_bounds, evaluated = -np.inf, None, 0

    if k == 1:
        value = terms.objective((0, m))
        return value, ((0, m) if np.isfinite(value) else None), 1

    if k == 2:
        c = np.arange(1, m)
        ok = valid[0, c] & valid[c, m]
        a1 = s1[0, c] + s1[c, m]
        val = np.where(ok, s2[0, c] + s2[c, m] - a1 * a1, -np.inf)
        evaluated = c.size
        top = val.max()
        if np.isfinite(top):
            i = int(np.flatnonzero(val >= top - tol)[0])
            best_val, best_bounds = float(top), (0, int(c[i]), m)
        return best_val, best_bounds, evaluated

    if first is None:
        prefixes = [()]
    else:
        prefixes = ((first,) + rest for rest in itertools.combinations(range(first + 1, m), k - 4))

    for prefix in prefixes:
        bounds = (0,) + prefix
        pairs = list(zip(bounds, bounds[1:]))
        if not all(valid[a, b] for a, b in pairs):
            continue
        acc2 = sum(s2[a, b] for a, b in pairs)
        acc1 = sum(s1[a, b] for a, b in pairs)
        p = bounds[-1]
        size = m - p - 2
        if size < 1:
            continue
        # q ∈ [p+1, m-2] 为倒数第二个切点，r ∈ [p+2, m-1] 为最后一个切点，要求 q < r
        q_slice = slice(p + 1, m - 1)
        r_slice = slice(p + 2, m)
        mid_ok = valid[q_slice, r_slice] & np.triu(np.ones((size, size), dtype=bool))
        ok = valid[p, q_slice][:, None] & mid_ok & valid[r_slice, m][None, :]
        t1 = acc1 + s1[p, q_slice][:, None] + s1[q_slice, r_slice] + s1[r_slice, m][None, :]
        t2 = acc2 + s2[p, q_slice][:, None] + s2[q_slice, r_slice] + s2[r_slice, m][None, :]
        val = np.where(ok, t2 - t1 * t1, -np.inf)
        evaluated += size * (size + 1) // 2
        top = val.max()
        if top > best_val + tol:
            i, j = divmod(int(np.flatnonzero(val.ravel() >= top - tol)[0]), size)
            best_val, best_bounds = float(top), bounds + (p + 1 + i, p + 2 + j, m)
    return best_val, best_bounds, evaluated


def _exhaustive_search(terms: SegmentTerms, k: int, tol: float, threads: int = 1) -> Tuple[Optional[Tuple[int, ...]], float, int]:
    m = terms.m
    if k <= 3:
        blocks = [None]
    else:
        blocks = list(range(1, m - k + 2))
    if threads > 1 and len(blocks) > 1:
        results = Parallel(n_jobs=threads)(delayed(_exhaustive_block)(terms, k, b, tol) for b in blocks)
    else:
        results = [_exhaustive_block(terms, k, b, tol) for b in blocks]
    best_val, best_bounds, evaluated = -np.inf, None, 0
    for value, bounds, count in results:
        evaluated += count
        if bounds is not None and value > best_val + tol:
            best_val, best_bounds = value, bounds
    return best_bounds, best_val, evaluated


def fairgroups_1d(dataset: Dataset, config: SearchConfig) -> SearchResult:
    if dataset.dimension != 1:
        raise DomainError("fairgroups_1d expects a 1D dataset")
    grid = config.grid_for(dataset)
    m = grid.shape[0]
    if config.k > m:
        raise DomainError(f"K={config.k} exceeds the number of grid bins M={m}")
    psi = psi_matrix(dataset, grid, config.target, config.threshold)
    terms = SegmentTerms.from_psi(psi, config.min_group_count)
    if config.fast_path and FairnessMeasure(config.measure) is FairnessMeasure.ONE_VS_ALL_DI:
        bounds, value, evaluated = _segment_dp(terms, config.k, config.tolerance)
        path = "segment_dp"
    else:
        bounds, value, evaluated = _exhaustive_search(terms, config.k, config.tolerance, config.threads)
        path = "exhaustive"
    if bounds is None:
        raise InfeasibleError(
            f"no placement of {config.k - 1} cuts on {m} bins gives {config.k} groups "
            f"with at least {config.min_group_count} samples each"
        )
    logger.info(f"FairGroups 1D ({path}): K={config.k}, M={m}, {evaluated} candidates, objective {value:.6f}")
    partition = Partition.from_boundaries(grid, bounds, method=SearchMethod.FAIRGROUPS.value)
    return _finish(dataset, partition, value, config, {"path": path, "candidates": evaluated})


def _kmeans_sorted(values: np.ndarray, k: int) -> np.ndarray:
    """
    已排序一维数据的精确 K-Means（动态规划 + 前缀和）。
    返回每个位置的簇编号 0..k-1；平局时取较小的分割点。
    """
    n = values.size
    p1 = np.concatenate(([0.0], np.cumsum(values)))
    p2 = np.concatenate(([0.0], np.cumsum(values * values)))

    def cost(i, j):
        # 区间 values[i:j] 的平方误差和，i 可为数组
        cnt = j - i
        s = p1[j] - p1[i]
        return p2[j] - p2[i] - s * s / cnt

    dist = np.full((k + 1, n + 1), np.inf)
    back = np.zeros((k + 1, n + 1), dtype=np.int64)
    dist[0, 0] = 0.0
    for c in range(1, k + 1):
        for j in range(c, n + 1):
            i = np.arange(c - 1, j)
            cand = dist[c - 1, i] + cost(i, j)
            best = int(np.argmin(cand))
            dist[c, j] = cand[best]
            back[c, j] = i[best]
    labels = np.empty(n, dtype=np.int64)
    j = n
    for c in range(k, 0, -1):
        i = back[c, j]
        labels[i:j] = c - 1
        j = i
    return labels


def kmeans_1d(dataset: Dataset, config: SearchConfig) -> SearchResult:
    """
    对每个非空区间的 ψ_j 做 K-Means，再映射回网格。
    公平性单调时各簇必为连续线段；否则返回按区间标注的划分并给出不连通诊断。
    """
    if dataset.dimension != 1:
        raise DomainError("kmeans_1d expects a 1D dataset")
    grid = config.grid_for(dataset)
    m = grid.shape[0]
    if config.k > m:
        raise DomainError(f"K={config.k} exceeds the number of grid bins M={m}")
    psi = psi_matrix(dataset, grid, config.target, config.threshold)
    occupied = np.flatnonzero(np.diagonal(psi.defined))
    values = psi.diagonal()[occupied]
    if np.unique(values).size < config.k:
        raise DomainError(
            f"only {np.unique(values).size} distinct per-bin values for K={config.k} clusters"
        )
    order = np.argsort(values, kind="stable")
    clusters = np.empty(values.size, dtype=np.int64)
    clusters[order] = _kmeans_sorted(values[order], config.k)

    # 按沿 L 首次出现的顺序给簇编号
    relabel = {}
    for c in clusters:
        relabel.setdefault(int(c), len(relabel) + 1)
    bin_labels = np.zeros(m, dtype=np.int64)
    bin_labels[occupied] = [relabel[int(c)] for c in clusters]
    # 空区间并入左侧相邻的非空区间（开头的空区间并入第一个非空区间）
    last = bin_labels[occupied[0]]
    for j in range(m):
        if bin_labels[j] == 0:
            bin_labels[j] = last
        last = bin_labels[j]

    partition = Partition(grid=grid, cell_labels=bin_labels, method=SearchMethod.KMEANS.value)
    disconnected = not partition.is_connected
    if disconnected:
        logger.warning(f"K-Means produced disconnected groups on {m} bins (fairness is not monotonic in L)")
    assignment = assign_groups(dataset, partition, target=config.target, threshold=config.threshold)
    value = variance_of_assignment(assignment, config.measure)
    logger.info(f"K-Means 1D: K={config.k}, {values.size} occupied bins, objective {value:.6f}")
    return _finish(dataset, partition, value, config, {"disconnected": disconnected, "candidates": int(values.size)})


def guillotine_state_bound(mx: int, my: int, k: int) -> int:
    """
    自顶向下 DP 最多访问的 (矩形, 组数) 状态数。
    需要 j 组的矩形距整体至多 K−j 次切分，即至多 min(4, K−j) 条边离开了整体矩形的边界。
    """
    def moved(m):
        # 该轴上 0 / 1 / 2 条边移动时的取法数
        return (1, 2 * (m - 1), max(m - 1, 0) * max(m - 2, 0) // 2)

    ax, ay = moved(mx), moved(my)
    total = 0
    for j in range(2, k + 1):
        s = min(4, k - j)
        total += sum(ax[a] * ay[b] for a in range(3) for b in range(3) if a + b <= s)
    return total


class _GuillotineSearch:
    """按 (矩形, 组数) 记忆化的 guillotine DP，只展开从整体矩形可达的状态，叶子值直接由前缀和算出"""

    def __init__(self, prefix: RectPrefixSums, min_count: int, tol: float):
        self.prefix = prefix
        self.min_count = min_count
        self.tol = tol
        self.rate = prefix.n_positive / prefix.n
        self.memo: Dict[Tuple, Tuple[float, Optional[Tuple[int, int, int]]]] = {}
        self.evaluated = 0

    def leaf(self, n, pos) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = (n / self.prefix.n) * (np.asarray(pos) / n - self.rate) ** 2
        return np.where(n >= self.min_count, value, -np.inf)

    @staticmethod
    def children(rect: Tuple[int, int, int, int], axis: int, c: int):
        x0, x1, y0, y1 = rect
        if axis == 0:
            return (x0, c, y0, y1), (c, x1, y0, y1)
        return (x0, x1, y0, c), (x0, x1, c, y1)

    def _side(self, rect, axis, cuts, side, j, alive) -> np.ndarray:
        out = np.full(cuts.size, -np.inf)
        for i in np.flatnonzero(alive):
            out[i] = self.best(self.children(rect, axis, int(cuts[i]))[side], j)
        return out

    def best(self, rect: Tuple[int, int, int, int], j: int) -> float:
        if j == 1:
            return float(self.leaf(*self.prefix.query(*rect)))
        key = (rect, j)
        hit = self.memo.get(key)
        if hit is not None:
            return hit[0]
        total_n, total_pos = self.prefix.query(*rect)
        value, choice = -np.inf, None
        if total_n >= j * self.min_count:
            splits = [self.prefix.cut_counts(*rect, axis=axis) for axis in (0, 1)]
            # 与穷举相同的枚举顺序：左侧组数、方向、切线依次递增，后来者须严格超过 tol 才替换
            for j1 in range(1, j):
                j2 = j - j1
                for axis, (cuts, n, pos) in enumerate(splits):
                    if cuts.size == 0:
                        continue
                    self.evaluated += int(cuts.size)
                    left = self.leaf(n, pos) if j1 == 1 else None
                    right = self.leaf(total_n - n, total_pos - pos) if j2 == 1 else None
                    if left is None:
                        alive = np.ones(cuts.size, dtype=bool) if right is None else np.isfinite(right)
                        left = self._side(rect, axis, cuts, 0, j1, alive)
                    if right is None:
                        right = self._side(rect, axis, cuts, 1, j2, np.isfinite(left))
                    cand = left + right
                    i = int(np.argmax(cand))
                    if cand[i] > value + self.tol:
                        value, choice = float(cand[i]), (axis, int(cuts[i]), j1)
        self.memo[key] = (value, choice)
        return value

    def collect(self, rect: Tuple[int, int, int, int], j: int, out: List):
        if j == 1:
            out.append(rect)
            return
        axis, c, j1 = self.memo[(rect, j)][1]
        first, second = self.children(rect, axis, c)
        self.collect(first, j1, out)
        self.collect(second, j - j1, out)


def fairgroups_2d(dataset: Dataset, config: SearchConfig) -> SearchResult:
    """
    二维 guillotine 划分的穷举：递归地沿网格线一分为二，直到得到 K 个矩形。
    目标对矩形可加（Φ̄ = 0），按 (矩形, 组数) 做记忆化 DP，所有子矩形统计来自前缀和。
    """
    if dataset.dimension != 2:
        raise DomainError("fairgroups_2d expects a 2D dataset")
    k = config.k
    if k > MAX_K_2D:
        raise DomainError(f"2D search supports K ≤ {MAX_K_2D}, got {k}")
    grid = config.grid_for(dataset)
    mx, my = grid.shape
    if max(mx, my) > MAX_GRID_2D:
        raise DomainError(f"2D search supports at most {MAX_GRID_2D} bins per axis, got {mx}x{my}")
    if k > mx * my:
        raise DomainError(f"K={k} exceeds the number of grid cells {mx * my}")
    bound = guillotine_state_bound(mx, my, k)
    if bound > MAX_DP_STATES:
        raise DomainError(
            f"K={k} on a {mx}x{my} grid may need {bound} DP states, limit is {MAX_DP_STATES}; "
            f"use a coarser grid or a smaller K"
        )
    prefix = rect_prefix_sums(dataset, grid, config.target, config.threshold)
    search = _GuillotineSearch(prefix, config.min_group_count, config.tolerance)
    full = (0, mx, 0, my)
    total = search.best(full, k)
    if not np.isfinite(total):
        raise InfeasibleError(f"no guillotine partition of the {mx}x{my} grid into {k} non-empty rectangles")
    rectangles = []
    search.collect(full, k, rectangles)
    logger.info(f"FairGroups 2D: K={k}, grid {mx}x{my}, {len(search.memo)} states, objective {total:.6f}")
    partition = Partition.from_rectangles(grid, rectangles, method=SearchMethod.FAIRGROUPS.value)
    diagnostics = {"path": "guillotine_dp", "candidates": search.evaluated, "states": len(search.memo)}
    return _finish(dataset, partition, total, config, diagnostics)


def fixed_partition(
    scheme: Optional[Union[FixedScheme, str]] = None,
    thresholds: Optional[Sequence] = None,
    low=None,
    high=None,
) -> Partition:
    """
    阈值定义的划分。一维 thresholds 为递增切点；二维为 (L 切点, h 切点)，得到网格状矩形。
    未给定的边界取命名方案的默认值。
    """
    defaults = {}
    if scheme is not None:
        scheme = FixedScheme(scheme)
        defaults = SCHEME_DEFAULTS[scheme]
    thresholds = thresholds if thresholds is not None else defaults.get("thresholds")
    low = low if low is not None else defaults.get("low")
    high = high if high is not None else defaults.get("high")
    if thresholds is None or low is None or high is None:
        raise DomainError("a fixed partition needs thresholds and grid bounds (or a named scheme)")
    two_d = len(thresholds) == 2 and not np.isscalar(thresholds[0])
    axes = list(thresholds) if two_d else [thresholds]
    lows = list(low) if two_d else [low]
    highs = list(high) if two_d else [high]
    if two_d and (np.isscalar(low) or np.isscalar(high)):
        raise DomainError("2D thresholds need per-axis bounds")
    edges = []
    for axis, (cuts, lo, hi) in enumerate(zip(axes, lows, highs)):
        cuts = [float(t) for t in cuts]
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise DomainError(f"thresholds on axis {axis} must be strictly increasing, got {cuts}")
        if not cuts:
            raise DomainError(f"axis {axis} needs at least one threshold")
        outside = [t for t in cuts if not lo < t < hi]
        if outside:
            raise DomainError(f"thresholds {outside} on axis {axis} lie outside the range ({lo}, {hi})")
        edges.append([float(lo)] + cuts + [float(hi)])
    grid = Grid(tuple(edges))
    method = SearchMethod.FIXED.value
    metadata = {"scheme": scheme.value} if scheme is not None else {}
    if not two_d:
        return Partition.from_boundaries(grid, range(grid.shape[0] + 1), method=method, metadata=metadata)
    mx, my = grid.shape
    labels = np.arange(1, mx * my + 1).reshape(mx, my)
    return Partition(grid=grid, cell_labels=labels, method=method, metadata=metadata)


def evaluate_partition(dataset: Dataset, partition: Partition, config: SearchConfig, clamp: bool = False) -> SearchResult:
    """在给定数据上评估已有划分（不重新搜索）"""
    assignment = assign_groups(dataset, partition, target=config.target, clamp=clamp, threshold=config.threshold)
    value = variance_of_assignment(assignment, config.measure)
    return SearchResult(
        partition=partition,
        objective=value,
        stats=group_stats(assignment, config.level),
        assignment=assignment,
        diagnostics={"clamped": assignment.clamped, "n": len(dataset)},
    )


def _as_axes(value, p: int) -> List:
    if value is None:
        return [None] * p
    if np.isscalar(value):
        return [value] * p
    return list(value)


def _fixed_bounds(value, default, data: np.ndarray):
    """逐轴取：显式给定 > 方案默认 > 数据极值"""
    p = data.size
    picked = [
        float(v) if v is not None else (float(d) if d is not None else float(x))
        for v, d, x in zip(_as_axes(value, p), _as_axes(default, p), data)
    ]
    return picked[0] if p == 1 else tuple(picked)


def fit_partition(dataset: Dataset, config: SearchConfig) -> SearchResult:
    method = SearchMethod(config.method)
    if method is SearchMethod.FIXED:
        defaults = SCHEME_DEFAULTS[FixedScheme(config.scheme)] if config.scheme is not None else {}
        low = _fixed_bounds(config.low, defaults.get("low"), dataset.l.min(axis=0))
        high = _fixed_bounds(config.high, defaults.get("high"), dataset.l.max(axis=0))
        partition = fixed_partition(config.scheme, config.thresholds, low, high)
        if partition.dimension != dataset.dimension:
            raise DomainError(f"fixed partition is {partition.dimension}D but dataset is {dataset.dimension}D")
        result = evaluate_partition(dataset, partition, config, clamp=True)
        partition = partition.with_result(
            objective=result.objective,
            metadata={**partition.metadata, "n": len(dataset), "target": Target(config.target).value},
        )
        return SearchResult(partition, result.objective, result.stats, result.assignment, result.diagnostics)
    if dataset.dimension == 2:
        if method is SearchMethod.KMEANS:
            raise DomainError("K-Means grouping is defined for 1D sensitive attributes only")
        return fairgroups_2d(dataset, config)
    if method is SearchMethod.KMEANS:
        return kmeans_1d(dataset, config)
    return fairgroups_1d(dataset, config)


@dataclass(frozen=True, eq=False)
class TransferResult:
    variance: float
    stats: GroupStats
    assignment: GroupAssignment
    clamped: int


def transfer_evaluate(partition: Partition, dataset: Dataset, target: Target = Target.Y, level: float = 0.95, threshold: float = 0.5) -> TransferResult:
    """把在 A 上拟合的划分用于 B；越界样本截断到边界组"""
    assignment = assign_groups(dataset, partition, target=target, clamp=True, threshold=threshold)
    return TransferResult(
        variance=variance_of_assignment(assignment),
        stats=group_stats(assignment, level),
        assignment=assignment,
        clamped=assignment.clamped,
    )


def transfer_compare(partition: Partition, dataset_a: Dataset, dataset_b: Dataset, config: SearchConfig) -> Dict:
    """A 上拟合的划分与 B 上重新拟合的划分，在 B 上比较方差与 Rand 指数"""
    on_a = transfer_evaluate(partition, dataset_a, config.target, config.level, config.threshold) if dataset_a is not None else None
    on_b = transfer_evaluate(partition, dataset_b, config.target, config.level, config.threshold)
    refit = fit_partition(dataset_b, config)
    return {
        "variance_on_a": None if on_a is None else on_a.variance,
        "variance_transferred": on_b.variance,
        "variance_refit": refit.objective,
        "rand_index": rand_index(on_b.assignment, refit.assignment),
        "clamped": on_b.clamped,
        "refit": refit,
        "transferred": on_b,
    }


@dataclass(frozen=True)
class AmplificationRow:
    group: int
    phi_y: float
    ci_y: Tuple[float, float]
    phi_y_hat: float
    ci_y_hat: Tuple[float, float]
    amplified: bool


def bias_amplification_report(dataset: Dataset, partition: Partition, level: float = 0.95) -> List[AmplificationRow]:
    """划分按 Y 拟合，分别以 Y 与 Ŷ 为目标计算 Φ；两区间不相交的组标记为放大"""
    if dataset.y_hat is None:
        raise DomainError("bias amplification needs a y_hat column")
    on_y = assign_groups(dataset, partition, target=Target.Y, clamp=True)
    on_y_hat = assign_groups(dataset, partition, target=Target.Y_HAT, clamp=True)
    phi_y = phi_values(on_y)
    phi_y_hat = phi_values(on_y_hat)
    rows = []
    for g in range(1, partition.k + 1):
        ci_y = phi_confidence_interval(on_y, g, level)
        ci_y_hat = phi_confidence_interval(on_y_hat, g, level)
        disjoint = ci_y.high < ci_y_hat.low or ci_y_hat.high < ci_y.low
        rows.append(AmplificationRow(
            group=g,
            phi_y=float(phi_y[g - 1]),
            ci_y=(ci_y.low, ci_y.high),
            phi_y_hat=float(phi_y_hat[g - 1]),
            ci_y_hat=(ci_y_hat.low, ci_y_hat.high),
            amplified=bool(disjoint),
        ))
    flagged = [r.group for r in rows if r.amplified]
    if flagged:
        logger.info(f"groups with disjoint Y / Ŷ intervals: {flagged}")
    return rows


def compare_methods(dataset: Dataset, config: SearchConfig, reference: Optional[Partition] = None) -> List[Dict]:
    """同一数据、网格与 K 下比较 FairGroups、K-Means 与参考划分"""
    rows = []
    ref_assignment = None
    if reference is not None:
        ref = evaluate_partition(dataset, reference, config, clamp=True)
        ref_assignment = ref.assignment
        rows.append({"method": "reference", "variance": ref.objective, "rand_index": 1.0, "disconnected": False})
    methods = [SearchMethod.FAIRGROUPS]
    if dataset.dimension == 1:
        methods.append(SearchMethod.KMEANS)
    for method in methods:
        result = fit_partition(dataset, replace(config, method=method))
        rows.append({
            "method": method.value,
            "variance": result.objective,
            "rand_index": None if ref_assignment is None else rand_index(ref_assignment, result.assignment),
            "disconnected": bool(result.diagnostics.get("disconnected", False)),
        })
    return rows
