"""
领域类型：样本、数据集、网格、划分、分组结果与分组统计。

所有对象构造后不可变（内部 numpy 数组均设为只读），可在线程 / 进程间共享。
网格区间采用左闭右开 [λ_{j-1}, λ_j)，最后一个区间右端闭合。
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import DomainError, OutOfRangeError, UndefinedGroupError

logger = logging.getLogger(__name__)

MAX_BINS_1D = 4096
MAX_BINS_2D = 512


class Target(str, Enum):
    Y = "y"
    Y_HAT = "y_hat"
    SCORE = "score"


def _frozen(array, dtype=None) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Sample:
    l: Tuple[float, ...]
    y: int
    score: Optional[float] = None
    y_hat: Optional[int] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    l: np.ndarray
    y: np.ndarray
    score: Optional[np.ndarray] = None
    y_hat: Optional[np.ndarray] = None

    def __post_init__(self):
        l = np.asarray(self.l, dtype=float)
        if l.ndim == 1:
            l = l.reshape(-1, 1)
        if l.ndim != 2 or l.shape[1] not in (1, 2):
            raise DomainError(f"sensitive attribute must have dimension 1 or 2, got shape {l.shape}")
        n = l.shape[0]
        if n == 0:
            raise DomainError("dataset is empty")
        if not np.all(np.isfinite(l)):
            raise DomainError("sensitive attribute contains non-finite values")
        y = _check_binary(self.y, n, "y")
        object.__setattr__(self, "l", _frozen(l))
        object.__setattr__(self, "y", _frozen(y, dtype=np.int8))
        if self.score is not None:
            score = np.asarray(self.score, dtype=float)
            if score.shape != (n,):
                raise DomainError(f"score has {score.size} values for {n} samples")
            if np.any(~np.isfinite(score)) or np.any(score < 0.0) or np.any(score > 1.0):
                bad = int(np.flatnonzero(~((score >= 0.0) & (score <= 1.0)))[0])
                raise DomainError(f"score of sample {bad} is outside [0, 1]")
            object.__setattr__(self, "score", _frozen(score))
        if self.y_hat is not None:
            object.__setattr__(self, "y_hat", _frozen(_check_binary(self.y_hat, n, "y_hat"), dtype=np.int8))

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "Dataset":
        if not samples:
            raise DomainError("dataset is empty")
        has_score = samples[0].score is not None
        has_y_hat = samples[0].y_hat is not None
        dims = {len(s.l) for s in samples}
        if len(dims) != 1:
            raise DomainError("samples do not share a dimension")
        if any((s.score is not None) != has_score or (s.y_hat is not None) != has_y_hat for s in samples):
            raise DomainError("samples do not share the same optional fields")
        return cls(
            l=[s.l for s in samples],
            y=[s.y for s in samples],
            score=[s.score for s in samples] if has_score else None,
            y_hat=[s.y_hat for s in samples] if has_y_hat else None,
        )

    @property
    def dimension(self) -> int:
        return self.l.shape[1]

    def __len__(self) -> int:
        return self.l.shape[0]

    def __getitem__(self, i: int) -> Sample:
        return Sample(
            l=tuple(float(v) for v in self.l[i]),
            y=int(self.y[i]),
            score=None if self.score is None else float(self.score[i]),
            y_hat=None if self.y_hat is None else int(self.y_hat[i]),
        )

    @property
    def samples(self) -> Iterator[Sample]:
        return (self[i] for i in range(len(self)))

    def outcome(self, target: Target = Target.Y, threshold: float = 0.5) -> np.ndarray:
        """返回目标变量的 0/1 数组；SCORE 目标按阈值二值化"""
        target = Target(target)
        if target is Target.Y:
            return self.y
        if target is Target.Y_HAT:
            if self.y_hat is None:
                raise DomainError("dataset has no y_hat column")
            return self.y_hat
        if self.score is None:
            raise DomainError("dataset has no score column")
        return (self.score > threshold).astype(np.int8)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            l=self.l[index],
            y=self.y[index],
            score=None if self.score is None else self.score[index],
            y_hat=None if self.y_hat is None else self.y_hat[index],
        )

    def with_predictions(self, score: np.ndarray, y_hat: Optional[np.ndarray] = None) -> "Dataset":
        return Dataset(l=self.l, y=self.y, score=score, y_hat=y_hat)


def _check_binary(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.shape != (n,):
        raise DomainError(f"{name} has {arr.size} values for {n} samples")
    bad = ~np.isin(arr, (0, 1))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DomainError(f"{name} of sample {i} is {arr[i]!r}, expected 0 or 1")
    return arr


@dataclass(frozen=True, eq=False)
class Grid:
    edges: Tuple[np.ndarray, ...]

    def __post_init__(self):
        axes = self.edges
        if isinstance(axes, np.ndarray) and axes.ndim == 1:
            axes = (axes,)
        elif axes and np.isscalar(axes[0]):
            axes = (axes,)
        if len(axes) not in (1, 2):
            raise DomainError(f"grid must have 1 or 2 axes, got {len(axes)}")
        cap = MAX_BINS_1D if len(axes) == 1 else MAX_BINS_2D
        frozen = []
        for axis, e in enumerate(axes):
            e = np.asarray(e, dtype=float)
            if e.ndim != 1 or e.size < 3:
                raise DomainError(f"grid axis {axis} needs at least 2 bins")
            if not np.all(np.isfinite(e)) or np.any(np.diff(e) <= 0):
                raise DomainError(f"grid edges on axis {axis} must be finite and strictly increasing")
            if e.size - 1 > cap:
                raise DomainError(f"grid axis {axis} has {e.size - 1} bins, limit is {cap}")
            frozen.append(_frozen(e))
        object.__setattr__(self, "edges", tuple(frozen))

    @classmethod
    def uniform(cls, low, high, m) -> "Grid":
        """等宽网格，λ_j = λ_0 + jδ；二维时 low/high/m 为二元组"""
        if np.isscalar(low):
            low, high, m = (low,), (high,), (m,)
        axes = []
        for lo, hi, bins in zip(low, high, m):
            if not hi > lo:
                raise DomainError(f"grid bounds must satisfy low < high, got [{lo}, {hi}]")
            axes.append(np.linspace(float(lo), float(hi), int(bins) + 1))
        return cls(tuple(axes))

    @classmethod
    def covering(cls, dataset: Dataset, m, low=None, high=None) -> "Grid":
        """覆盖数据集取值范围的等宽网格；未给定的边界取样本最小 / 最大值"""
        p = dataset.dimension
        m = (m,) * p if np.isscalar(m) else tuple(m)
        low = _per_axis(low, p, dataset.l.min(axis=0))
        high = _per_axis(high, p, dataset.l.max(axis=0))
        return cls.uniform(low, high, m)

    @property
    def dimension(self) -> int:
        return len(self.edges)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(e.size - 1 for e in self.edges)

    @property
    def bounds(self) -> List[Tuple[float, float]]:
        return [(float(e[0]), float(e[-1])) for e in self.edges]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid) or other.dimension != self.dimension:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.edges, other.edges))

    def __hash__(self) -> int:
        return hash(tuple(e.tobytes() for e in self.edges))

    def bin_index(self, values: np.ndarray, clamp: bool = False) -> Tuple[np.ndarray, int]:
        """
        返回 (N, p) 的区间下标与被截断的样本数。
        clamp=False 时越界样本抛出 OutOfRangeError。
        """
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.shape[1] != self.dimension:
            raise DomainError(f"values have dimension {values.shape[1]}, grid has {self.dimension}")
        index = np.empty(values.shape, dtype=np.int64)
        outside = np.zeros(values.shape[0], dtype=bool)
        for axis, e in enumerate(self.edges):
            v = values[:, axis]
            idx = np.searchsorted(e, v, side="right") - 1
            idx[v == e[-1]] = e.size - 2
            out = (v < e[0]) | (v > e[-1])
            outside |= out
            index[:, axis] = np.clip(idx, 0, e.size - 2)
        if np.any(outside) and not clamp:
            i = int(np.flatnonzero(outside)[0])
            raise OutOfRangeError(i, values[i].tolist())
        return index, int(outside.sum())


def _per_axis(value, p: int, fallback: np.ndarray) -> Tuple[float, ...]:
    if value is None:
        return tuple(float(v) for v in fallback)
    if np.isscalar(value):
        value = (value,)
    value = tuple(value)
    if len(value) != p:
        raise DomainError(f"expected {p} bound values, got {len(value)}")
    return tuple(float(fallback[i]) if v is None else float(v) for i, v in enumerate(value))


@dataclass(frozen=True, eq=False)
class Partition:
    """
    网格对齐的划分。cell_labels 与网格形状相同，取值 1..K。
    一维时各组为线段（boundaries），二维时各组为矩形（rectangles）；
    K-Means 可能产生不连通的组，此时 boundaries 为 None。
    """
    grid: Grid
    cell_labels: np.ndarray
    method: str = "fixed"
    measure: str = "one_vs_all_di"
    objective: Optional[float] = None
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        labels = np.asarray(self.cell_labels, dtype=np.int64)
        if labels.shape != self.grid.shape:
            raise DomainError(f"cell labels have shape {labels.shape}, grid has {self.grid.shape}")
        present = np.unique(labels)
        k = int(present.max())
        if present.min() < 1 or present.size != k:
            raise DomainError("cell labels must use every group number 1..K")
        object.__setattr__(self, "cell_labels", _frozen(labels))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @classmethod
    def from_boundaries(cls, grid: Grid, boundaries: Sequence[int], **kwargs) -> "Partition":
        if grid.dimension != 1:
            raise DomainError("boundaries describe a 1D partition")
        m = grid.shape[0]
        b = [int(j) for j in boundaries]
        if b[0] != 0 or b[-1] != m or any(x >= y for x, y in zip(b, b[1:])):
            raise DomainError(f"boundaries must run strictly from 0 to {m}, got {b}")
        labels = np.empty(m, dtype=np.int64)
        for group, (lo, hi) in enumerate(zip(b, b[1:]), start=1):
            labels[lo:hi] = group
        return cls(grid=grid, cell_labels=labels, **kwargs)

    @classmethod
    def from_rectangles(cls, grid: Grid, rectangles: Sequence[Tuple[int, int, int, int]], **kwargs) -> "Partition":
        """rectangles 为网格下标 (x0, x1, y0, y1)，左闭右开"""
        if grid.dimension != 2:
            raise DomainError("rectangles describe a 2D partition")
        labels = np.zeros(grid.shape, dtype=np.int64)
        for group, (x0, x1, y0, y1) in enumerate(rectangles, start=1):
            if not (0 <= x0 < x1 <= grid.shape[0] and 0 <= y0 < y1 <= grid.shape[1]):
                raise DomainError(f"rectangle {group} {(x0, x1, y0, y1)} is not inside the grid")
            if np.any(labels[x0:x1, y0:y1]):
                raise DomainError(f"rectangle {group} overlaps another rectangle")
            labels[x0:x1, y0:y1] = group
        if np.any(labels == 0):
            raise DomainError("rectangles do not cover the grid")
        return cls(grid=grid, cell_labels=labels, **kwargs)

    @property
    def k(self) -> int:
        return int(self.cell_labels.max())

    @property
    def dimension(self) -> int:
        return self.grid.dimension

    @property
    def boundaries(self) -> Optional[Tuple[int, ...]]:
        if self.dimension != 1:
            return None
        labels = self.cell_labels
        change = np.flatnonzero(np.diff(labels)) + 1
        runs = labels[np.concatenate(([0], change))]
        if runs.size != self.k or np.any(runs != np.arange(1, self.k + 1)):
            return None
        return tuple([0] + [int(c) for c in change] + [labels.size])

    @property
    def rectangles(self) -> Optional[List[Tuple[int, int, int, int]]]:
        if self.dimension != 2:
            return None
        rects = []
        for group in range(1, self.k + 1):
            xs, ys = np.nonzero(self.cell_labels == group)
            x0, x1, y0, y1 = int(xs.min()), int(xs.max()) + 1, int(ys.min()), int(ys.max()) + 1
            if xs.size != (x1 - x0) * (y1 - y0):
                return None
            rects.append((x0, x1, y0, y1))
        return rects

    @property
    def is_connected(self) -> bool:
        return (self.boundaries if self.dimension == 1 else self.rectangles) is not None

    def cut_values(self) -> Optional[List[float]]:
        """一维线段划分的内部切点（实数值）"""
        b = self.boundaries
        if b is None:
            return None
        return [float(self.grid.edges[0][j]) for j in b[1:-1]]

    def with_result(self, **changes) -> "Partition":
        return replace(self, **changes)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Partition)
            and self.grid == other.grid
            and np.array_equal(self.cell_labels, other.cell_labels)
            and self.method == other.method
            and self.measure == other.measure
            and self.objective == other.objective
            and self.metadata == other.metadata
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GroupAssignment:
    labels: np.ndarray
    counts: np.ndarray
    positives: np.ndarray
    clamped: int = 0

    def __post_init__(self):
        for name in ("labels", "counts", "positives"):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype=np.int64))

    @classmethod
    def from_labels(cls, labels, outcome, k: Optional[int] = None, clamped: int = 0) -> "GroupAssignment":
        labels = np.asarray(labels, dtype=np.int64)
        outcome = np.asarray(outcome)
        k = int(labels.max()) if k is None else int(k)
        if labels.min() < 1 or labels.max() > k:
            raise DomainError(f"group labels must lie in 1..{k}")
        counts = np.bincount(labels - 1, minlength=k)
        positives = np.bincount(labels - 1, weights=outcome, minlength=k).round().astype(np.int64)
        return cls(labels=labels, counts=counts, positives=positives, clamped=clamped)

    @property
    def k(self) -> int:
        return self.counts.size

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def total_positive(self) -> int:
        return int(self.positives.sum())

    def require_nonempty(self, group: Optional[int] = None):
        groups = range(1, self.k + 1) if group is None else (group,)
        for g in groups:
            if g < 1 or g > self.k:
                raise UndefinedGroupError(g, f"group {g} does not exist (K={self.k})")
            if self.counts[g - 1] == 0:
                raise UndefinedGroupError(g)


@dataclass(frozen=True, eq=False)
class GroupStats:
    """每组的权重、正例率、Φ 值与置信区间；rate 为总体正例率"""
    counts: np.ndarray
    positives: np.ndarray
    weights: np.ndarray
    rates: np.ndarray
    phi: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    rate: float
    level: float

    def rows(self) -> List[Dict]:
        return [
            {
                "group": g + 1,
                "count": int(self.counts[g]),
                "positives": int(self.positives[g]),
                "weight": float(self.weights[g]),
                "rate": float(self.rates[g]),
                "phi": float(self.phi[g]),
                "ci_low": float(self.ci_low[g]),
                "ci_high": float(self.ci_high[g]),
            }
            for g in range(self.counts.size)
        ]


def assign_groups(
    dataset: Dataset,
    partition: Partition,
    target: Target = Target.Y,
    clamp: bool = False,
    threshold: float = 0.5,
) -> GroupAssignment:
    """S^P = k ⟺ L ∈ P_k。clamp=True 时越界样本归入最近的边界组并告警"""
    if dataset.dimension != partition.dimension:
        raise DomainError(
            f"partition is {partition.dimension}D but dataset is {dataset.dimension}D"
        )
    index, clamped = partition.grid.bin_index(dataset.l, clamp=clamp)
    if clamped:
        logger.warning(f"{clamped} samples outside the partition cover were clamped into boundary groups")
    labels = partition.cell_labels[tuple(index.T)]
    return GroupAssignment.from_labels(labels, dataset.outcome(target, threshold), k=partition.k, clamped=clamped)
