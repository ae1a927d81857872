"""
合成数据生成：分段常数成功率 p(L) 下的 (L, Y) 样本，以及带组间偏移的打分器。

随机数一律使用 numpy 的 PCG64 位生成器，给定 seed 时输出逐字节可复现。
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from core.domain import Dataset
from core.errors import DomainError

logger = logging.getLogger(__name__)

BASE_NEGATIVE = 0.25
BASE_POSITIVE = 0.75


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class StepSpec:
    """
    breakpoints b_0 < ... < b_G，probabilities q_1..q_G；
    区间右闭：b_{g-1} < L ≤ b_g 时 p(L) = q_g（首个区间包含 b_0）。
    """
    breakpoints: Tuple[float, ...]
    probabilities: Tuple[float, ...]

    def __post_init__(self):
        b = tuple(float(x) for x in self.breakpoints)
        q = tuple(float(x) for x in self.probabilities)
        if len(b) != len(q) + 1 or not q:
            raise DomainError(f"{len(b)} breakpoints do not match {len(q)} probabilities")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise DomainError(f"breakpoints must be strictly increasing, got {b}")
        if any(not 0.0 <= p <= 1.0 for p in q):
            raise DomainError(f"probabilities must lie in [0, 1], got {q}")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "probabilities", q)

    def interval(self, l) -> np.ndarray:
        """每个取值所在的区间下标 0..G-1"""
        inner = np.asarray(self.breakpoints[1:-1])
        return np.searchsorted(inner, np.asarray(l, dtype=float), side="left")

    def probability(self, l) -> np.ndarray:
        return np.asarray(self.probabilities)[self.interval(l)]

    def cut_values(self) -> Tuple[float, ...]:
        return self.breakpoints[1:-1]

    def overall_rate(self, dist: "SensitiveDistribution") -> float:
        """E[p(L)]"""
        mass = np.diff([dist.cdf(b) for b in self.breakpoints])
        return float(np.dot(mass, self.probabilities) / mass.sum())


class DistributionKind(str, Enum):
    UNIFORM = "uniform"
    TRUNCATED_NORMAL = "truncated_normal"


@dataclass(frozen=True)
class SensitiveDistribution:
    kind: DistributionKind
    a: float
    b: float
    mean: Optional[float] = None
    sd: Optional[float] = None

    def __post_init__(self):
        if not self.a < self.b:
            raise DomainError(f"distribution support needs a < b, got [{self.a}, {self.b}]")
        if self.kind is DistributionKind.TRUNCATED_NORMAL:
            if self.mean is None or self.sd is None or not self.sd > 0:
                raise DomainError("truncated normal needs a mean and a positive sd")

    @classmethod
    def uniform(cls, a: float, b: float) -> "SensitiveDistribution":
        return cls(DistributionKind.UNIFORM, float(a), float(b))

    @classmethod
    def truncated_normal(cls, mean: float, sd: float, a: float, b: float) -> "SensitiveDistribution":
        return cls(DistributionKind.TRUNCATED_NORMAL, float(a), float(b), float(mean), float(sd))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind is DistributionKind.UNIFORM:
            return rng.uniform(self.a, self.b, size=n)
        # 从母正态分布拒绝采样，按批次补足
        out = np.empty(0)
        while out.size < n:
            draw = rng.normal(self.mean, self.sd, size=max(n - out.size, 64) * 2)
            out = np.concatenate((out, draw[(draw >= self.a) & (draw <= self.b)]))
        return out[:n]

    def cdf(self, x: float) -> float:
        x = min(max(float(x), self.a), self.b)
        if self.kind is DistributionKind.UNIFORM:
            return (x - self.a) / (self.b - self.a)
        lo, hi = norm.cdf([(self.a - self.mean) / self.sd, (self.b - self.mean) / self.sd])
        return float((norm.cdf((x - self.mean) / self.sd) - lo) / (hi - lo))


def generate_step_dataset(spec: StepSpec, dist: SensitiveDistribution, n: int, seed: int) -> Dataset:
    if n < 1:
        raise DomainError(f"N must be at least 1, got {n}")
    rng = make_rng(seed)
    l = dist.sample(rng, n)
    y = (rng.random(n) < spec.probability(l)).astype(np.int8)
    logger.debug(f"generated {n} samples ({dist.kind.value}), positive rate {y.mean():.4f}")
    return Dataset(l=l, y=y)


@dataclass(frozen=True)
class ScoreShift:
    """按 L 区间（右闭，同 StepSpec）叠加到打分上的偏移"""
    breakpoints: Tuple[float, ...]
    shifts: Tuple[float, ...]

    def __post_init__(self):
        b = tuple(float(x) for x in self.breakpoints)
        s = tuple(float(x) for x in self.shifts)
        if len(b) != len(s) + 1 or not s:
            raise DomainError(f"{len(b)} breakpoints do not match {len(s)} shifts")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise DomainError(f"breakpoints must be strictly increasing, got {b}")
        if any(abs(v) > 1.0 for v in s):
            raise DomainError(f"score shifts must lie in [-1, 1], got {s}")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "shifts", s)

    def shift(self, l) -> np.ndarray:
        inner = np.asarray(self.breakpoints[1:-1])
        return np.asarray(self.shifts)[np.searchsorted(inner, np.asarray(l, dtype=float), side="left")]


def generate_biased_scores(
    dataset: Dataset,
    group_bias: Optional[ScoreShift],
    noise_sd: float,
    seed: int,
    base_negative: float = BASE_NEGATIVE,
    base_positive: float = BASE_POSITIVE,
) -> Dataset:
    """score = clip(base(Y) + shift(L) + N(0, sd²), 0, 1)，y_hat = 1{score > 0.5}；二维数据按第一维偏移"""
    if noise_sd < 0:
        raise DomainError(f"noise sd must be non-negative, got {noise_sd}")
    rng = make_rng(seed)
    score = np.where(dataset.y == 1, base_positive, base_negative).astype(float)
    if group_bias is not None:
        score = score + group_bias.shift(dataset.l[:, 0])
    if noise_sd > 0:
        score = score + rng.normal(0.0, noise_sd, size=len(dataset))
    score = np.clip(score, 0.0, 1.0)
    return dataset.with_predictions(score, (score > 0.5).astype(np.int8))


PAPER_STEP_SPEC = StepSpec((0.0, 20.0, 30.0, 55.0, 88.0, 100.0), (0.1, 0.3, 0.5, 0.7, 0.9))
PAPER_UNIFORM = SensitiveDistribution.uniform(0.0, 100.0)
PAPER_TRUNCNORMAL = SensitiveDistribution.truncated_normal(50.0, 20.0, 0.0, 100.0)

PRESETS = {
    "paper-uniform": (PAPER_STEP_SPEC, PAPER_UNIFORM),
    "paper-truncnormal": (PAPER_STEP_SPEC, PAPER_TRUNCNORMAL),
}

PAPER_SCORE_SHIFT = ScoreShift((0.0, 30.0, 70.0, 100.0), (-0.3, 0.0, 0.3))


def generate_preset(name: str, n: int, seed: int) -> Dataset:
    if name not in PRESETS:
        raise DomainError(f"unknown preset {name!r}, expected one of {sorted(PRESETS)}")
    spec, dist = PRESETS[name]
    return generate_step_dataset(spec, dist, n, seed)


def paper_biased_preset(n: int, seed: int, noise_sd: float = 0.1, dist: Optional[SensitiveDistribution] = None) -> Dataset:
    """
    Y 与 L 独立（p = 0.5），打分在 L 的低 / 中 / 高段分别偏移 -0.3 / 0 / +0.3。
    得分对 L 的依赖全部来自偏移，去偏后 HGR(score', L) 应显著下降。
    """
    dist = dist or PAPER_UNIFORM
    spec = StepSpec((dist.a, dist.b), (0.5,))
    dataset = generate_step_dataset(spec, dist, n, seed)
    return generate_biased_scores(dataset, PAPER_SCORE_SHIFT, noise_sd, seed + 1)


def ground_truth_cuts(spec: StepSpec = PAPER_STEP_SPEC) -> Sequence[float]:
    return list(spec.cut_values())
