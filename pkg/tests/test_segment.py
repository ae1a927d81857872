import functools
import itertools
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from core.domain import Dataset, GroupAssignment, Grid, Partition, Target, assign_groups
from core.errors import DomainError, InfeasibleError
from core.metrics import partition_variance, rand_index, variance_of_assignment
from core.segment import (
    MAX_DP_STATES,
    FixedScheme,
    SearchConfig,
    SearchMethod,
    bias_amplification_report,
    compare_methods,
    evaluate_partition,
    fairgroups_1d,
    fairgroups_2d,
    fit_partition,
    fixed_partition,
    guillotine_state_bound,
    kmeans_1d,
    transfer_compare,
    transfer_evaluate,
)
from core.synth import (
    PAPER_STEP_SPEC,
    PAPER_UNIFORM,
    StepSpec,
    generate_step_dataset,
    make_rng,
)

PAPER_CONFIG = SearchConfig(k=5, m=100, low=0.0, high=100.0)


def _ground_truth():
    return fixed_partition(thresholds=PAPER_STEP_SPEC.cut_values(), low=0.0, high=100.0)


def _oracle_1d(dataset, grid, k, min_count=1, tol=1e-12):
    """逐个枚举切点组合，直接按样本计算方差"""
    bins = grid.bin_index(dataset.l)[0][:, 0]
    m = grid.shape[0]
    best, best_bounds = -np.inf, None
    for cuts in itertools.combinations(range(1, m), k - 1):
        labels = np.searchsorted(np.array(cuts, dtype=int), bins, side="right") + 1
        counts = np.bincount(labels - 1, minlength=k)
        if np.any(counts < min_count):
            continue
        value = variance_of_assignment(GroupAssignment.from_labels(labels, dataset.y, k=k))
        if value > best + tol:
            best, best_bounds = value, (0,) + cuts + (m,)
    return best, best_bounds


def test_single_group_has_zero_objective(make_dataset):
    ds = make_dataset(200, seed=1)
    for fast in (True, False):
        result = fairgroups_1d(ds, SearchConfig(k=1, m=10, fast_path=fast))
        assert result.objective == pytest.approx(0.0, abs=1e-15)
        assert result.partition.k == 1


def test_exhaustive_matches_oracle_small_grid(make_dataset):
    ds = make_dataset(40, seed=2)
    config = SearchConfig(k=3, m=10, low=0.0, high=100.0, fast_path=False)
    grid = config.grid_for(ds)
    best, bounds = _oracle_1d(ds, grid, 3)
    result = fairgroups_1d(ds, config)
    assert abs(result.objective - best) < 1e-12
    assert result.partition.boundaries == bounds
    assert result.diagnostics["path"] == "exhaustive"


def test_search_agrees_with_oracle_on_random_data():
    for case in range(50):
        g = make_rng(1000 + case)
        n = int(g.integers(20, 200))
        m = int(g.integers(4, 15))
        l = g.uniform(0.0, 100.0, size=n)
        p = g.uniform(0.1, 0.9) + g.uniform(-0.4, 0.4) * np.sin(l / g.uniform(5.0, 40.0))
        y = (g.random(n) < np.clip(p, 0.0, 1.0)).astype(np.int8)
        ds = Dataset(l=l, y=y)
        for k in range(1, 5):
            config = SearchConfig(k=k, m=m, low=0.0, high=100.0, fast_path=False)
            best, bounds = _oracle_1d(ds, config.grid_for(ds), k)
            if bounds is None:
                with pytest.raises(InfeasibleError):
                    fairgroups_1d(ds, config)
                continue
            exhaustive = fairgroups_1d(ds, config)
            fast = fairgroups_1d(ds, replace(config, fast_path=True))
            assert abs(exhaustive.objective - best) < 1e-12
            assert abs(fast.objective - best) < 1e-12
            assert exhaustive.partition.boundaries == bounds


def test_objective_equals_recomputed_variance(paper_uniform):
    for method in (SearchMethod.FAIRGROUPS, SearchMethod.KMEANS):
        result = fit_partition(paper_uniform, replace(PAPER_CONFIG, method=method))
        assert abs(result.objective - partition_variance(paper_uniform, result.partition)) < 1e-12
        assert result.partition.objective == result.objective


def test_recovers_uniform_ground_truth(paper_uniform):
    result = fairgroups_1d(paper_uniform, PAPER_CONFIG)
    assert result.objective == pytest.approx(0.068, abs=0.005)
    truth = assign_groups(paper_uniform, _ground_truth())
    assert rand_index(result.assignment, truth) >= 0.98
    assert result.partition.metadata["n"] == 50000
    assert result.partition.metadata["target"] == "y"


def test_recovers_truncated_normal_ground_truth(paper_truncnormal):
    result = fairgroups_1d(paper_truncnormal, PAPER_CONFIG)
    assert result.objective == pytest.approx(0.032, abs=0.005)
    truth = assign_groups(paper_truncnormal, _ground_truth())
    assert rand_index(result.assignment, truth) >= 0.95


def test_fast_path_matches_exhaustive_on_paper_data(paper_uniform):
    config = SearchConfig(k=5, m=40, low=0.0, high=100.0)
    fast = fairgroups_1d(paper_uniform, config)
    full = fairgroups_1d(paper_uniform, replace(config, fast_path=False))
    assert abs(fast.objective - full.objective) < 1e-12
    assert fast.partition.boundaries == full.partition.boundaries


def test_kmeans_on_uniform_preset(paper_uniform):
    result = kmeans_1d(paper_uniform, PAPER_CONFIG)
    truth = assign_groups(paper_uniform, _ground_truth())
    assert rand_index(result.assignment, truth) >= 0.9
    assert result.objective >= 0.06
    assert result.diagnostics["disconnected"] is False


def test_kmeans_on_truncated_normal_preset(paper_truncnormal):
    result = kmeans_1d(paper_truncnormal, PAPER_CONFIG)
    truth = assign_groups(paper_truncnormal, _ground_truth())
    assert rand_index(result.assignment, truth) >= 0.75
    assert result.diagnostics["disconnected"] is False


def test_kmeans_stays_contiguous_on_monotone_steps():
    g = make_rng(77)
    for case in range(100):
        groups = int(g.integers(2, 5))
        cuts = np.sort(g.choice(np.arange(1, 20), size=groups - 1, replace=False)) * 5.0
        spec = StepSpec((0.0, *cuts, 100.0), tuple(0.1 + 0.25 * i for i in range(groups)))
        ds = generate_step_dataset(spec, PAPER_UNIFORM, 20000, seed=case)
        result = kmeans_1d(ds, SearchConfig(k=groups, m=20, low=0.0, high=100.0))
        assert not result.diagnostics["disconnected"]
        assert result.partition.is_connected


def test_kmeans_reports_disconnected_groups(caplog):
    spec = StepSpec((0.0, 30.0, 70.0, 100.0), (0.9, 0.1, 0.9))
    ds = generate_step_dataset(spec, PAPER_UNIFORM, 20000, seed=4)
    result = kmeans_1d(ds, SearchConfig(k=2, m=20, low=0.0, high=100.0))
    assert result.diagnostics["disconnected"] is True
    assert result.partition.boundaries is None
    assert "disconnected" in caplog.text


def test_kmeans_relabels_along_l_and_fills_empty_bins():
    # 区间 2..4 为空，并入左侧
    l = [0.5, 1.5, 5.5, 6.5, 7.5, 8.5, 9.5]
    y = [0, 0, 1, 1, 1, 0, 0]
    ds = Dataset(l=l, y=y)
    result = kmeans_1d(ds, SearchConfig(k=2, m=10, low=0.0, high=10.0))
    labels = result.partition.cell_labels.tolist()
    assert labels[0] == 1
    assert labels[2:5] == [1, 1, 1]
    assert labels[5:8] == [2, 2, 2]


def test_fairgroups_dominates_kmeans_and_fixed(paper_uniform):
    fg = fairgroups_1d(paper_uniform, PAPER_CONFIG)
    km = kmeans_1d(paper_uniform, PAPER_CONFIG)
    equal_width = evaluate_partition(
        paper_uniform,
        fixed_partition(thresholds=(20.0, 40.0, 60.0, 80.0), low=0.0, high=100.0),
        PAPER_CONFIG,
    )
    assert fg.objective >= km.objective - 1e-12
    assert km.objective >= equal_width.objective


def test_invariant_under_monotone_relabelling(make_dataset):
    ds = make_dataset(3000, seed=9)
    edges = np.linspace(0.0, 100.0, 31)
    config = SearchConfig(k=4, edges=edges)
    base = fairgroups_1d(ds, config)
    warped = Dataset(l=np.exp(ds.l[:, 0] / 25.0), y=ds.y)
    moved = fairgroups_1d(warped, replace(config, edges=np.exp(edges / 25.0)))
    assert moved.partition.boundaries == base.partition.boundaries
    assert moved.objective == pytest.approx(base.objective, abs=1e-12)


def test_search_is_deterministic_across_runs_and_threads(make_dataset):
    ds = make_dataset(2000, seed=10)
    config = SearchConfig(k=4, m=30, fast_path=False)
    first = fairgroups_1d(ds, config)
    again = fairgroups_1d(ds, config)
    threaded = fairgroups_1d(ds, replace(config, threads=4))
    assert first.partition == again.partition
    assert threaded.partition.boundaries == first.partition.boundaries
    assert threaded.objective == first.objective


def test_infeasible_search_raises(make_dataset):
    ds = make_dataset(10, seed=11)
    with pytest.raises(InfeasibleError) as info:
        fairgroups_1d(ds, SearchConfig(k=3, m=10, min_group_count=5))
    assert info.value.exit_code == 2
    with pytest.raises(DomainError):
        fairgroups_1d(ds, SearchConfig(k=12, m=10))


def test_min_group_count_is_respected(make_dataset):
    ds = make_dataset(500, seed=12)
    result = fairgroups_1d(ds, SearchConfig(k=4, m=25, min_group_count=60))
    assert result.assignment.counts.min() >= 60


def test_search_on_score_target():
    g = make_rng(13)
    l = g.uniform(0.0, 100.0, 4000)
    score = np.where(l < 50.0, 0.3, 0.7)
    ds = Dataset(l=l, y=g.integers(0, 2, 4000), score=score)
    result = fairgroups_1d(ds, SearchConfig(k=2, m=20, low=0.0, high=100.0, target=Target.SCORE))
    assert result.partition.cut_values() == [50.0]
    assert result.partition.metadata["target"] == "score"


@pytest.mark.slow
def test_exhaustive_performance_budget(paper_uniform):
    start = time.perf_counter()
    result = fairgroups_1d(paper_uniform, SearchConfig(k=6, m=100, fast_path=False))
    assert time.perf_counter() - start < 60.0
    assert result.partition.k == 6


@pytest.mark.slow
@pytest.mark.skipif((os.cpu_count() or 1) < 4, reason="needs at least 4 CPUs")
def test_exhaustive_search_scales_with_workers(paper_uniform):
    config = SearchConfig(k=6, m=100, fast_path=False)
    # 先启动进程池，计时不包含 worker 启动
    fairgroups_1d(paper_uniform, replace(config, m=20, threads=4))
    start = time.perf_counter()
    single = fairgroups_1d(paper_uniform, config)
    single_time = time.perf_counter() - start
    start = time.perf_counter()
    threaded = fairgroups_1d(paper_uniform, replace(config, threads=4))
    threaded_time = time.perf_counter() - start
    assert threaded.partition.boundaries == single.partition.boundaries
    assert threaded.objective == single.objective
    assert single_time / threaded_time >= 3.0


def _quadrant_dataset(n, seed):
    g = make_rng(seed)
    l = g.uniform(0.0, 100.0, size=(n, 2))
    rates = np.where(
        l[:, 0] < 40.0,
        np.where(l[:, 1] < 60.0, 0.1, 0.3),
        np.where(l[:, 1] < 60.0, 0.6, 0.9),
    )
    y = (g.random(n) < rates).astype(np.int8)
    truth = 1 + 2 * (l[:, 0] >= 40.0) + (l[:, 1] >= 60.0)
    return Dataset(l=l, y=y), truth


def test_2d_recovers_planted_quadrants():
    ds, truth = _quadrant_dataset(20000, seed=14)
    result = fairgroups_2d(ds, SearchConfig(k=4, m=(20, 20), low=(0.0, 0.0), high=(100.0, 100.0)))
    rects = result.partition.rectangles
    assert len(rects) == 4
    x_cuts = {e for r in rects for e in r[:2]} - {0, 20}
    y_cuts = {e for r in rects for e in r[2:]} - {0, 20}
    assert all(6 <= c <= 10 for c in x_cuts)
    assert all(10 <= c <= 14 for c in y_cuts)
    assert rand_index(result.assignment.labels, truth) >= 0.95
    assert result.diagnostics["path"] == "guillotine_dp"
    assert abs(result.objective - partition_variance(ds, result.partition)) < 1e-12


def _oracle_2d(dataset, grid, k):
    index = grid.bin_index(dataset.l)[0]
    y = dataset.y
    n = len(dataset)
    rate = y.mean()
    mx, my = grid.shape

    @functools.lru_cache(maxsize=None)
    def best(x0, x1, y0, y1, kk):
        if kk == 1:
            inside = (index[:, 0] >= x0) & (index[:, 0] < x1) & (index[:, 1] >= y0) & (index[:, 1] < y1)
            if not inside.any():
                return -np.inf
            return inside.sum() / n * (y[inside].mean() - rate) ** 2
        out = -np.inf
        for k1 in range(1, kk):
            for c in range(x0 + 1, x1):
                out = max(out, best(x0, c, y0, y1, k1) + best(c, x1, y0, y1, kk - k1))
            for c in range(y0 + 1, y1):
                out = max(out, best(x0, x1, y0, c, k1) + best(x0, x1, c, y1, kk - k1))
        return out

    return best(0, mx, 0, my, k)


def test_2d_matches_recursive_oracle():
    ds, _ = _quadrant_dataset(100, seed=15)
    config = SearchConfig(k=3, m=(6, 6), low=(0.0, 0.0), high=(100.0, 100.0))
    expected = _oracle_2d(ds, config.grid_for(ds), 3)
    result = fairgroups_2d(ds, config)
    assert abs(result.objective - expected) < 1e-12


def test_2d_matches_recursive_oracle_with_two_sided_splits():
    # K=4 时存在两侧各 2 组的切分
    for seed in (17, 18, 19):
        ds, _ = _quadrant_dataset(150, seed=seed)
        config = SearchConfig(k=4, m=(5, 5), low=(0.0, 0.0), high=(100.0, 100.0))
        expected = _oracle_2d(ds, config.grid_for(ds), 4)
        result = fairgroups_2d(ds, config)
        assert abs(result.objective - expected) < 1e-12
        assert result.diagnostics["states"] <= guillotine_state_bound(5, 5, 4)


def test_2d_fine_grid_recovers_planted_quadrants():
    ds, truth = _quadrant_dataset(20000, seed=20)
    result = fairgroups_2d(ds, SearchConfig(k=4, m=(40, 40), low=(0.0, 0.0), high=(100.0, 100.0)))
    assert len(result.partition.rectangles) == 4
    assert rand_index(result.assignment.labels, truth) >= 0.95
    assert result.diagnostics["states"] <= guillotine_state_bound(40, 40, 4)


def test_2d_accepts_the_largest_grid():
    ds, truth = _quadrant_dataset(20000, seed=21)
    result = fairgroups_2d(ds, SearchConfig(k=3, m=(128, 128), low=(0.0, 0.0), high=(100.0, 100.0)))
    assert result.partition.grid.shape == (128, 128)
    assert len(result.partition.rectangles) == 3
    assert abs(result.objective - partition_variance(ds, result.partition)) < 1e-12
    assert guillotine_state_bound(128, 128, 4) <= MAX_DP_STATES


def test_guillotine_state_bound_counts():
    assert guillotine_state_bound(10, 10, 1) == 0
    assert guillotine_state_bound(10, 10, 2) == 1
    # 根矩形 + 一条边移动的 4 类条带
    assert guillotine_state_bound(10, 7, 3) == 1 + 1 + 2 * 9 + 2 * 6
    # K ≥ 6 时 j=2 的状态覆盖全部矩形
    assert guillotine_state_bound(4, 4, 6) >= 10 * 10


def test_2d_limits():
    ds, _ = _quadrant_dataset(500, seed=16)
    with pytest.raises(DomainError, match="K ≤ 16"):
        fairgroups_2d(ds, SearchConfig(k=17, m=(10, 10)))
    with pytest.raises(DomainError, match="at most 128 bins"):
        fairgroups_2d(ds, SearchConfig(k=3, m=(129, 20)))
    with pytest.raises(DomainError, match="coarser grid or a smaller K"):
        fairgroups_2d(ds, SearchConfig(k=8, m=(128, 128)))
    with pytest.raises(DomainError):
        fit_partition(ds, SearchConfig(k=3, m=(5, 5), method=SearchMethod.KMEANS))


def test_fixed_l60_scheme():
    p = fixed_partition(FixedScheme.L60)
    assert p.cut_values() == [60.0]
    assert p.metadata == {"scheme": "l60"}
    a = assign_groups(Dataset(l=[59.0, 61.0], y=[0, 1]), p)
    assert a.labels.tolist() == [1, 2]


def test_fixed_named_schemes():
    assert fixed_partition("fitzpatrick_ita").k == 6
    p = fixed_partition(FixedScheme.DEFAULT_2D)
    assert p.k == 4
    assert p.grid.shape == (2, 2)
    assert p.rectangles == [(0, 1, 0, 1), (0, 1, 1, 2), (1, 2, 0, 1), (1, 2, 1, 2)]


def test_fixed_threshold_validation():
    with pytest.raises(DomainError, match="outside"):
        fixed_partition(thresholds=(120.0,), low=0.0, high=100.0)
    with pytest.raises(DomainError, match="strictly increasing"):
        fixed_partition(thresholds=(50.0, 20.0), low=0.0, high=100.0)
    with pytest.raises(DomainError):
        fixed_partition(thresholds=(50.0,))


def test_fit_partition_fixed_on_paper_data(paper_uniform):
    config = SearchConfig(method=SearchMethod.FIXED, thresholds=(20.0, 30.0, 55.0, 88.0), low=0.0, high=100.0)
    result = fit_partition(paper_uniform, config)
    assert result.partition.k == 5
    assert result.objective == pytest.approx(0.068, abs=0.005)
    assert result.partition.objective == result.objective


def test_transfer_to_identical_dataset(paper_uniform):
    fitted = fairgroups_1d(paper_uniform, PAPER_CONFIG)
    moved = transfer_evaluate(fitted.partition, paper_uniform)
    assert moved.variance == pytest.approx(fitted.objective, abs=1e-12)
    assert moved.clamped == 0


def test_transfer_between_distributions(paper_uniform, paper_truncnormal):
    fitted = fairgroups_1d(paper_uniform, PAPER_CONFIG)
    report = transfer_compare(fitted.partition, paper_uniform, paper_truncnormal, PAPER_CONFIG)
    assert report["variance_transferred"] == pytest.approx(report["variance_refit"], rel=0.2)
    assert report["rand_index"] >= 0.9
    assert report["variance_on_a"] == pytest.approx(fitted.objective, abs=1e-12)


def test_transfer_clamps_out_of_range_samples():
    grid = Grid.uniform(0.0, 50.0, 10)
    p = Partition.from_boundaries(grid, (0, 5, 10))
    moved = transfer_evaluate(p, Dataset(l=[10.0, 40.0, 80.0, 90.0], y=[0, 1, 1, 1]))
    assert moved.clamped == 2
    assert moved.assignment.labels.tolist() == [1, 2, 2, 2]


def test_amplification_report_without_amplification(paper_uniform):
    ds = paper_uniform.with_predictions(paper_uniform.y.astype(float), paper_uniform.y)
    rows = bias_amplification_report(ds, _ground_truth())
    assert [r.group for r in rows] == [1, 2, 3, 4, 5]
    assert not any(r.amplified for r in rows)
    assert all(r.phi_y == r.phi_y_hat for r in rows)


def test_amplification_report_flags_exaggerated_predictor():
    ds = generate_step_dataset(PAPER_STEP_SPEC, PAPER_UNIFORM, 20000, seed=17)
    g = make_rng(18)
    exaggerated = np.clip(0.5 + 2.0 * (PAPER_STEP_SPEC.probability(ds.l[:, 0]) - 0.5), 0.0, 1.0)
    y_hat = (g.random(len(ds)) < exaggerated).astype(np.int8)
    rows = bias_amplification_report(ds.with_predictions(exaggerated, y_hat), _ground_truth())
    assert rows[0].amplified
    assert rows[0].phi_y_hat < rows[0].phi_y


def test_amplification_null_rarely_flags():
    partition = _ground_truth()
    flagged = 0
    for rep in range(100):
        ds = generate_step_dataset(PAPER_STEP_SPEC, PAPER_UNIFORM, 5000, seed=500 + rep)
        g = make_rng(900 + rep)
        p = PAPER_STEP_SPEC.probability(ds.l[:, 0])
        y_hat = (g.random(len(ds)) < p).astype(np.int8)
        rows = bias_amplification_report(ds.with_predictions(p, y_hat), partition)
        flagged += any(r.amplified for r in rows)
    assert flagged <= 10


def test_amplification_needs_predictions(paper_uniform):
    with pytest.raises(DomainError):
        bias_amplification_report(paper_uniform, _ground_truth())


def test_compare_methods_rows(paper_uniform):
    rows = compare_methods(paper_uniform, PAPER_CONFIG, reference=_ground_truth())
    assert [r["method"] for r in rows] == ["reference", "fairgroups", "kmeans"]
    by_method = {r["method"]: r for r in rows}
    assert by_method["fairgroups"]["variance"] >= by_method["kmeans"]["variance"] - 1e-12
    assert by_method["fairgroups"]["rand_index"] >= 0.98


def test_search_config_validation():
    with pytest.raises(DomainError):
        SearchConfig(k=0)
    with pytest.raises(DomainError):
        SearchConfig(min_group_count=0)
    with pytest.raises(DomainError):
        SearchConfig(threads=0)
