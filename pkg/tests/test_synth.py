import numpy as np
import pytest
from scipy.stats import chisquare

from core.errors import DomainError
from core.metrics import hgr
from core.synth import (
    PAPER_STEP_SPEC,
    PAPER_TRUNCNORMAL,
    PAPER_UNIFORM,
    ScoreShift,
    StepSpec,
    generate_biased_scores,
    generate_preset,
    generate_step_dataset,
    ground_truth_cuts,
    paper_biased_preset,
)


def test_step_intervals_are_right_closed():
    spec = StepSpec((0.0, 20.0, 100.0), (0.1, 0.9))
    assert spec.interval([0.0, 20.0, 20.0001, 100.0]).tolist() == [0, 0, 1, 1]
    assert spec.probability([5.0, 50.0]).tolist() == [0.1, 0.9]


def test_step_spec_validation():
    with pytest.raises(DomainError):
        StepSpec((0.0, 20.0), (0.1, 0.9))
    with pytest.raises(DomainError):
        StepSpec((0.0, 50.0, 20.0), (0.1, 0.9))
    with pytest.raises(DomainError):
        StepSpec((0.0, 1.0), (1.5,))


def test_uniform_overall_rate(paper_uniform):
    assert PAPER_STEP_SPEC.overall_rate(PAPER_UNIFORM) == pytest.approx(0.514)
    assert paper_uniform.y.mean() == pytest.approx(0.514, abs=0.01)


def test_per_interval_rates(paper_uniform):
    l = paper_uniform.l[:, 0]
    which = PAPER_STEP_SPEC.interval(l)
    for g, q in enumerate(PAPER_STEP_SPEC.probabilities):
        inside = which == g
        n_g = int(inside.sum())
        assert abs(paper_uniform.y[inside].mean() - q) <= 3 * np.sqrt(q * (1 - q) / n_g)


def test_certain_success_gives_all_positive():
    ds = generate_step_dataset(StepSpec((0.0, 100.0), (1.0,)), PAPER_UNIFORM, 1000, seed=1)
    assert ds.y.sum() == 1000


def test_truncated_normal_matches_its_distribution(paper_truncnormal):
    l = paper_truncnormal.l[:, 0]
    assert l.min() >= 0.0 and l.max() <= 100.0
    edges = np.linspace(0.0, 100.0, 21)
    observed = np.histogram(l, bins=edges)[0]
    mass = np.diff([PAPER_TRUNCNORMAL.cdf(e) for e in edges])
    expected = mass / mass.sum() * l.size
    assert chisquare(observed, expected).pvalue > 0.01


def test_truncated_normal_overall_rate():
    assert PAPER_STEP_SPEC.overall_rate(PAPER_TRUNCNORMAL) == pytest.approx(0.541, abs=0.002)


def test_same_seed_same_dataset():
    a = generate_preset("paper-uniform", 2000, 42)
    b = generate_preset("paper-uniform", 2000, 42)
    c = generate_preset("paper-uniform", 2000, 43)
    assert np.array_equal(a.l, b.l) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.l, c.l)
    with pytest.raises(DomainError):
        generate_preset("no-such-preset", 10, 1)


def test_scores_without_noise_follow_base_and_shift():
    ds = generate_preset("paper-uniform", 3000, 5)
    plain = generate_biased_scores(ds, None, 0.0, seed=1)
    assert set(np.unique(plain.score)) <= {0.25, 0.75}
    assert np.array_equal(plain.y_hat, plain.y)
    shifted = generate_biased_scores(ds, ScoreShift((0.0, 20.0, 100.0), (-0.2, 0.0)), 0.0, seed=1)
    low = ds.l[:, 0] <= 20.0
    assert np.allclose(plain.score[low] - shifted.score[low], 0.2)
    assert np.array_equal(plain.score[~low], shifted.score[~low])


def test_score_shift_raises_dependence_on_l():
    ds = generate_preset("paper-uniform", 20000, 6)
    fair = generate_biased_scores(ds, None, 0.1, seed=2)
    biased = generate_biased_scores(ds, ScoreShift((0.0, 50.0, 100.0), (-0.2, 0.2)), 0.1, seed=2)
    assert hgr(biased.score, ds.l[:, 0]) > hgr(fair.score, ds.l[:, 0])


def test_biased_preset_has_independent_labels():
    ds = paper_biased_preset(20000, seed=3)
    assert ds.y.mean() == pytest.approx(0.5, abs=0.02)
    assert ds.score is not None and ds.y_hat is not None
    assert np.all((ds.score >= 0.0) & (ds.score <= 1.0))
    high = ds.l[:, 0] > 70.0
    low = ds.l[:, 0] <= 30.0
    assert ds.y_hat[high].mean() > ds.y_hat[low].mean() + 0.3


def test_ground_truth_cuts():
    assert ground_truth_cuts() == [20.0, 30.0, 55.0, 88.0]


def test_score_shift_validation():
    with pytest.raises(DomainError):
        ScoreShift((0.0, 100.0), (1.5,))
    with pytest.raises(DomainError):
        generate_biased_scores(generate_preset("paper-uniform", 10, 1), None, -0.1, seed=1)
