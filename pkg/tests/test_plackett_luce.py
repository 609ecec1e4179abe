import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dateline.plackett_luce import pl_log_likelihood, pl_sample, stage_probability

scores = st.lists(st.floats(-4, 4), min_size=2, max_size=5).map(lambda v: np.exp(v))


def test_stage_examples():
    assert stage_probability([1, 1, 1], [0, 1, 2], 0) == pytest.approx(1 / 3, abs=1e-15)
    assert stage_probability([2, 1, 1], [0, 1, 2], 0) == pytest.approx(0.5, abs=1e-15)
    assert stage_probability([2, 1, 1], [0], 0) == 1.0


def test_stage_errors():
    with pytest.raises(ValueError):
        stage_probability([1, 1], [], 0)
    with pytest.raises(ValueError):
        stage_probability([1, 1], [1], 0)


def test_loglik_examples():
    assert pl_log_likelihood([1, 1, 1], [0, 1, 2]) == pytest.approx(math.log(1 / 6), abs=1e-14)
    assert pl_log_likelihood([2, 1, 1], [0, 1, 2]) == pytest.approx(math.log(0.25), abs=1e-14)
    assert pl_log_likelihood([5, 5], [1, 0]) == pytest.approx(math.log(0.5), abs=1e-15)


def test_huge_scores_stay_finite():
    lam = np.exp([700.0, 699.0, -700.0])
    assert np.isfinite(pl_log_likelihood(lam, [0, 1, 2]))


@given(scores)
def test_normalized_over_permutations(lam):
    k = lam.size
    total = math.fsum(math.exp(pl_log_likelihood(lam, p)) for p in itertools.permutations(range(k)))
    assert abs(total - 1.0) <= 1e-10


@given(scores, st.floats(1e-3, 1e3))
def test_scale_invariance(lam, c):
    r = list(range(lam.size))
    assert abs(pl_log_likelihood(lam, r) - pl_log_likelihood(lam * c, r)) <= 1e-12


@given(scores)
def test_first_score_monotone(lam):
    r = list(range(lam.size))
    up = lam.copy()
    up[0] *= 1.5
    assert pl_log_likelihood(up, r) > pl_log_likelihood(lam, r)


@pytest.mark.parametrize("lam, p01", [([1.0, 1.0], 0.5), ([9.0, 1.0], 0.9)])
def test_sample_frequencies(lam, p01):
    rng = np.random.default_rng(0)
    hits = sum(pl_sample(lam, [0, 1], rng) == [0, 1] for _ in range(10_000))
    assert abs(hits / 10_000 - p01) <= 0.02


def test_sample_is_permutation():
    rng = np.random.default_rng(1)
    lam = np.exp(rng.normal(size=7))
    for _ in range(50):
        s = pl_sample(lam, [6, 2, 4, 0], rng)
        assert sorted(s) == [0, 2, 4, 6]
    with pytest.raises(ValueError):
        pl_sample(lam, [3], rng)
