import io

import numpy as np
import pytest

from dateline.data import dataset_from_indices, one_hot_catalog
from dateline.errors import DivergenceError
from dateline.estimation import (
    FitConfig,
    eta_from_logits,
    evaluate_ranking,
    fit,
    kendall_tau,
    logits_grad,
)
from dateline.network import ScoreModel
from dateline.synthgen import SynthSpec, generate


def test_eta_from_logits_examples():
    np.testing.assert_allclose(eta_from_logits(np.zeros(4)), np.full(4, 0.25), atol=1e-15)
    eta = eta_from_logits([10.0, 0.0, 0.0], 1e-6)
    assert abs(eta[0] - (1 - 2e-6)) <= 1e-4
    assert abs(eta.sum() - 1.0) <= 1e-15
    rows = eta_from_logits(np.random.default_rng(0).normal(0, 30, (5, 6)), 1e-3)
    assert np.all(rows >= 1e-3 - 1e-15)
    np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-14)


def test_logits_grad_fd():
    rng = np.random.default_rng(1)
    z, c = rng.normal(size=5), rng.normal(size=5)
    g = logits_grad(z, c, 1e-3)
    h = 1e-6
    fd = [(c @ eta_from_logits(z + h * e, 1e-3) - c @ eta_from_logits(z - h * e, 1e-3)) / (2 * h)
          for e in np.eye(5)]
    np.testing.assert_allclose(g, fd, atol=1e-8)


def test_evaluate_ranking_examples():
    lam = np.array([3.0, 1.0, 0.5, 2.0])
    assert evaluate_ranking(lam, lam) == (1.0, 0.0)
    assert evaluate_ranking(1 / lam, lam)[0] == -1.0
    tau, gap = evaluate_ranking(7.5 * lam, lam)
    assert tau == 1.0 and gap <= 1e-14
    with pytest.raises(ValueError):
        evaluate_ranking(lam, lam[:3])


def test_kendall_tau_ties():
    assert kendall_tau([1, 1, 1], [1, 1, 1]) == 1.0
    assert kendall_tau([1, 2, 3], [1, 1, 1]) < 1.0
    assert kendall_tau([1, 2], [2, 2]) == -0.5


def test_config_check():
    with pytest.raises(ValueError):
        FitConfig(eta_floor=0.3).check(4)
    with pytest.raises(ValueError):
        FitConfig(tol=0).check(3)
    FitConfig().check(10)


def _expert_data(L=10, N=2000, seed=0):
    # evenly spaced log-scores; random draws can put two objects closer than
    # any N=2000 sample can resolve, even for the true-profile MLE
    spec = SynthSpec(n_objects=L, workers=[{"id": "e", "archetype": "expert", "n": N}],
                     k=[2, 4], seed=seed, lambda_star=np.exp(np.linspace(2, -2, L)).tolist())
    return generate(spec)


def test_trajectory_is_monotone():
    ds, _, _ = _expert_data(L=6, N=200)
    buf = io.StringIO()
    res = fit(ds, FitConfig(hidden=3, max_iterations=40, tol=1e-6), progress=buf)
    ll = [f for _, f in res.trajectory]
    assert all(b >= a for a, b in zip(ll, ll[1:]))
    assert buf.getvalue().startswith("iteration,loglik,step_size\n")
    assert len(buf.getvalue().splitlines()) == len(ll) + 1


def test_single_preference_first_step_increases():
    ds = dataset_from_indices(one_hot_catalog(3), [[2, 0, 1]], ["w"])
    res = fit(ds, FitConfig(hidden=2, max_iterations=1, seed=4))
    assert res.trajectory[1][1] > res.trajectory[0][1]
    assert not res.converged


def test_expert_recovery():
    ds, lam, _ = _expert_data()
    res = fit(ds, FitConfig(hidden=0, tol=1e-4, max_iterations=2000))
    tau, _ = evaluate_ranking(res.scores, lam)
    assert res.converged
    assert tau >= 0.95
    assert res.profiles[0].eta[0] >= 0.8


def test_fixed_profiles_are_returned_unchanged():
    ds, lam, profs = _expert_data(L=5, N=100)
    res = fit(ds, FitConfig(hidden=0, fit_eta=False, max_iterations=20), profiles=profs)
    assert res.profiles[0].eta is profs[0].eta
    with pytest.raises(ValueError):
        fit(ds, FitConfig(fit_eta=False))


def test_divergence_error():
    ds = dataset_from_indices(one_hot_catalog(3), [[0, 1, 2]], ["w"])
    # finite parameters whose output overflows to inf
    params = np.zeros(3 + 1 + 1 + 1)
    params[3] = 1.0
    params[4:] = 1.5e308
    bad = ScoreModel((3, 1, 1), params)
    with pytest.raises(DivergenceError):
        fit(ds, FitConfig(hidden=0), model=bad)
