import math

import mpmath
import numpy as np
import pytest

from dateline import theory as T
from dateline.synthgen import archetype_eta


def test_comparison_matrix():
    np.testing.assert_array_equal(T.build_comparison_matrix([1, 0], 3), [[0, 1], [1, 0], [0, 0]])
    E = T.build_comparison_matrix([2, 0, 3, 1], 4)
    assert np.array_equal(E.sum(axis=0), np.ones(4)) and np.array_equal(E.sum(axis=1), np.ones(4))
    with pytest.raises(IndexError):
        T.build_comparison_matrix([0, 3], 3)


def test_laplacian_examples():
    L = T.build_laplacian([[0, 1]], 3)
    np.testing.assert_array_equal(L, [[1, -1, 0], [-1, 1, 0], [0, 0, 0]])
    assert np.trace(L) == 2
    L3 = T.build_laplacian([[0, 1], [1, 2], [0, 2]], 3)
    np.testing.assert_allclose(L3, np.array([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]]) / 3, atol=1e-15)
    assert T.lambda2(L3) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        T.build_laplacian([[0, 1], [0, 1, 2]], 3)


def test_seminorm_examples():
    L = T.build_laplacian([[0, 1]], 3)
    assert T.l_seminorm(np.ones(3), L) == 0.0
    assert T.l_seminorm([1.0, 0, 0], L) == pytest.approx(1.0, abs=1e-15)


def test_eigen_examples():
    np.testing.assert_allclose(T.eigen_symmetric(np.eye(3)), [1, 1, 1], atol=1e-14)
    np.testing.assert_allclose(T.eigen_symmetric([[1, -1], [-1, 1]]), [0, 2], atol=1e-14)
    K3 = 3 * np.eye(3) - np.ones((3, 3))
    np.testing.assert_allclose(T.eigen_symmetric(K3), [0, 3, 3], atol=1e-13)
    with pytest.raises(ValueError):
        T.eigen_symmetric([[1.0, 2.0], [0.0, 1.0]])


def test_rotation():
    z = np.array([1.0, 2.0, 3.0, 4.0])
    for j in range(1, 5):
        np.testing.assert_array_equal(z @ T.rotation_matrix(4, j), T.rotate(z, j))
    np.testing.assert_array_equal(T.rotate(z, 2), [2, 3, 4, 1])


def test_F_and_G_examples():
    assert T.choice_function_F(np.zeros(4)) == pytest.approx(0.25, abs=1e-15)
    assert T.choice_function_F([math.log(2), 0, 0]) == pytest.approx(0.5, abs=1e-15)
    z = np.array([0.3, -1.2, 2.0])
    assert T.mixture_function_G(z, [1, 0, 0]) == T.choice_function_F(z)
    assert T.mixture_function_G(z, np.full(3, 1 / 3)) == pytest.approx(1 / 3, abs=1e-15)
    assert T.mixture_function_G([math.log(3), 0], [0.8, 0.2]) == pytest.approx(0.65, abs=1e-15)


def test_F_curvature_k2():
    c = T.logconcavity_constants("F", 2, half_width=1.0, samples=400)
    # -log F for k=2 is softplus(z2 - z1); its Hessian is s(1-s)[[1,-1],[-1,1]],
    # so the largest eigenvalue is twice the 1-d logistic curvature
    assert c.lambda_max <= 0.5 + 1e-6
    assert c.lambda_max / 2 <= 0.25 + 1e-6
    assert c.min_eigenvalue >= -1e-10


def test_F_hessians_psd():
    for k in (2, 3, 4, 5):
        c = T.logconcavity_constants("F", k, half_width=2.0, samples=100, seed=k)
        assert c.min_eigenvalue >= -1e-10 and c.lambda2 > 0


def test_G_expert_equals_F():
    for k in (2, 3, 4):
        cF = T.logconcavity_constants("F", k, samples=150, seed=1)
        cG = T.logconcavity_constants("G", k, eta=np.eye(k)[0], samples=150, seed=1)
        for f in ("lambda2", "lambda_max", "sup_grad_l2", "sup_grad_HF_dagger", "inf_value"):
            assert getattr(cG, f) == pytest.approx(getattr(cF, f), rel=1e-10, abs=1e-12)


def test_G_not_log_concave_for_spread_profiles():
    # the mixture loses log-concavity away from the expert profile: lambda_2
    # of the -log G Hessian turns negative on a unit box
    c = T.logconcavity_constants("G", 3, eta=archetype_eta("amateur", 3), samples=100)
    assert c.lambda2 < 0


def test_constants_args():
    with pytest.raises(ValueError):
        T.logconcavity_constants("F", 3, samples=50)
    with pytest.raises(ValueError):
        T.logconcavity_constants("G", 3)


def test_packing_size_against_mpmath():
    mpmath.mp.dps = 50
    a, d = mpmath.mpf("0.1"), 20
    ref = mpmath.exp(d / 2 * (mpmath.log(2) + 2 * a * mpmath.log(2 * a)
                              + (1 - 2 * a) * mpmath.log(1 - 2 * a)))
    assert abs(T.packing_size(0.1, 20) - float(ref)) <= 1e-12 * float(ref)
    C = 0.005 * (1 - (mpmath.mpf("0.01") * d + mpmath.log(2)) / mpmath.log(ref))
    assert T.fano_constant(0.1, 20) == pytest.approx(float(C), rel=1e-12)
    with pytest.raises(ValueError):
        T.log_packing_size(0.3, 20)


def _consts(k=3, hw=0.5):
    cF = T.logconcavity_constants("F", k, half_width=hw, samples=100)
    cG = T.logconcavity_constants("G", k, eta=archetype_eta("expert", k), half_width=hw, samples=100)
    return cF, cG


def test_bounds_scaling():
    cF, cG = _consts()
    a = T.minimax_bounds(3, 40, 500, 0.95, 0.1, cF, cG, 0.2)
    b = T.minimax_bounds(3, 40, 1000, 0.95, 0.1, cF, cG, 0.2)
    assert not a.upper_infinite
    assert b.upper_L == a.upper_L / 2 and b.upper_l2 == a.upper_l2 / 2
    assert a.lower_l2 / a.lower_L == pytest.approx(40 / 6, rel=1e-14)
    lo = T.minimax_bounds(3, 40, 500, 0.3, 0.1, cF, cG, 0.2)
    assert a.lower_L < lo.lower_L


def test_bounds_degenerate_flag():
    cF, cG = _consts()
    rep = T.minimax_bounds(3, 5, 100, 0.5, 0.1, cF, cG, 0.3)
    assert rep.C <= 0 and rep.degenerate


def test_bounds_upper_infinite_without_curvature():
    cF = T.logconcavity_constants("F", 3, samples=100)
    cG = T.logconcavity_constants("G", 3, eta=np.full(3, 1 / 3), samples=100)
    rep = T.minimax_bounds(3, 40, 100, 1 / 3, 0.1, cF, cG, 0.2)
    assert rep.upper_infinite and math.isinf(rep.upper_l2)
    assert '"upper_L": "inf"' in rep.to_json()


def test_sandwich_examples():
    k = 4
    H = k * np.eye(k) - np.ones((k, k))
    res = T.sandwich_check(H, trials=200)
    assert res.passed and abs(res.worst_margin) <= 1e-9
    rng = np.random.default_rng(0)
    assert T.sandwich_check(T.random_centered_psd(4, rng), trials=1000).passed
    with pytest.raises(ValueError):
        T.sandwich_check(np.eye(3))


def test_sandwich_ones_vector():
    rng = np.random.default_rng(1)
    H = T.random_centered_psd(5, rng)
    v = np.ones(5)
    for j in range(1, 6):
        R = T.rotation_matrix(5, j)
        assert abs(v @ R @ H @ R.T @ v) <= 1e-12
    assert abs(v @ (5 * np.eye(5) - np.ones((5, 5))) @ v) <= 1e-12


def test_connectivity():
    assert T.connected_components([[0, 1], [2, 3]], 4) == 2
    assert T.lambda2(T.build_laplacian([[0, 1], [2, 3]], 4)) == pytest.approx(0.0, abs=1e-12)
    assert T.connected_components([[0, 1, 2], [2, 3, 4]], 5) == 1


def test_loglog_slope():
    N = np.array([10, 20, 40, 80])
    assert T.loglog_slope(N, 3.0 / N) == pytest.approx(-1.0, abs=1e-12)


def test_risk_table_shape():
    from dateline.synthgen import SynthSpec

    spec = SynthSpec(n_objects=5, workers=[{"id": "e", "archetype": "expert", "n": 1}], k=2)
    rows, reports = T.empirical_risk_experiment(spec, [100, 200], repetitions=2, samples=100)
    csv = T.risk_table_csv(rows)
    assert csv.splitlines()[0] == ",".join(T.RISK_HEADER)
    assert len(csv.splitlines()) == 3
    assert all(r["failed"] == 0 for r in rows)
    assert reports[1].upper_L == reports[0].upper_L / 2
    with pytest.raises(ValueError):
        T.empirical_risk_experiment(SynthSpec(n_objects=5, workers=spec.workers, k=[2, 3]), [10])
