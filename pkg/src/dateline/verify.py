"""Self-generating property suite.

Each check draws its own random instances from a fixed seed, compares the
library against an independent oracle (brute-force enumeration, finite
differences, union-find, numpy's eigensolver, closed forms) and reports the
worst margin it saw. ``run`` returns one :class:`PropertyResult` per check.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from . import theory as T
from .data import ObjectCatalog, dataset_from_indices, one_hot_catalog
from .estimation import FitConfig, Objective
from .network import init_model
from .plackett_luce import pl_log_likelihood
from .uncertainty import dateline_log_likelihood, expert_eta, preference_log_likelihood

GRAD_STEP = 1e-5
GRAD_RTOL = 1e-6
# components smaller than this are compared in absolute terms, since the
# central difference itself carries roundoff of order eps * |f| / h
GRAD_FLOOR = 1.0


@dataclass
class PropertyResult:
    name: str
    passed: bool
    worst: float
    limit: float
    cases: int
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} {self.name:<14} worst={self.worst:.3e} limit={self.limit:.1e} "
                f"cases={self.cases} ({self.seconds:.2f}s)")


def _random_eta(rng, K):
    return rng.dirichlet(np.full(K, 0.7))


def check_normalization(seed=0, configs=50, normalize=True):
    """Probabilities of all ``k!`` orders of one subset sum to one.

    Every order is scored by the packed kernel; one random order per
    configuration is also scored by the direct reference evaluation and the
    two must agree to the same tolerance.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    n = 0
    for k in (2, 3, 4, 5):
        orders = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
        P = orders.shape[0]
        packed = (orders.ravel(), np.arange(P + 1, dtype=np.int64) * k, np.zeros(P, np.int64))
        for _ in range(configs):
            lam = np.exp(rng.normal(0.0, 1.5, k))
            eta = _random_eta(rng, k)
            _, _, _, per = kernels.weighted_loglik(np.log(lam), packed, eta[None, :],
                                                   want_grad=False, normalize=normalize)
            total = math.fsum(np.exp(per))
            p = int(rng.integers(P))
            ref = preference_log_likelihood(lam, orders[p], eta, normalize=normalize)
            worst = max(worst, abs(total - 1.0), abs(ref - per[p]))
            n += 1
    return PropertyResult("normalization", worst <= 1e-10, worst, 1e-10, n)


def _random_dataset(rng, L, n, kmax, workers, kmin=2):
    rankings, owners = [], []
    for _ in range(n):
        k = int(rng.integers(kmin, kmax + 1))
        rankings.append(rng.permutation(L)[:k].tolist())
        owners.append(f"w{int(rng.integers(workers))}")
    return rankings, owners


def check_expert(seed=0, datasets=100):
    """With every worker an expert the weighted likelihood is plain Plackett-Luce."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(datasets):
        L = int(rng.integers(3, 10))
        cat = one_hot_catalog(L)
        r, w = _random_dataset(rng, L, int(rng.integers(1, 30)), min(L, 5), 3)
        ds = dataset_from_indices(cat, r, w)
        lam = np.exp(rng.normal(0.0, 1.0, L))
        prof = {wid: expert_eta(ds.K) for wid in ds.workers}
        ours = dateline_log_likelihood(lam, ds, prof)
        ref = math.fsum(pl_log_likelihood(lam, x) for x in ds.rankings_idx())
        worst = max(worst, abs(ours - ref))
    return PropertyResult("expert", worst <= 1e-12, worst, 1e-12, datasets)


def _grad_instance(rng):
    L = int(rng.integers(3, 9))
    m = int(rng.integers(1, 5))
    hidden = int(rng.integers(0, 5))
    cat = ObjectCatalog([f"o{i}" for i in range(L)], rng.normal(size=(L, m)))
    r, w = _random_dataset(rng, L, int(rng.integers(2, 12)), min(L, 4), 2)
    ds = dataset_from_indices(cat, r, w)
    model = init_model(m, hidden, int(rng.integers(1 << 30)))
    obj = Objective(ds, model, FitConfig(hidden=hidden))
    z = rng.normal(0.0, 1.0, (ds.W, ds.K))
    x = np.concatenate([model.params, z.ravel()])
    return obj, x


def gradient_errors(obj, x, sign=1.0):
    """Componentwise relative error of the analytic gradient against central differences."""
    _, g = obj(x)
    g = sign * g
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = GRAD_STEP
        fd[i] = (obj(x + e, want_grad=False)[0] - obj(x - e, want_grad=False)[0]) / (2 * GRAD_STEP)
    return np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), GRAD_FLOOR)


def check_gradient(seed=0, configs=100, inject=None):
    """Network-parameter and logit gradients against central differences."""
    rng = np.random.default_rng(seed)
    sign = -1.0 if inject == "gradient-sign" else 1.0
    worst = 0.0
    for _ in range(configs):
        obj, x = _grad_instance(rng)
        worst = max(worst, float(gradient_errors(obj, x, sign).max()))
    return PropertyResult("gradient", worst <= GRAD_RTOL, worst, GRAD_RTOL, configs)


def check_shift(seed=0, configs=20):
    """Adding a constant to the output bias changes nothing; its gradient is zero."""
    rng = np.random.default_rng(seed)
    worst_ll, worst_g = 0.0, 0.0
    for _ in range(configs):
        obj, x = _grad_instance(rng)
        f0, g0 = obj(x)
        worst_g = max(worst_g, abs(g0[obj.n_theta - 1]))
        for c in (-3.0, 0.1, 7.0):
            xs = x.copy()
            xs[obj.n_theta - 1] += c
            f1, g1 = obj(xs)
            worst_ll = max(worst_ll, abs(f1 - f0))
            worst_g = max(worst_g, abs(g1[obj.n_theta - 1]))
    ok = worst_ll <= 1e-10 and worst_g <= 1e-8
    return PropertyResult("shift", ok, max(worst_ll, worst_g), 1e-10, configs)


def check_trace(seed=0, sets=100):
    """``tr(L) = k(k-1)`` and ``L 1 = 0`` for common-length preference sets."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(sets):
        k = int(rng.integers(2, 6))
        d = int(rng.integers(k, 12))
        prefs = [rng.permutation(d)[:k] for _ in range(int(rng.integers(1, 40)))]
        L = T.build_laplacian(prefs, d)
        worst = max(worst, abs(np.trace(L) - k * (k - 1)), float(np.abs(L.sum(axis=1)).max()))
    return PropertyResult("trace", worst <= 1e-12, worst, 1e-12, sets)


def check_sandwich(seed=0, trials=1000):
    """Both sides of the rotated-quadratic-form sandwich on random centred PSD ``H``."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for t in range(trials):
        k = int(rng.integers(2, 7))
        H = T.random_centered_psd(k, rng)
        res = T.sandwich_check(H, trials=1, seed=int(rng.integers(1 << 31)))
        worst = min(worst, res.worst_margin)
    # report the violation size, zero when every margin is non-negative
    viol = max(0.0, -worst)
    return PropertyResult("sandwich", viol <= 1e-9, viol, 1e-9, trials)


def check_seminorm(seed=0, trials=200):
    """Semi-norm axioms and vanishing on the all-ones direction."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(2, 5))
        d = int(rng.integers(k, 10))
        L = T.build_laplacian([rng.permutation(d)[:k] for _ in range(20)], d)
        x, y = rng.normal(size=(2, d))
        a, c = rng.normal(), rng.normal()
        nx, ny = T.l_seminorm(x, L), T.l_seminorm(y, L)
        worst = max(
            worst,
            max(0.0, -nx),
            abs(T.l_seminorm(a * x, L) - abs(a) * nx),
            max(0.0, T.l_seminorm(x + y, L) - nx - ny),
            T.l_seminorm(np.ones(d), L),
            abs(T.l_seminorm(x + c, L) - nx),
        )
    return PropertyResult("seminorm", worst <= 1e-9, worst, 1e-9, trials)


def check_connectivity(seed=0, sets=100):
    """``lambda_2(L) > 0`` exactly when union-find finds one component."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(sets):
        d = int(rng.integers(3, 10))
        k = int(rng.integers(2, min(d, 4) + 1))
        prefs = [rng.permutation(d)[:k] for _ in range(int(rng.integers(1, d)))]
        l2 = T.lambda2(T.build_laplacian(prefs, d))
        connected = T.connected_components(prefs, d) == 1
        mismatches += int((l2 > 1e-10) != connected)
    return PropertyResult("connectivity", mismatches == 0, float(mismatches), 0.0, sets)


def check_rotation(seed=0, trials=200):
    """F sums to one over the ``k`` shifts; G reduces to F and to ``1/k``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(2, 6))
        z = rng.normal(0.0, 2.0, k)
        s = math.fsum(T.choice_function_F(T.rotate(z, j)) for j in range(1, k + 1))
        e1 = np.zeros(k)
        e1[0] = 1.0
        worst = max(
            worst,
            abs(s - 1.0),
            abs(T.mixture_function_G(z, e1) - T.choice_function_F(z)),
            abs(T.mixture_function_G(z, np.full(k, 1.0 / k)) - 1.0 / k),
        )
    return PropertyResult("rotation", worst <= 1e-12, worst, 1e-12, trials)


def check_eigen(seed=0, trials=50):
    """Jacobi eigenvalues against numpy's symmetric solver, relative to the spectral radius."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 30))
        A = rng.normal(size=(n, n))
        A = A + A.T
        ours = T.eigen_symmetric(A)
        ref = np.linalg.eigvalsh(A)
        worst = max(worst, float(np.max(np.abs(ours - ref)) / max(1.0, np.max(np.abs(ref)))))
    return PropertyResult("eigen", worst <= 1e-8, worst, 1e-8, trials)


CHECKS = {
    "normalization": check_normalization,
    "expert": check_expert,
    "gradient": check_gradient,
    "shift": check_shift,
    "trace": check_trace,
    "sandwich": check_sandwich,
    "seminorm": check_seminorm,
    "connectivity": check_connectivity,
    "rotation": check_rotation,
    "eigen": check_eigen,
}


def run(only=None, inject=None, seed=0):
    """Run the named checks (all by default). ``inject="gradient-sign"`` flips
    the analytic gradient inside the gradient check, to show it can fail."""
    names = list(CHECKS) if only is None else [only] if isinstance(only, str) else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check {unknown[0]!r}; choose from {', '.join(CHECKS)}")
    out = []
    for name in names:
        t = time.perf_counter()
        res = CHECKS[name](seed=seed, inject=inject) if name == "gradient" else CHECKS[name](seed=seed)
        res.seconds = time.perf_counter() - t
        out.append(res)
    return out
