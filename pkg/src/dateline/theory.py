"""Comparison-graph algebra, curvature constants and minimax bound formulas.

Everything here works on preferences of one common length ``k`` over ``d``
objects with one-hot features, so a score vector is just one log-score per
object.

Conventions:

* ``E`` for a ranking is the ``d x k`` matrix with ``E[rho_j, j] = 1``.
* ``R_j`` (``j = 1..k``) is the cyclic shift with ``(v @ R_j)[0] = v[j-1]``;
  ``R_1`` is the identity.
* ``F(z) = softmax(z)[0]`` acts on log-scores, and
  ``G(z, eta) = sum_j eta_j F(z @ R_j) = sum_j eta_j softmax(z)[j]``.
* ``lambda_2`` of a Hessian means its smallest eigenvalue on the subspace
  orthogonal to the all-ones vector. Every Hessian built here annihilates
  that vector, so the remaining spectrum is exactly that restriction.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import Preference
from .kernels import jacobi_eigh

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10


# ---------------------------------------------------------------------------
# comparison matrices and Laplacians
# ---------------------------------------------------------------------------


def _indices(pref):
    r = pref.ranking if isinstance(pref, Preference) else pref
    return [int(i) for i in r]


def build_comparison_matrix(pref, d: int):
    """``d x k`` 0/1 matrix placing the ``k`` compared objects by reported rank.

    ``pref`` is a sequence of object indices (best first) or a
    :class:`~dateline.data.Preference` whose ranking holds indices.
    """
    idx = _indices(pref)
    k = len(idx)
    if k == 0:
        raise ValueError("empty preference")
    if len(set(idx)) != k:
        raise ValueError("preference repeats an object")
    bad = [i for i in idx if not 0 <= i < d]
    if bad:
        raise IndexError(f"object index {bad[0]} out of range for d={d}")
    E = np.zeros((d, k))
    E[idx, np.arange(k)] = 1.0
    return E


def rotation_matrix(k: int, j: int):
    """Cyclic shift ``R_j`` (1-based ``j``) with ``(v @ R_j)[t] = v[(t + j - 1) % k]``."""
    if not 1 <= j <= k:
        raise ValueError(f"shift index {j} outside [1, {k}]")
    R = np.zeros((k, k))
    t = np.arange(k)
    R[(t + j - 1) % k, t] = 1.0
    return R


def rotate(z, j: int):
    """``z @ R_j`` without forming the matrix."""
    z = np.asarray(z, dtype=np.float64)
    return np.roll(z, -(j - 1))


def common_length(prefs):
    ks = {len(_indices(p)) for p in prefs}
    if not ks:
        raise ValueError("no preferences")
    if len(ks) > 1:
        raise ValueError(f"preferences must share one length, got lengths {sorted(ks)}")
    return ks.pop()


def build_laplacian(prefs, d: int):
    """Comparison hyper-graph Laplacian ``(1/N) sum_i E_i (kI - 11^T) E_i^T``.

    Each preference adds the complete-graph Laplacian of its ``k`` objects, so
    the sum is accumulated directly without forming the ``E_i``.
    """
    prefs = list(prefs)
    k = common_length(prefs)
    L = np.zeros((d, d))
    for p in prefs:
        idx = _indices(p)
        build_comparison_matrix(idx, d)  # validation only
        L[np.ix_(idx, idx)] -= 1.0
        L[idx, idx] += k
    return L / len(prefs)


def l_seminorm(x, L) -> float:
    """``sqrt(x^T L x)``; tiny negative quadratic forms from rounding clamp to 0.

    ``x`` is centred first. That leaves the value unchanged because ``L 1 = 0``,
    and makes it exactly zero on constant vectors instead of ``sqrt(eps)``.
    """
    x = np.asarray(x, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 2 or L.shape != (x.size, x.size):
        raise ValueError(f"vector of length {x.size} does not match Laplacian of shape {L.shape}")
    x = x - x.mean()
    q = float(x @ L @ x)
    if q < -1e-12:
        raise ValueError(f"quadratic form is negative ({q:g}); L is not positive semidefinite")
    return math.sqrt(max(q, 0.0))


def eigen_symmetric(A, tol: float = 1e-12, backend=None):
    """Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi)."""
    w, _ = eigh_symmetric(A, tol, backend)
    return w


def eigh_symmetric(A, tol: float = 1e-12, backend=None):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    asym = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValueError(f"matrix is not symmetric (max |A - A^T| = {asym:g})")
    w, V, _ = jacobi_eigh((A + A.T) / 2.0, tol=tol, backend=backend)
    return w, V


def _complement_basis(k):
    # orthonormal basis of the subspace orthogonal to the all-ones vector
    Q, _ = np.linalg.qr(np.column_stack([np.ones(k), np.eye(k)[:, : k - 1]]))
    return Q[:, 1:]


def restricted_spectrum(H):
    """Eigenvalues of symmetric ``H`` restricted to the complement of ``1``."""
    H = np.asarray(H, dtype=np.float64)
    Q = _complement_basis(H.shape[0])
    return eigen_symmetric(Q.T @ H @ Q)


def lambda2(H) -> float:
    return float(restricted_spectrum(H)[0])


def pseudo_inverse(H, rtol: float = 1e-10):
    """Moore-Penrose inverse of a symmetric matrix from its Jacobi eigenpairs."""
    w, V = eigh_symmetric(H)
    cut = rtol * max(1.0, float(np.max(np.abs(w))))
    inv = np.where(np.abs(w) > cut, 1.0 / np.where(w == 0, 1.0, w), 0.0)
    return (V * inv) @ V.T


def connected_components(prefs, d: int) -> int:
    """Number of connected components of the comparison hyper-graph (union-find)."""
    parent = list(range(d))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for p in prefs:
        idx = _indices(p)
        r0 = find(idx[0])
        for i in idx[1:]:
            ri = find(i)
            if ri != r0:
                parent[ri] = r0
    return len({find(a) for a in range(d)})


# ---------------------------------------------------------------------------
# choice functions
# ---------------------------------------------------------------------------


def _softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def choice_function_F(z) -> float:
    """Probability that the first coordinate wins, ``exp(z_1) / sum exp(z_t)``."""
    return float(_softmax(z)[0])


def _active_eta(eta, k):
    eta = np.asarray(eta, dtype=np.float64)[:k]
    s = eta.sum()
    if eta.size < k or s <= 0:
        raise ValueError(f"need an uncertainty vector with positive mass on {k} entries")
    return eta / s


def mixture_function_G(z, eta) -> float:
    """``sum_j eta_j F(z @ R_j)`` with ``eta`` cut to ``len(z)`` entries and rescaled."""
    s = _softmax(z)
    return float(_active_eta(eta, s.size) @ s)


def _F_derivs(z):
    s = _softmax(z)
    hess = np.diag(s) - np.outer(s, s)  # of -log F
    e1 = np.zeros_like(s)
    e1[0] = 1.0
    grad_F = s[0] * (e1 - s)
    return s[0], grad_F, hess


def _G_derivs(z, eta):
    s = _softmax(z)
    w = eta * s
    G = w.sum()
    q = w / G
    grad_logG = q - s
    hess = (np.diag(s) - np.outer(s, s)) - (np.diag(q) - np.outer(q, q))  # of -log G
    return G, grad_logG, hess


def _box_points(k, half_width, samples, seed):
    rng = np.random.default_rng(seed)
    pts = [np.zeros(k)]
    if k <= 10:
        corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * k, indexing="ij")).reshape(k, -1).T
        pts.extend(corners * half_width)
    pts.extend(rng.uniform(-half_width, half_width, (samples, k)))
    return np.array(pts)


@dataclass
class CurvatureConstants:
    """Box-certified curvature statistics of ``-log F`` or ``-log G``.

    ``H`` is the sampled Hessian with the smallest ``lambda_2``. ``lambda_max``
    is the largest eigenvalue seen over all samples. ``sup_grad_l2`` is the
    squared-norm sup of the gradient of ``log fn``; ``sup_grad_HF_dagger`` the
    sup of ``grad(fn)^T H^+ grad(fn)``. ``inf_value`` is the smallest value of
    ``fn`` itself.
    """

    which: str
    k: int
    half_width: float
    samples: int
    H: np.ndarray = field(repr=False)
    lambda2: float
    lambda_max: float
    sup_grad_l2: float
    sup_grad_HF_dagger: float
    inf_value: float
    min_eigenvalue: float

    def to_dict(self):
        d = asdict(self)
        d["H"] = self.H.tolist()
        return d


def logconcavity_constants(fn: str, k: int, eta=None, half_width: float = 1.0,
                           samples: int = 200, seed: int = 0) -> CurvatureConstants:
    """Sample the box ``[-half_width, half_width]^k`` and collect curvature constants.

    ``fn`` is ``"F"`` or ``"G"``; ``G`` needs ``eta``. Points are the centre,
    all ``2^k`` corners (for ``k <= 10``) and ``samples`` seeded uniform draws.
    The returned ``H`` is the sampled Hessian whose ``lambda_2`` is smallest,
    a conservative curvature certificate on the box.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    if half_width <= 0:
        raise ValueError("box half-width must be positive")
    if fn == "G":
        if eta is None:
            raise ValueError("G needs an uncertainty vector")
        eta = _active_eta(eta, k)
    elif fn != "F":
        raise ValueError(f"unknown function {fn!r}; expected 'F' or 'G'")

    pts = _box_points(k, half_width, samples, seed)
    best_l2, best_H = np.inf, None
    lam_max, min_eig = -np.inf, np.inf
    sup_g, inf_v = 0.0, np.inf
    grads = []
    for z in pts:
        if fn == "F":
            val, grad, hess = _F_derivs(z)
            g2 = float(grad @ grad) / (val * val)  # |grad log F|^2
            grads.append(grad)
        else:
            val, grad_log, hess = _G_derivs(z, eta)
            g2 = float(grad_log @ grad_log)
            grads.append(grad_log * val)
        if not np.all(np.isfinite(hess)):
            raise FloatingPointError(f"non-finite Hessian at z={z.tolist()}")
        spec = restricted_spectrum(hess)
        if spec[0] < best_l2:
            best_l2, best_H = float(spec[0]), hess
        lam_max = max(lam_max, float(spec[-1]))
        min_eig = min(min_eig, float(spec[0]), 0.0)
        sup_g = max(sup_g, g2)
        inf_v = min(inf_v, float(val))
    Hp = pseudo_inverse(best_H)
    sup_dag = max(float(g @ Hp @ g) for g in grads)
    return CurvatureConstants(fn, k, float(half_width), int(samples), best_H, best_l2,
                              lam_max, sup_g, sup_dag, inf_v, min_eig)


# ---------------------------------------------------------------------------
# minimax bounds
# ---------------------------------------------------------------------------


def log_packing_size(alpha: float, d: int) -> float:
    """``log M(alpha)`` of the binary Gilbert-Varshamov packing."""
    if not 0 < alpha < 0.25:
        raise ValueError("alpha must lie in (0, 1/4)")
    a2 = 2.0 * alpha
    return 0.5 * d * (math.log(2.0) + a2 * math.log(a2) + (1.0 - a2) * math.log1p(-a2))


def packing_size(alpha: float, d: int) -> float:
    return math.exp(log_packing_size(alpha, d))


def fano_constant(alpha: float, d: int) -> float:
    """``C(alpha, d) = 0.005 (1 - (0.01 d + log 2) / log M(alpha))``; may be <= 0."""
    return 0.005 * (1.0 - (0.01 * d + math.log(2.0)) / log_packing_size(alpha, d))


@dataclass
class BoundReport:
    upper_L: float
    lower_L: float
    upper_l2: float
    lower_l2: float
    k: int
    d: int
    N_w: int
    alpha: float
    sup_eta: float
    lambda2_L: float
    C: float
    log_M: float
    sup_grad_logG: float
    lambda2_HG: float
    lambda_max_HF: float
    inf_F: float
    sup_grad_F_HF_dagger: float
    half_width: float
    degenerate: bool
    upper_infinite: bool

    @property
    def ordered(self) -> bool:
        return self.lower_L <= self.upper_L and self.lower_l2 <= self.upper_l2

    def to_dict(self):
        d = asdict(self)
        d["ordered"] = self.ordered
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v))
                for k, v in d.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def minimax_bounds(k: int, d: int, N_w: int, sup_eta: float, alpha: float,
                   const_F: CurvatureConstants, const_G: CurvatureConstants,
                   lambda2_L: float) -> BoundReport:
    """Upper and lower minimax risk bounds in the L semi-norm and in l2.

    Upper bounds need ``lambda_2(H_G) > 0``; otherwise they are reported as
    infinite with ``upper_infinite`` set. When ``C(alpha, d) <= 0`` the lower
    bounds are still the raw formula values but ``degenerate`` is set.
    """
    if k < 2 or d < 2 or N_w < 1:
        raise ValueError("need k >= 2, d >= 2 and N_w >= 1")
    if not 0 < sup_eta <= 1:
        raise ValueError("sup_eta must lie in (0, 1]")
    log_M = log_packing_size(alpha, d)
    C = fano_constant(alpha, d)
    l2G = const_G.lambda2
    if l2G > 0:
        upper_L = k * k * const_G.sup_grad_l2 / (l2G * l2G) * (d - 1) / N_w
        upper_l2 = upper_L / lambda2_L if lambda2_L > 0 else math.inf
    else:
        upper_L = upper_l2 = math.inf
    base = C * const_F.inf_value / (const_F.lambda_max * const_F.sup_grad_HF_dagger)
    lower_L = base * d / (N_w * sup_eta)
    lower_l2 = base / (k * (k - 1)) * d * d / (N_w * sup_eta)
    rep = BoundReport(
        upper_L=upper_L, lower_L=lower_L, upper_l2=upper_l2, lower_l2=lower_l2,
        k=k, d=d, N_w=N_w, alpha=alpha, sup_eta=float(sup_eta), lambda2_L=float(lambda2_L),
        C=C, log_M=log_M, sup_grad_logG=const_G.sup_grad_l2, lambda2_HG=l2G,
        lambda_max_HF=const_F.lambda_max, inf_F=const_F.inf_value,
        sup_grad_F_HF_dagger=const_F.sup_grad_HF_dagger, half_width=const_F.half_width,
        degenerate=C <= 0, upper_infinite=not math.isfinite(upper_L),
    )
    if not rep.ordered:
        logger.warning("bound report has lower > upper (k=%d, d=%d, N_w=%d)", k, d, N_w)
    return rep


# ---------------------------------------------------------------------------
# sandwich inequality
# ---------------------------------------------------------------------------


@dataclass
class SandwichResult:
    passed: bool
    worst_margin: float
    trials: int


def sandwich_check(H, trials: int = 1000, seed: int = 0, tol: float = 1e-9) -> SandwichResult:
    """Check ``(l2/k) v^T(kI-11^T)v <= v^T R_j H R_j^T v <= (lmax/k) v^T(kI-11^T)v``.

    ``H`` must be symmetric with ``H 1 = 0`` and ``lambda_2(H) > 0``. The
    margin is the smaller slack of the two inequalities; it is negative when
    one fails.
    """
    H = np.asarray(H, dtype=np.float64)
    k = H.shape[0]
    if H.shape != (k, k) or np.max(np.abs(H - H.T)) > SYMMETRY_TOL:
        raise ValueError("H must be square and symmetric")
    if np.max(np.abs(H @ np.ones(k))) > 1e-10:
        raise ValueError("H must annihilate the all-ones vector")
    spec = restricted_spectrum(H)
    l2, lmax = float(spec[0]), float(spec[-1])
    if l2 <= 0:
        raise ValueError(f"lambda_2(H) = {l2:g} is not positive")
    rng = np.random.default_rng(seed)
    K = k * np.eye(k) - np.ones((k, k))
    worst = np.inf
    for _ in range(trials):
        v = rng.normal(size=k) * rng.uniform(0.1, 10.0)
        j = int(rng.integers(1, k + 1))
        R = rotation_matrix(k, j)
        mid = float(v @ R @ H @ R.T @ v)
        base = float(v @ K @ v) / k
        scale = max(1.0, abs(mid))
        worst = min(worst, (mid - l2 * base) / scale, (lmax * base - mid) / scale)
    return SandwichResult(bool(worst >= -tol), float(worst), int(trials))


def random_centered_psd(k: int, rng, rank: int | None = None):
    """Random symmetric PSD matrix with ``H 1 = 0`` and ``lambda_2 > 0``."""
    Q = _complement_basis(k)
    A = rng.normal(size=(k - 1, k - 1))
    M = A @ A.T + 0.1 * np.eye(k - 1)
    H = Q @ M @ Q.T
    return (H + H.T) / 2.0


# ---------------------------------------------------------------------------
# empirical risk experiment
# ---------------------------------------------------------------------------

RISK_HEADER = ["N_w", "mean_risk_L", "mean_risk_l2", "upper_L", "lower_L",
               "upper_l2", "lower_l2", "failed"]


def _risk_cell(args):
    from .estimation import FitConfig, centered_log, fit
    from .synthgen import generate
    from .uncertainty import WorkerProfile

    spec, cell_seed, fit_tol, max_iter = args
    spec = replace(spec, seed=cell_seed)
    try:
        ds, lam, profiles = generate(spec)
        cfg = FitConfig(hidden=0, fit_eta=False, tol=fit_tol, max_iterations=max_iter,
                        seed=cell_seed % (2 ** 32))
        res = fit(ds, cfg, profiles=profiles)
        err = res.log_scores - centered_log(lam)
        L = build_laplacian(ds.rankings_idx(), len(ds.catalog))
        return (l_seminorm(err, L) ** 2, float(err @ err), lambda2(L), None)
    except (FloatingPointError, ValueError) as exc:
        return (math.nan, math.nan, math.nan, f"{type(exc).__name__}: {exc}")


def empirical_risk_experiment(spec, N_grid, repetitions: int = 10, alpha: float = 0.1,
                              samples: int = 200, fit_tol: float = 1e-10,
                              max_iterations: int = 2000, processes: int = 1,
                              half_width: float | None = None):
    """Mean squared estimation error against ``N_w`` with the bound columns alongside.

    ``spec`` is a :class:`~dateline.synthgen.SynthSpec` with one worker, one-hot
    features and a fixed ``k``; its ``n`` is replaced by each grid value. True
    scores are drawn once from ``spec.seed`` (unless given) and shared by every
    cell, so the means estimate the risk at one fixed ground truth. The
    worker profile is held at its true value while fitting, which is the
    setting the bounds assume. Errors are measured on centred log-scores.

    Cell ``(N_w, r)`` uses a seed derived from ``spec.seed``, ``N_w`` and
    ``r`` so rows do not depend on ``processes``. A failing repetition is
    counted in the ``failed`` column and left out of the means.

    Returns ``(rows, reports)``: dicts keyed by :data:`RISK_HEADER` and one
    :class:`BoundReport` per grid value.
    """
    from .synthgen import archetype_eta, true_scores

    if spec.features != "one-hot":
        raise ValueError("the risk experiment needs one-hot features")
    if len(spec.workers) != 1:
        raise ValueError("the risk experiment takes a single worker")
    lo, hi = spec.k_range
    if lo != hi:
        raise ValueError("the risk experiment needs a fixed preference length")
    k, d = lo, spec.n_objects
    ws = spec.workers[0]
    if spec.lambda_star is None:
        # one ground truth for the whole sweep; cells only redraw the rankings
        rng0 = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(1)[0])
        spec = replace(spec, lambda_star=[float(x) for x in true_scores(spec, np.eye(d), rng0)])
    eta = _active_eta(archetype_eta(ws.archetype, k, spec.expert_ratio), k)

    cells = []
    for N in N_grid:
        for r in range(repetitions):
            seed = int(np.random.SeedSequence([spec.seed, int(N), r]).generate_state(1)[0])
            cell_spec = replace(spec, workers=[replace(ws, n=int(N))])
            cells.append((cell_spec, seed, fit_tol, max_iterations))
    if processes > 1:
        with ProcessPoolExecutor(processes) as pool:
            out = list(pool.map(_risk_cell, cells))
    else:
        out = [_risk_cell(c) for c in cells]

    if half_width is None:
        u = np.log(np.asarray(spec.lambda_star, dtype=np.float64))
        half_width = max(1.0, float(np.max(np.abs(u - u.mean()))))
    cF = logconcavity_constants("F", k, half_width=half_width, samples=samples, seed=spec.seed)
    cG = logconcavity_constants("G", k, eta=eta, half_width=half_width, samples=samples,
                                seed=spec.seed)
    rows, reports = [], []
    for g, N in enumerate(N_grid):
        res = out[g * repetitions:(g + 1) * repetitions]
        ok = [x for x in res if x[3] is None]
        for x in res:
            if x[3] is not None:
                logger.warning("risk cell N_w=%d failed: %s", N, x[3])
        l2L = float(np.mean([x[2] for x in ok])) if ok else math.nan
        rep = minimax_bounds(k, d, int(N), float(eta.max()), alpha, cF, cG,
                             l2L if ok else 0.0)
        reports.append(rep)
        rows.append({
            "N_w": int(N),
            "mean_risk_L": float(np.mean([x[0] for x in ok])) if ok else math.nan,
            "mean_risk_l2": float(np.mean([x[1] for x in ok])) if ok else math.nan,
            "upper_L": rep.upper_L, "lower_L": rep.lower_L,
            "upper_l2": rep.upper_l2, "lower_l2": rep.lower_l2,
            "failed": len(res) - len(ok),
        })
    return rows, reports


def risk_table_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RISK_HEADER, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def loglog_slope(N, risk) -> float:
    """Least-squares slope of ``log risk`` against ``log N``."""
    x = np.log(np.asarray(N, dtype=np.float64))
    y = np.log(np.asarray(risk, dtype=np.float64))
    return float(np.polyfit(x, y, 1)[0])
