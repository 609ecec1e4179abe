"""Joint maximum-likelihood fitting of the score network and worker profiles.

The objective is the total weighted log-likelihood. Network parameters and
one logit vector per worker are updated together by gradient ascent. Step
lengths come from the Barzilai-Borwein rule and are cut back by ``decay``
until the objective does not go down, so every accepted iterate is at least
as good as the previous one.

Worker profiles are parametrised as a floored softmax of their logits, which
keeps every entry at least ``eta_floor`` and the vector on the simplex.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateProfileError, DivergenceError
from .network import ScoreModel, backprop, init_model, log_scores
from .uncertainty import WorkerProfile, eta_matrix

logger = logging.getLogger(__name__)


@dataclass
class FitConfig:
    max_iterations: int = 500
    lr: float = 1.0
    decay: float = 0.5
    tol: float = 1e-8
    seed: int = 0
    eta_floor: float = 1e-6
    hidden: int = 16
    fit_eta: bool = True
    max_backtracks: int = 40
    patience: int = 3

    def check(self, K: int):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.lr <= 0 or not 0 < self.decay < 1 or self.tol <= 0:
            raise ValueError("lr and tol must be positive and decay in (0, 1)")
        if not 0 < self.eta_floor < 1.0 / K:
            raise ValueError(f"eta_floor must lie in (0, 1/K) = (0, {1.0 / K:g})")


@dataclass
class FitResult:
    model: ScoreModel
    profiles: list
    trajectory: list
    converged: bool
    log_scores: np.ndarray
    centering: float
    logits: np.ndarray = field(repr=False, default=None)

    @property
    def loglik(self) -> float:
        return self.trajectory[-1][1]

    @property
    def scores(self):
        return np.exp(self.log_scores)


def eta_from_logits(z, eta_floor: float = 1e-6):
    """Map real logits onto the simplex with every entry at least ``eta_floor``.

    Works row-wise on a 2-d array.
    """
    z = np.asarray(z, dtype=np.float64)
    K = z.shape[-1]
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)
    return s * (1.0 - K * eta_floor) + eta_floor


def logits_grad(z, grad_eta, eta_floor: float = 1e-6):
    """Chain a gradient with respect to ``eta`` back through :func:`eta_from_logits`."""
    z = np.asarray(z, dtype=np.float64)
    K = z.shape[-1]
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)
    inner = (s * grad_eta).sum(axis=-1, keepdims=True)
    return (1.0 - K * eta_floor) * s * (grad_eta - inner)


class Objective:
    """Total weighted log-likelihood as a function of one flat parameter vector.

    The vector is ``[theta, z_1, ..., z_W]`` when worker logits are free and
    just ``theta`` otherwise.
    """

    def __init__(self, dataset, model, config, eta_fixed=None, backend=None):
        self.dataset = dataset
        self.model = model
        self.config = config
        self.packed = dataset.packed()
        self.W, self.K = dataset.W, dataset.K
        self.n_theta = model.params.size
        self.eta_fixed = eta_fixed
        self.backend = backend

    def split(self, x):
        theta = x[: self.n_theta]
        if self.eta_fixed is not None:
            return theta, None, self.eta_fixed
        z = x[self.n_theta:].reshape(self.W, self.K)
        return theta, z, eta_from_logits(z, self.config.eta_floor)

    def __call__(self, x, want_grad=True):
        theta, z, eta = self.split(x)
        f, H = log_scores(self.model, self.dataset.catalog, theta)
        if not np.all(np.isfinite(f)):
            return -np.inf, None
        ll, gu, geta, _ = kernels.weighted_loglik(
            f, self.packed, eta, want_grad=want_grad, backend=self.backend
        )
        if not want_grad:
            return ll, None
        g = backprop(self.model, self.dataset.catalog, gu, H, theta)
        if z is not None:
            g = np.concatenate([g, logits_grad(z, geta, self.config.eta_floor).ravel()])
        return ll, g


def _initial_logits(W, K):
    z = np.zeros((W, K))
    z[:, 0] = 1.0
    return z


def fit(dataset, config: FitConfig | None = None, profiles=None, model=None,
        progress=None, backend=None) -> FitResult:
    """Fit scores (and worker profiles unless ``config.fit_eta`` is false).

    Args:
        dataset: a valid :class:`~dateline.data.Dataset`.
        config: optimiser settings; defaults to ``FitConfig()``.
        profiles: fixed worker profiles, required when ``fit_eta`` is false.
        model: starting network; a fresh seeded one is built otherwise.
        progress: path or text file receiving ``iteration,loglik,step_size`` rows.

    Raises:
        DivergenceError: the starting point has a non-finite objective or an
            accepted iterate has a non-finite gradient.
    """
    config = config or FitConfig()
    packed = dataset.packed()
    W, K = dataset.W, dataset.K
    config.check(K)
    if model is None:
        model = init_model(dataset.catalog.dim, config.hidden, config.seed)
    model = model.copy()
    if config.fit_eta:
        obj = Objective(dataset, model, config, backend=backend)
        x = np.concatenate([model.params, _initial_logits(W, K).ravel()])
    else:
        if profiles is None:
            raise ValueError("fixed profiles are required when fit_eta is false")
        obj = Objective(dataset, model, config, eta_fixed=eta_matrix(dataset, profiles),
                        backend=backend)
        x = model.params.copy()

    n = max(1, len(packed[1]) - 1)
    writer, fh = None, None
    if progress is not None:
        fh = progress if hasattr(progress, "write") else open(progress, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "loglik", "step_size"])

    try:
        f, g = obj(x)
        if not np.isfinite(f) or g is None or not np.all(np.isfinite(g)):
            raise DivergenceError(0)
        trajectory = [(0, float(f))]
        if writer:
            writer.writerow([0, repr(float(f)), repr(0.0)])
        step = config.lr
        stall = 0
        converged = False
        for it in range(1, config.max_iterations + 1):
            d = g / n
            f_new, g_new, x_new = -np.inf, None, None
            for _ in range(config.max_backtracks):
                x_try = x + step * d
                try:
                    f_try, g_try = obj(x_try)
                except (FloatingPointError, DegenerateProfileError):
                    f_try, g_try = -np.inf, None
                if np.isfinite(f_try) and f_try >= f:
                    f_new, g_new, x_new = f_try, g_try, x_try
                    break
                step *= config.decay
            if x_new is None:
                # no ascent direction left at floating point resolution
                improvement = 0.0
                step = config.lr
            else:
                if not np.all(np.isfinite(g_new)):
                    raise DivergenceError(it, "gradient")
                improvement = f_new - f
                s = x_new - x
                y = (g_new - g) / n
                sy = float(s @ y)
                used = step
                step = float(s @ s) / -sy if sy < 0 else used * 2.0
                step = min(max(step, 1e-10), 1e6)
                x, f, g = x_new, f_new, g_new
            trajectory.append((it, float(f)))
            if writer:
                writer.writerow([it, repr(float(f)), repr(float(step))])
            stall = stall + 1 if improvement < config.tol else 0
            if stall >= config.patience:
                converged = True
                break
    finally:
        if fh is not None and fh is not progress:
            fh.close()

    theta, z, eta = obj.split(x)
    model.params = theta.copy()
    f_out, _ = log_scores(model, dataset.catalog)
    centering = float(f_out.mean())
    if config.fit_eta:
        profs = [WorkerProfile(w, eta[i] / eta[i].sum()) for i, w in enumerate(dataset.workers)]
    else:
        if isinstance(profiles, dict):
            profs = [WorkerProfile(w, e) for w, e in profiles.items()]
        else:
            profs = list(profiles)
    if not converged:
        logger.info("fit stopped after %d iterations without converging", config.max_iterations)
    return FitResult(model, profs, trajectory, converged, f_out - centering, centering,
                     None if z is None else z.copy())


def kendall_tau(a, b) -> float:
    """Kendall rank correlation of two score vectors.

    A pair tied in both vectors counts as concordant; a pair tied in exactly
    one of them counts as half a discordant pair. Identical vectors therefore
    always give 1, and ties never raise the score.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    i, j = np.triu_indices(a.size, 1)
    sa = np.sign(a[i] - a[j])
    sb = np.sign(b[i] - b[j])
    prod = sa * sb
    both_tied = (sa == 0) & (sb == 0)
    one_tied = (sa == 0) ^ (sb == 0)
    conc = np.count_nonzero(prod > 0) + np.count_nonzero(both_tied)
    disc = np.count_nonzero(prod < 0) + 0.5 * np.count_nonzero(one_tied)
    return float((conc - disc) / i.size)


def centered_log(lam):
    u = np.log(np.asarray(lam, dtype=np.float64))
    return u - u.mean()


def evaluate_ranking(lam_hat, lam_star):
    """``(kendall_tau, l2_log_gap)`` between fitted and reference scores."""
    lam_hat = np.asarray(lam_hat, dtype=np.float64)
    lam_star = np.asarray(lam_star, dtype=np.float64)
    if lam_hat.shape != lam_star.shape:
        raise ValueError(f"score vectors differ in length: {lam_hat.size} vs {lam_star.size}")
    gap = float(np.linalg.norm(centered_log(lam_hat) - centered_log(lam_star)))
    return kendall_tau(lam_hat, lam_star), gap
