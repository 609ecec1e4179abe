"""Synthetic rankings with known scores and worker profiles.

Each ranking is drawn exactly: every one of the ``k!`` orders of the subset is
scored with the weighted stage likelihood, the scores are normalised, and one
order is drawn from the resulting distribution. That costs ``k!`` likelihood
evaluations per ranking, so ``k`` is capped (``enum_cap``, default 8).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import kernels
from .data import ObjectCatalog, dataset_from_indices
from .errors import EnumerationCapError
from .uncertainty import WorkerProfile

ARCHETYPES = ("expert", "amateur", "spammer", "adversarial")


def archetype_eta(kind: str, K: int, ratio: float = 0.05):
    """Uncertainty vector of length ``K`` for one of the worker archetypes.

    expert       mass decays geometrically with ``ratio`` from the first entry
    amateur      first two entries nearly equal (0.4 vs 0.35), halving after
    spammer      uniform
    adversarial  the expert vector reversed, mass on the last entry
    """
    t = np.arange(K, dtype=np.float64)
    if kind == "expert":
        eta = ratio ** t
    elif kind == "amateur":
        eta = np.array([0.4, 0.35] + [0.35 * 0.5 ** (i - 1) for i in range(2, K)])[:K]
    elif kind == "spammer":
        eta = np.ones(K)
    elif kind == "adversarial":
        eta = (ratio ** t)[::-1].copy()
    else:
        raise ValueError(f"unknown archetype {kind!r}; expected one of {ARCHETYPES}")
    return eta / eta.sum()


@dataclass
class WorkerSpec:
    id: str
    archetype: str
    n: int


@dataclass
class SynthSpec:
    """What to generate.

    ``features`` is ``"one-hot"`` or the dimension of standard normal features.
    ``lambda_star`` gives the true scores explicitly; otherwise they come from
    a random network with ``score_hidden`` hidden units whose weights have
    standard deviation ``score_scale``. ``k`` is a fixed length or an inclusive
    ``[lo, hi]`` range drawn uniformly per ranking.
    """

    n_objects: int
    workers: list
    k: object = 3
    features: object = "one-hot"
    lambda_star: list | None = None
    score_scale: float = 1.0
    score_hidden: int = 0
    expert_ratio: float = 0.05
    seed: int = 0
    k_cap: int = 6
    enum_cap: int = 8

    def __post_init__(self):
        self.workers = [w if isinstance(w, WorkerSpec) else WorkerSpec(**w) for w in self.workers]

    @property
    def k_range(self):
        if isinstance(self.k, (list, tuple)):
            lo, hi = (int(v) for v in self.k)
        else:
            lo = hi = int(self.k)
        return lo, hi

    def check(self):
        lo, hi = self.k_range
        if hi > self.enum_cap:
            raise EnumerationCapError(hi, self.enum_cap)
        if self.n_objects < 2:
            raise ValueError("need at least 2 objects")
        if not 2 <= lo <= hi <= min(self.n_objects, self.k_cap):
            raise ValueError(
                f"k range [{lo}, {hi}] must lie within [2, min(L={self.n_objects}, "
                f"k_cap={self.k_cap})]"
            )
        if not self.workers:
            raise ValueError("need at least one worker")
        ids = [w.id for w in self.workers]
        if len(set(ids)) != len(ids):
            raise ValueError("worker ids must be unique")
        for w in self.workers:
            if w.archetype not in ARCHETYPES:
                raise ValueError(f"unknown archetype {w.archetype!r}")
            if w.n < 1:
                raise ValueError(f"worker {w.id!r} needs at least one preference")
        if self.lambda_star is not None and len(self.lambda_star) != self.n_objects:
            raise ValueError("lambda_star length must equal n_objects")
        if not (self.features == "one-hot" or (isinstance(self.features, int) and self.features >= 1)):
            raise ValueError("features must be 'one-hot' or a positive dimension")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@lru_cache(maxsize=None)
def _perms(k):
    p = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
    p.setflags(write=False)
    return p


def _order_masses(u, subsets, eta_row):
    """Unnormalised weighted likelihood of every order of every subset row.

    Returns ``(perms, masses)`` with ``masses`` of shape ``(n, k!)``.
    """
    n, k = subsets.shape
    perms = _perms(k)
    P = perms.shape[0]
    rankings = subsets[:, perms]  # (n, P, k)
    items = np.ascontiguousarray(rankings.reshape(-1))
    offsets = np.arange(n * P + 1, dtype=np.int64) * k
    widx = np.zeros(n * P, dtype=np.int64)
    _, _, _, per = kernels.weighted_loglik(
        u, (items, offsets, widx), np.asarray(eta_row, np.float64)[None, :],
        want_grad=False, normalize=False,
    )
    return perms, np.exp(per.reshape(n, P))


def enumerate_permutation_distribution(lam, subset, eta, cap: int = 8, normalize: bool = True):
    """Every order of ``subset`` with its probability.

    The probabilities are the ranking likelihoods of each order and sum to
    one; they are the distribution :func:`generate` draws from. With
    ``normalize=False`` the bare stage products are returned instead.
    """
    subset = np.asarray(subset, dtype=np.int64)
    k = subset.size
    if k > cap:
        raise EnumerationCapError(k, cap)
    if k < 1:
        raise ValueError("subset is empty")
    eta = np.asarray(eta, dtype=np.float64)
    u = np.log(np.asarray(lam, dtype=np.float64))
    perms, masses = _order_masses(u, subset[None, :], eta)
    masses = masses[0]
    if normalize:
        masses = masses / masses.sum()
    return [(tuple(int(x) for x in subset[p]), float(q)) for p, q in zip(perms, masses)]


def sample_orders(u, subsets, eta_row, rng):
    """Draw one order per subset row from its normalised enumerated distribution."""
    perms, masses = _order_masses(u, subsets, eta_row)
    cdf = np.cumsum(masses, axis=1)
    draw = rng.random(subsets.shape[0]) * cdf[:, -1]
    pick = np.minimum((cdf < draw[:, None]).sum(axis=1), perms.shape[0] - 1)
    return np.take_along_axis(subsets, perms[pick], axis=1)


def true_scores(spec: SynthSpec, X, rng):
    if spec.lambda_star is not None:
        lam = np.asarray(spec.lambda_star, dtype=np.float64)
        if np.any(lam <= 0):
            raise ValueError("lambda_star must be positive")
        return lam
    m = X.shape[1]
    if spec.score_hidden == 0:
        w = rng.normal(0.0, spec.score_scale, m)
        f = X @ w
    else:
        h = spec.score_hidden
        W1 = rng.normal(0.0, 1.0 / math.sqrt(m), (h, m))
        w2 = rng.normal(0.0, spec.score_scale, h)
        f = np.tanh(X @ W1.T) @ w2
    return np.exp(f - f.mean())


def generate(spec: SynthSpec):
    """Draw a dataset from ``spec``.

    Returns ``(dataset, lambda_star, profiles)``. Object features and true
    scores use one random stream and each worker its own, all derived from
    ``spec.seed``, so the output is reproducible byte for byte.
    """
    spec.check()
    lo, hi = spec.k_range
    L = spec.n_objects
    root = np.random.SeedSequence(spec.seed)
    streams = root.spawn(1 + len(spec.workers))
    rng0 = np.random.default_rng(streams[0])
    if spec.features == "one-hot":
        X = np.eye(L)
    else:
        X = rng0.normal(size=(L, int(spec.features)))
    lam = true_scores(spec, X, rng0)
    u = np.log(lam)
    catalog = ObjectCatalog([f"o{i}" for i in range(L)], X)

    rankings, owners, profiles = [], [], []
    for ws, ss in zip(spec.workers, streams[1:]):
        rng = np.random.default_rng(ss)
        eta = archetype_eta(ws.archetype, hi, spec.expert_ratio)
        profiles.append(WorkerProfile(ws.id, eta))
        ks = rng.integers(lo, hi + 1, size=ws.n)
        subsets = np.argsort(rng.random((ws.n, L)), axis=1)
        out = [None] * ws.n
        for k in range(lo, hi + 1):
            rows = np.flatnonzero(ks == k)
            if rows.size == 0:
                continue
            orders = sample_orders(u, subsets[rows, :k], eta, rng)
            for r, o in zip(rows, orders):
                out[r] = o.tolist()
        rankings.extend(out)
        owners.extend([ws.id] * ws.n)
    return dataset_from_indices(catalog, rankings, owners), lam, profiles


def save_truth(path, lam, theta_seed):
    doc = {"lambda_star": [float(x) for x in lam], "theta_seed": theta_seed}
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_truth(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
