"""Worker uncertainty vectors and the uncertainty-weighted ranking likelihood.

Entry ``t`` of a worker's uncertainty vector is the probability that the
worker reports as stage winner the object whose true rank among the remaining
candidates is ``t``. At a stage with ``m`` candidates only the first ``m``
entries are active and they are rescaled to sum to one.

The stage probability mixes the choice probabilities of the objects reported
at the remaining positions::

    P(stage i) = sum_{t=i..k} eta_bar[t-i+1] * lam[rho_t] / sum_{s=i..k} lam[rho_s]

The product of these stage probabilities over a ranking is a distribution
over the orders of its objects only for ``k = 2`` or for expert and uniform
profiles. The ranking likelihood therefore divides the stage product by its
sum over all ``k!`` orders of the same objects; that normaliser equals one in
exactly those cases. Pass ``normalize=False`` to get the bare stage product.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .data import DataError
from .errors import DegenerateProfileError
from .plackett_luce import as_scores

SIMPLEX_TOL = 1e-12


def as_eta(eta):
    eta = np.asarray(eta, dtype=np.float64)
    if eta.ndim != 1 or eta.size < 1:
        raise ValueError("uncertainty vector must be a non-empty 1-d array")
    if not np.all(np.isfinite(eta)) or np.any(eta < 0):
        raise ValueError("uncertainty entries must be finite and non-negative")
    if abs(math.fsum(eta) - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"uncertainty vector sums to {math.fsum(eta)!r}, not 1")
    return eta


@dataclass(frozen=True)
class WorkerProfile:
    worker_id: str
    eta: np.ndarray

    def __post_init__(self):
        eta = as_eta(self.eta)
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)


def expert_eta(K: int):
    """The perfectly reliable worker, all mass on the true local winner."""
    eta = np.zeros(K)
    eta[0] = 1.0
    return eta


def renormalize_active(eta, m: int):
    """First ``m`` entries of ``eta`` rescaled to sum to one."""
    eta = np.asarray(eta, dtype=np.float64)
    if not 1 <= m <= eta.size:
        raise ValueError(f"active count {m} outside [1, {eta.size}]")
    mass = math.fsum(eta[:m])
    if mass <= 0.0:
        raise DegenerateProfileError(f"zero mass on the first {m} uncertainty entries")
    return eta[:m] / mass


def _stage_prob(lam, rem, eta) -> float:
    # lam already validated; shift by the max log-score so lam/sum never overflows
    bar = renormalize_active(eta, len(rem))
    u = np.log(lam[list(rem)])
    w = np.exp(u - u.max())
    return float(math.fsum(bar * (w / math.fsum(w))))


def weighted_stage_probability(lam, ranking, stage: int, eta) -> float:
    """Probability of the reported winner at ``stage`` (1-based) of ``ranking``."""
    ranking = list(ranking)
    k = len(ranking)
    if not 1 <= stage <= k:
        raise ValueError(f"stage {stage} outside [1, {k}]")
    return _stage_prob(as_scores(lam), ranking[stage - 1:], eta)


def _product_log(lam, ranking, eta) -> float:
    ranking = list(ranking)
    return math.fsum(math.log(_stage_prob(lam, ranking[i:], eta)) for i in range(len(ranking) - 1))


def stage_product_log(lam, ranking, eta) -> float:
    """Log of the bare product of stage probabilities of ``ranking``."""
    return _product_log(as_scores(lam), ranking, eta)


def _normalizer(lam, objects, eta) -> float:
    if len(objects) <= 2:
        return 1.0
    return math.fsum(math.exp(_product_log(lam, order, eta))
                     for order in itertools.permutations(objects))


def order_normalizer(lam, objects, eta) -> float:
    """Sum of the stage product over every order of ``objects``."""
    return _normalizer(as_scores(lam), list(objects), eta)


def preference_log_likelihood(lam, ranking, eta, normalize: bool = True) -> float:
    lam = as_scores(lam)
    ll = _product_log(lam, ranking, eta)
    if normalize:
        ll -= math.log(_normalizer(lam, sorted(ranking), eta))
    return ll


def _profile_map(dataset, profiles):
    if isinstance(profiles, dict):
        pm = {w: np.asarray(e, dtype=np.float64) for w, e in profiles.items()}
    else:
        pm = {p.worker_id: p.eta for p in profiles}
    longest = {}
    for p in dataset.preferences:
        longest[p.worker_id] = max(longest.get(p.worker_id, 0), len(p))
    for w, k in longest.items():
        if w not in pm:
            raise KeyError(f"no uncertainty profile for worker {w!r}")
        if pm[w].size < k:
            raise ValueError(f"profile for worker {w!r} has length {pm[w].size} < {k}")
    return pm


def eta_matrix(dataset, profiles):
    """Stack profiles into a ``(W, K)`` array ordered like ``dataset.workers``.

    Profiles longer than ``K`` are truncated; entries past a worker's longest
    ranking are never active, so truncation does not change any likelihood.
    """
    pm = _profile_map(dataset, profiles)
    K = dataset.K
    out = np.zeros((dataset.W, K))
    for n, w in enumerate(dataset.workers):
        e = pm[w][:K]
        out[n, : e.size] = e
    return out


def dateline_log_likelihood(lam, dataset, profiles, fast: bool = False,
                            normalize: bool = True) -> float:
    """Log-likelihood of every ranking in ``dataset`` under per-worker profiles.

    The default path evaluates each stage probability directly and adds the
    logs with ``math.fsum``, which is exactly rounded and therefore independent
    of summation order. ``fast=True`` uses the chunked kernel instead.
    """
    lam = as_scores(lam)
    if lam.size != len(dataset.catalog):
        raise ValueError(f"score vector has {lam.size} entries, catalog has {len(dataset.catalog)}")
    if fast:
        total, *_ = kernels.weighted_loglik(
            np.log(lam), dataset.packed(), eta_matrix(dataset, profiles),
            want_grad=False, normalize=normalize,
        )
        return total
    pm = _profile_map(dataset, profiles)
    zcache = {}
    terms = []
    for r, p in zip(dataset.rankings_idx(), dataset.preferences):
        eta = pm[p.worker_id]
        terms.append(_product_log(lam, r, eta))
        if normalize and len(r) > 2:
            key = (p.worker_id, tuple(sorted(r)))
            if key not in zcache:
                zcache[key] = math.log(_normalizer(lam, key[1], eta))
            terms.append(-zcache[key])
    return math.fsum(terms)


def dump_profiles(profiles) -> str:
    return "".join(
        json.dumps({"worker": p.worker_id, "eta": [float(x) for x in p.eta]}) + "\n"
        for p in profiles
    )


def save_profiles(profiles, path):
    Path(path).write_text(dump_profiles(profiles), encoding="utf-8")


def load_profiles(path) -> list:
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(WorkerProfile(rec["worker"], rec["eta"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad profile record: {exc}", path, lineno) from None
    return out
