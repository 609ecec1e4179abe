"""Stagewise Plackett-Luce likelihood and exact sequential sampling.

A ranking is read as a sequence of stages. At each stage the next object is
picked from the ones still remaining with probability proportional to its
score. Everything is computed on log-scores so that very large scores
(``exp`` of network outputs) do not overflow.
"""

import math

import numpy as np


def as_scores(lam):
    """Validate a positive, finite score vector and return it as float array."""
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim != 1:
        raise ValueError("score vector must be one-dimensional")
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise ValueError("scores must be strictly positive and finite")
    return lam


def _logsumexp(x):
    m = max(x)
    return m + math.log(math.fsum(math.exp(v - m) for v in x))


def stage_probability(lam, remaining, winner) -> float:
    """Probability that ``winner`` is picked first among ``remaining``."""
    remaining = list(remaining)
    if not remaining:
        raise ValueError("remaining set is empty")
    if winner not in remaining:
        raise ValueError(f"winner {winner} is not among the remaining objects")
    u = np.log(as_scores(lam))
    return math.exp(u[winner] - _logsumexp([u[j] for j in remaining]))


def pl_log_likelihood(lam, ranking) -> float:
    """Log-probability of a full or partial ranking (best first)."""
    ranking = list(ranking)
    if len(set(ranking)) != len(ranking):
        raise ValueError("ranking repeats an object")
    u = np.log(as_scores(lam))
    ru = [float(u[i]) for i in ranking]
    total = 0.0
    for i in range(len(ru) - 1):
        total += ru[i] - _logsumexp(ru[i:])
    return total


def pl_sample(lam, subset, rng) -> list:
    """Draw a ranking of ``subset`` by picking local winners without replacement."""
    subset = list(subset)
    if len(subset) < 2:
        raise ValueError(f"need at least 2 objects to rank, got {len(subset)}")
    lam = as_scores(lam)
    remaining = subset[:]
    out = []
    while len(remaining) > 1:
        w = lam[remaining]
        pick = rng.choice(len(remaining), p=w / w.sum())
        out.append(remaining.pop(pick))
    out.append(remaining[0])
    return out
