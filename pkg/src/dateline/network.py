"""Instance-dependent scores ``lam_i = exp(f(x_i))`` from a small tanh network.

``f`` has one hidden tanh layer of width ``h`` and a linear scalar output.
With ``h = 0`` the network is linear, ``f(x) = w.x + b``; on one-hot features
that gives one free log-score per object.

Parameters are kept in one flat vector laid out as::

    h > 0:  [W1 (h*m, row-major), b1 (h), w2 (h), b2]
    h = 0:  [w (m), b]

so the output bias is always the last entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DivergenceError
from .uncertainty import eta_matrix


@dataclass
class ScoreModel:
    widths: tuple
    params: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        m, h, out = (int(x) for x in self.widths)
        if m < 1 or h < 0 or out != 1:
            raise ValueError(f"widths must be [m>=1, h>=0, 1], got {list(self.widths)}")
        self.widths = (m, h, 1)
        self.params = np.array(self.params, dtype=np.float64)
        if self.params.shape != (n_params(m, h),):
            raise ValueError(
                f"expected {n_params(m, h)} parameters for widths {list(self.widths)}, "
                f"got {self.params.size}"
            )
        if not np.all(np.isfinite(self.params)):
            raise ValueError("parameters must be finite")

    @property
    def hidden(self) -> int:
        return self.widths[1]

    def unpack(self, params=None):
        """Views ``(W1, b1, w2, b2)``; for a linear model ``W1`` is the weight row."""
        p = self.params if params is None else params
        m, h, _ = self.widths
        if h == 0:
            return p[:m].reshape(1, m), None, None, p[m]
        W1 = p[: h * m].reshape(h, m)
        b1 = p[h * m: h * m + h]
        w2 = p[h * m + h: h * m + 2 * h]
        return W1, b1, w2, p[-1]

    def copy(self):
        return ScoreModel(self.widths, self.params.copy(), self.seed)


def n_params(m: int, h: int) -> int:
    return m + 1 if h == 0 else h * m + 2 * h + 1


def init_model(m: int, hidden: int = 16, seed: int = 0) -> ScoreModel:
    """Weights uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``, biases zero."""
    rng = np.random.default_rng(seed)
    if hidden == 0:
        s = 1.0 / np.sqrt(m)
        params = np.concatenate([rng.uniform(-s, s, m), [0.0]])
    else:
        s1, s2 = 1.0 / np.sqrt(m), 1.0 / np.sqrt(hidden)
        params = np.concatenate([
            rng.uniform(-s1, s1, hidden * m),
            np.zeros(hidden),
            rng.uniform(-s2, s2, hidden),
            [0.0],
        ])
    return ScoreModel((m, hidden, 1), params, seed)


def _features(model, catalog):
    X = catalog.features if hasattr(catalog, "features") else np.asarray(catalog, np.float64)
    if X.ndim != 2 or X.shape[1] != model.widths[0]:
        raise ValueError(f"feature dimension {X.shape[-1]} does not match model input {model.widths[0]}")
    return X


def log_scores(model: ScoreModel, catalog, params=None):
    """Network outputs ``f(x_i)`` for every object, plus the hidden activations."""
    X = _features(model, catalog)
    W1, b1, w2, b2 = model.unpack(params)
    if model.hidden == 0:
        return X @ W1[0] + b2, None
    H = np.tanh(X @ W1.T + b1)
    return H @ w2 + b2, H


def score_forward(model: ScoreModel, catalog):
    """Scores ``exp(f(x_i))`` for the whole catalog."""
    f, _ = log_scores(model, catalog)
    lam = np.exp(f)
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise FloatingPointError("score network produced non-finite or zero scores")
    return lam


def backprop(model: ScoreModel, catalog, grad_f, H=None, params=None):
    """Pull a gradient with respect to the log-scores back to the parameters."""
    X = _features(model, catalog)
    W1, b1, w2, b2 = model.unpack(params)
    if model.hidden == 0:
        return np.concatenate([X.T @ grad_f, [grad_f.sum()]])
    if H is None:
        H = np.tanh(X @ W1.T + b1)
    g_pre = np.outer(grad_f, w2) * (1.0 - H * H)
    return np.concatenate([
        (g_pre.T @ X).ravel(),
        g_pre.sum(axis=0),
        H.T @ grad_f,
        [grad_f.sum()],
    ])


def loglik_gradient(model: ScoreModel, dataset, profiles, backend=None):
    """Weighted log-likelihood of ``dataset`` and its gradient in the parameters.

    Returns ``(loglik, grad_params)``; ``grad_params`` follows the flat layout
    of ``model.params``.
    """
    f, H = log_scores(model, dataset.catalog)
    if not np.all(np.isfinite(f)):
        raise DivergenceError(0, "network output")
    ll, gu, _, _ = kernels.weighted_loglik(
        f, dataset.packed(), eta_matrix(dataset, profiles), backend=backend
    )
    g = backprop(model, dataset.catalog, gu, H)
    if not (np.isfinite(ll) and np.all(np.isfinite(g))):
        raise DivergenceError(0, "gradient")
    return ll, g


def save_checkpoint(model: ScoreModel, path, centering: float = 0.0, log_scores=None):
    """Write the model as one JSON document.

    Floats are written with ``repr`` (what ``json`` does), which round-trips
    doubles exactly. ``log_scores`` optionally stores the centred fitted
    log-scores of the catalog the model was fitted on.
    """
    doc = {
        "widths": list(model.widths),
        "params": [float(x) for x in model.params],
        "seed": model.seed,
        "centering": float(centering),
    }
    if log_scores is not None:
        doc["log_scores"] = [float(x) for x in log_scores]
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_checkpoint(path):
    """Returns ``(model, document)``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return ScoreModel(tuple(doc["widths"]), doc["params"], doc.get("seed")), doc
