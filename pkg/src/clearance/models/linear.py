"""Penalized logistic regression (ridge, lasso, elastic net).

Objective, with the intercept left unpenalized::

    mean(log(1 + exp(m)) - y*m) + (1/C) * (a*|w|_1 + (1-a)/2*|w|_2^2)

where ``a`` is 0 for ridge, 1 for lasso and ``l1_ratio`` for elastic net.
Solved with FISTA (accelerated proximal gradient) using backtracking on
the Lipschitz estimate and function-value restarts.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .ensemble import sigmoid
from .params import Hyperparameters

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float
    penalty: str
    C: float
    l1_ratio: float
    n_iter: int = 0
    converged: bool = True
    params: Hyperparameters | None = None
    schema_digest: str | None = None
    algorithm: str = "ridge"

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def predict_margin(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} feature columns, got {X.shape[1]}")
        return X @ self.weights + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.predict_margin(X))

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return self.predict_proba(X) >= threshold


def l1_share(penalty: str, l1_ratio: float) -> float:
    if penalty == "l2":
        return 0.0
    if penalty == "l1":
        return 1.0
    if penalty == "elasticnet":
        if not 0.0 <= l1_ratio <= 1.0:
            raise ValueError("l1_ratio must lie in [0, 1]")
        return float(l1_ratio)
    raise ValueError(f"unknown penalty {penalty!r}")


def _smooth(w, b, X, y, ridge):
    m = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, m) - y * m))
    return loss + 0.5 * ridge * float(w @ w)


def _smooth_grad(w, b, X, y, ridge):
    r = (sigmoid(X @ w + b) - y) / X.shape[0]
    return X.T @ r + ridge * w, float(r.sum())


def objective(w, b, X, y, penalty="l2", C=1.0, l1_ratio=0.5) -> float:
    a = l1_share(penalty, l1_ratio)
    w = np.asarray(w, dtype=np.float64)
    return _smooth(w, b, X, y, (1.0 - a) / C) + a / C * float(np.abs(w).sum())


def objective_gradient(w, b, X, y, penalty="l2", C=1.0, l1_ratio=0.5):
    """Gradient of :func:`objective` wherever it is differentiable (no zero weights under L1)."""
    a = l1_share(penalty, l1_ratio)
    w = np.asarray(w, dtype=np.float64)
    gw, gb = _smooth_grad(w, b, X, y, (1.0 - a) / C)
    return gw + a / C * np.sign(w), gb


def fit_penalized_logistic(X, y, h: Hyperparameters, tol: float = 1e-10,
                           max_iter: int = 10_000) -> LinearModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    if h.C <= 0:
        raise ValueError("C must be positive")
    n, p = X.shape
    a = l1_share(h.penalty, h.l1_ratio)
    ridge, lasso = (1.0 - a) / h.C, a / h.C

    def full(w, b):
        return _smooth(w, b, X, y, ridge) + lasso * float(np.abs(w).sum())

    w = np.zeros(p)
    b = 0.0
    zw, zb = w.copy(), b
    t_mom = 1.0
    L = 1.0
    f_prev = full(w, b)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        fz = _smooth(zw, zb, X, y, ridge)
        gw, gb = _smooth_grad(zw, zb, X, y, ridge)
        while True:
            step = 1.0 / L
            nw = zw - step * gw
            nw = np.sign(nw) * np.maximum(np.abs(nw) - step * lasso, 0.0)
            nb = zb - step * gb
            dw, db = nw - zw, nb - zb
            quad = fz + gw @ dw + gb * db + 0.5 * L * (dw @ dw + db * db)
            if _smooth(nw, nb, X, y, ridge) <= quad + 1e-12 * abs(quad):
                break
            L *= 2.0
        f_new = full(nw, nb)
        if f_new > f_prev:
            # restart momentum from the last iterate
            zw, zb, t_mom = w.copy(), b, 1.0
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        mom = (t_mom - 1.0) / t_next
        zw = nw + mom * (nw - w)
        zb = nb + mom * (nb - b)
        done = abs(f_prev - f_new) <= tol * max(1.0, abs(f_new))
        w, b, f_prev, t_mom = nw, nb, f_new, t_next
        L = max(L * 0.9, 1e-8)
        if done:
            converged = True
            break
    if not converged:
        logger.warning("penalized logistic did not converge in %d iterations", max_iter)
    return LinearModel(w, float(b), h.penalty, h.C, h.l1_ratio, it, converged, h,
                       algorithm=h.algorithm)
