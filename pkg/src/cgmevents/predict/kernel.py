"""Masked weighted-average regression: yhat = w'x / w'delta, fitted by SGD.

Unobserved lags contribute zero to the numerator and their mask zero to
the denominator. Rows whose denominator is within DEN_GUARD of zero are
skipped at that step, never patched with an epsilon.

The prediction is invariant to rescaling w, so the gradient is orthogonal
to w and raw SGD steadily inflates ||w||, while sign flips drag rows across
the poles w'delta = 0. Each step therefore clips the batch gradient norm and
retracts w back to its starting norm; neither changes what is predicted.
"""
from __future__ import annotations

import numpy as np

from ..impute import TrainConfig
from .linear import FitResult

DEN_GUARD = 1e-6
GRAD_CLIP = 1.0


class DivergenceError(RuntimeError):
    pass


KERNEL_CONFIG = TrainConfig(learning_rate=0.2, epochs=40, batch_size=64, seed=0)


def kernel_predict(w, X, M):
    """Predictions and a validity flag (False where |w'delta| < guard)."""
    X = np.asarray(X, float)
    M = np.asarray(M, float)
    den = M @ w
    ok = np.abs(den) >= DEN_GUARD
    pred = np.full(X.shape[0], np.nan)
    pred[ok] = (X[ok] @ w) / den[ok]
    return pred, ok


def kernel_loss_and_grad(w, X, M, y):
    """Mean squared error over guarded rows and its gradient in w."""
    X = np.asarray(X, float)
    M = np.asarray(M, float)
    pred, ok = kernel_predict(w, X, M)
    if not ok.any():
        return float("nan"), np.zeros_like(w), 0
    Xo, Mo, yo, po = X[ok], M[ok], np.asarray(y, float)[ok], pred[ok]
    den = Mo @ w
    r = po - yo
    g = (2.0 * r / den)[:, None] * (Xo - po[:, None] * Mo)
    return float(np.mean(r * r)), g.mean(axis=0), int(ok.sum())


def _sgd(X, M, y, w0, config: TrainConfig):
    if X.shape[0] == 0:
        raise ValueError("no training rows")
    w = np.array(w0, dtype=float)
    radius = float(np.linalg.norm(w))
    rng = np.random.default_rng(config.seed)
    n = X.shape[0]
    losses = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        used = 0
        for s in range(0, n, config.batch_size):
            b = perm[s:s + config.batch_size]
            _, g, k = kernel_loss_and_grad(w, X[b], M[b], y[b])
            if k == 0:
                continue
            used += k
            g = g + config.l2 * w
            gn = float(np.linalg.norm(g))
            if gn > GRAD_CLIP:
                g *= GRAD_CLIP / gn
            w -= config.learning_rate * g
            w *= radius / np.linalg.norm(w)
        if used == 0:
            raise DivergenceError(f"every row hit the |w'delta| < {DEN_GUARD} guard in epoch {epoch}")
        if not np.all(np.isfinite(w)):
            raise DivergenceError(f"weights became non-finite in epoch {epoch}")
        losses.append(kernel_loss_and_grad(w, X, M, y)[0])
    return w, losses


def fit_kernel_masked(X, M, y, config: TrainConfig = KERNEL_CONFIG) -> FitResult:
    """Start from uniform weights (the plain mean of observed lags) and descend."""
    X = np.asarray(X, float)
    M = np.asarray(M, float)
    w, losses = _sgd(X, M, np.asarray(y, float), np.ones(X.shape[1]), config)
    return FitResult(w, "kernel", {"learning_rate": config.learning_rate, "epochs": config.epochs,
                                   "batch_size": config.batch_size, "seed": config.seed},
                     losses[-1], config.epochs, True)


def fit_kernel_exog(X, M, Xe, Me, y, config: TrainConfig = KERNEL_CONFIG) -> FitResult:
    """Same model with exogenous indicator lags appended; their weights start at 0
    so the initial predictor equals the glucose-only one."""
    X = np.hstack([np.asarray(X, float), np.asarray(Xe, float)])
    M = np.hstack([np.asarray(M, float), np.asarray(Me, float)])
    m_bg = np.asarray(X).shape[1] - np.asarray(Xe).shape[1]
    w0 = np.concatenate([np.ones(m_bg), np.zeros(X.shape[1] - m_bg)])
    w, losses = _sgd(X, M, np.asarray(y, float), w0, config)
    return FitResult(w, "kernel_exog", {"learning_rate": config.learning_rate, "epochs": config.epochs,
                                        "batch_size": config.batch_size, "seed": config.seed,
                                        "m_bg": int(m_bg)},
                     losses[-1], config.epochs, True)
