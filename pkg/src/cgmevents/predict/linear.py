"""Least squares with L1, squared-L2, elastic and total-variation penalties.

All objectives share the Gram form
    f(w) = ||Xw - y||^2 + sum_j l1_j |w_j| + l2sq ||w||^2 + group ||w||_2
and the iterative ones go through one coordinate-descent kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels

CD_TOL = 1e-8
CD_STEP_TOL = 1e-10
CD_MAX_SWEEPS = 100000
SINGULAR_COND = 1e12


class SingularDesignError(np.linalg.LinAlgError):
    pass


@dataclass
class FitResult:
    w: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)
    objective: float = float("nan")
    iterations: int = 0
    converged: bool = True

    def to_json(self):
        return {"kind": self.kind, "params": self.params, "w": [float(x) for x in self.w],
                "objective": float(self.objective), "iterations": int(self.iterations),
                "converged": bool(self.converged)}


def objective(X, y, w, l1=0.0, l2sq=0.0, group=0.0):
    X = np.asarray(X, float)
    w = np.asarray(w, float)
    r = X @ w - y
    l1 = np.broadcast_to(np.asarray(l1, float), w.shape)
    return float(r @ r + l1 @ np.abs(w) + l2sq * (w @ w) + group * np.sqrt(w @ w))


def _gram(X, y):
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return X.T @ X, X.T @ y, float(y @ y)


def _cd(X, y, l1, l2sq=0.0, group=0.0, w0=None, tol=CD_TOL, step_tol=CD_STEP_TOL,
        max_sweeps=CD_MAX_SWEEPS, backend=None):
    G, q, yy = _gram(X, y)
    m = q.size
    l1 = np.ascontiguousarray(np.broadcast_to(np.asarray(l1, float), (m,)))
    w0 = np.zeros(m) if w0 is None else np.ascontiguousarray(w0, dtype=float)
    impl = backend or kernels.impl
    return impl.cd_solve(np.ascontiguousarray(G), np.ascontiguousarray(q), yy, l1, float(l2sq), float(group),
                         w0, float(tol), float(step_tol), int(max_sweeps))


def fit_ols(X, y) -> FitResult:
    """Normal equations; raises SingularDesignError on a (near) singular Gram matrix."""
    G, q, _ = _gram(X, y)
    if G.size == 0 or np.linalg.cond(G) > SINGULAR_COND:
        raise SingularDesignError("normal matrix is singular; fall back to ridge with a tiny lambda")
    w = np.linalg.solve(G, q)
    return FitResult(w, "ols", {}, objective(X, y, w))


def fit_ridge(X, y, lam: float = 1.0, method: str = "closed") -> FitResult:
    """(X'X + lam I)^-1 X'y, or the same objective by coordinate descent."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if method == "closed":
        G, q, _ = _gram(X, y)
        w = np.linalg.solve(G + lam * np.eye(q.size), q)
        return FitResult(w, "ridge", {"lambda": lam}, objective(X, y, w, l2sq=lam))
    if method == "cd":
        w, f, it, ok = _cd(X, y, 0.0, l2sq=lam)
        return FitResult(np.asarray(w), "ridge", {"lambda": lam}, f, it, ok)
    raise ValueError(f"unknown ridge method {method!r}")


def fit_ols_or_ridge(X, y) -> FitResult:
    try:
        return fit_ols(X, y)
    except SingularDesignError:
        res = fit_ridge(X, y, 1e-8)
        res.kind = "ols"
        res.params = {"fallback_ridge_lambda": 1e-8}
        return res


def fit_lasso(X, y, lam: float = 1.0) -> FitResult:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    w, f, it, ok = _cd(X, y, lam)
    return FitResult(np.asarray(w), "lasso", {"lambda": lam}, f, it, ok)


def enet_start(G, q, l1, group):
    """Zero if it is optimal, else the best point along the soft-thresholded
    gradient direction; the non-smooth norm makes w = 0 a trap for plain CD."""
    d = np.sign(2 * q) * np.maximum(np.abs(2 * q) - l1, 0.0)
    nd = float(np.linalg.norm(d))
    if nd <= group:
        return np.zeros_like(q), True
    quad = float(d @ G @ d)
    lin = float(d @ d) - group * nd
    t = lin / (2.0 * quad) if quad > 0 else 0.0
    return t * d, False


def fit_enet(X, y, alpha: float = 1.0, lam: float = 0.5) -> FitResult:
    """||Xw - y||^2 + alpha * (||w||_2 + lam * ||w||_1), norms as written (the L2 term is not squared)."""
    if alpha < 0 or lam < 0:
        raise ValueError("alpha and lambda must be >= 0")
    G, q, _ = _gram(X, y)
    l1 = np.full(q.size, alpha * lam)
    w0, zero = enet_start(G, q, l1, alpha)
    params = {"alpha": alpha, "lambda": lam}
    if zero:
        return FitResult(w0, "enet", params, objective(X, y, w0), 0, True)
    w, f, it, ok = _cd(X, y, l1, group=alpha, w0=w0)
    return FitResult(np.asarray(w), "enet", params, f, it, ok)


def difference_basis(m: int):
    """T with w = T v, v = (base, d_1, ..., d_{m-1}): w_j = base + sum_{i<=j} d_i."""
    return np.tril(np.ones((m, m)))


def fit_tv(X, y, lam: float = 1.0) -> FitResult:
    """||Xw - y||^2 + lam * sum_j |w_{j+1} - w_j| via a Lasso on differences."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    X = np.asarray(X, float)
    m = X.shape[1]
    T = difference_basis(m)
    l1 = np.full(m, float(lam))
    l1[0] = 0.0  # the base level is free
    v, f, it, ok = _cd(X @ T, y, l1)
    return FitResult(T @ np.asarray(v), "tv", {"lambda": lam}, f, it, ok)


def tv_objective(X, y, w, lam):
    r = np.asarray(X, float) @ w - y
    return float(r @ r + lam * np.abs(np.diff(w)).sum())
