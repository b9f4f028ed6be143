"""Model registry and forward-chaining cross-validation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..impute import TrainConfig
from .design import DEFAULT_HORIZONS, DEFAULT_LAGS, DesignMatrix, make_lagged, pooled_scaler, \
    standardize, standardize_target
from .kernel import KERNEL_CONFIG, fit_kernel_exog, fit_kernel_masked, kernel_predict
from .linear import fit_enet, fit_lasso, fit_ols_or_ridge, fit_ridge, fit_tv

MODEL_NAMES = ("static", "ols", "lasso", "ridge", "enet", "tv", "kernel", "kernel_exog")
LINEAR_MODELS = ("ols", "lasso", "ridge", "enet", "tv")
DEFAULT_PARAMS = {
    "lasso": {"lambda": 1.0},
    "ridge": {"lambda": 1.0},
    "enet": {"alpha": 1.0, "lambda": 0.5},
    "tv": {"lambda": 1.0},
    "kernel": {"learning_rate": KERNEL_CONFIG.learning_rate, "epochs": KERNEL_CONFIG.epochs,
               "batch_size": KERNEL_CONFIG.batch_size, "seed": KERNEL_CONFIG.seed, "l2": KERNEL_CONFIG.l2},
}


class FoldError(ValueError):
    pass


def predict_static(X, M):
    """Most recent observed lag per row; NaN where no lag is observed."""
    X = np.asarray(X, float)
    M = np.asarray(M, bool)
    m = X.shape[1]
    last = m - 1 - np.argmax(M[:, ::-1], axis=1)
    out = X[np.arange(X.shape[0]), last]
    return np.where(M.any(axis=1), out, np.nan)


@dataclass(frozen=True)
class Model:
    """``fit_predict(train, test) -> (predictions, FitResult or None)``."""

    name: str
    fit_predict: Callable
    uses_incomplete: bool = False


def _linear(name, fit):
    def run(train: DesignMatrix, test: DesignMatrix):
        tr = train.rows(train.complete_bg)
        if tr.n == 0:
            raise FoldError(f"{name}: training fold holds no complete rows")
        sx, keep = standardize(tr.X)
        sy = standardize_target(tr.y)
        res = fit(sx.transform(tr.X)[:, keep], sy.transform(tr.y))
        w = np.zeros(train.m)
        w[keep] = res.w
        res.w = w
        res.params = dict(res.params, x_mean=sx.mean.tolist(), x_scale=sx.scale.tolist(),
                          y_mean=float(sy.mean), y_scale=float(sy.scale))
        return sy.inverse(sx.transform(test.X) @ w), res
    return Model(name, run)


def _kernel(name, config: TrainConfig, exog: bool):
    def run(train: DesignMatrix, test: DesignMatrix):
        tr = train.rows(train.M.any(axis=1))
        if tr.n == 0:
            raise FoldError(f"{name}: training fold holds no row with an observed lag")
        sc = pooled_scaler(tr)
        Xs = np.where(tr.M, sc.transform(tr.X), 0.0)
        Xt = np.where(test.M, sc.transform(test.X), 0.0)
        if exog:
            if tr.X_exog is None:
                raise FoldError(f"{name}: design matrix carries no exogenous channel")
            res = fit_kernel_exog(Xs, tr.M, tr.X_exog, tr.M_exog, sc.transform(tr.y), config)
            Xt = np.hstack([Xt, test.X_exog])
            Mt = np.hstack([test.M, test.M_exog])
        else:
            res = fit_kernel_masked(Xs, tr.M, sc.transform(tr.y), config)
            Mt = test.M
        pred, _ = kernel_predict(res.w, Xt, Mt)
        res.params = dict(res.params, scale_mean=float(sc.mean), scale_sd=float(sc.scale))
        return sc.inverse(pred), res
    return Model(name, run, uses_incomplete=True)


def _static(train, test):
    return predict_static(test.X, test.M), None


def make_model(name: str, params: dict | None = None) -> Model:
    p = dict(DEFAULT_PARAMS.get(name, {}))
    p.update((params or {}).get(name, {}))
    if name == "static":
        return Model("static", _static)
    if name == "ols":
        return _linear(name, fit_ols_or_ridge)
    if name == "ridge":
        return _linear(name, lambda X, y: fit_ridge(X, y, p["lambda"]))
    if name == "lasso":
        return _linear(name, lambda X, y: fit_lasso(X, y, p["lambda"]))
    if name == "enet":
        return _linear(name, lambda X, y: fit_enet(X, y, p["alpha"], p["lambda"]))
    if name == "tv":
        return _linear(name, lambda X, y: fit_tv(X, y, p["lambda"]))
    if name in ("kernel", "kernel_exog"):
        kp = dict(DEFAULT_PARAMS["kernel"])
        kp.update((params or {}).get("kernel", {}))
        kp.update((params or {}).get(name, {}) if name != "kernel" else {})
        return _kernel(name, TrainConfig(**kp), exog=name == "kernel_exog")
    raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")


def fold_edges(n_bins: int, n_folds: int):
    if n_folds < 1:
        raise ValueError("need at least one fold")
    return np.linspace(0, n_bins, n_folds + 2).round().astype(np.int64)


def rmse(pred, y):
    pred = np.asarray(pred, float)
    y = np.asarray(y, float)
    if y.size == 0:
        return float("nan")
    return float(np.sqrt(np.mean((pred - y) ** 2)))


@dataclass
class CVResult:
    rows: list = field(default_factory=list)  # (model, horizon, fold, rmse, n_test)

    def mean(self, model, horizon):
        v = [r[3] for r in self.rows if r[0] == model and r[1] == horizon and not math.isnan(r[3])]
        return float(np.mean(v)) if v else float("nan")

    def summary(self):
        keys = sorted({(r[0], r[1]) for r in self.rows}, key=lambda k: (MODEL_NAMES.index(k[0])
                                                                         if k[0] in MODEL_NAMES else 99, k[0], k[1]))
        return [(m, h, self.mean(m, h)) for m, h in keys]


def split_fold(D: DesignMatrix, edges, f):
    """Train on origins before the test block whose targets also precede it;
    test on complete rows of the block."""
    start, stop = edges[f + 1], edges[f + 2]
    train = (D.t < start) & (D.t + D.horizon_bins < start)
    test = (D.t >= start) & (D.t < stop) & D.complete_bg
    return D.rows(np.flatnonzero(train)), D.rows(np.flatnonzero(test))


def cross_validate(bg, mask, models, horizons=DEFAULT_HORIZONS, m: int = DEFAULT_LAGS, n_folds: int = 5,
                   exog=None, params=None) -> CVResult:
    """Mean-over-folds RMSE (mg/dl) for every (model, horizon)."""
    models = [mm if isinstance(mm, Model) else make_model(mm, params) for mm in models]
    n_bins = np.asarray(bg).size
    edges = fold_edges(n_bins, n_folds)
    out = CVResult()
    for h in horizons:
        D = make_lagged(bg, mask, m, h, exog=exog)
        for f in range(n_folds):
            train, test = split_fold(D, edges, f)
            scores = {}
            try:
                if train.n == 0:
                    raise FoldError("no training rows; use fewer folds or a longer series")
                if test.n:
                    for model in models:
                        pred, _ = model.fit_predict(train, test)
                        scores[model.name] = rmse(pred, test.y)
            except FoldError as exc:
                # folds stay paired across models: one unfit model voids the fold
                warnings.warn(f"fold {f} at horizon {h} skipped: {exc}", RuntimeWarning)
                scores = {}
            for model in models:
                out.rows.append((model.name, h, f, scores.get(model.name, float("nan")), int(test.n)))
    out.rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return out


def fit_all(bg, mask, models, horizons=DEFAULT_HORIZONS, m: int = DEFAULT_LAGS, exog=None, params=None):
    """Fit each model on the whole series; returns {(model, horizon): FitResult}.

    Models without parameters (static) or without usable rows are left out;
    the latter with a warning.
    """
    fits = {}
    for h in horizons:
        D = make_lagged(bg, mask, m, h, exog=exog)
        for name in models:
            model = make_model(name, params)
            try:
                _, res = model.fit_predict(D, D.rows(np.zeros(0, dtype=np.int64)))
            except FoldError as exc:
                warnings.warn(f"horizon {h}: {exc}", RuntimeWarning)
                continue
            if res is not None:
                fits[(name, h)] = res
    return fits
