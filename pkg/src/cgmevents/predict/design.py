"""Lagged design matrices and train-fold scaling."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..core import CGM_STEP_S

DEFAULT_LAGS = 12
DEFAULT_HORIZONS = (15, 30, 60)


@dataclass(frozen=True)
class DesignMatrix:
    """Rows are forecast origins t; column j holds bg[t - (m-1-j)] so the
    newest reading sits in the last column."""

    X: np.ndarray
    M: np.ndarray
    y: np.ndarray
    t: np.ndarray  # origin bin index of each row
    horizon_min: int
    step_s: int = CGM_STEP_S
    X_exog: Optional[np.ndarray] = None
    M_exog: Optional[np.ndarray] = None

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def m(self):
        return self.X.shape[1]

    @property
    def horizon_bins(self):
        return self.horizon_min * 60 // self.step_s

    @property
    def complete(self):
        ok = self.M.all(axis=1)
        if self.M_exog is not None:
            ok &= self.M_exog.all(axis=1)
        return ok

    @property
    def complete_bg(self):
        return self.M.all(axis=1)

    def rows(self, idx) -> "DesignMatrix":
        sub = dict(X=self.X[idx], M=self.M[idx], y=self.y[idx], t=self.t[idx])
        if self.X_exog is not None:
            sub.update(X_exog=self.X_exog[idx], M_exog=self.M_exog[idx])
        return replace(self, **sub)


def _lagged(v, mask, origins, m):
    cols = origins[:, None] - (m - 1) + np.arange(m)[None, :]
    M = mask[cols]
    X = np.where(M, v[cols], 0.0)
    return X, M


def make_lagged(bg, mask, m: int = DEFAULT_LAGS, horizon_min: int = 30, step_s: int = CGM_STEP_S,
                exog=None) -> DesignMatrix:
    """Lag features over the CGM series; rows whose target is unobserved are dropped."""
    bg = np.asarray(bg, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if m < 1:
        raise ValueError("need at least one lag")
    if (horizon_min * 60) % step_s:
        raise ValueError("horizon must be a multiple of the CGM step")
    h = horizon_min * 60 // step_s
    n = bg.size
    if n < m + h:
        raise ValueError(f"series of {n} bins is shorter than {m} lags + {h} horizon bins")
    origins = np.arange(m - 1, n - h, dtype=np.int64)
    origins = origins[mask[origins + h]]
    X, M = _lagged(bg, mask, origins, m)
    D = DesignMatrix(X, M, bg[origins + h], origins, horizon_min, step_s)
    if exog is not None:
        ev, em = exog
        Xe, Me = _lagged(np.asarray(ev, dtype=float), np.asarray(em, dtype=bool), origins, m)
        D = replace(D, X_exog=Xe, M_exog=Me)
    return D


@dataclass(frozen=True)
class Scaler:
    """Affine map (x - mean) / scale, per column or pooled."""

    mean: np.ndarray
    scale: np.ndarray

    def transform(self, x):
        return (x - self.mean) / self.scale

    def inverse(self, z):
        return z * self.scale + self.mean


def standardize(X):
    """Per-feature scaler fitted on training rows; zero-variance columns are
    reported in ``keep`` = False and should be dropped by the caller."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("cannot standardise an empty training fold")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    keep = sd > 0
    if not keep.all():
        warnings.warn(f"dropping zero-variance features {np.flatnonzero(~keep).tolist()}", RuntimeWarning)
    return Scaler(mean, np.where(keep, sd, 1.0)), keep


def standardize_target(y):
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("cannot standardise an empty training fold")
    sd = y.std()
    return Scaler(np.asarray(y.mean()), np.asarray(sd if sd > 0 else 1.0))


def pooled_scaler(D: DesignMatrix):
    """One mean and scale over every observed glucose value of the fold."""
    vals = np.concatenate([D.X[D.M], D.y])
    if vals.size == 0:
        raise ValueError("cannot standardise an empty training fold")
    sd = vals.std()
    return Scaler(np.asarray(vals.mean()), np.asarray(sd if sd > 0 else 1.0))
