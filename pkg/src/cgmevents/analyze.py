"""Lagged correlation between event indicators and later glucose rises."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CGM_STEP_S

RISE_THRESHOLD = 30.0
LAGS_MIN = tuple(range(0, 181, 5))


@dataclass(frozen=True)
class IndicatorSeries:
    values: np.ndarray
    tag: str

    def __post_init__(self):
        v = np.asarray(self.values)
        if not np.all((v == 0) | (v == 1)):
            raise ValueError("indicator values must be 0 or 1")


@dataclass(frozen=True)
class CorrelationCurve:
    tag: str
    lags_min: np.ndarray
    r: np.ndarray
    n_valid: np.ndarray


def bg_rise_indicator(bg, mask, lag_min: int, threshold: float = RISE_THRESHOLD, step_s: int = CGM_STEP_S):
    """(indicator, valid): indicator[t] = bg[t+lag] - bg[t] > threshold,
    valid where both ends are observed."""
    bg = np.asarray(bg, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if (lag_min * 60) % step_s:
        raise ValueError("lag must be a multiple of the CGM step")
    L = lag_min * 60 // step_s
    n = bg.size
    ind = np.zeros(n, dtype=np.int8)
    valid = np.zeros(n, dtype=bool)
    if L < n:
        valid[:n - L] = mask[:n - L] & mask[L:]
        rise = bg[L:] - bg[:n - L]
        ind[:n - L] = (valid[:n - L] & (rise > threshold)).astype(np.int8)
    return ind, valid


def pearson(x, y, valid=None) -> float:
    """Pearson r over valid pairs; NaN when fewer than 2 pairs or a variance is 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if valid is not None:
        v = np.asarray(valid, dtype=bool)
        x, y = x[v], y[v]
    if x.size < 2:
        return float("nan")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        return float("nan")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def correlation_curve(indicator: IndicatorSeries, bg, mask, lags_min=LAGS_MIN,
                      threshold: float = RISE_THRESHOLD, step_s: int = CGM_STEP_S) -> CorrelationCurve:
    x = np.asarray(indicator.values, dtype=float)
    rs, ns = [], []
    for lag in lags_min:
        rise, valid = bg_rise_indicator(bg, mask, lag, threshold, step_s)
        rs.append(pearson(x, rise, valid))
        ns.append(int(valid.sum()))
    return CorrelationCurve(indicator.tag, np.asarray(lags_min), np.asarray(rs), np.asarray(ns))


def event_indicator(peak_times, t0: int, n_bins: int, tag: str, step_s: int = CGM_STEP_S) -> IndicatorSeries:
    """1 at the CGM bin holding each event peak."""
    b = (np.asarray(peak_times, dtype=np.int64) - t0) // step_s
    v = np.zeros(n_bins, dtype=np.int8)
    v[b[(b >= 0) & (b < n_bins)]] = 1
    return IndicatorSeries(v, tag)


def stationary_indicator(activity, activity_mask, stationary_code: int, slots_per_bin: int, n_bins: int):
    """1 for CGM bins in which any stationary activity was observed."""
    obs = np.flatnonzero(np.asarray(activity_mask) & (np.asarray(activity) == stationary_code))
    v = np.zeros(n_bins, dtype=np.int8)
    b = obs // slots_per_bin
    v[b[b < n_bins]] = 1
    return IndicatorSeries(v, "stationary")
