"""Visit events from fix timestamps: Gaussian KDE, peak picking, and
forward-aligned glucose windows per hotspot."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import CGM_STEP_S, SLOT_WIDTH_S

DEFAULT_BANDWIDTH_S = 7200
DEFAULT_MIN_SEPARATION_S = 7200
DEFAULT_MIN_DENSITY = 0.5
WINDOW_S = 7200
# exp(-700) underflows to ~1e-304, so kernels are truncated there.
_CUTOFF_FACTOR = math.sqrt(700.0)


@dataclass(frozen=True)
class DensityCurve:
    times: np.ndarray
    rho: np.ndarray
    h: float


@dataclass(frozen=True)
class EventOccurrence:
    hotspot_id: int
    peak_time: int
    peak_density: float


def density(times, h: float, g0: int, n_grid: int, step: int = SLOT_WIDTH_S, backend=None) -> DensityCurve:
    """rho(y) = sum_x exp(-(y - x)^2 / h^2) on the grid g0 + i*step.

    Differences are formed in integer seconds, so shifting both the inputs
    and the grid origin by the same amount leaves rho bit-identical.
    """
    times = np.ascontiguousarray(np.asarray(times, dtype=np.int64))
    if times.size == 0:
        raise ValueError("density of an empty time set")
    if not h > 0:
        raise ValueError("bandwidth h must be > 0")
    impl = backend or kernels.impl
    rho = impl.kde_density(times, int(g0), int(step), int(n_grid), float(h), float(h) * _CUTOFF_FACTOR)
    grid = int(g0) + np.arange(n_grid, dtype=np.int64) * int(step)
    return DensityCurve(grid, np.asarray(rho), float(h))


def local_maxima(rho):
    """Indices of strict interior maxima; a flat top reports its leftmost slot."""
    rho = np.asarray(rho, dtype=float)
    n = rho.size
    if n < 3:
        return np.zeros(0, dtype=np.int64)
    change = np.flatnonzero(np.diff(rho) != 0) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [n]]) - 1
    vals = rho[starts]
    interior = (starts > 0) & (ends < n - 1)
    left_ok = np.zeros(starts.size, dtype=bool)
    right_ok = np.zeros(starts.size, dtype=bool)
    left_ok[1:] = vals[1:] > vals[:-1]
    right_ok[:-1] = vals[:-1] > vals[1:]
    return starts[interior & left_ok & right_ok]


def find_event_peaks(curve: DensityCurve, min_separation: float = DEFAULT_MIN_SEPARATION_S,
                     min_density: float = DEFAULT_MIN_DENSITY):
    """Peak indices into ``curve``, time-ordered.

    Candidates below ``min_density`` are discarded; of any two closer than
    ``min_separation`` only the higher survives (earlier wins exact ties).
    """
    cand = local_maxima(curve.rho)
    cand = cand[curve.rho[cand] >= min_density]
    order = np.lexsort((cand, -curve.rho[cand]))
    kept = []
    for i in cand[order]:
        t = curve.times[i]
        if all(abs(int(t) - int(curve.times[j])) >= min_separation for j in kept):
            kept.append(int(i))
    return np.array(sorted(kept), dtype=np.int64)


def hotspot_events(fix_times, labels, g0: int, n_grid: int, h=DEFAULT_BANDWIDTH_S,
                   min_separation=DEFAULT_MIN_SEPARATION_S, min_density=DEFAULT_MIN_DENSITY,
                   step: int = SLOT_WIDTH_S):
    """Events for every cluster, sorted by (peak_time, hotspot_id)."""
    fix_times = np.asarray(fix_times, dtype=np.int64)
    labels = np.asarray(labels)
    out = []
    for cid in np.unique(labels[labels >= 0]):
        curve = density(fix_times[labels == cid], h, g0, n_grid, step)
        for i in find_event_peaks(curve, min_separation, min_density):
            out.append(EventOccurrence(int(cid), int(curve.times[i]), float(curve.rho[i])))
    out.sort(key=lambda e: (e.peak_time, e.hotspot_id))
    return out


@dataclass(frozen=True)
class AlignedWindows:
    values: np.ndarray  # (n_events, n_cols)
    mask: np.ndarray
    peak_times: np.ndarray
    step_s: int = CGM_STEP_S

    @property
    def column_minutes(self):
        return np.arange(self.values.shape[1]) * self.step_s // 60


def align_bg_windows(peak_times, bg, bg_mask, t0: int, width_s: int = WINDOW_S,
                     step_s: int = CGM_STEP_S) -> AlignedWindows:
    """Row i holds the CGM bins at peak_i + j*step for j < width/step."""
    peak_times = np.asarray(peak_times, dtype=np.int64)
    bg = np.asarray(bg, dtype=float)
    bg_mask = np.asarray(bg_mask, dtype=bool)
    n_cols = width_s // step_s
    cols = np.arange(n_cols, dtype=np.int64)
    bins = (peak_times[:, None] - t0) // step_s + cols[None, :]
    ok = (bins >= 0) & (bins < bg.size)
    safe = np.where(ok, bins, 0)
    mask = ok & bg_mask[safe]
    values = np.where(mask, bg[safe], 0.0)
    return AlignedWindows(values, mask, peak_times, step_s)


def hotspot_stats(w: AlignedWindows):
    """Column-wise masked mean and population std; NaN where undefined."""
    if w.values.shape[0] == 0:
        raise ValueError("hotspot_stats needs at least one window")
    n = w.mask.sum(axis=0)
    s = np.where(w.mask, w.values, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(n > 0, s / np.maximum(n, 1), np.nan)
        dev = np.where(w.mask, w.values - mean[None, :], 0.0)
        var = (dev * dev).sum(axis=0) / np.maximum(n, 1)
    std = np.where(n >= 2, np.sqrt(var), np.nan)
    return mean, std, int(w.values.shape[0]), n
