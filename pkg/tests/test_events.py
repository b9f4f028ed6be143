import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgmevents import events
from cgmevents.events import DensityCurve

T0 = 1_483_228_800


def test_single_observation_unique_peak(backend):
    c = events.density([T0 + 1500], 7200, T0, 200, 15, backend=backend)
    assert c.rho.max() == 1.0
    assert np.flatnonzero(c.rho == c.rho.max()).tolist() == [100]
    assert events.find_event_peaks(c).tolist() == [100]


def test_density_matches_direct_sum(backend):
    rng = np.random.default_rng(0)
    t = T0 + rng.integers(0, 86400, 300)
    c = events.density(t, 3600, T0, 5760, 15, backend=backend)
    y = c.times[::97]
    direct = np.exp(-((y[:, None] - t[None, :]) / 3600.0) ** 2).sum(axis=1)
    assert np.allclose(c.rho[::97], direct, rtol=1e-12, atol=1e-250)


def test_density_errors():
    with pytest.raises(ValueError):
        events.density([], 7200, T0, 10)
    with pytest.raises(ValueError):
        events.density([T0], 0, T0, 10)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 86400), min_size=1, max_size=60), st.integers(-10**6, 10**6))
def test_translation_equivariance(offsets, shift):
    shift *= 15
    t = T0 + np.array(offsets)
    a = events.density(t, 7200, T0, 5760)
    b = events.density(t + shift, 7200, T0 + shift, 5760)
    assert np.array_equal(a.rho, b.rho)
    assert np.array_equal(events.find_event_peaks(a), events.find_event_peaks(b))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=3, max_size=40), st.floats(0.01, 100))
def test_peaks_invariant_under_rescaling(rho, c):
    rho = np.array(rho)
    times = np.arange(rho.size) * 15
    a = events.find_event_peaks(DensityCurve(times, rho, 1.0), 60, 0.0)
    b = events.find_event_peaks(DensityCurve(times, rho * c, 1.0), 60, 0.0)
    assert np.array_equal(a, b)


def test_local_maxima_rules():
    assert events.local_maxima(np.arange(10.0)).size == 0
    assert events.local_maxima([0, 1, 2, 2, 2, 1, 0]).tolist() == [2]
    assert events.local_maxima([3, 1, 3]).size == 0
    assert events.local_maxima([0, 2, 2, 3, 1]).tolist() == [3]


def test_close_peaks_merge_to_higher():
    times = np.arange(0, 7200, 60)
    rho = np.exp(-((times - 3000) / 200.0) ** 2) + 1.5 * np.exp(-((times - 3600) / 200.0) ** 2)
    peaks = events.find_event_peaks(DensityCurve(times, rho, 1.0), 3600, 0.0)
    assert peaks.tolist() == [60]


def test_min_density_filter():
    times = np.arange(0, 3000, 60)
    rho = 0.4 * np.exp(-((times - 1500) / 200.0) ** 2)
    assert events.find_event_peaks(DensityCurve(times, rho, 1.0), 0, 0.5).size == 0


def test_aligned_windows():
    bg = 100.0 + np.arange(50)
    mask = np.ones(50, bool)
    w = events.align_bg_windows([T0 + 300 * 5], bg, mask, T0)
    assert w.values.shape == (1, 24) and w.mask.all()
    assert w.values[0, 0] == 105.0
    w = events.align_bg_windows([T0 + 300 * 40], bg, mask, T0)
    assert w.mask[0].sum() == 10 and not w.mask[0, 10:].any()
    assert w.column_minutes[-1] == 115


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_window_row_sums_and_stats_bounds(seed, n_events):
    rng = np.random.default_rng(seed)
    bg = rng.uniform(60, 250, 400)
    mask = rng.random(400) < 0.7
    peaks = T0 + rng.integers(-20, 420, n_events) * 300
    w = events.align_bg_windows(peaks, bg, mask, T0)
    assert (w.mask.sum(axis=1) <= 24).all()
    mean, std, n_rows, n = events.hotspot_stats(w)
    assert n_rows == n_events
    for j in range(24):
        col = w.values[w.mask[:, j], j]
        if col.size:
            assert col.min() - 1e-9 <= mean[j] <= col.max() + 1e-9
        else:
            assert np.isnan(mean[j])
        if col.size < 2:
            assert np.isnan(std[j])


def test_stats_hand_arithmetic():
    vals = np.vstack([np.full(24, 100.0), np.full(24, 120.0)])
    w = events.AlignedWindows(vals, np.ones((2, 24), bool), np.zeros(2, dtype=np.int64))
    mean, std, _, _ = events.hotspot_stats(w)
    assert np.allclose(mean, 110) and np.allclose(std, 10)
    w = events.AlignedWindows(vals[[0, 0]], np.ones((2, 24), bool), np.zeros(2, dtype=np.int64))
    assert np.allclose(events.hotspot_stats(w)[1], 0)


def test_hotspot_events_sorted():
    t = np.concatenate([T0 + 3600 + np.arange(0, 1800, 60), T0 + 3000 + np.arange(0, 1800, 60)])
    labels = np.array([1] * 30 + [0] * 30)
    ev = events.hotspot_events(t, labels, T0, 1000)
    assert [e.hotspot_id for e in ev] == [0, 1]
    assert all(e.peak_time % 15 == 0 for e in ev)
