"""Measurement types, the uniform slot grid, and geodesic helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

import numpy as np

EARTH_RADIUS_M = 6371000.0
SLOT_WIDTH_S = 15
CGM_STEP_S = 300

# Fixed alphabet; its order is the tie-break order everywhere.
ACTIVITY_CLASSES = (
    "walking",
    "running",
    "cycling",
    "stationary",
    "automotive",
    "stationary_automotive",
    "unknown",
)
N_CLASSES = len(ACTIVITY_CLASSES)
_ALIASES = {"stationaryautomotive": "stationary_automotive"}

WALKING, RUNNING, CYCLING, STATIONARY, AUTOMOTIVE, STATIONARY_AUTOMOTIVE, UNKNOWN = range(N_CLASSES)

GLUCOSE_MIN = 20.0
GLUCOSE_MAX = 600.0


class GridError(ValueError):
    """Invalid grid construction request."""


class IngestError(ValueError):
    """A record failed validation at ingestion."""


def parse_activity(label: str) -> int:
    key = label.strip().lower()
    key = _ALIASES.get(key, key)
    try:
        return ACTIVITY_CLASSES.index(key)
    except ValueError:
        raise IngestError(f"unknown activity label {label!r}") from None


def format_activity(code: int) -> str:
    return ACTIVITY_CLASSES[int(code)]


@dataclass(frozen=True)
class ActivityMeasurement:
    t: int
    label: int

    def __post_init__(self):
        if self.t < 0:
            raise IngestError(f"negative timestamp {self.t}")
        if not 0 <= self.label < N_CLASSES:
            raise IngestError(f"activity code {self.label} outside the alphabet")


@dataclass(frozen=True)
class GeoFix:
    t: int
    lat: float
    lon: float
    accuracy_m: float = 0.0

    def __post_init__(self):
        if self.t < 0:
            raise IngestError(f"negative timestamp {self.t}")
        if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
            raise IngestError(f"coordinates out of range: ({self.lat}, {self.lon})")
        if not math.isfinite(self.accuracy_m) or self.accuracy_m < 0:
            raise IngestError(f"bad accuracy {self.accuracy_m}")


@dataclass(frozen=True)
class GlucoseReading:
    t: int
    mgdl: float

    def __post_init__(self):
        if self.t < 0:
            raise IngestError(f"negative timestamp {self.t}")
        if not GLUCOSE_MIN <= self.mgdl <= GLUCOSE_MAX:
            raise IngestError(f"glucose {self.mgdl} mg/dl outside [{GLUCOSE_MIN}, {GLUCOSE_MAX}]")


@dataclass(frozen=True)
class PurchaseRecord:
    t: int
    merchant_tag: str
    amount: float
    loc: Optional[GeoFix] = None

    def __post_init__(self):
        if self.amount < 0:
            raise IngestError(f"negative purchase amount {self.amount}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SlotGrid:
    """Uniform time grid of per-channel values with observation masks.

    ``values[name][i]`` is meaningful only where ``masks[name][i]`` is True;
    unobserved cells hold zero and must not be read as data.
    """

    t0: int
    slot_width_s: int
    n_slots: int
    values: Mapping[str, np.ndarray] = field(repr=False)
    masks: Mapping[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        if set(self.values) != set(self.masks):
            raise GridError("values and masks must name the same channels")
        for name in self.values:
            if self.values[name].shape != (self.n_slots,) or self.masks[name].shape != (self.n_slots,):
                raise GridError(f"channel {name!r} does not span {self.n_slots} slots")
        object.__setattr__(self, "values", MappingProxyType({k: _frozen(v) for k, v in self.values.items()}))
        object.__setattr__(self, "masks", MappingProxyType({k: _frozen(v.astype(bool)) for k, v in self.masks.items()}))

    @property
    def channels(self):
        return tuple(self.values)

    @property
    def t_end(self) -> int:
        return self.t0 + self.n_slots * self.slot_width_s

    def slot_of(self, t):
        """Slot index floor((t - t0) / width); works on scalars and arrays."""
        return (np.asarray(t, dtype=np.int64) - self.t0) // self.slot_width_s

    def slot_times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_slots, dtype=np.int64) * self.slot_width_s

    def channel(self, name: str):
        if name not in self.values:
            raise KeyError(f"unknown channel {name!r}; have {sorted(self.values)}")
        return self.values[name], self.masks[name]

    def observed(self, name: str):
        """(slot times, values) of observed cells of one channel."""
        v, m = self.channel(name)
        return self.slot_times()[m], v[m]


def build_grid(
    measurements: Mapping[str, tuple],
    t0: int,
    t_end: int,
    slot_width_s: int = SLOT_WIDTH_S,
) -> SlotGrid:
    """Place timestamped measurements onto a uniform grid.

    ``measurements`` maps channel name to ``(times, values)``. Within a
    slot the latest timestamp wins; exact timestamp ties go to the later
    record in input order.
    """
    t0, t_end, slot_width_s = int(t0), int(t_end), int(slot_width_s)
    if slot_width_s <= 0:
        raise GridError("slot width must be positive")
    if t_end <= t0:
        raise GridError(f"empty time range [{t0}, {t_end})")
    n_slots = -(-(t_end - t0) // slot_width_s)
    values, masks = {}, {}
    for name, (times, vals) in measurements.items():
        times = np.asarray(times, dtype=np.int64)
        vals = np.asarray(vals)
        if times.shape != vals.shape or times.ndim != 1:
            raise GridError(f"channel {name!r}: times and values must be equal-length 1-D arrays")
        bad = np.flatnonzero((times < t0) | (times >= t_end))
        if bad.size:
            raise GridError(
                f"channel {name!r}: record {int(bad[0])} at t={int(times[bad[0]])} outside [{t0}, {t_end})"
            )
        out = np.zeros(n_slots, dtype=vals.dtype if vals.size else np.float64)
        mask = np.zeros(n_slots, dtype=bool)
        if times.size:
            order = np.lexsort((np.arange(times.size), times))
            slots = (times[order] - t0) // slot_width_s
            last = np.ones(slots.size, dtype=bool)
            last[:-1] = slots[1:] != slots[:-1]
            keep = order[last]
            out[slots[last]] = vals[keep]
            mask[slots[last]] = True
        values[name] = out
        masks[name] = mask
    return SlotGrid(t0=t0, slot_width_s=slot_width_s, n_slots=n_slots, values=values, masks=masks)


def window(grid: SlotGrid, channel: str, center: int, k: int):
    """Values and mask of slots center-k .. center+k, padded as unobserved."""
    v, m = grid.channel(channel)
    if k < 0:
        raise ValueError("k must be non-negative")
    idx = np.arange(center - k, center + k + 1)
    inside = (idx >= 0) & (idx < grid.n_slots)
    vals = np.zeros(idx.size, dtype=v.dtype)
    mask = np.zeros(idx.size, dtype=bool)
    vals[inside] = v[idx[inside]]
    mask[inside] = m[idx[inside]]
    return vals, mask


def coarsen(grid: SlotGrid, channel: str, width_s: int = CGM_STEP_S):
    """Resample a channel to wider bins aligned at t0, latest observation wins."""
    if width_s % grid.slot_width_s:
        raise GridError("coarse width must be a multiple of the slot width")
    ratio = width_s // grid.slot_width_s
    v, m = grid.channel(channel)
    n_bins = -(-grid.n_slots // ratio)
    vals = np.zeros(n_bins, dtype=v.dtype)
    mask = np.zeros(n_bins, dtype=bool)
    obs = np.flatnonzero(m)
    if obs.size:
        bins = obs // ratio
        last = np.ones(obs.size, dtype=bool)
        last[:-1] = bins[1:] != bins[:-1]
        vals[bins[last]] = v[obs[last]]
        mask[bins[last]] = True
    return vals, mask


def haversine_m(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters on a sphere of radius 6,371,000 m."""
    p1, l1, p2, l2 = (np.radians(np.asarray(x, dtype=np.float64)) for x in (lat1, lon1, lat2, lon2))
    s1 = np.sin(0.5 * (p2 - p1))
    s2 = np.sin(0.5 * (l2 - l1))
    a = np.minimum(s1 * s1 + np.cos(p1) * np.cos(p2) * s2 * s2, 1.0)
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(a))


def haversine(p: GeoFix, q: GeoFix) -> float:
    return float(haversine_m(p.lat, p.lon, q.lat, q.lon))


def meters_to_degrees(d_north_m, d_east_m, lat0):
    """Local small-offset conversion of (north, east) meters to degrees."""
    m_per_deg = EARTH_RADIUS_M * math.pi / 180.0
    dlat = np.asarray(d_north_m) / m_per_deg
    dlon = np.asarray(d_east_m) / (m_per_deg * math.cos(math.radians(lat0)))
    return dlat, dlon


@dataclass(frozen=True)
class Fixes:
    """Columnar GPS fixes."""

    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    accuracy_m: np.ndarray

    def __post_init__(self):
        n = len(self.t)
        for name in ("lat", "lon", "accuracy_m"):
            if len(getattr(self, name)) != n:
                raise IngestError("fix columns must have equal length")
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.int64))
        for name in ("lat", "lon", "accuracy_m"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        bad = np.flatnonzero(
            (np.abs(self.lat) > 90) | (np.abs(self.lon) > 180)
            | ~np.isfinite(self.accuracy_m) | (self.accuracy_m < 0) | (self.t < 0)
        )
        if bad.size:
            raise IngestError(f"fix record {int(bad[0])} fails coordinate/accuracy/time bounds")

    def __len__(self):
        return len(self.t)

    def subset(self, idx) -> "Fixes":
        return Fixes(self.t[idx], self.lat[idx], self.lon[idx], self.accuracy_m[idx])

    @classmethod
    def from_records(cls, fixes: Sequence[GeoFix]) -> "Fixes":
        return cls(
            np.array([f.t for f in fixes], dtype=np.int64),
            np.array([f.lat for f in fixes], dtype=np.float64),
            np.array([f.lon for f in fixes], dtype=np.float64),
            np.array([f.accuracy_m for f in fixes], dtype=np.float64),
        )

    def records(self):
        return [GeoFix(int(t), float(a), float(o), float(c))
                for t, a, o, c in zip(self.t, self.lat, self.lon, self.accuracy_m)]
