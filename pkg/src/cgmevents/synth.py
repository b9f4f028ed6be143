"""Seeded multi-channel trace generator with ground truth.

A day is a schedule of stays (home, then breakfast / lunch / dinner at
meal hotspots with optional errands in between). Trips between stays are
driven by the activity Markov chain: the chain picks the mode each slot and
the mode's speed moves the subject along the straight line to the next
stay. Stays are stationary throughout.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from .core import (
    ACTIVITY_CLASSES,
    AUTOMOTIVE,
    CGM_STEP_S,
    CYCLING,
    GLUCOSE_MAX,
    GLUCOSE_MIN,
    N_CLASSES,
    RUNNING,
    SLOT_WIDTH_S,
    STATIONARY,
    STATIONARY_AUTOMOTIVE,
    UNKNOWN,
    WALKING,
    Fixes,
    meters_to_degrees,
)

# rows/cols follow ACTIVITY_CLASSES; automotive <-> stationary_automotive alternate
DEFAULT_TRANSITIONS = (
    # walk   run    cycle  stat   auto   s_auto unk
    (0.930, 0.005, 0.005, 0.020, 0.035, 0.000, 0.005),  # walking
    (0.080, 0.900, 0.000, 0.015, 0.000, 0.000, 0.005),  # running
    (0.050, 0.000, 0.930, 0.015, 0.000, 0.000, 0.005),  # cycling
    (0.030, 0.000, 0.000, 0.965, 0.000, 0.000, 0.005),  # stationary
    (0.015, 0.000, 0.000, 0.000, 0.350, 0.625, 0.010),  # automotive
    (0.010, 0.000, 0.000, 0.000, 0.640, 0.340, 0.010),  # stationary_automotive
    (0.400, 0.000, 0.000, 0.100, 0.200, 0.000, 0.300),  # unknown
)

SPEED_MPS = {
    WALKING: 1.4,
    RUNNING: 3.0,
    CYCLING: 5.0,
    STATIONARY: 0.0,
    AUTOMOTIVE: 13.0,
    STATIONARY_AUTOMOTIVE: 0.0,
    UNKNOWN: 4.0,
}

DEFAULT_MISSINGNESS = {"activity": 0.3, "gps": 0.2, "glucose": 0.05, "purchase": 0.0}
DEFAULT_T0 = 1483228800  # 2017-01-01T00:00:00Z
GPS_JITTER_M = 10.0

# (hour of day, jitter in hours, kind, probability)
_DAY_PLAN = (
    (8.0, 0.5, "meal", 1.0),
    (10.5, 0.5, "other", 0.7),
    (12.5, 0.5, "meal", 1.0),
    (15.5, 0.75, "other", 0.7),
    (19.0, 0.5, "meal", 1.0),
)


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 42
    days: int = 10
    hotspot_count: int = 8
    meal_hotspot_fraction: float = 0.5
    missingness: dict = field(default_factory=lambda: dict(DEFAULT_MISSINGNESS))
    transitions: tuple = DEFAULT_TRANSITIONS
    meal_amplitude: float = 40.0
    meal_peak_min: float = 60.0
    t0: int = DEFAULT_T0
    center_lat: float = 40.0
    center_lon: float = -83.0
    area_radius_m: float = 3000.0
    neighborhoods: int = 1
    neighborhood_spacing_m: float = 6000.0
    baseline_mgdl: float = 125.0
    daily_amplitude_mgdl: float = 12.0
    drift_sd_mgdl: float = 12.0
    drift_tau_min: float = 120.0
    noise_sd_mgdl: float = 4.0
    visit_min_minutes: float = 30.0
    visit_max_minutes: float = 60.0
    gps_moving_rate: float = 0.75
    gps_stationary_rate: float = 1.0 / 12.0

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise SynthError("; ".join(errors))

    def validate(self):
        errs = []
        if self.days <= 0:
            errs.append("days must be positive")
        if self.hotspot_count < 1:
            errs.append("hotspot_count must be >= 1")
        if not 0.0 <= self.meal_hotspot_fraction <= 1.0:
            errs.append("meal_hotspot_fraction must lie in [0, 1]")
        for ch, r in self.missingness.items():
            if ch not in DEFAULT_MISSINGNESS:
                errs.append(f"unknown missingness channel {ch!r}")
            elif not 0.0 <= r < 1.0:
                errs.append(f"missingness[{ch}] must lie in [0, 1)")
        P = np.asarray(self.transitions, dtype=float)
        if P.shape != (N_CLASSES, N_CLASSES):
            errs.append(f"transition matrix must be {N_CLASSES}x{N_CLASSES}")
        else:
            if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
                errs.append("transition rows must be non-negative and sum to 1 within 1e-9")
            else:
                errs.extend(_chain_defects(P))
        if self.meal_peak_min <= 0:
            errs.append("meal_peak_min must be positive")
        if self.meal_amplitude < 0:
            errs.append("meal_amplitude must be non-negative")
        if not 0 < self.visit_min_minutes <= self.visit_max_minutes:
            errs.append("visit duration bounds must satisfy 0 < min <= max")
        return errs


def _chain_defects(P):
    errs = []
    if P[UNKNOWN, UNKNOWN] >= 1.0:
        errs.append("transition matrix has an absorbing 'unknown' state")
    Q = travel_matrix(P)
    for s in range(N_CLASSES):
        if s == STATIONARY:
            continue
        if not np.isfinite(Q[s]).all():
            errs.append(f"{ACTIVITY_CLASSES[s]} leads only to stationary; trips cannot progress")
        elif Q[s, s] >= 1.0 and SPEED_MPS[s] == 0.0:
            errs.append(f"{ACTIVITY_CLASSES[s]} is absorbing with zero speed during trips")
        elif s == UNKNOWN and Q[s, s] >= 1.0:
            errs.append("'unknown' is absorbing during trips")
    return errs


def travel_matrix(P):
    """The chain conditioned on not entering stationary (used within trips)."""
    P = np.asarray(P, dtype=float)
    Q = P.copy()
    Q[:, STATIONARY] = 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        Q = Q / Q.sum(axis=1, keepdims=True)
    Q[STATIONARY] = 0.0
    return Q


def meal_response(t_s, amplitude, peak_s):
    """A*(t/tau)*exp(1 - t/tau) for t >= 0, zero before the meal."""
    x = np.maximum(np.asarray(t_s, dtype=float) / peak_s, 0.0)
    return amplitude * x * np.exp(1.0 - x)


def sample_chain(Q, n, start, rng):
    """n states of a Markov chain with transition matrix Q."""
    cum = np.cumsum(np.nan_to_num(Q), axis=1)
    out = np.empty(n, dtype=np.int8)
    s = start
    u = rng.random(n)
    for i in range(n):
        out[i] = s
        s = int(np.searchsorted(cum[s], u[i], side="right"))
        s = min(s, N_CLASSES - 1)
    return out


@dataclass
class RawStreams:
    activity_t: np.ndarray
    activity: np.ndarray
    fixes: Fixes
    glucose_t: np.ndarray
    glucose: np.ndarray
    purchases: io.Purchases

    def counts(self):
        return {"activity": len(self.activity_t), "gps": len(self.fixes),
                "glucose": len(self.glucose_t), "purchase": len(self.purchases)}

    def write(self, outdir):
        outdir = Path(outdir)
        io.write_activities(outdir / "activities.csv", self.activity_t, self.activity)
        io.write_locations(outdir / "locations.csv", self.fixes)
        io.write_glucose(outdir / "glucose.csv", self.glucose_t, self.glucose)
        io.write_purchases(outdir / "purchases.csv", self.purchases)


@dataclass
class GroundTruth:
    t0: int
    n_slots: int
    slot_width_s: int
    activity: np.ndarray
    stays: list
    hotspots: list
    home: tuple
    meal_times: list
    baseline_t: np.ndarray
    baseline: np.ndarray

    @property
    def t_end(self):
        return self.t0 + self.n_slots * self.slot_width_s

    def hotspot_visits(self):
        return [s for s in self.stays if s["hotspot_id"] is not None]

    def to_json(self):
        return {
            "t0": self.t0,
            "n_slots": self.n_slots,
            "slot_width_s": self.slot_width_s,
            "home": {"lat": round(self.home[0], 7), "lon": round(self.home[1], 7)},
            "hotspots": self.hotspots,
            "visits": self.stays,
            "meal_times": self.meal_times,
            "activity_labels": "".join(str(int(c)) for c in self.activity),
            "baseline_bg": {"t": [int(t) for t in self.baseline_t],
                            "mgdl": [round(float(v), 3) for v in self.baseline]},
        }

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")) + "\n")

    @classmethod
    def read(cls, path):
        d = json.loads(Path(path).read_text())
        return cls(
            t0=d["t0"], n_slots=d["n_slots"], slot_width_s=d["slot_width_s"],
            activity=np.frombuffer(d["activity_labels"].encode(), dtype=np.uint8).astype(np.int8) - ord("0"),
            stays=d["visits"], hotspots=d["hotspots"], home=(d["home"]["lat"], d["home"]["lon"]),
            meal_times=d["meal_times"],
            baseline_t=np.asarray(d["baseline_bg"]["t"], dtype=np.int64),
            baseline=np.asarray(d["baseline_bg"]["mgdl"], dtype=float),
        )


def _place_hotspots(cfg, rng):
    H = cfg.hotspot_count
    pts = []
    min_sep = 150.0
    if cfg.neighborhoods <= 1:
        centers = [np.zeros(2)]
        radius_lo, radius_hi = 500.0, cfg.area_radius_m
    else:
        ang = 2 * math.pi * np.arange(cfg.neighborhoods) / cfg.neighborhoods
        centers = [cfg.neighborhood_spacing_m * np.array([math.cos(a), math.sin(a)]) for a in ang]
        radius_lo, radius_hi = 0.0, 500.0
    for i in range(H):
        c = centers[i % len(centers)]
        for _ in range(10000):
            r = math.sqrt(rng.uniform(radius_lo ** 2, radius_hi ** 2))
            a = rng.uniform(0, 2 * math.pi)
            p = c + r * np.array([math.cos(a), math.sin(a)])
            if np.linalg.norm(p) > 300 and all(np.linalg.norm(p - q) >= min_sep for q in pts):
                pts.append(p)
                break
        else:
            raise SynthError("could not place hotspots with 150 m separation; enlarge the area")
    return np.vstack([np.zeros(2)] + pts)  # place 0 is home


def _plan_visits(cfg, rng, meal_ids, other_ids):
    plan = []
    prev = None
    for d in range(cfg.days):
        meals = list(rng.permutation(meal_ids)) if meal_ids else []
        others = list(rng.permutation(other_ids)) if other_ids else []
        for hour, jit, kind, prob in _DAY_PLAN:
            if rng.random() >= prob:
                continue
            pool = meals if kind == "meal" else others
            if not pool:
                pool_src = meal_ids if kind == "meal" else other_ids
                if not pool_src:
                    pool_src = other_ids or meal_ids
                pool.extend(rng.permutation(pool_src))
            h = pool.pop(0)
            if h == prev and pool:
                pool.append(h)
                h = pool.pop(0)
            if h == prev:
                continue
            target = d * 86400 + int((hour + rng.uniform(-jit, jit)) * 3600)
            plan.append((target // SLOT_WIDTH_S, int(h)))
            prev = h
    return plan


class _Timeline:
    def __init__(self, n_slots, places, Q, rng):
        self.n = n_slots
        self.places = places
        self.Q = Q
        self.cum = np.cumsum(np.nan_to_num(Q), axis=1)
        self.rng = rng
        self.act = np.full(n_slots, STATIONARY, dtype=np.int8)
        self.place_at = np.full(n_slots, -1, dtype=np.int64)
        self.pos = np.zeros((n_slots + 1, 2))
        self.stays = []

    def stay(self, place, start, end):
        end = min(end, self.n)
        if end <= start:
            return
        self.act[start:end] = STATIONARY
        self.place_at[start:end] = place
        self.pos[start:end + 1] = self.places[place]
        self.stays.append((place, start, end))

    def trip(self, p, q, start):
        """Move from place p to q starting at slot ``start``; returns arrival slot."""
        a, b = self.places[p], self.places[q]
        dist = float(np.linalg.norm(b - a))
        unit = (b - a) / dist
        covered = 0.0
        s = WALKING
        i = start
        while covered < dist and i < self.n:
            self.act[i] = s
            self.place_at[i] = -1
            self.pos[i] = a + unit * covered
            covered = min(dist, covered + SPEED_MPS[s] * SLOT_WIDTH_S)
            self.pos[i + 1] = a + unit * covered
            u = self.rng.random()
            s = min(int(np.searchsorted(self.cum[s], u, side="right")), N_CLASSES - 1)
            i += 1
            if i - start > 4 * 3600 // SLOT_WIDTH_S:
                raise SynthError("trip exceeded 4 hours; check the transition matrix")
        return i


def _truncated_jitter(rng, n, sd, limit):
    out = rng.normal(0.0, sd, size=(n, 2))
    bad = np.linalg.norm(out, axis=1) > limit
    while bad.any():
        out[bad] = rng.normal(0.0, sd, size=(int(bad.sum()), 2))
        bad = np.linalg.norm(out, axis=1) > limit
    return out


def generate(config: Optional[SynthConfig] = None, apply_missing: bool = True):
    """Generate raw streams and ground truth; deterministic in ``config.seed``."""
    cfg = config or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    n_slots = cfg.days * 86400 // SLOT_WIDTH_S
    t0 = cfg.t0

    places = _place_hotspots(cfg, rng)
    H = cfg.hotspot_count
    n_meal = int(round(H * cfg.meal_hotspot_fraction))
    meal_flags = np.zeros(H + 1, dtype=bool)
    meal_flags[1 + rng.permutation(H)[:n_meal]] = True
    meal_ids = [i for i in range(1, H + 1) if meal_flags[i]]
    other_ids = [i for i in range(1, H + 1) if not meal_flags[i]]

    Q = travel_matrix(cfg.transitions)
    tl = _Timeline(n_slots, places, Q, rng)
    plan = _plan_visits(cfg, rng, meal_ids, other_ids)
    speed_est = 8.0
    cur, place = 0, 0
    gap_home = 90 * 60 // SLOT_WIDTH_S
    for target, h in plan:
        if cur >= n_slots:
            break
        if place != 0 and target - cur > gap_home:
            arr = tl.trip(place, 0, cur)
            cur, place = arr, 0
        est = int(np.linalg.norm(places[h] - places[place]) / speed_est / SLOT_WIDTH_S)
        # waiting happens at home; from a hotspot the subject leaves straight away
        depart = max(cur, target - est) if place == 0 else cur
        tl.stay(place, cur, depart)
        arr = tl.trip(place, h, depart)
        dur = int(rng.uniform(cfg.visit_min_minutes, cfg.visit_max_minutes) * 60 // SLOT_WIDTH_S)
        tl.stay(h, arr, arr + dur)
        cur, place = min(arr + dur, n_slots), h
    if cur < n_slots:
        if place != 0:
            cur = tl.trip(place, 0, cur)
        tl.stay(0, cur, n_slots)

    lat0, lon0 = cfg.center_lat, cfg.center_lon

    def to_deg(xy):
        dlat, dlon = meters_to_degrees(xy[..., 0], xy[..., 1], lat0)
        return lat0 + dlat, lon0 + dlon

    # stays, meals
    stays, meal_times = [], []
    peak_s = cfg.meal_peak_min * 60.0
    for place_id, s, e in tl.stays:
        start, end = t0 + s * SLOT_WIDTH_S, t0 + e * SLOT_WIDTH_S
        meal_t = None
        if place_id != 0 and meal_flags[place_id]:
            meal_t = int(round(0.5 * (start + end) + rng.normal(0.0, 120.0)))
            meal_times.append(meal_t)
        stays.append({
            "place": int(place_id),
            "hotspot_id": None if place_id == 0 else int(place_id),
            "start": int(start),
            "end": int(end),
            "meal_time": meal_t,
        })

    # activity measurements: one per slot
    act_t = t0 + np.arange(n_slots, dtype=np.int64) * SLOT_WIDTH_S + rng.integers(0, SLOT_WIDTH_S, n_slots)
    act = tl.act.copy()

    # GPS
    moving = tl.place_at < 0
    rate = np.where(moving, cfg.gps_moving_rate, cfg.gps_stationary_rate)
    emit = np.flatnonzero(rng.random(n_slots) < rate)
    offs = rng.integers(0, SLOT_WIDTH_S, emit.size)
    frac = (offs / SLOT_WIDTH_S)[:, None]
    xy = tl.pos[emit] + (tl.pos[emit + 1] - tl.pos[emit]) * frac
    stay_rows = ~moving[emit]
    jitter = np.zeros_like(xy)
    jitter[stay_rows] = _truncated_jitter(rng, int(stay_rows.sum()), GPS_JITTER_M, 4 * GPS_JITTER_M)
    jitter[~stay_rows] = rng.normal(0.0, 3.0, size=(int((~stay_rows).sum()), 2))
    lat, lon = to_deg(xy + jitter)
    acc = np.where(stay_rows, rng.uniform(5, 15, emit.size), rng.uniform(5, 30, emit.size))
    fixes = Fixes(t0 + emit * SLOT_WIDTH_S + offs, lat, lon, np.round(acc, 1))

    # CGM
    n_cgm = cfg.days * 86400 // CGM_STEP_S
    cgm_t = t0 + np.arange(n_cgm, dtype=np.int64) * CGM_STEP_S + 30 + rng.integers(0, 30, n_cgm)
    rel = (cgm_t - t0).astype(float)
    daily = cfg.daily_amplitude_mgdl * np.sin(2 * math.pi * rel / 86400.0 - 0.5 * math.pi)
    phi = math.exp(-CGM_STEP_S / (cfg.drift_tau_min * 60.0))
    innov = rng.normal(0.0, cfg.drift_sd_mgdl * math.sqrt(1 - phi * phi), n_cgm)
    drift = np.empty(n_cgm)
    drift[0] = rng.normal(0.0, cfg.drift_sd_mgdl)
    for i in range(1, n_cgm):
        drift[i] = phi * drift[i - 1] + innov[i]
    baseline = cfg.baseline_mgdl + daily + drift
    signal = baseline.copy()
    for m in meal_times:
        signal += meal_response(cgm_t - m, cfg.meal_amplitude, peak_s)
    noise = rng.normal(0.0, cfg.noise_sd_mgdl, n_cgm)
    bg = signal + noise
    for _ in range(100):
        bad = (bg < GLUCOSE_MIN) | (bg > GLUCOSE_MAX)
        if not bad.any():
            break
        bg[bad] = signal[bad] + rng.normal(0.0, cfg.noise_sd_mgdl, int(bad.sum()))
    else:
        raise SynthError("glucose signal itself leaves physiological bounds; lower the amplitudes")
    bg = np.round(bg, 2)

    # purchases
    p_t, p_m, p_a, p_lat, p_lon = [], [], [], [], []
    for st in stays:
        h = st["hotspot_id"]
        if h is None:
            continue
        food = bool(meal_flags[h])
        if rng.random() < (0.6 if food else 0.3):
            p_t.append(st["start"] + int(rng.integers(0, 600)))
            p_m.append(("food_" if food else "shop_") + str(h))
            p_a.append(round(float(rng.uniform(6, 25) if food else rng.uniform(5, 60)), 2))
            la, lo = to_deg(places[h])
            p_lat.append(float(la))
            p_lon.append(float(lo))
    order = np.argsort(p_t, kind="stable")
    purchases = io.Purchases(
        np.asarray(p_t, dtype=np.int64)[order],
        tuple(p_m[i] for i in order),
        np.asarray(p_a, dtype=float)[order],
        np.asarray(p_lat, dtype=float)[order],
        np.asarray(p_lon, dtype=float)[order],
        np.ones(len(p_t), dtype=bool),
    )

    raw = RawStreams(act_t, act, fixes, cgm_t, bg, purchases)
    if apply_missing:
        raw = apply_missingness(raw, cfg.missingness, cfg.seed)

    home_lat, home_lon = to_deg(places[0])
    hs = []
    for h in range(1, H + 1):
        la, lo = to_deg(places[h])
        hs.append({"id": h, "lat": round(float(la), 7), "lon": round(float(lo), 7), "food": bool(meal_flags[h])})
    truth = GroundTruth(
        t0=t0, n_slots=n_slots, slot_width_s=SLOT_WIDTH_S, activity=act, stays=stays,
        hotspots=hs, home=(float(home_lat), float(home_lon)), meal_times=meal_times,
        baseline_t=cgm_t, baseline=baseline,
    )
    return raw, truth


def apply_missingness(raw: RawStreams, rates: dict, seed: int) -> RawStreams:
    """Drop each record independently with its channel's rate."""
    keeps = {}
    for i, ch in enumerate(("activity", "gps", "glucose", "purchase")):
        rate = float(rates.get(ch, 0.0))
        if not 0.0 <= rate < 1.0:
            raise SynthError(f"missingness rate for {ch} must lie in [0, 1)")
        n = raw.counts()[ch]
        rng = np.random.default_rng([seed, 7919, i])
        keeps[ch] = rng.random(n) >= rate
    k = keeps
    p = raw.purchases
    kp = np.flatnonzero(k["purchase"])
    return RawStreams(
        raw.activity_t[k["activity"]],
        raw.activity[k["activity"]],
        raw.fixes.subset(k["gps"]),
        raw.glucose_t[k["glucose"]],
        raw.glucose[k["glucose"]],
        io.Purchases(p.t[kp], tuple(p.merchant[i] for i in kp), p.amount[kp], p.lat[kp], p.lon[kp], p.has_loc[kp]),
    )


def write(raw: RawStreams, truth: GroundTruth, outdir):
    outdir = Path(outdir)
    raw.write(outdir)
    truth.write(outdir / "groundtruth.json")
