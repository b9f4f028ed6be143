"""CSV ingestion for the four raw streams, and small writer helpers."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .core import (
    GLUCOSE_MAX,
    GLUCOSE_MIN,
    Fixes,
    IngestError,
    format_activity,
    parse_activity,
)

SCHEMAS = {
    "activities": ("ts", "label"),
    "locations": ("ts", "lat", "lon", "accuracy_m"),
    "glucose": ("ts", "mgdl"),
    "purchases": ("ts", "merchant", "amount"),
}
_EPOCH = re.compile(r"^\s*\d+\s*$")


def parse_timestamps(raw, path="<input>"):
    """Epoch seconds or ISO-8601 UTC, decided once from the first record."""
    if not raw:
        return np.zeros(0, dtype=np.int64)
    if _EPOCH.match(raw[0]):
        out = []
        for i, s in enumerate(raw):
            if not _EPOCH.match(s):
                raise IngestError(f"{path}: record {i} timestamp {s!r} is not epoch seconds like the first")
            out.append(int(s))
        return np.array(out, dtype=np.int64)
    out = []
    for i, s in enumerate(raw):
        s = s.strip()
        if s.endswith("Z"):
            s = s[:-1] + "+00:00"
        try:
            dt = datetime.fromisoformat(s)
        except ValueError:
            raise IngestError(f"{path}: record {i} timestamp {raw[i]!r} is not ISO-8601") from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        out.append(int(dt.timestamp()))
    return np.array(out, dtype=np.int64)


def _read(path, schema):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: missing header row") from None
        missing = [c for c in schema if c not in header]
        if missing:
            raise IngestError(f"{path}: header lacks columns {missing}")
        cols = {c: header.index(c) for c in header}
        rows = [r for r in reader if r]
    return cols, rows


@dataclass(frozen=True)
class Purchases:
    t: np.ndarray
    merchant: tuple
    amount: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    has_loc: np.ndarray

    def __len__(self):
        return len(self.t)


def read_activities(path):
    cols, rows = _read(path, SCHEMAS["activities"])
    t = parse_timestamps([r[cols["ts"]] for r in rows], path)
    codes = np.array([parse_activity(r[cols["label"]]) for r in rows], dtype=np.int8)
    return t, codes


def read_locations(path) -> Fixes:
    cols, rows = _read(path, SCHEMAS["locations"])
    t = parse_timestamps([r[cols["ts"]] for r in rows], path)
    try:
        lat = np.array([float(r[cols["lat"]]) for r in rows])
        lon = np.array([float(r[cols["lon"]]) for r in rows])
        acc = np.array([float(r[cols["accuracy_m"]]) for r in rows])
    except ValueError as exc:
        raise IngestError(f"{path}: {exc}") from None
    return Fixes(t, lat, lon, acc)


def read_glucose(path):
    cols, rows = _read(path, SCHEMAS["glucose"])
    t = parse_timestamps([r[cols["ts"]] for r in rows], path)
    mgdl = np.array([float(r[cols["mgdl"]]) for r in rows])
    bad = np.flatnonzero(~((mgdl >= GLUCOSE_MIN) & (mgdl <= GLUCOSE_MAX)))
    if bad.size:
        raise IngestError(
            f"{path}: {bad.size} glucose readings outside [{GLUCOSE_MIN}, {GLUCOSE_MAX}] mg/dl, "
            f"first at record {int(bad[0])} ({mgdl[bad[0]]})"
        )
    return t, mgdl


def read_purchases(path) -> Purchases:
    cols, rows = _read(path, SCHEMAS["purchases"])
    t = parse_timestamps([r[cols["ts"]] for r in rows], path)
    amount = np.array([float(r[cols["amount"]]) for r in rows])
    if np.any(amount < 0):
        raise IngestError(f"{path}: record {int(np.flatnonzero(amount < 0)[0])} has a negative amount")
    n = len(rows)
    lat = np.zeros(n)
    lon = np.zeros(n)
    has = np.zeros(n, dtype=bool)
    if "lat" in cols and "lon" in cols:
        for i, r in enumerate(rows):
            a, o = r[cols["lat"]].strip(), r[cols["lon"]].strip()
            if a and o:
                lat[i], lon[i], has[i] = float(a), float(o), True
    return Purchases(t, tuple(r[cols["merchant"]] for r in rows), amount, lat, lon, has)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def fmt(x, digits=6):
    """Fixed-precision float text; NaN becomes the literal ``undefined``."""
    if x is None or (isinstance(x, float) and x != x):
        return "undefined"
    return f"{x:.{digits}f}"


def write_activities(path, t, codes):
    write_csv(path, SCHEMAS["activities"], ((int(a), format_activity(c)) for a, c in zip(t, codes)))


def write_locations(path, fixes: Fixes):
    write_csv(path, SCHEMAS["locations"], (
        (int(t), f"{a:.7f}", f"{o:.7f}", f"{c:.1f}")
        for t, a, o, c in zip(fixes.t, fixes.lat, fixes.lon, fixes.accuracy_m)
    ))


def write_glucose(path, t, mgdl):
    write_csv(path, SCHEMAS["glucose"], ((int(a), f"{v:.2f}") for a, v in zip(t, mgdl)))


def write_purchases(path, p: Purchases):
    write_csv(path, SCHEMAS["purchases"] + ("lat", "lon"), (
        (int(p.t[i]), p.merchant[i], f"{p.amount[i]:.2f}",
         f"{p.lat[i]:.7f}" if p.has_loc[i] else "", f"{p.lon[i]:.7f}" if p.has_loc[i] else "")
        for i in range(len(p))
    ))
