"""Stationary filtering, DBSCAN hotspots, convex hulls, and geofence planning."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .core import EARTH_RADIUS_M, STATIONARY, Fixes, haversine_m

NOISE = -1
TAGS = ("food", "other", "untagged")
FENCE_MARGIN_M = 25.0
NAIVE_LAT_LIMIT_DEG = 80.0


@dataclass(frozen=True)
class DbscanParams:
    eps_m: float = 30.0
    min_pts: int = 20

    def __post_init__(self):
        if not self.eps_m > 0:
            raise ValueError("eps_m must be > 0")
        if int(self.min_pts) != self.min_pts or self.min_pts < 1:
            raise ValueError("min_pts must be an integer >= 1")


# -- stationary filter ------------------------------------------------------

def filter_stationary(fixes: Fixes, proba, t0: int, slot_width_s: int, threshold: float = 0.8):
    """Indices of fixes whose slot has P(stationary) >= threshold.

    ``proba`` is the per-slot likelihood table; rows that could not be
    imputed are NaN and their fixes are dropped, as are fixes off the grid.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    proba = np.asarray(proba)
    slots = (np.asarray(fixes.t, dtype=np.int64) - t0) // slot_width_s
    on_grid = (slots >= 0) & (slots < proba.shape[0])
    p = np.full(slots.size, np.nan)
    p[on_grid] = proba[slots[on_grid], STATIONARY]
    keep = np.isfinite(p) & (p >= threshold)
    return np.flatnonzero(keep)


# -- DBSCAN ---------------------------------------------------------------------

def _coords(points):
    if isinstance(points, Fixes):
        return points.lat, points.lon
    if isinstance(points, tuple) and len(points) == 2:
        return np.asarray(points[0], dtype=float), np.asarray(points[1], dtype=float)
    pts = list(points)
    return np.array([p.lat for p in pts], dtype=float), np.array([p.lon for p in pts], dtype=float)


def cell_index(lat_rad, lon_rad, eps_m, naive=False):
    """Bucket points into cells at least eps wide; returns the CSR-style index
    (cell_i, cell_j, ucell_i, ucell_j, starts, order) the kernels expect."""
    n = lat_rad.size
    if naive or n == 0 or np.max(np.abs(lat_rad)) > math.radians(NAIVE_LAT_LIMIT_DEG) \
            or eps_m / EARTH_RADIUS_M > 0.01:
        ci = np.zeros(n, dtype=np.int64)
        cj = np.zeros(n, dtype=np.int64)
    else:
        dlat = eps_m / EARTH_RADIUS_M
        phi_max = min(float(np.max(np.abs(lat_rad))) + dlat, math.radians(89.0))
        dlon = 1.001 * eps_m / (EARTH_RADIUS_M * math.cos(phi_max))
        # cut the longitude circle at its widest empty gap so cells never
        # straddle the antimeridian; a gap wider than one cell loses no pairs
        s = np.sort(lon_rad)
        gaps = np.append(np.diff(s), s[0] + 2 * math.pi - s[-1])
        g = int(np.argmax(gaps))
        if gaps[g] <= dlon:
            return cell_index(lat_rad, lon_rad, eps_m, naive=True)
        shifted = np.mod(lon_rad - s[(g + 1) % n], 2 * math.pi)
        ci = np.floor(lat_rad / dlat).astype(np.int64)
        cj = np.floor(shifted / dlon).astype(np.int64)
    order = np.lexsort((np.arange(n), cj, ci)).astype(np.int64)
    si, sj = ci[order], cj[order]
    first = np.ones(n, dtype=bool)
    first[1:] = (si[1:] != si[:-1]) | (sj[1:] != sj[:-1])
    starts = np.append(np.flatnonzero(first), n).astype(np.int64)
    return ci, cj, si[first].copy(), sj[first].copy(), starts, order


def dbscan_core(points, params: DbscanParams, naive=False, backend=None):
    """(labels, core) with seeds taken in input-index order; NOISE = -1."""
    lat, lon = _coords(points)
    impl = backend or kernels.impl
    if lat.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool)
    la = np.ascontiguousarray(np.radians(lat))
    lo = np.ascontiguousarray(np.radians(lon))
    idx = cell_index(la, lo, params.eps_m, naive)
    labels, core = impl.dbscan_labels(la, lo, float(params.eps_m), int(params.min_pts), *idx)
    return np.asarray(labels, dtype=np.int64), np.asarray(core, dtype=bool)


def dbscan(points, params: DbscanParams, naive=False, backend=None):
    """Cluster label per point (NOISE for noise), haversine metric."""
    return dbscan_core(points, params, naive, backend)[0]


# -- convex hull --------------------------------------------------------------

@dataclass(frozen=True)
class Hull:
    """Vertices as (lon, lat) rows in counter-clockwise order."""

    vertices: np.ndarray
    degenerate: bool

    @property
    def kind(self):
        return {1: "point", 2: "segment"}.get(len(self.vertices), "polygon")


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(lon, lat) -> Hull:
    """Andrew's monotone chain in the (lon, lat) plane; collinear points dropped."""
    pts = np.unique(np.column_stack([np.asarray(lon, float), np.asarray(lat, float)]), axis=0)
    if len(pts) == 0:
        raise ValueError("convex hull of an empty point set")
    if len(pts) <= 2:
        return Hull(pts, True)
    P = [tuple(p) for p in pts]
    lower, upper = [], []
    for p in P:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(P):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    ring = lower[:-1] + upper[:-1]
    if len(ring) < 3:  # all collinear: keep the two extremes
        return Hull(np.array([P[0], P[-1]]), True)
    return Hull(np.array(ring), False)


def polygon_area(vertices):
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def hull_contains(hull: Hull, lon, lat, tol=1e-9):
    """Vectorised inclusion test for convex hulls, boundary within tol degrees."""
    lon = np.atleast_1d(np.asarray(lon, float))
    lat = np.atleast_1d(np.asarray(lat, float))
    V = hull.vertices
    if len(V) == 1:
        return (np.abs(lon - V[0, 0]) <= tol) & (np.abs(lat - V[0, 1]) <= tol)
    if len(V) == 2:
        a, b = V
        d = b - a
        L = math.hypot(*d)
        s = ((lon - a[0]) * d[0] + (lat - a[1]) * d[1]) / (L * L)
        dist = np.abs((lon - a[0]) * d[1] - (lat - a[1]) * d[0]) / L
        return (dist <= tol) & (s >= -tol / L) & (s <= 1 + tol / L)
    inside = np.ones(lon.size, dtype=bool)
    for a, b in zip(V, np.roll(V, -1, axis=0)):
        d = b - a
        L = math.hypot(*d)
        signed = (d[0] * (lat - a[1]) - d[1] * (lon - a[0])) / L
        inside &= signed >= -tol
    return inside


# -- hotspots -------------------------------------------------------------------

@dataclass
class Hotspot:
    id: int
    members: np.ndarray  # indices into the clustered fix set
    lat: np.ndarray
    lon: np.ndarray
    hull: Hull
    tag: str = "untagged"

    @property
    def centroid(self):
        return float(np.mean(self.lat)), float(np.mean(self.lon))

    @property
    def radius_m(self):
        """Fence radius: farthest member from the centroid plus a margin."""
        c = self.centroid
        return float(np.max(haversine_m(c[0], c[1], self.lat, self.lon))) + FENCE_MARGIN_M


def build_hotspots(fixes: Fixes, labels, params: Optional[DbscanParams] = None):
    labels = np.asarray(labels)
    out = []
    for cid in np.unique(labels[labels != NOISE]):
        idx = np.flatnonzero(labels == cid)
        f = fixes.subset(idx)
        out.append(Hotspot(int(cid), idx, f.lat, f.lon, convex_hull(f.lon, f.lat)))
    return out


def apply_tags(hotspots, tags: dict):
    for h in hotspots:
        tag = tags.get(h.id, "untagged")
        if tag not in TAGS:
            raise ValueError(f"hotspot {h.id}: tag {tag!r} not in {TAGS}")
        h.tag = tag
    return hotspots


def tags_from_truth(hotspots, truth_hotspots, max_dist_m=50.0):
    """Tag each detected hotspot by the nearest ground-truth place within max_dist_m."""
    tags = {}
    if not truth_hotspots:
        return tags
    tl = np.array([h["lat"] for h in truth_hotspots])
    to = np.array([h["lon"] for h in truth_hotspots])
    for h in hotspots:
        c = h.centroid
        d = haversine_m(c[0], c[1], tl, to)
        j = int(np.argmin(d))
        if d[j] <= max_dist_m:
            tags[h.id] = "food" if truth_hotspots[j]["food"] else "other"
    return tags


def hotspots_geojson(hotspots, visit_counts=None):
    visit_counts = visit_counts or {}
    features = []
    for h in hotspots:
        V = [[round(float(x), 7), round(float(y), 7)] for x, y in h.hull.vertices]
        if h.hull.kind == "polygon":
            geom = {"type": "Polygon", "coordinates": [V + [V[0]]]}
        elif h.hull.kind == "segment":
            geom = {"type": "LineString", "coordinates": V}
        else:
            geom = {"type": "Point", "coordinates": V[0]}
        features.append({
            "type": "Feature",
            "geometry": geom,
            "properties": {"id": h.id, "tag": h.tag, "n_members": int(len(h.members)),
                           "n_visits": int(visit_counts.get(h.id, 0))},
        })
    return {"type": "FeatureCollection", "features": features}


# -- geofences ----------------------------------------------------------------

@dataclass(frozen=True)
class Circle:
    lat: float
    lon: float
    radius_m: float

    def contains(self, lat, lon):
        return haversine_m(self.lat, self.lon, lat, lon) <= self.radius_m


@dataclass(frozen=True)
class Superfence:
    id: int
    circle: Circle
    children: tuple


@dataclass
class GeofencePlan:
    fences: dict  # hotspot id -> Circle
    superfences: list
    max_active: int

    def parent(self):
        return {c: s.id for s in self.superfences for c in s.children}

    def active_set(self, superfence_id=None, lat=None, lon=None):
        """Region ids ("h", id) / ("s", id) armed in the given state."""
        if superfence_id is not None:
            s = self.superfences[superfence_id]
            return [("s", s.id)] + [("h", c) for c in s.children]
        ids = [s.id for s in self.superfences]
        if len(ids) > self.max_active and lat is not None:
            d = [haversine_m(lat, lon, s.circle.lat, s.circle.lon) - s.circle.radius_m
                 for s in self.superfences]
            ids = sorted(np.argsort(d, kind="stable")[:self.max_active].tolist())
        return [("s", i) for i in ids[:self.max_active]]

    def to_json(self):
        return {
            "max_active": self.max_active,
            "fences": [{"id": k, "lat": round(c.lat, 7), "lon": round(c.lon, 7), "radius_m": round(c.radius_m, 3)}
                       for k, c in sorted(self.fences.items())],
            "superfences": [{"id": s.id, "lat": round(s.circle.lat, 7), "lon": round(s.circle.lon, 7),
                             "radius_m": round(s.circle.radius_m, 3), "children": list(s.children)}
                            for s in self.superfences],
        }

    @classmethod
    def from_json(cls, d):
        fences = {f["id"]: Circle(f["lat"], f["lon"], f["radius_m"]) for f in d["fences"]}
        supers = [Superfence(s["id"], Circle(s["lat"], s["lon"], s["radius_m"]), tuple(s["children"]))
                  for s in d["superfences"]]
        return cls(fences, supers, d["max_active"])


def _enclosing(circles, buffer_m):
    lat = float(np.mean([c.lat for c in circles]))
    lon = float(np.mean([c.lon for c in circles]))
    r = max(float(haversine_m(lat, lon, c.lat, c.lon)) + c.radius_m for c in circles)
    return Circle(lat, lon, r + buffer_m)


def _split(ids, fences, cap):
    """Recursive median bisection along the wider axis until groups fit the cap."""
    if len(ids) <= cap:
        return [ids]
    lat = np.array([fences[i].lat for i in ids])
    lon = np.array([fences[i].lon for i in ids])
    ns = np.ptp(lat)
    ew = np.ptp(lon) * math.cos(math.radians(float(np.mean(lat))))
    key = lat if ns >= ew else lon
    order = np.lexsort((np.asarray(ids), key))
    half = len(ids) // 2
    a = sorted(ids[i] for i in order[:half])
    b = sorted(ids[i] for i in order[half:])
    return _split(a, fences, cap) + _split(b, fences, cap)


def plan_geofences(hotspots, max_active: int = 20, link_m: float = 1000.0, buffer_m: float = 200.0):
    """Group hotspot fences into superfences of at most max_active - 1 children.

    Hotspots whose fence circles come within ``link_m`` of each other are
    linked; linked groups whose superfence circles would overlap are merged
    while the cap allows; oversize groups are bisected recursively.
    """
    if not hotspots:
        raise ValueError("plan_geofences needs at least one hotspot")
    if max_active < 2:
        raise ValueError("max_active must be >= 2 (one superfence plus a child)")
    cap = max_active - 1
    fences = {h.id: Circle(*h.centroid, h.radius_m) for h in hotspots}
    ids = sorted(fences)
    parent = {i: i for i in ids}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a_pos, a in enumerate(ids):
        for b in ids[a_pos + 1:]:
            fa, fb = fences[a], fences[b]
            if haversine_m(fa.lat, fa.lon, fb.lat, fb.lon) - fa.radius_m - fb.radius_m <= link_m:
                parent[find(b)] = find(a)
    groups = {}
    for i in ids:
        groups.setdefault(find(i), []).append(i)
    parts = [p for g in sorted(groups.values()) for p in _split(g, fences, cap)]

    merged = True
    while merged:
        merged = False
        circles = [_enclosing([fences[i] for i in p], buffer_m) for p in parts]
        for x in range(len(parts)):
            for y in range(x + 1, len(parts)):
                if len(parts[x]) + len(parts[y]) > cap:
                    continue
                cx, cy = circles[x], circles[y]
                if haversine_m(cx.lat, cx.lon, cy.lat, cy.lon) < cx.radius_m + cy.radius_m:
                    parts[x] = sorted(parts[x] + parts[y])
                    del parts[y]
                    merged = True
                    break
            if merged:
                break
    parts.sort()
    supers = [Superfence(k, _enclosing([fences[i] for i in p], buffer_m), tuple(p)) for k, p in enumerate(parts)]
    return GeofencePlan(fences, supers, max_active)


@dataclass
class ReplayResult:
    max_active_size: int
    entries: list = field(default_factory=list)  # (t, hotspot id, was active)
    active_sizes: np.ndarray = None

    @property
    def missed(self):
        return [e for e in self.entries if not e[2]]


def replay(plan: GeofencePlan, fixes: Fixes) -> ReplayResult:
    """Drive the plan with a GPS trace as an OS geofence monitor would.

    At each fix the enclosing superfence is chosen first, then hotspot
    entries are checked against its armed set. Where superfence circles
    overlap, the one owning the nearest hotspot fence encloses the fix.
    """
    owner = plan.parent()
    inside_h = {h: False for h in plan.fences}
    sizes = np.zeros(len(fixes), dtype=np.int64)
    entries = []
    flat = np.array([c.lat for c in plan.fences.values()])
    flon = np.array([c.lon for c in plan.fences.values()])
    frad = np.array([c.radius_m for c in plan.fences.values()])
    fids = list(plan.fences)
    slat = np.array([s.circle.lat for s in plan.superfences])
    slon = np.array([s.circle.lon for s in plan.superfences])
    srad = np.array([s.circle.radius_m for s in plan.superfences])
    fowner = np.array([owner[h] for h in fids])
    for n in range(len(fixes)):
        lat, lon = fixes.lat[n], fixes.lon[n]
        sd = haversine_m(lat, lon, slat, slon) - srad
        fd = haversine_m(lat, lon, flat, flon) - frad
        current = None
        cand = np.flatnonzero(sd[fowner] <= 0)
        if cand.size:
            # the enclosing superfence is the one owning the nearest hotspot fence
            j = cand[np.lexsort((fowner[cand], fd[cand]))[0]]
            current = int(fowner[j])
        active = plan.active_set(current, lat, lon)
        sizes[n] = len(active)
        armed_h = {i for kind, i in active if kind == "h"}
        now_in = fd <= 0
        for j, h in enumerate(fids):
            if now_in[j] and not inside_h[h]:
                entries.append((int(fixes.t[n]), h, h in armed_h))
            inside_h[h] = bool(now_in[j])
    return ReplayResult(int(sizes.max(initial=0)), entries, sizes)
