"""Slow reference implementations used only by tests."""
import numpy as np

from cgmevents.core import haversine_m


def dbscan_bruteforce(lat, lon, eps_m, min_pts):
    """Connected components of the core-point eps-graph; a border point joins
    the earliest-numbered cluster among its core neighbours, clusters numbered
    by their lowest-index core point."""
    n = len(lat)
    D = haversine_m(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    A = D <= eps_m
    core = A.sum(axis=1) >= min_pts
    comp = np.full(n, -1)
    cid = 0
    for i in range(n):
        if not core[i] or comp[i] >= 0:
            continue
        stack = [i]
        comp[i] = cid
        while stack:
            j = stack.pop()
            for q in np.flatnonzero(A[j] & core):
                if comp[q] < 0:
                    comp[q] = cid
                    stack.append(q)
        cid += 1
    labels = comp.copy()
    for i in np.flatnonzero(~core):
        nb = np.flatnonzero(A[i] & core)
        labels[i] = comp[nb].min() if nb.size else -1
    return labels, core


def point_in_polygon(px, py, V):
    """Even-odd ray casting, independent of the convexity-based test."""
    inside = False
    n = len(V)
    for i in range(n):
        x1, y1 = V[i]
        x2, y2 = V[(i + 1) % n]
        if (y1 > py) != (y2 > py):
            xi = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xi:
                inside = not inside
    return inside


def blobs(rng, n_blobs, per_blob, sd_m, noise, lat0=40.0, lon0=-83.0, spread_m=400.0):
    lat, lon = [], []
    m = 111195.0
    for _ in range(n_blobs):
        c = rng.uniform(-spread_m, spread_m, 2)
        off = c + rng.normal(0, sd_m, (per_blob, 2))
        lat.append(lat0 + off[:, 0] / m)
        lon.append(lon0 + off[:, 1] / (m * np.cos(np.radians(lat0))))
    u = rng.uniform(-spread_m, spread_m, (noise, 2))
    lat.append(lat0 + u[:, 0] / m)
    lon.append(lon0 + u[:, 1] / (m * np.cos(np.radians(lat0))))
    lat, lon = np.concatenate(lat), np.concatenate(lon)
    p = rng.permutation(lat.size)
    return lat[p], lon[p]
