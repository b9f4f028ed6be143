"""Pure numpy implementations of the compiled kernels in ``_kernels.pyx``.

Same signatures, same results (up to libm rounding). Used when the
extension is not built, or when ``CGMEVENTS_PURE_PYTHON=1`` is set.
"""
import numpy as np

EARTH_RADIUS_M = 6371000.0
_CHUNK = 512


def _hav(lat1, lon1, cos1, lat2, lon2, cos2):
    s1 = np.sin(0.5 * (lat2 - lat1))
    s2 = np.sin(0.5 * (lon2 - lon1))
    a = np.minimum(s1 * s1 + cos1 * cos2 * s2 * s2, 1.0)
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(a))


def dbscan_labels(lat, lon, eps_m, min_pts, cell_i, cell_j, ucell_i, ucell_j, starts, order):
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    n = lat.shape[0]
    coslat = np.cos(lat)
    cell_index = {(int(a), int(b)): c for c, (a, b) in enumerate(zip(ucell_i, ucell_j))}
    candidates = {}

    def cands(p):
        key = (int(cell_i[p]), int(cell_j[p]))
        got = candidates.get(key)
        if got is None:
            parts = []
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    c = cell_index.get((key[0] + di, key[1] + dj))
                    if c is not None:
                        parts.append(order[starts[c]:starts[c + 1]])
            got = np.concatenate(parts)
            candidates[key] = got
        return got

    def neighbors(p):
        q = cands(p)
        d = _hav(lat[p], lon[p], coslat[p], lat[q], lon[q], coslat[q])
        return q[d <= eps_m]

    core = np.zeros(n, dtype=bool)
    # counting pass, blocked by cell so each distance block is vectorised
    members_by_cell = {}
    for p in range(n):
        members_by_cell.setdefault((int(cell_i[p]), int(cell_j[p])), []).append(p)
    for key, members in members_by_cell.items():
        members = np.asarray(members)
        q = cands(members[0])
        for s in range(0, members.size, _CHUNK):
            blk = members[s:s + _CHUNK]
            d = _hav(lat[blk, None], lon[blk, None], coslat[blk, None],
                     lat[None, q], lon[None, q], coslat[None, q])
            core[blk] = (d <= eps_m).sum(axis=1) >= min_pts

    labels = np.full(n, -2, dtype=np.int64)
    cid = 0
    for i in range(n):
        if labels[i] != -2:
            continue
        if not core[i]:
            labels[i] = -1
            continue
        labels[i] = cid
        queue = [i]
        head = 0
        while head < len(queue):
            j = queue[head]
            head += 1
            nb = neighbors(j)
            fresh = nb[labels[nb] == -2]
            labels[nb[labels[nb] == -1]] = cid
            labels[fresh] = cid
            queue.extend(fresh[core[fresh]].tolist())
        cid += 1
    return labels, core


def kde_density(times, g0, step, n_grid, h, cutoff_s):
    times = np.asarray(times, dtype=np.int64)
    out = np.zeros(n_grid, dtype=np.float64)
    hh = float(h) * float(h)
    jmin = int(np.floor(-cutoff_s / step)) - 2
    width = int(np.ceil(cutoff_s / step)) + 3 - jmin
    tables = {}
    for x in times.tolist():
        lo = max(int(np.ceil((x - cutoff_s - g0) / step)), 0)
        hi = min(int(np.floor((x + cutoff_s - g0) / step)), n_grid - 1)
        if hi < lo:
            continue
        r = (x - g0) % step
        q = (x - g0 - r) // step
        tab = tables.get(r)
        if tab is None:
            d = ((np.arange(width, dtype=np.int64) + jmin) * step - r).astype(np.float64)
            tab = tables[r] = np.exp(-(d * d) / hh)
        off = q + jmin
        out[lo:hi + 1] += tab[lo - off:hi + 1 - off]
    return out


def _objective(G, q, yy, l1, l2sq, group, w):
    nrm = float(w @ w)
    return float(w @ G @ w) - 2.0 * float(q @ w) + yy + float(l1 @ np.abs(w)) + l2sq * nrm + group * np.sqrt(nrm)


def _coord_min(a, b, l1, group, c):
    if a <= 0.0:
        return 0.0
    ab = abs(b)
    s = 1.0 if b >= 0 else -1.0
    if group == 0.0 or c <= 0.0:
        thr = l1 + group
        if 2.0 * ab <= thr:
            return 0.0
        return s * (2.0 * ab - thr) / (2.0 * a)
    if 2.0 * ab <= l1:
        return 0.0
    lo, hi = 0.0, (2.0 * ab - l1) / (2.0 * a)
    u = hi
    for _ in range(100):
        r = np.sqrt(u * u + c)
        hval = 2.0 * a * u - 2.0 * ab + l1 + group * u / r
        if hval > 0.0:
            hi = u
        else:
            lo = u
        u = u - hval / (2.0 * a + group * c / (r * r * r))
        if u <= lo or u >= hi:
            u = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * (1.0 + hi):
            break
    return s * u


def cd_solve(G, q, yy, l1, l2sq, group, w0, tol, step_tol, max_iter):
    G = np.asarray(G, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    l1 = np.asarray(l1, dtype=np.float64)
    w = np.array(w0, dtype=np.float64, copy=True)
    m = q.shape[0]
    f_old = _objective(G, q, yy, l1, l2sq, group, w)
    sweep = 0
    converged = False
    while sweep < max_iter:
        sweep += 1
        nrm2 = float(w @ w)
        maxstep = 0.0
        wmax = 0.0
        for j in range(m):
            b = q[j] - float(G[j] @ w) + G[j, j] * w[j]
            nrm2 = max(nrm2 - w[j] * w[j], 0.0)
            wn = _coord_min(G[j, j] + l2sq, b, l1[j], group, nrm2)
            maxstep = max(maxstep, abs(wn - w[j]))
            w[j] = wn
            nrm2 += wn * wn
            wmax = max(wmax, abs(wn))
        f_new = _objective(G, q, yy, l1, l2sq, group, w)
        if f_old - f_new < tol and maxstep <= step_tol * (1.0 + wmax):
            converged = True
            f_old = f_new
            break
        f_old = f_new
    return w, f_old, sweep, converged


def window_scores(codes_pad, idx, W, k):
    codes_pad = np.asarray(codes_pad)
    idx = np.asarray(idx, dtype=np.int64)
    n_classes, _, L = W.shape
    out = np.zeros((idx.size, n_classes), dtype=np.float64)
    # extra all-zero input row absorbs the missing code
    W_ext = np.zeros((L, n_classes + 1, n_classes), dtype=np.float64)
    W_ext[:, :n_classes, :] = np.transpose(W, (2, 1, 0))
    for j in range(L):
        out += W_ext[j][codes_pad[idx + j]]
    return out


def window_grad(codes_pad, idx, R, n_classes, L):
    codes_pad = np.asarray(codes_pad)
    idx = np.asarray(idx, dtype=np.int64)
    G = np.zeros((n_classes, n_classes, L), dtype=np.float64)
    eye = np.eye(n_classes + 1)[:, :n_classes]
    for j in range(L):
        onehot = eye[codes_pad[idx + j]]
        G[:, :, j] = R.T @ onehot
    return G
