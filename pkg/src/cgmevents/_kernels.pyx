# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a line-for-line twin in ``_kernels_py``; the two
must return the same results (up to libm rounding in ``exp``/``sin``).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport asin, cos, exp, fabs, sin, sqrt, ceil, floor
from libcpp.vector cimport vector

cnp.import_array()

cdef double EARTH_RADIUS_M = 6371000.0


cdef inline double _hav(double lat1, double lon1, double cos1,
                        double lat2, double lon2, double cos2) noexcept nogil:
    cdef double s1 = sin(0.5 * (lat2 - lat1))
    cdef double s2 = sin(0.5 * (lon2 - lon1))
    cdef double a = s1 * s1 + cos1 * cos2 * s2 * s2
    if a > 1.0:
        a = 1.0
    return 2.0 * EARTH_RADIUS_M * asin(sqrt(a))


cdef inline long _find_cell(const long[::1] ucell_i, const long[::1] ucell_j,
                            long ci, long cj) noexcept nogil:
    # binary search over lexicographically sorted (i, j) pairs
    cdef long lo = 0, hi = ucell_i.shape[0] - 1, mid
    while lo <= hi:
        mid = (lo + hi) >> 1
        if ucell_i[mid] < ci or (ucell_i[mid] == ci and ucell_j[mid] < cj):
            lo = mid + 1
        elif ucell_i[mid] == ci and ucell_j[mid] == cj:
            return mid
        else:
            hi = mid - 1
    return -1


cdef void _neighbors(long p, const double[::1] lat, const double[::1] lon,
                     const double[::1] coslat, double eps_m,
                     const long[::1] cell_i, const long[::1] cell_j,
                     const long[::1] ucell_i, const long[::1] ucell_j,
                     const long[::1] starts, const long[::1] order,
                     vector[long]& out) noexcept nogil:
    cdef long di, dj, c, s, q
    out.clear()
    for di in range(-1, 2):
        for dj in range(-1, 2):
            c = _find_cell(ucell_i, ucell_j, cell_i[p] + di, cell_j[p] + dj)
            if c < 0:
                continue
            for s in range(starts[c], starts[c + 1]):
                q = order[s]
                if _hav(lat[p], lon[p], coslat[p], lat[q], lon[q], coslat[q]) <= eps_m:
                    out.push_back(q)


def dbscan_labels(const double[::1] lat, const double[::1] lon, double eps_m, long min_pts,
                  const long[::1] cell_i, const long[::1] cell_j,
                  const long[::1] ucell_i, const long[::1] ucell_j,
                  const long[::1] starts, const long[::1] order):
    """Label points (radians) by DBSCAN, seeds taken in index order.

    Returns (labels, core) with labels -1 for noise.
    """
    cdef long n = lat.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] coslat_arr = np.cos(np.asarray(lat))
    cdef const double[::1] coslat = coslat_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels_arr = np.full(n, -2, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] core_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.int64_t[::1] labels = labels_arr
    cdef cnp.uint8_t[::1] core = core_arr
    cdef vector[long] nbrs
    cdef vector[long] queue
    cdef long i, j, t, head, nb, cid = 0
    with nogil:
        for i in range(n):
            _neighbors(i, lat, lon, coslat, eps_m, cell_i, cell_j,
                       ucell_i, ucell_j, starts, order, nbrs)
            if <long>nbrs.size() >= min_pts:
                core[i] = 1
        for i in range(n):
            if labels[i] != -2:
                continue
            if not core[i]:
                labels[i] = -1
                continue
            labels[i] = cid
            queue.clear()
            queue.push_back(i)
            head = 0
            while head < <long>queue.size():
                j = queue[head]
                head += 1
                _neighbors(j, lat, lon, coslat, eps_m, cell_i, cell_j,
                           ucell_i, ucell_j, starts, order, nbrs)
                for t in range(<long>nbrs.size()):
                    nb = nbrs[t]
                    if labels[nb] == -2:
                        labels[nb] = cid
                        if core[nb]:
                            queue.push_back(nb)
                    elif labels[nb] == -1:
                        labels[nb] = cid
            cid += 1
    return labels_arr, core_arr.astype(bool)


def kde_density(const long[::1] times, long g0, long step, long n_grid, double h, double cutoff_s):
    """Unnormalised Gaussian KDE on the uniform grid g0 + i*step.

    Offsets to grid points are integers j*step - r with r the point's phase
    (t - g0) mod step, so kernel values are tabulated once per phase and
    each point adds a slice of its table.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.zeros(n_grid, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef long n = times.shape[0]
    cdef long jmin = <long>floor(-cutoff_s / <double>step) - 2
    cdef long width = <long>ceil(cutoff_s / <double>step) + 3 - jmin
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tab_arr = np.empty((step, width), dtype=np.float64)
    cdef double[:, ::1] tab = tab_arr
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ready_arr = np.zeros(step, dtype=np.uint8)
    cdef unsigned char[::1] ready = ready_arr
    cdef long a, i, j, lo, hi, d, r, q, off
    cdef double hh = h * h, dd
    with nogil:
        for a in range(n):
            lo = <long>ceil((times[a] - cutoff_s - g0) / <double>step)
            hi = <long>floor((times[a] + cutoff_s - g0) / <double>step)
            if lo < 0:
                lo = 0
            if hi > n_grid - 1:
                hi = n_grid - 1
            if hi < lo:
                continue
            r = (times[a] - g0) % step
            if r < 0:
                r += step
            q = (times[a] - g0 - r) // step
            if not ready[r]:
                for j in range(width):
                    d = (j + jmin) * step - r
                    dd = <double>d
                    tab[r, j] = exp(-(dd * dd) / hh)
                ready[r] = 1
            off = q + jmin
            for i in range(lo, hi + 1):
                out[i] += tab[r, i - off]
    return out_arr


cdef double _objective(const double[:, ::1] G, const double[::1] q, double yy,
                       const double[::1] l1, double l2sq, double group,
                       const double[::1] w) noexcept nogil:
    cdef long m = w.shape[0], i, j
    cdef double quad = 0.0, lin = 0.0, pen1 = 0.0, nrm = 0.0, gi
    for i in range(m):
        gi = 0.0
        for j in range(m):
            gi += G[i, j] * w[j]
        quad += w[i] * gi
        lin += q[i] * w[i]
        pen1 += l1[i] * fabs(w[i])
        nrm += w[i] * w[i]
    return quad - 2.0 * lin + yy + pen1 + l2sq * nrm + group * sqrt(nrm)


cdef double _coord_min(double a, double b, double l1, double group, double c) noexcept nogil:
    # argmin_u a*u^2 - 2*b*u + l1*|u| + group*sqrt(u^2 + c)
    cdef double ab, thr, u, lo, hi, hval, dh, r, s
    cdef int it
    if a <= 0.0:
        return 0.0
    ab = fabs(b)
    s = 1.0 if b >= 0 else -1.0
    if group == 0.0 or c <= 0.0:
        thr = l1 + group
        if 2.0 * ab <= thr:
            return 0.0
        return s * (2.0 * ab - thr) / (2.0 * a)
    if 2.0 * ab <= l1:
        return 0.0
    lo = 0.0
    hi = (2.0 * ab - l1) / (2.0 * a)
    u = hi
    for it in range(100):
        r = sqrt(u * u + c)
        hval = 2.0 * a * u - 2.0 * ab + l1 + group * u / r
        if hval > 0.0:
            hi = u
        else:
            lo = u
        dh = 2.0 * a + group * c / (r * r * r)
        u = u - hval / dh
        if u <= lo or u >= hi:
            u = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * (1.0 + hi):
            break
    return s * u


def cd_solve(const double[:, ::1] G, const double[::1] q, double yy,
             const double[::1] l1, double l2sq, double group,
             const double[::1] w0, double tol, double step_tol, long max_iter):
    """Cyclic coordinate descent on the Gram form of
    ||Xw - y||^2 + sum_j l1_j |w_j| + l2sq ||w||^2 + group ||w||_2.

    Returns (w, objective, sweeps, converged).
    """
    cdef long m = q.shape[0], j, i, sweep = 0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w_arr = np.array(w0, dtype=np.float64, copy=True)
    cdef double[::1] w = w_arr
    cdef double f_old, f_new, b, nrm2, wn, delta, maxstep, wmax
    cdef bint converged = False
    with nogil:
        f_old = _objective(G, q, yy, l1, l2sq, group, w)
        while sweep < max_iter:
            sweep += 1
            nrm2 = 0.0
            for i in range(m):
                nrm2 += w[i] * w[i]
            maxstep = 0.0
            wmax = 0.0
            for j in range(m):
                b = q[j]
                for i in range(m):
                    if i != j:
                        b -= G[j, i] * w[i]
                nrm2 -= w[j] * w[j]
                if nrm2 < 0.0:
                    nrm2 = 0.0
                wn = _coord_min(G[j, j] + l2sq, b, l1[j], group, nrm2)
                delta = fabs(wn - w[j])
                if delta > maxstep:
                    maxstep = delta
                w[j] = wn
                nrm2 += wn * wn
                if fabs(wn) > wmax:
                    wmax = fabs(wn)
            f_new = _objective(G, q, yy, l1, l2sq, group, w)
            if f_old - f_new < tol and maxstep <= step_tol * (1.0 + wmax):
                converged = True
                f_old = f_new
                break
            f_old = f_new
    return w_arr, f_old, sweep, converged


def window_scores(const signed char[::1] codes_pad, const long[::1] idx,
                  const double[:, :, ::1] W, long k):
    """Class scores sum_j W[a, code(i+j-k), j] for each slot in ``idx``.

    ``codes_pad`` is the code vector padded by k missing entries on each
    side; code == n_classes marks a missing observation.
    """
    cdef long n_classes = W.shape[0], L = W.shape[2], B = idx.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.zeros((B, n_classes), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef long b, j, a, c
    with nogil:
        for b in range(B):
            for j in range(L):
                c = codes_pad[idx[b] + j]
                if c >= n_classes:
                    continue
                for a in range(n_classes):
                    out[b, a] += W[a, c, j]
    return out_arr


def window_grad(const signed char[::1] codes_pad, const long[::1] idx,
                const double[:, ::1] R, long n_classes, long L):
    """Accumulate G[a, c, j] = sum_b R[b, a] * [code(b, j) == c]."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3] G_arr = np.zeros((n_classes, n_classes, L), dtype=np.float64)
    cdef double[:, :, ::1] G = G_arr
    cdef long B = idx.shape[0], b, j, a, c
    with nogil:
        for b in range(B):
            for j in range(L):
                c = codes_pad[idx[b] + j]
                if c >= n_classes:
                    continue
                for a in range(n_classes):
                    G[a, c, j] += R[b, a]
    return G_arr
