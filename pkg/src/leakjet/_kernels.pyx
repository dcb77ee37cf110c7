# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Must agree with _kernels_py to rounding."""
import numpy as np

from libc.math cimport sqrt, fabs


DEF BLOCK = 8


def xcorr_direct(const double[::1] a, const double[::1] b, Py_ssize_t max_lag):
    """r[lag + max_lag] = sum_n a[n] * b[n + lag] for lag in [-max_lag, max_lag].

    Lags are processed in blocks sharing each a[n] load; every lag still
    accumulates its terms in ascending n, so the result equals a plain
    sequential sum and is symmetric under swapping a and b.
    """
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0]
    cdef Py_ssize_t n_lags = 2 * max_lag + 1
    out = np.zeros(n_lags, dtype=np.float64)
    cdef double[::1] r = out
    cdef double acc[BLOCK]
    cdef Py_ssize_t lo[BLOCK]
    cdef Py_ssize_t hi[BLOCK]
    cdef Py_ssize_t i0, j, nblk, lag, n, clo, chi
    cdef double an
    with nogil:
        i0 = 0
        while i0 < n_lags:
            nblk = n_lags - i0
            if nblk > BLOCK:
                nblk = BLOCK
            clo = 0
            chi = na
            for j in range(nblk):
                lag = i0 + j - max_lag
                lo[j] = 0 if lag >= 0 else -lag
                hi[j] = na if na < nb - lag else nb - lag
                if hi[j] < lo[j]:
                    hi[j] = lo[j]
                if lo[j] > clo:
                    clo = lo[j]
                if hi[j] < chi:
                    chi = hi[j]
                acc[j] = 0.0
            if chi < clo:
                chi = clo
            # prefix terms of each lag, then the shared range, then suffixes
            for j in range(nblk):
                lag = i0 + j - max_lag
                for n in range(lo[j], clo if clo < hi[j] else hi[j]):
                    acc[j] += a[n] * b[n + lag]
            lag = i0 - max_lag
            if nblk == BLOCK:
                for n in range(clo, chi):
                    an = a[n]
                    acc[0] += an * b[n + lag]
                    acc[1] += an * b[n + lag + 1]
                    acc[2] += an * b[n + lag + 2]
                    acc[3] += an * b[n + lag + 3]
                    acc[4] += an * b[n + lag + 4]
                    acc[5] += an * b[n + lag + 5]
                    acc[6] += an * b[n + lag + 6]
                    acc[7] += an * b[n + lag + 7]
            else:
                for n in range(clo, chi):
                    an = a[n]
                    for j in range(nblk):
                        acc[j] += an * b[n + lag + j]
            for j in range(nblk):
                lag = i0 + j - max_lag
                for n in range(chi if chi > lo[j] else lo[j], hi[j]):
                    acc[j] += a[n] * b[n + lag]
                r[i0 + j] = acc[j]
            i0 += nblk
    return out


def window_stats(const double[::1] x, const long long[::1] starts, Py_ssize_t width):
    """Per-window mean, population std and max.

    Two passes over values shifted by the window's first sample, so a
    constant window gives exactly its value and a zero std.
    """
    cdef Py_ssize_t nw = starts.shape[0]
    mean_a = np.empty(nw)
    std_a = np.empty(nw)
    max_a = np.empty(nw)
    cdef double[::1] mean_v = mean_a, std_v = std_a, max_v = max_a
    cdef Py_ssize_t w, j, s
    cdef double acc, m, d, mx, x0
    with nogil:
        for w in range(nw):
            s = starts[w]
            x0 = x[s]
            acc = 0.0
            mx = x0
            for j in range(s, s + width):
                acc += x[j] - x0
                if x[j] > mx:
                    mx = x[j]
            m = acc / width
            acc = 0.0
            for j in range(s, s + width):
                d = (x[j] - x0) - m
                acc += d * d
            mean_v[w] = x0 + m
            std_v[w] = sqrt(acc / width)
            max_v[w] = mx
    return mean_a, std_a, max_a


def points_in_polygon(const double[::1] px, const double[::1] py,
                      const double[::1] vx, const double[::1] vy, double rel_tol):
    """Boundary-inclusive point-in-polygon by crossing number."""
    cdef Py_ssize_t npt = px.shape[0], nv = vx.shape[0]
    out = np.zeros(npt, dtype=np.bool_)
    cdef unsigned char[::1] res = out.view(np.uint8)
    cdef Py_ssize_t p, i, j
    cdef double x, y, x1, y1, x2, y2, cross, ex, ey, elen, xin
    cdef bint inside, on_edge
    with nogil:
        for p in range(npt):
            x = px[p]
            y = py[p]
            inside = False
            on_edge = False
            j = nv - 1
            for i in range(nv):
                x1 = vx[j]; y1 = vy[j]
                x2 = vx[i]; y2 = vy[i]
                ex = x2 - x1
                ey = y2 - y1
                elen = sqrt(ex * ex + ey * ey)
                cross = ex * (y - y1) - ey * (x - x1)
                if (fabs(cross) <= rel_tol * elen * (elen + fabs(x - x1) + fabs(y - y1))
                        and (x - x1) * (x - x2) <= rel_tol * elen * elen
                        and (y - y1) * (y - y2) <= rel_tol * elen * elen):
                    on_edge = True
                    break
                if (y1 > y) != (y2 > y):
                    xin = x1 + (y - y1) * ex / ey
                    if x < xin:
                        inside = not inside
                j = i
            res[p] = on_edge or inside
    return out
