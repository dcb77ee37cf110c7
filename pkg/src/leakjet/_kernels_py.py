"""Pure-numpy versions of the compiled kernels, used when the extension is absent."""
import numpy as np


def xcorr_direct(a, b, max_lag):
    """r[lag + max_lag] = sum_n a[n] * b[n + lag] for lag in [-max_lag, max_lag]."""
    na, nb = len(a), len(b)
    out = np.zeros(2 * max_lag + 1)
    for i in range(2 * max_lag + 1):
        lag = i - max_lag
        lo = max(0, -lag)
        hi = min(na, nb - lag)
        if hi > lo:
            out[i] = np.dot(a[lo:hi], b[lo + lag:hi + lag])
    return out


def window_stats(x, starts, width):
    idx = np.asarray(starts)[:, None] + np.arange(width)
    win = x[idx]
    x0 = win[:, :1]
    dev = win - x0  # shifted so constant windows are exact
    m = dev.mean(axis=1)
    std = np.sqrt(((dev - m[:, None]) ** 2).mean(axis=1))
    return x0[:, 0] + m, std, win.max(axis=1)


def points_in_polygon(px, py, vx, vy, rel_tol):
    px = np.asarray(px, float)
    py = np.asarray(py, float)
    inside = np.zeros(len(px), bool)
    on_edge = np.zeros(len(px), bool)
    n = len(vx)
    for i in range(n):
        j = i - 1
        x1, y1, x2, y2 = vx[j], vy[j], vx[i], vy[i]
        ex, ey = x2 - x1, y2 - y1
        elen = np.hypot(ex, ey)
        cross = ex * (py - y1) - ey * (px - x1)
        tol = rel_tol * elen * elen
        on_edge |= (
            (np.abs(cross) <= rel_tol * elen * (elen + np.abs(px - x1) + np.abs(py - y1)))
            & ((px - x1) * (px - x2) <= tol)
            & ((py - y1) * (py - y2) <= tol)
        )
        straddle = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xin = x1 + (py - y1) * ex / ey
        inside ^= straddle & (px < xin)
    return inside | on_edge
