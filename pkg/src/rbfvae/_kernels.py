"""Hot numeric loops, compiled with numba when available.

Every kernel has a pure-numpy twin.  The numba path is used unless the
environment variable ``RBFVAE_NO_NUMBA`` is set to a non-empty value other
than ``0`` (or numba cannot be imported).  Both paths are deterministic; they
may differ from each other in the last ulp for floating point reductions but
argmin / KS results are identical.
"""
import os

import numpy as np

_DISABLE = os.environ.get("RBFVAE_NO_NUMBA", "") not in ("", "0")

try:
    if _DISABLE:
        raise ImportError("numba disabled by RBFVAE_NO_NUMBA")
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------

def _sq_dists_np(x, c):
    diff = x[:, None, :] - c[None, :, :]
    return np.einsum("bmp,bmp->bm", diff, diff)


def _rbf_np(x, c, gamma):
    return np.exp(-gamma * _sq_dists_np(x, c))


def _mahal_scan_np(z, mus, variances):
    # d2[q, n] = sum_j (z_qj - mu_nj)^2 / var_nj
    diff = z[:, None, :] - mus[None, :, :]
    d2 = (diff * diff / variances[None, :, :]).sum(axis=2)
    idx = np.argmin(d2, axis=1)
    rows = np.arange(z.shape[0])
    best = d2[rows, idx]
    if mus.shape[0] > 1:
        d2[rows, idx] = np.inf
        second = d2.min(axis=1)
    else:
        second = np.full(z.shape[0], np.inf)
    return idx.astype(np.int64), best, second


def _ks_stat_np(a_sorted, b_sorted):
    pts = np.concatenate([a_sorted, b_sorted])
    fa = np.searchsorted(a_sorted, pts, side="right") / a_sorted.size
    fb = np.searchsorted(b_sorted, pts, side="right") / b_sorted.size
    return float(np.max(np.abs(fa - fb)))


def _disaggregate_np(weekly, profiles, idx):
    # weekly [W, P], profiles [N, P, 168], idx [W] -> hourly [W, 168, P]
    sel = profiles[idx]                              # [W, P, 168]
    raw = weekly[:, :, None] * sel                   # [W, P, 168]
    clipped = np.any((raw > 1.0) | (raw < 0.0), axis=2)
    hourly = np.clip(raw, 0.0, 1.0).transpose(0, 2, 1).copy()
    return hourly, clipped


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _sq_dists_nb(x, c):
        b, p = x.shape
        m = c.shape[0]
        out = np.empty((b, m))
        for i in range(b):
            for k in range(m):
                acc = 0.0
                for j in range(p):
                    d = x[i, j] - c[k, j]
                    acc += d * d
                out[i, k] = acc
        return out

    @njit(cache=True)
    def _rbf_nb(x, c, gamma):
        d2 = _sq_dists_nb(x, c)
        return np.exp(-gamma * d2)

    @njit(cache=True)
    def _mahal_scan_nb(z, mus, variances):
        q, d = z.shape
        n = mus.shape[0]
        idx = np.empty(q, dtype=np.int64)
        best = np.empty(q)
        second = np.empty(q)
        for i in range(q):
            b1 = np.inf
            b2 = np.inf
            k1 = 0
            for k in range(n):
                acc = 0.0
                for j in range(d):
                    diff = z[i, j] - mus[k, j]
                    acc += diff * diff / variances[k, j]
                if acc < b1:
                    b2 = b1
                    b1 = acc
                    k1 = k
                elif acc < b2:
                    b2 = acc
            idx[i] = k1
            best[i] = b1
            second[i] = b2
        return idx, best, second

    @njit(cache=True)
    def _ks_stat_nb(a_sorted, b_sorted):
        n = a_sorted.size
        m = b_sorted.size
        i = 0
        j = 0
        dmax = 0.0
        while i < n and j < m:
            v = min(a_sorted[i], b_sorted[j])
            while i < n and a_sorted[i] <= v:
                i += 1
            while j < m and b_sorted[j] <= v:
                j += 1
            d = abs(i / n - j / m)
            if d > dmax:
                dmax = d
        return dmax

    @njit(cache=True)
    def _disaggregate_nb(weekly, profiles, idx):
        w, p = weekly.shape
        hours = profiles.shape[2]
        hourly = np.empty((w, hours, p))
        clipped = np.zeros((w, p), dtype=np.bool_)
        for t in range(w):
            src = idx[t]
            for k in range(p):
                level = weekly[t, k]
                for h in range(hours):
                    v = level * profiles[src, k, h]
                    if v > 1.0:
                        v = 1.0
                        clipped[t, k] = True
                    elif v < 0.0:
                        v = 0.0
                        clipped[t, k] = True
                    hourly[t, h, k] = v
        return hourly, clipped


NUMPY_KERNELS = {
    "sq_dists": _sq_dists_np,
    "rbf": _rbf_np,
    "mahal_scan": _mahal_scan_np,
    "ks_stat": _ks_stat_np,
    "disaggregate": _disaggregate_np,
}

if HAS_NUMBA:
    NUMBA_KERNELS = {
        "sq_dists": _sq_dists_nb,
        "rbf": _rbf_nb,
        "mahal_scan": _mahal_scan_nb,
        "ks_stat": _ks_stat_nb,
        "disaggregate": _disaggregate_nb,
    }
    BACKEND = "numba"
else:
    NUMBA_KERNELS = None
    BACKEND = "numpy"

_ACTIVE = NUMBA_KERNELS if HAS_NUMBA else NUMPY_KERNELS


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def sq_dists(x, c):
    return _ACTIVE["sq_dists"](_f64(x), _f64(c))


def rbf(x, c, gamma):
    return _ACTIVE["rbf"](_f64(x), _f64(c), float(gamma))


def mahal_scan(z, mus, variances):
    """Return (argmin index, min D^2, second-best D^2) per query row."""
    return _ACTIVE["mahal_scan"](_f64(z), _f64(mus), _f64(variances))


def ks_stat(a_sorted, b_sorted):
    return float(_ACTIVE["ks_stat"](_f64(a_sorted), _f64(b_sorted)))


def disaggregate(weekly, profiles, idx):
    return _ACTIVE["disaggregate"](
        _f64(weekly), _f64(profiles), np.ascontiguousarray(idx, dtype=np.int64)
    )
