"""Hot inner loops, compiled with numba when available.

Each kernel exists twice: a ``_nb_*`` version compiled with ``numba.njit`` and a
``_np_*`` reference written with plain numpy. The public names bind to the
numba versions unless numba is missing or ``UAAD_DISABLE_NUMBA=1`` is set in the
environment. Both paths must agree to floating-point reassociation; the test
suite runs them against each other and ``benchmarks/bench_kernels.py`` times them.
"""

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("UAAD_DISABLE_NUMBA", "0") not in ("1", "true", "yes")

# EM exit codes
EM_CONVERGED = 0
EM_MAX_ITER = 1
EM_COLLAPSE = 2

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# lagged spatio-temporal projection
# ---------------------------------------------------------------------------

def _np_lag_project(xp, W, start, T):
    """z[k, t] = sum_c sum_l W[k, c, l] * xp[c, t + start - l] for t < T."""
    K, C, L = W.shape
    z = np.zeros((K, T))
    for lag in range(L):
        off = start - lag
        z += W[:, :, lag] @ xp[:, off:off + T]
    return z


def _np_window_moments(z, v, starts, tau):
    """Per-window sums of z*v, z*z and v*v, shape (N, K, 3)."""
    idx = starts[:, None] + np.arange(tau)[None, :]
    zw = z[:, idx]
    vw = v[:, idx]
    out = np.empty((len(starts), z.shape[0], 3))
    out[:, :, 0] = np.einsum("knt,knt->nk", zw, vw)
    out[:, :, 1] = np.einsum("knt,knt->nk", zw, zw)
    out[:, :, 2] = np.einsum("knt,knt->nk", vw, vw)
    return out


def _np_loglik(y, mu_lo, mu_hi, sd_lo, sd_hi, q):
    a = np.log(q) - np.log(sd_hi) - _LOG_SQRT_2PI - 0.5 * ((y - mu_hi) / sd_hi) ** 2
    b = np.log1p(-q) - np.log(sd_lo) - _LOG_SQRT_2PI - 0.5 * ((y - mu_lo) / sd_lo) ** 2
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m)), a, b


def _np_em_two_gauss(y, mu_lo, mu_hi, sd_lo, sd_hi, q, tied, tol, max_iter, sd_floor):
    n = y.shape[0]
    trace = np.empty(max_iter + 1)
    ll, a, b = _np_loglik(y, mu_lo, mu_hi, sd_lo, sd_hi, q)
    prev = ll.sum()
    trace[0] = prev
    status = EM_MAX_ITER
    it = 0
    while it < max_iter:
        r = np.exp(a - ll)
        w_hi = r.sum()
        w_lo = n - w_hi
        if w_hi < 1e-10 or w_lo < 1e-10:
            status = EM_COLLAPSE
            break
        mu_hi = (r * y).sum() / w_hi
        mu_lo = ((1.0 - r) * y).sum() / w_lo
        ss_hi = (r * (y - mu_hi) ** 2).sum()
        ss_lo = ((1.0 - r) * (y - mu_lo) ** 2).sum()
        if tied:
            sd_hi = sd_lo = math.sqrt((ss_hi + ss_lo) / n)
        else:
            sd_hi = math.sqrt(ss_hi / w_hi)
            sd_lo = math.sqrt(ss_lo / w_lo)
        q = w_hi / n
        if sd_hi <= sd_floor or sd_lo <= sd_floor:
            status = EM_COLLAPSE
            break
        it += 1
        ll, a, b = _np_loglik(y, mu_lo, mu_hi, sd_lo, sd_hi, q)
        cur = ll.sum()
        trace[it] = cur
        if cur - prev < tol:
            status = EM_CONVERGED
            break
        prev = cur
    return mu_lo, mu_hi, sd_lo, sd_hi, q, trace[:it + 1], status


def _np_signed_rank_counts(ranks2):
    """Number of sign patterns giving each doubled positive-rank sum."""
    total = int(ranks2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    top = 0
    for r in ranks2:
        r = int(r)
        counts[r:top + r + 1] += counts[:top + 1].copy()
        top += r
    return counts


# ---------------------------------------------------------------------------
# numba versions
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _nb_lag_project(xp, W, start, T):
        K, C, L = W.shape
        z = np.zeros((K, T))
        for k in range(K):
            for c in range(C):
                for lag in range(L):
                    w = W[k, c, lag]
                    if w == 0.0:
                        continue
                    off = start - lag
                    for t in range(T):
                        z[k, t] += w * xp[c, t + off]
        return z

    @numba.njit(cache=True)
    def _nb_window_moments(z, v, starts, tau):
        K = z.shape[0]
        N = starts.shape[0]
        out = np.zeros((N, K, 3))
        for n in range(N):
            s0 = starts[n]
            for k in range(K):
                zv = 0.0
                zz = 0.0
                vv = 0.0
                for t in range(s0, s0 + tau):
                    a = z[k, t]
                    b = v[k, t]
                    zv += a * b
                    zz += a * a
                    vv += b * b
                out[n, k, 0] = zv
                out[n, k, 1] = zz
                out[n, k, 2] = vv
        return out

    @numba.njit(cache=True)
    def _nb_loglik_terms(y, mu_lo, mu_hi, sd_lo, sd_hi, q, ll, a):
        lq = math.log(q)
        l1q = math.log1p(-q)
        lsh = math.log(sd_hi)
        lsl = math.log(sd_lo)
        total = 0.0
        for i in range(y.shape[0]):
            zh = (y[i] - mu_hi) / sd_hi
            zl = (y[i] - mu_lo) / sd_lo
            ai = lq - lsh - _LOG_SQRT_2PI - 0.5 * zh * zh
            bi = l1q - lsl - _LOG_SQRT_2PI - 0.5 * zl * zl
            m = ai if ai > bi else bi
            li = m + math.log(math.exp(ai - m) + math.exp(bi - m))
            ll[i] = li
            a[i] = ai
            total += li
        return total

    @numba.njit(cache=True)
    def _nb_em_two_gauss(y, mu_lo, mu_hi, sd_lo, sd_hi, q, tied, tol, max_iter, sd_floor):
        n = y.shape[0]
        trace = np.empty(max_iter + 1)
        ll = np.empty(n)
        a = np.empty(n)
        prev = _nb_loglik_terms(y, mu_lo, mu_hi, sd_lo, sd_hi, q, ll, a)
        trace[0] = prev
        status = EM_MAX_ITER
        it = 0
        while it < max_iter:
            w_hi = 0.0
            s_hi = 0.0
            s_lo = 0.0
            for i in range(n):
                r = math.exp(a[i] - ll[i])
                a[i] = r
                w_hi += r
                s_hi += r * y[i]
                s_lo += (1.0 - r) * y[i]
            w_lo = n - w_hi
            if w_hi < 1e-10 or w_lo < 1e-10:
                status = EM_COLLAPSE
                break
            mu_hi = s_hi / w_hi
            mu_lo = s_lo / w_lo
            ss_hi = 0.0
            ss_lo = 0.0
            for i in range(n):
                r = a[i]
                dh = y[i] - mu_hi
                dl = y[i] - mu_lo
                ss_hi += r * dh * dh
                ss_lo += (1.0 - r) * dl * dl
            if tied:
                sd_hi = math.sqrt((ss_hi + ss_lo) / n)
                sd_lo = sd_hi
            else:
                sd_hi = math.sqrt(ss_hi / w_hi)
                sd_lo = math.sqrt(ss_lo / w_lo)
            q = w_hi / n
            if sd_hi <= sd_floor or sd_lo <= sd_floor:
                status = EM_COLLAPSE
                break
            it += 1
            cur = _nb_loglik_terms(y, mu_lo, mu_hi, sd_lo, sd_hi, q, ll, a)
            trace[it] = cur
            if cur - prev < tol:
                status = EM_CONVERGED
                break
            prev = cur
        return mu_lo, mu_hi, sd_lo, sd_hi, q, trace[:it + 1], status

    @numba.njit(cache=True)
    def _nb_signed_rank_counts(ranks2):
        total = 0
        for r in ranks2:
            total += r
        counts = np.zeros(total + 1)
        counts[0] = 1.0
        top = 0
        for r in ranks2:
            for k in range(top, -1, -1):
                counts[k + r] += counts[k]
            top += r
        return counts


# ---------------------------------------------------------------------------
# public dispatch
# ---------------------------------------------------------------------------

def lag_project(xp, W, start, T):
    xp = np.ascontiguousarray(xp, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    if USE_NUMBA:
        return _nb_lag_project(xp, W, int(start), int(T))
    return _np_lag_project(xp, W, int(start), int(T))


def window_moments(z, v, starts, tau):
    z = np.ascontiguousarray(z, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    if USE_NUMBA:
        return _nb_window_moments(z, v, starts, int(tau))
    return _np_window_moments(z, v, starts, int(tau))


def em_two_gauss(y, mu_lo, mu_hi, sd_lo, sd_hi, q, tied=True, tol=1e-8, max_iter=500,
                 sd_floor=0.0):
    y = np.ascontiguousarray(y, dtype=np.float64)
    args = (y, float(mu_lo), float(mu_hi), float(sd_lo), float(sd_hi), float(q),
            bool(tied), float(tol), int(max_iter), float(sd_floor))
    if USE_NUMBA:
        return _nb_em_two_gauss(*args)
    return _np_em_two_gauss(*args)


def signed_rank_counts(ranks2):
    ranks2 = np.ascontiguousarray(ranks2, dtype=np.int64)
    if USE_NUMBA:
        return _nb_signed_rank_counts(ranks2)
    return _np_signed_rank_counts(ranks2)
