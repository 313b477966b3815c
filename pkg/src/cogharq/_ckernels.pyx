# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: per-sample decodability, rate thresholds, slot simulation.

Must stay behaviourally identical to ``_pykernels``; the test suite runs both.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log2, pow, INFINITY

cnp.import_array()

DEF MAXMSG = 9
DEF MAXMASK = 512


cdef int _LOWIDX[MAXMASK]
cdef int _m
for _m in range(1, MAXMASK):
    _LOWIDX[_m] = 0
    while not ((_m >> _LOWIDX[_m]) & 1):
        _LOWIDX[_m] += 1


cdef inline void _subset_sums(int k, const double* x, double* out) noexcept nogil:
    cdef int mask
    out[0] = 0.0
    for mask in range(1, 1 << k):
        out[mask] = out[mask & (mask - 1)] + x[_LOWIDX[mask]]


cdef inline bint _decodable_pre(int target, int k, const double* theta,
                                const double* gsum, double noise) noexcept nogil:
    cdef int full = (1 << k) - 1
    cdef int tbit = 1 << target
    cdef int S, V
    cdef double den
    cdef bint ok
    for S in range(1, full + 1):
        if not (S & tbit):
            continue
        den = noise + gsum[full ^ S]
        ok = True
        V = S
        while V:
            if theta[V] * den > gsum[V]:
                ok = False
                break
            V = (V - 1) & S
        if ok:
            return True
    return False


cdef inline double _threshold_pre(int var, int target, int k, const double* theta,
                                  const double* winv, const double* gsum,
                                  double noise) noexcept nogil:
    # log2 is monotone, so take max over S / min over V of the capacity
    # ratio (1 + g_V/den) * 2^-r_{V\var} and apply log2 once.
    cdef int full = (1 << k) - 1
    cdef int tbit = 1 << target
    cdef int vbit = 1 << var
    cdef int S, V
    cdef double den, lim, val
    cdef double best = -1.0
    cdef bint ok
    for S in range(1, full + 1):
        if not (S & tbit):
            continue
        den = noise + gsum[full ^ S]
        ok = True
        lim = INFINITY
        V = S
        while V:
            if V & vbit:
                val = (1.0 + gsum[V] / den) * winv[V & ~vbit]
                if val < lim:
                    lim = val
            elif theta[V] * den > gsum[V]:
                ok = False
                break
            V = (V - 1) & S
        if ok:
            if not (S & vbit):
                return INFINITY
            if lim > best:
                best = lim
    if best < 0.0:
        return -INFINITY
    return log2(best)


cdef inline Py_ssize_t _count_le(const double* pts, Py_ssize_t G, double x,
                                 double inv_step) noexcept nogil:
    # number of grid points <= x (pts ascending); guess assuming even spacing,
    # then walk to the exact answer
    cdef Py_ssize_t idx
    cdef double pos
    if x < pts[0]:
        return 0
    if x >= pts[G - 1]:
        return G
    pos = (x - pts[0]) * inv_step
    idx = <Py_ssize_t>pos + 1
    if idx > G:
        idx = G
    while idx < G and pts[idx] <= x:
        idx += 1
    while idx > 0 and pts[idx - 1] > x:
        idx -= 1
    return idx


def _check_block(rates, gains, noise):
    rates = np.ascontiguousarray(rates, dtype=np.float64)
    gains = np.ascontiguousarray(gains, dtype=np.float64)
    noise = np.ascontiguousarray(noise, dtype=np.float64)
    if gains.ndim != 2 or gains.shape[1] != rates.shape[0]:
        raise ValueError("gains must have shape (samples, messages)")
    if rates.shape[0] < 1 or rates.shape[0] > MAXMSG:
        raise ValueError(f"message count must be in 1..{MAXMSG}")
    if noise.shape[0] != gains.shape[0]:
        raise ValueError("noise must have one entry per sample")
    return rates, gains, noise


def decodable_mask(int target, rates, gains, noise):
    """Boolean mask over samples: is message ``target`` decodable."""
    rates, gains, noise = _check_block(rates, gains, noise)
    cdef int k = rates.shape[0]
    cdef Py_ssize_t M = gains.shape[0], i
    cdef double[::1] r = rates
    cdef double[:, ::1] g = gains
    cdef double[::1] nz = noise
    cdef double rsum[MAXMASK]
    cdef double theta[MAXMASK]
    cdef double gsum[MAXMASK]
    cdef int mask
    out = np.empty(M, dtype=np.bool_)
    cdef cnp.npy_bool[::1] o = out
    _subset_sums(k, &r[0], rsum)
    for mask in range(1 << k):
        theta[mask] = pow(2.0, rsum[mask]) - 1.0
    with nogil:
        for i in range(M):
            _subset_sums(k, &g[i, 0], gsum)
            o[i] = _decodable_pre(target, k, theta, gsum, nz[i])
    return out


def rate_threshold(int var, int target, rates, gains, noise):
    """Per-sample supremum of the rate of ``var`` keeping ``target`` decodable."""
    rates, gains, noise = _check_block(rates, gains, noise)
    rates = rates.copy()
    rates[var] = 0.0
    cdef int k = rates.shape[0]
    cdef Py_ssize_t M = gains.shape[0], i
    cdef double[::1] r = rates
    cdef double[:, ::1] g = gains
    cdef double[::1] nz = noise
    cdef double rsum[MAXMASK]
    cdef double theta[MAXMASK]
    cdef double winv[MAXMASK]
    cdef double gsum[MAXMASK]
    cdef int mask
    out = np.empty(M, dtype=np.float64)
    cdef double[::1] o = out
    _subset_sums(k, &r[0], rsum)
    for mask in range(1 << k):
        theta[mask] = pow(2.0, rsum[mask]) - 1.0
        winv[mask] = pow(2.0, -rsum[mask])
    with nogil:
        for i in range(M):
            _subset_sums(k, &g[i, 0], gsum)
            o[i] = _threshold_pre(var, target, k, theta, winv, gsum, nz[i])
    return out


def threshold_grid_counts(int var, int target, rates, gains, noise, pts):
    """Histogram of rate thresholds over an ascending rate grid.

    ``out[j]`` counts samples with exactly ``j`` grid points <= threshold, so
    the fraction decodable at grid rate ``pts[j]`` is ``out[j+1:].sum() / M``.
    """
    rates, gains, noise = _check_block(rates, gains, noise)
    rates = rates.copy()
    rates[var] = 0.0
    cdef double[::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t G = p.shape[0]
    cdef double inv_step = (G - 1) / (p[G - 1] - p[0]) if G > 1 else 0.0
    cdef int k = rates.shape[0]
    cdef Py_ssize_t M = gains.shape[0], i
    cdef double[::1] r = rates
    cdef double[:, ::1] g = gains
    cdef double[::1] nz = noise
    cdef double rsum[MAXMASK]
    cdef double theta[MAXMASK]
    cdef double winv[MAXMASK]
    cdef double gsum[MAXMASK]
    cdef int mask
    out = np.zeros(G + 1, dtype=np.int64)
    cdef long long[::1] o = out
    _subset_sums(k, &r[0], rsum)
    for mask in range(1 << k):
        theta[mask] = pow(2.0, rsum[mask]) - 1.0
        winv[mask] = pow(2.0, -rsum[mask])
    with nogil:
        for i in range(M):
            _subset_sums(k, &g[i, 0], gsum)
            o[_count_le(&p[0], G, _threshold_pre(var, target, k, theta, winv, gsum, nz[i]), inv_step)] += 1
    return out


cdef inline bint _decode_at_rx(int n, int target_pu, int a, int phi, int N, int known,
                               double rp, const double* g, const double* rate_row,
                               int stride_user, int stride_action) noexcept nogil:
    # rates[m, a, phi] lives at rate_row[m*stride_user + a*stride_action + phi]
    cdef double r[MAXMSG]
    cdef double gg[MAXMSG]
    cdef double rsum[MAXMASK]
    cdef double theta[MAXMASK]
    cdef double gsum[MAXMASK]
    cdef int k = 0, m, target = -1, mask
    for m in range(N):
        if (a >> m) & 1:
            if m == n and not target_pu:
                target = k
            r[k] = rate_row[m * stride_user + a * stride_action + phi]
            gg[k] = g[1 + 2 * N + m * N + n]
            k += 1
    if not known and not ((phi >> n) & 1):
        if target_pu:
            target = k
        r[k] = rp
        gg[k] = g[1 + n]
        k += 1
    if target < 0:
        return False
    _subset_sums(k, r, rsum)
    for mask in range(1 << k):
        theta[mask] = pow(2.0, rsum[mask]) - 1.0
    _subset_sums(k, gg, gsum)
    return _decodable_pre(target, k, theta, gsum, 1.0)


def simulate_chunk(int N, int T, double rp, gains, unif, int mode, cum, access,
                   rates, int fic, int known, long state, long count_from,
                   double[::1] su_bits, double[::1] totals, long long[::1] visits):
    """Advance the slot chain over one block of draws.

    mode 0 samples a joint action from ``cum`` (row-cumulative joint policy);
    mode 1 samples each user's bit from ``access`` (per-user access prob).
    Accumulates into the output buffers for slots with index >= count_from and
    returns the state index after the last slot.
    """
    cdef double[:, ::1] g = np.ascontiguousarray(gains, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(unif, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(cum, dtype=np.float64)
    cdef double[:, ::1] acc = np.ascontiguousarray(access, dtype=np.float64)
    cdef cnp.ndarray rarr = np.ascontiguousarray(rates, dtype=np.float64)
    cdef double[:, :, ::1] R = rarr
    cdef Py_ssize_t M = g.shape[0], i
    cdef int nphi = 1 << N
    cdef int A = 1 << N
    cdef int full = nphi - 1
    cdef int t, phi, a, n, newphi
    cdef long s = state
    cdef double theta_p = pow(2.0, rp) - 1.0
    cdef double interf
    cdef bint pu_ok, counting
    cdef const double* grow
    cdef const double* rbase = &R[0, 0, 0]
    cdef int stride_user = A * nphi
    cdef int stride_action = nphi
    with nogil:
        for i in range(M):
            if s == 0:
                t = 1
                phi = 0
            else:
                t = 2 + (s - 1) // nphi
                phi = (s - 1) % nphi
            counting = i >= count_from
            if mode == 0:
                a = 0
                while a < A - 1 and u[i, 0] >= c[s, a]:
                    a += 1
            else:
                a = 0
                for n in range(N):
                    if u[i, n] < acc[n, s]:
                        a |= 1 << n
            grow = &g[i, 0]
            interf = 0.0
            for n in range(N):
                if (a >> n) & 1:
                    interf += grow[1 + N + n]
            pu_ok = theta_p * (1.0 + interf) <= grow[0]
            if counting:
                visits[s] += 1
                if (not pu_ok) and theta_p <= grow[0]:
                    totals[1] += 1.0
                if pu_ok:
                    totals[0] += rp
                for n in range(N):
                    if (a >> n) & 1:
                        if _decode_at_rx(n, 0, a, phi, N, known, rp, grow, rbase,
                                         stride_user, stride_action):
                            su_bits[n] += R[n, a, phi]
            newphi = phi
            if known:
                newphi = full
            elif fic:
                for n in range(N):
                    if not ((phi >> n) & 1):
                        if _decode_at_rx(n, 1, a, phi, N, known, rp, grow, rbase,
                                         stride_user, stride_action):
                            newphi |= 1 << n
            if pu_ok or t == T:
                s = 0
            else:
                s = 1 + (t - 1) * nphi + newphi
    return s
