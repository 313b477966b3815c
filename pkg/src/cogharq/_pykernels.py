"""NumPy reference implementation of the hot kernels.

Mirrors ``_ckernels`` function for function. Vectorized over samples, with
Python loops only over message subsets (at most 2**9 of them).
"""
import numpy as np

MAX_MESSAGES = 9


def _check_block(rates, gains, noise):
    rates = np.ascontiguousarray(rates, dtype=np.float64)
    gains = np.ascontiguousarray(gains, dtype=np.float64)
    noise = np.ascontiguousarray(noise, dtype=np.float64)
    if gains.ndim != 2 or gains.shape[1] != rates.shape[0]:
        raise ValueError("gains must have shape (samples, messages)")
    if rates.shape[0] < 1 or rates.shape[0] > MAX_MESSAGES:
        raise ValueError(f"message count must be in 1..{MAX_MESSAGES}")
    if noise.shape[0] != gains.shape[0]:
        raise ValueError("noise must have one entry per sample")
    return rates, gains, noise


def _subset_sums(x):
    """Sums over every bitmask subset of the last axis of ``x``."""
    k = x.shape[-1]
    out = np.zeros(x.shape[:-1] + (1 << k,))
    for mask in range(1, 1 << k):
        low = mask & -mask
        j = low.bit_length() - 1
        out[..., mask] = out[..., mask ^ low] + x[..., j]
    return out


def _subsets(S):
    V = S
    while V:
        yield V
        V = (V - 1) & S


def decodable_mask(target, rates, gains, noise):
    rates, gains, noise = _check_block(rates, gains, noise)
    k = rates.shape[0]
    full = (1 << k) - 1
    theta = np.power(2.0, _subset_sums(rates)) - 1.0
    gsum = _subset_sums(gains)
    out = np.zeros(gains.shape[0], dtype=bool)
    for S in range(1, full + 1):
        if not S & (1 << target):
            continue
        den = noise + gsum[:, full ^ S]
        ok = np.ones_like(out)
        for V in _subsets(S):
            ok &= theta[V] * den <= gsum[:, V]
        out |= ok
    return out


def rate_threshold(var, target, rates, gains, noise):
    rates, gains, noise = _check_block(rates, gains, noise)
    rates = rates.copy()
    rates[var] = 0.0
    k = rates.shape[0]
    full = (1 << k) - 1
    vbit = 1 << var
    rsum = _subset_sums(rates)
    theta = np.power(2.0, rsum) - 1.0
    winv = np.power(2.0, -rsum)
    gsum = _subset_sums(gains)
    M = gains.shape[0]
    # max over S, min over V of the capacity ratio; one log2 at the end
    best = np.full(M, -1.0)
    for S in range(1, full + 1):
        if not S & (1 << target):
            continue
        den = noise + gsum[:, full ^ S]
        ok = np.ones(M, dtype=bool)
        lim = np.full(M, np.inf)
        for V in _subsets(S):
            if V & vbit:
                lim = np.minimum(lim, (1.0 + gsum[:, V] / den) * winv[V & ~vbit])
            else:
                ok &= theta[V] * den <= gsum[:, V]
        if S & vbit:
            best = np.where(ok, np.maximum(best, lim), best)
        else:
            best = np.where(ok, np.inf, best)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(best < 0.0, -np.inf, np.log2(np.maximum(best, 0.0)))


def threshold_grid_counts(var, target, rates, gains, noise, pts):
    thr = rate_threshold(var, target, rates, gains, noise)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    return np.bincount(np.searchsorted(pts, thr, side="right"),
                       minlength=pts.shape[0] + 1).astype(np.int64)


def _rx_messages(n, target_pu, a, phi, N, known, rp, gains, rates):
    """Message list (rates, gain columns, target position) at SU receiver n."""
    r, cols, target = [], [], -1
    for m in range(N):
        if (a >> m) & 1:
            if m == n and not target_pu:
                target = len(r)
            r.append(rates[m, a, phi])
            cols.append(1 + 2 * N + m * N + n)
    if not known and not (phi >> n) & 1:
        if target_pu:
            target = len(r)
        r.append(rp)
        cols.append(1 + n)
    return np.array(r), cols, target


def simulate_chunk(N, T, rp, gains, unif, mode, cum, access, rates, fic, known,
                   state, count_from, su_bits, totals, visits):
    gains = np.ascontiguousarray(gains, dtype=np.float64)
    M = gains.shape[0]
    nphi = A = 1 << N
    full = nphi - 1
    theta_p = 2.0 ** rp - 1.0

    if mode == 0:
        actions_for = None
    else:
        # per-slot, per-state composed action is cheap to vectorize per state
        bits = unif[:, :, None] < access[None, :, :]  # (M, N, S)
        weights = (1 << np.arange(N))[None, :, None]
        actions_for = (bits * weights).sum(axis=1)  # (M, S)

    interf = np.zeros((M, A))
    for a in range(A):
        for n in range(N):
            if (a >> n) & 1:
                interf[:, a] += gains[:, 1 + N + n]
    pu_ok = theta_p * (1.0 + interf) <= gains[:, [0]]
    idle_ok = theta_p <= gains[:, 0]

    cache = {}

    def outcome(n, target_pu, a, phi):
        key = (n, target_pu, a, phi)
        hit = cache.get(key)
        if hit is None:
            r, cols, target = _rx_messages(n, target_pu, a, phi, N, known, rp, gains, rates)
            if target < 0:
                hit = np.zeros(M, dtype=bool)
            else:
                hit = decodable_mask(target, r, gains[:, cols], np.ones(M))
            cache[key] = hit
        return hit

    s = int(state)
    for i in range(M):
        if s == 0:
            t, phi = 1, 0
        else:
            t, phi = 2 + (s - 1) // nphi, (s - 1) % nphi
        if mode == 0:
            row = cum[s]
            a = 0
            while a < A - 1 and unif[i, 0] >= row[a]:
                a += 1
        else:
            a = int(actions_for[i, s])
        ok = bool(pu_ok[i, a])
        if i >= count_from:
            visits[s] += 1
            if not ok and idle_ok[i]:
                totals[1] += 1.0
            if ok:
                totals[0] += rp
            for n in range(N):
                if (a >> n) & 1 and outcome(n, 0, a, phi)[i]:
                    su_bits[n] += rates[n, a, phi]
        newphi = phi
        if known:
            newphi = full
        elif fic:
            for n in range(N):
                if not (phi >> n) & 1 and outcome(n, 1, a, phi)[i]:
                    newphi |= 1 << n
        if ok or t == T:
            s = 0
        else:
            s = 1 + (t - 1) * nphi + newphi
    return s
