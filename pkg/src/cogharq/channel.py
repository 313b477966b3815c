"""Rayleigh fading links, SIC decodability, outage tables and rate selection.

Every stochastic quantity is a Monte Carlo average over a block of draws
taken from a fixed stream, so repeated evaluations (and the rate search)
see common random numbers and are reproducible bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .config import ScenarioConfig

CHUNK = 4096
PU_STREAM = 0
GOLDEN_TOL = 1e-3
COARSE = 4
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def capacity(snr):
    """log2(1 + snr) for a nonnegative, finite SNR."""
    x = np.asarray(snr, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ValueError("snr must be finite and nonnegative")
    out = np.log2(1.0 + x)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=64)
def auto_pu_rate(gbar_pp: float, step: float = 0.01, r_max: float = 10.0):
    """Grid-search the PU rate maximizing R * P(no outage) with all SUs idle.

    Returns ``(rate, throughput)``.
    """
    grid = step * np.arange(1, int(round(r_max / step)) + 1)
    thr = grid * np.exp(-(np.power(2.0, grid) - 1.0) / gbar_pp)
    i = int(np.argmax(thr))
    return float(grid[i]), float(thr[i])


# --- link layout and sampling --------------------------------------------

def col_pp():
    return 0


def col_ps(N, n):
    return 1 + n


def col_sp(N, n):
    return 1 + N + n


def col_ss(N, n, m):
    """Column of the SU_tx n -> SU_rx m link."""
    return 1 + 2 * N + n * N + m


@dataclass(frozen=True)
class SnrDraw:
    """One instantaneous SNR per physical link."""

    pp: float
    ps: tuple
    sp: tuple
    ss: tuple

    @classmethod
    def from_row(cls, row, N):
        row = [float(x) for x in row]
        return cls(
            pp=row[0],
            ps=tuple(row[1:1 + N]),
            sp=tuple(row[1 + N:1 + 2 * N]),
            ss=tuple(tuple(row[col_ss(N, n, 0):col_ss(N, n, 0) + N]) for n in range(N)),
        )


def _chunk(seed, stream_id, index, width):
    ss = np.random.SeedSequence([seed, stream_id, index])
    return np.random.Generator(np.random.PCG64(ss)).standard_exponential((CHUNK, width))


def sample_block(config: ScenarioConfig, stream_id: int, size: int, start: int = 0,
                 seed: int | None = None):
    """Draws ``start .. start+size`` of a stream as a (size, links) array.

    Draw ``i`` depends only on (seed, stream_id, i), so blocks of any size
    and offset are mutually consistent.
    """
    means = config.link_means()
    seed = config.rng_seed if seed is None else seed
    width = means.shape[0]
    first, last = start // CHUNK, (start + size - 1) // CHUNK
    parts = [_chunk(seed, stream_id, c, width) for c in range(first, last + 1)]
    block = np.concatenate(parts) if len(parts) > 1 else parts[0]
    off = start - first * CHUNK
    return block[off:off + size] * means


def sample_snrs(config: ScenarioConfig, stream_id: int, sample_index: int) -> SnrDraw:
    row = sample_block(config, stream_id, 1, start=sample_index)[0]
    return SnrDraw.from_row(row, config.n_users)


# --- decodability -----------------------------------------------------------

def decodable(target_id, unknown_messages, background_noise: float = 1.0) -> bool:
    """Can ``target_id`` be decoded given the still-unknown messages?

    ``unknown_messages`` is an iterable of ``(id, rate, snr)``. True iff some
    subset S containing the target is jointly decodable with every message
    outside S treated as noise: for all nonempty U in S,
    sum_U rate <= C(sum_U snr / (noise + sum_{not S} snr)).
    """
    msgs = list(unknown_messages)
    ids = [m[0] for m in msgs]
    if target_id not in ids:
        raise ValueError(f"target {target_id!r} is not among the unknown messages")
    rates = np.array([m[1] for m in msgs], dtype=float)
    snrs = np.array([[m[2] for m in msgs]], dtype=float)
    if np.any(rates < 0) or np.any(snrs < 0):
        raise ValueError("rates and SNRs must be nonnegative")
    mask = kernels.decodable_mask(ids.index(target_id), rates, snrs,
                                  np.array([background_noise], dtype=float))
    return bool(mask[0])


def _pu_unknown(config: ScenarioConfig, n: int, phi: int) -> bool:
    if config.pm_known:
        return False
    if not config.fic_enabled:
        return True
    return not (phi >> n) & 1


def _active(a, N):
    return [n for n in range(N) if (a >> n) & 1]


def _rx_setup(config, n, a, phi, rates_for_a):
    """Unknown message list at SU receiver n: (ids, rates, gain columns).

    ids are SU indices, or -1 for the PU message.
    """
    N = config.n_users
    ids, rates, cols = [], [], []
    for m in _active(a, N):
        ids.append(m)
        rates.append(rates_for_a[m])
        cols.append(col_ss(N, m, n))
    if _pu_unknown(config, n, phi):
        ids.append(-1)
        rates.append(config.rp)
        cols.append(col_ps(N, n))
    return ids, np.array(rates, dtype=float), cols


def _check_action(a, N):
    if not 0 <= a < (1 << N):
        raise ValueError(f"action {a} out of range for {N} users")


# --- PU outage ----------------------------------------------------------------

def pu_outage(a: int, config: ScenarioConfig, rp: float | None = None) -> float:
    """PU outage with SU set ``a`` active, interference as noise (closed form)."""
    N = config.n_users
    _check_action(a, N)
    rp = config.rp if rp is None else rp
    if rp == 0:
        return 0.0
    theta = 2.0 ** rp - 1.0
    p = math.exp(-theta / config.gbar_pp)
    for n in _active(a, N):
        p /= 1.0 + theta * config.gbar_sp[n] / config.gbar_pp
    return 1.0 - p


def pu_outage_mc(a: int, config: ScenarioConfig, samples: int | None = None):
    """Monte Carlo PU outage estimate and its standard error."""
    N = config.n_users
    _check_action(a, N)
    samples = config.mc_samples if samples is None else samples
    g = sample_block(config, PU_STREAM, samples)
    theta = 2.0 ** config.rp - 1.0
    interf = sum(g[:, col_sp(N, n)] for n in _active(a, N)) if a else 0.0
    p = float(np.mean(theta * (1.0 + interf) > g[:, col_pp()]))
    return p, math.sqrt(p * (1.0 - p) / samples)


# --- tables ---------------------------------------------------------------------

@dataclass(frozen=True)
class RateTable:
    """rate[n, a, phi] in bits/s/Hz; zero wherever SU n is idle under a."""

    rate: np.ndarray
    rule: str

    def __post_init__(self):
        rate = np.array(self.rate, dtype=float)
        rate.setflags(write=False)
        object.__setattr__(self, "rate", rate)


@dataclass(frozen=True)
class OutageTables:
    """Outage probabilities indexed (n, a, phi); NaN where undefined."""

    rho_p: np.ndarray
    rho_s: np.ndarray
    rho_s_se: np.ndarray
    rho_ps: np.ndarray
    rho_ps_se: np.ndarray

    def __post_init__(self):
        for name in ("rho_p", "rho_s", "rho_s_se", "rho_ps", "rho_ps_se"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def table_stream(config: ScenarioConfig, a: int, phi: int) -> int:
    return 1 + a * config.n_actions + phi


def table_block(config: ScenarioConfig, a: int, phi: int):
    return sample_block(config, table_stream(config, a, phi), config.mc_samples)


def _entry_prob(hits):
    p = 1.0 - float(np.mean(hits))
    return p, math.sqrt(max(p * (1.0 - p), 0.0) / hits.shape[0])


def su_outage(n, a, phi, rates: RateTable, config: ScenarioConfig, gains=None):
    """Outage of SU n's own message at its receiver: (estimate, stderr)."""
    N = config.n_users
    _check_action(a, N)
    if not (a >> n) & 1:
        raise ValueError(f"SU {n} is idle under action {a}")
    r = rates.rate[:, a, phi]
    if r[n] == 0:
        return 0.0, 0.0
    gains = table_block(config, a, phi) if gains is None else gains
    ids, rr, cols = _rx_setup(config, n, a, phi, r)
    hits = kernels.decodable_mask(ids.index(n), rr, gains[:, cols], np.ones(gains.shape[0]))
    return _entry_prob(hits)


def pu_decode_fail(n, a, phi, rates: RateTable, config: ScenarioConfig, gains=None):
    """Probability SU receiver n fails to decode the PU message: (estimate, stderr)."""
    N = config.n_users
    _check_action(a, N)
    if (phi >> n) & 1:
        raise ValueError(f"receiver {n} already knows the PU message in state {phi}")
    if config.pm_known:
        return 0.0, 0.0
    if not config.fic_enabled:
        return 1.0, 0.0
    if config.rp == 0:
        return 0.0, 0.0
    gains = table_block(config, a, phi) if gains is None else gains
    ids, rr, cols = _rx_setup(config, n, a, phi, rates.rate[:, a, phi])
    hits = kernels.decodable_mask(ids.index(-1), rr, gains[:, cols], np.ones(gains.shape[0]))
    return _entry_prob(hits)


def expected_throughput(n, a, phi, rates: RateTable, outages: OutageTables) -> float:
    if not (a >> n) & 1:
        return 0.0
    return float(rates.rate[n, a, phi] * (1.0 - outages.rho_s[n, a, phi]))


# --- rate selection -------------------------------------------------------------

def _grid_fraction(counts):
    """P(threshold >= pts[j]) for each grid point from threshold_grid_counts output."""
    ge = np.cumsum(counts[::-1])[::-1]
    return ge[1:] / counts.sum()


class _Objective:
    """Sum throughput of the active SUs as a function of one SU's rate.

    Built from per-sample rate thresholds: the message of receiver m is
    decodable at rate r of the varied SU iff threshold >= r.
    """

    def __init__(self, terms):
        # terms: (weight, sorted thresholds); weight None marks the varied SU's own message
        self.terms = [(w, np.sort(t)) for w, t in terms]

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        total = np.zeros_like(r)
        for weight, thr in self.terms:
            ok = 1.0 - np.searchsorted(thr, r, side="left") / thr.shape[0]
            total = total + (r if weight is None else weight) * ok
        return total


def _golden_max(f, lo, hi, tol=GOLDEN_TOL):
    a, b = lo, hi
    c, d = b - _INVPHI * (b - a), a + _INVPHI * (b - a)
    fc, fd = float(f(c)), float(f(d))
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = float(f(c))
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = float(f(d))
    return (c, fc) if fc >= fd else (d, fd)


def _refine(f, r0, grid):
    """Golden-section polish within one grid step of ``r0``; keep r0 unless better."""
    lo = max(grid.min, r0 - grid.step)
    hi = min(grid.max, r0 + grid.step)
    best, fbest = r0, float(f(r0))
    if hi - lo > GOLDEN_TOL:
        r, fr = _golden_max(f, lo, hi)
        if fr > fbest:
            best, fbest = r, fr
    return best, fbest


class _JointSearch:
    """Joint rate search for the active SUs of one (action, knowledge) pair."""

    def __init__(self, config, a, phi, gains):
        self.config = config
        self.a, self.phi = a, phi
        self.active = _active(a, config.n_users)
        self.gains = gains
        self.ones = np.ones(gains.shape[0])

    def _receivers(self, var, rates):
        for m in self.active:
            ids, rr, cols = _rx_setup(self.config, m, self.a, self.phi, rates)
            yield (None if m == var else rates[m]), ids.index(var), ids.index(m), rr, self.gains[:, cols]

    def objective(self, var, rates):
        """Exact objective in the varied rate (for refinement)."""
        return _Objective([
            (w, kernels.rate_threshold(v, t, rr, g, self.ones))
            for w, v, t, rr, g in self._receivers(var, rates)
        ])

    def on_grid(self, var, rates, pts):
        """Objective at every grid rate of SU ``var``, others fixed."""
        total = np.zeros(pts.shape[0])
        for w, v, t, rr, g in self._receivers(var, rates):
            ok = _grid_fraction(kernels.threshold_grid_counts(v, t, rr, g, self.ones, pts))
            total += (pts if w is None else w) * ok
        return total

    def value(self, rates):
        total = 0.0
        for m in self.active:
            if rates[m] == 0:
                continue
            ids, rr, cols = _rx_setup(self.config, m, self.a, self.phi, rates)
            hits = kernels.decodable_mask(ids.index(m), rr, self.gains[:, cols], self.ones)
            total += rates[m] * float(np.mean(hits))
        return total


def _argmax(vals, pts):
    i = int(np.argmax(vals))
    return float(pts[i]), float(vals[i])


def optimize_rates_decentralized(n, a, phi, config: ScenarioConfig, gains=None):
    """Rate of SU n maximizing its own throughput, other SUs treated as noise."""
    N = config.n_users
    _check_action(a, N)
    if not (a >> n) & 1:
        raise ValueError(f"SU {n} is idle under action {a}")
    grid = config.rate_grid
    pts = grid.points()
    if pts.size == 0:
        raise ValueError("empty rate grid")
    gains = table_block(config, a, phi) if gains is None else gains
    cols = [col_ss(N, n, n)]
    rates = [0.0]
    if _pu_unknown(config, n, phi):
        cols.append(col_ps(N, n))
        rates.append(config.rp)
    noise = 1.0 + sum(gains[:, col_ss(N, m, n)] for m in _active(a, N) if m != n)
    noise = np.broadcast_to(noise, (gains.shape[0],)).astype(float)
    rates = np.array(rates)
    ok = _grid_fraction(kernels.threshold_grid_counts(0, 0, rates, gains[:, cols], noise, pts))
    r0, _ = _argmax(pts * ok, pts)
    f = _Objective([(None, kernels.rate_threshold(0, 0, rates, gains[:, cols], noise))])
    r, _ = _refine(f, r0, grid)
    return r


def _coordinate_ascent(search, rates, pts, max_cycles=50):
    rates = rates.copy()
    for _ in range(max_cycles):
        changed = False
        for n in search.active:
            r, _ = _argmax(search.on_grid(n, rates, pts), pts)
            if r != rates[n]:
                rates[n] = r
                changed = True
        if not changed:
            break
    return rates


def optimize_rates_centralized(a, phi, config: ScenarioConfig, gains=None):
    """Rates of the active SUs jointly maximizing their sum throughput.

    With two active SUs the second rate is scanned over the whole grid for
    every candidate first rate (first rate: coarse pass at every 4th grid
    point, then all points around the best); with more, coordinate-wise grid
    ascent. Each coordinate is then golden-section polished within one grid
    step. The treat-interference-as-noise rates are kept as a fallback
    candidate so the result never does worse than them.
    """
    N = config.n_users
    _check_action(a, N)
    rates = np.zeros(N)
    if a == 0:
        return rates
    grid = config.rate_grid
    pts = grid.points()
    if pts.size == 0:
        raise ValueError("empty rate grid")
    gains = table_block(config, a, phi) if gains is None else gains
    search = _JointSearch(config, a, phi, gains)
    act = search.active

    naive = np.zeros(N)
    for n in act:
        naive[n] = optimize_rates_decentralized(n, a, phi, config, gains)

    if len(act) == 1:
        r0, _ = _argmax(search.on_grid(act[0], rates, pts), pts)
        rates[act[0]], _ = _refine(search.objective(act[0], rates), r0, grid)
        return rates

    if len(act) == 2:
        first, second = act
        trial = np.zeros(N)

        def scan(r1):
            trial[first] = r1
            r2, val = _argmax(search.on_grid(second, trial, pts), pts)
            return val, float(r1), r2

        # coarse pass over the first SU's rate, then every grid point near the best
        coarse = pts[::COARSE]
        best = max((scan(r1) for r1 in coarse), key=lambda v: v[0])
        i = int(np.searchsorted(pts, best[1] - 1e-12))
        near = pts[max(0, i - COARSE + 1):i + COARSE]
        best = max([best, *(scan(r1) for r1 in near if r1 not in coarse)], key=lambda v: v[0])
        rates[first], rates[second] = best[1], best[2]
    else:
        rates = _coordinate_ascent(search, naive, pts)

    for n in act:
        rates[n], _ = _refine(search.objective(n, rates), rates[n], grid)

    if search.value(naive) > search.value(rates):
        return naive
    return rates


# --- table assembly ---------------------------------------------------------------

def _phi_range(config):
    """Knowledge states whose tables must be computed, and the broadcast map."""
    P = config.n_actions
    if config.pm_known:
        return [P - 1]
    if not config.fic_enabled:
        return [0]
    return list(range(P))


def build_tables(config: ScenarioConfig, rule: str = "centralized", phis: tuple | None = None):
    """Rate table and outage tables for every (n, a, phi).

    ``rule`` selects centralized (joint sum-throughput) or decentralized
    (own-throughput, interference-as-noise) rate selection. ``phis`` limits
    the knowledge states computed (others stay NaN); without FIC, or with the
    PU message known in advance, decoding does not depend on the knowledge
    state and one state is computed and broadcast.
    """
    if rule not in ("centralized", "decentralized"):
        raise ValueError(f"unknown rate rule {rule!r}")
    # the PU budget plays no part in the tables; share one cache entry across it
    return _build_tables(config.replace(eps_pu=0.0), rule, None if phis is None else tuple(phis))


@lru_cache(maxsize=32)
def _build_tables(config: ScenarioConfig, rule: str, phis: tuple | None):
    N, A = config.n_users, config.n_actions
    P = A
    rate = np.zeros((N, A, P))
    rho_s = np.full((N, A, P), np.nan)
    rho_s_se = np.full((N, A, P), np.nan)
    rho_ps = np.full((N, A, P), np.nan)
    rho_ps_se = np.full((N, A, P), np.nan)

    base = _phi_range(config)
    broadcast = len(base) == 1 and phis is None
    todo = base if phis is None else [p for p in phis]
    for phi in todo:
        for a in range(A):
            gains = table_block(config, a, phi)
            if rule == "centralized":
                r = optimize_rates_centralized(a, phi, config, gains)
            else:
                r = np.zeros(N)
                for n in _active(a, N):
                    r[n] = optimize_rates_decentralized(n, a, phi, config, gains)
            rate[:, a, phi] = r
    table = RateTable(rate, rule)
    for phi in todo:
        for a in range(A):
            gains = table_block(config, a, phi)
            for n in range(N):
                if (a >> n) & 1:
                    rho_s[n, a, phi], rho_s_se[n, a, phi] = su_outage(n, a, phi, table, config, gains)
                if not (phi >> n) & 1:
                    rho_ps[n, a, phi], rho_ps_se[n, a, phi] = pu_decode_fail(n, a, phi, table, config, gains)
    if broadcast:
        src = base[0]
        for arr in (rate, rho_s, rho_s_se):
            arr[:] = arr[:, :, [src]]
        if config.pm_known:
            for n in range(N):
                for phi in range(P):
                    if not (phi >> n) & 1:
                        rho_ps[n, :, phi], rho_ps_se[n, :, phi] = 0.0, 0.0
        else:
            for n in range(N):
                for phi in range(P):
                    if not (phi >> n) & 1:
                        rho_ps[n, :, phi], rho_ps_se[n, :, phi] = 1.0, 0.0
        table = RateTable(rate, rule)
    rho_p = np.array([pu_outage(a, config) for a in range(A)])
    return table, OutageTables(rho_p, rho_s, rho_s_se, rho_ps, rho_ps_se)


def sum_throughput(rates: RateTable, outages: OutageTables):
    """Reward array r[a, phi] = sum_n R (1 - rho_s), zero for idle users."""
    thr = rates.rate * (1.0 - np.nan_to_num(outages.rho_s, nan=1.0))
    return thr.sum(axis=0)
