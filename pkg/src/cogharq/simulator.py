"""Slot-level Monte Carlo of the PU HARQ process with policy-driven SU access.

Every slot draws fresh link SNRs, samples an action from the policy at the
current state, decodes at every receiver with the same rule the tables use,
updates the knowledge state and advances the HARQ counter. Averages come
with batch-means 95% confidence half-widths.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import kernels
from .channel import CHUNK, RateTable, build_tables, sample_block
from .config import ScenarioConfig
from .decentralized import LocalPolicy
from .markov import JointPolicy, StateSpace

WARMUP = 1000
BATCHES = 20
SIM_STREAM = 1 << 40
_UNIF_STREAM = (1 << 40) + 1


@dataclass(frozen=True, eq=False)
class SimReport:
    slots: int
    warmup: int
    batches: int
    seed: int
    su_throughput: tuple
    su_throughput_ci: tuple
    su_sum: float
    su_sum_ci: float
    su_sum_se: float
    pu_throughput: float
    pu_throughput_ci: float
    constraint: float
    constraint_ci: float
    visits: np.ndarray

    def __post_init__(self):
        v = np.array(self.visits, dtype=np.int64)
        v.setflags(write=False)
        object.__setattr__(self, "visits", v)

    def __eq__(self, other):
        if not isinstance(other, SimReport):
            return NotImplemented
        mine, theirs = vars(self), vars(other)
        return all(np.array_equal(mine[k], theirs[k]) if k == "visits" else mine[k] == theirs[k]
                   for k in mine)

    __hash__ = None


def _uniforms(seed, start, size, width):
    first, last = start // CHUNK, (start + size - 1) // CHUNK
    parts = []
    for c in range(first, last + 1):
        ss = np.random.SeedSequence([seed, _UNIF_STREAM, c])
        parts.append(np.random.Generator(np.random.PCG64(ss)).random((CHUNK, width)))
    block = np.concatenate(parts) if len(parts) > 1 else parts[0]
    off = start - first * CHUNK
    return block[off:off + size]


def _policy_arrays(policy, space: StateSpace, N: int):
    S, A = len(space), 1 << N
    if isinstance(policy, JointPolicy):
        if policy.mu.shape != (S, A):
            raise ValueError(f"joint policy shape {policy.mu.shape} does not match {(S, A)}")
        cum = np.cumsum(policy.mu, axis=1)
        cum[:, -1] = 1.0
        return 0, cum, np.zeros((N, S))
    policies = list(policy)
    if len(policies) != N or not all(isinstance(p, LocalPolicy) for p in policies):
        raise ValueError(f"expected a JointPolicy or {N} LocalPolicy objects")
    for p in policies:
        if p.mu.shape[0] != S:
            raise ValueError("local policy state count does not match the state space")
    access = np.array([p.access for p in policies])
    return 1, np.zeros((S, A)), access


def simulate(policy, config: ScenarioConfig, slots: int, seed: int | None = None,
             rates: RateTable | None = None, warmup: int = WARMUP, batches: int = BATCHES,
             block: int = 1 << 16) -> SimReport:
    """Simulate ``slots`` counted slots after ``warmup`` discarded ones.

    ``policy`` is a :class:`JointPolicy` or a sequence of per-user
    :class:`LocalPolicy` (sampled independently, then composed). ``rates``
    defaults to the centralized rate table of ``config``.
    """
    if slots < 1:
        raise ValueError("slots must be >= 1")
    batches = max(1, min(batches, slots))
    seed = config.rng_seed if seed is None else seed
    N, T = config.n_users, config.arq_deadline
    space = StateSpace(N, T)
    if rates is None:
        rates = build_tables(config, "centralized")[0]
    mode, cum, access = _policy_arrays(policy, space, N)
    rate_arr = np.array(rates.rate, dtype=np.float64)  # writable copy for the kernel
    rp = config.rp
    fic, known = int(config.fic_enabled), int(config.pm_known)

    state = 0
    pos = 0
    visits = np.zeros(len(space), dtype=np.int64)

    def advance(n, count):
        # run n slots from the current position; count them if ``count``
        nonlocal state, pos
        su = np.zeros(N)
        tot = np.zeros(2)
        vis = np.zeros(len(space), dtype=np.int64)
        done = 0
        while done < n:
            k = min(block, n - done)
            gains = sample_block(config, SIM_STREAM, k, start=pos, seed=seed)
            unif = _uniforms(seed, pos, k, N)
            state = kernels.simulate_chunk(N, T, rp, gains, unif, mode, cum, access, rate_arr,
                                           fic, known, state, 0 if count else k, su, tot, vis)
            pos += k
            done += k
        return su, tot, vis

    if warmup > 0:
        advance(warmup, False)
    edges = np.linspace(0, slots, batches + 1).astype(np.int64)
    su_b = np.zeros((batches, N))
    pu_b = np.zeros(batches)
    con_b = np.zeros(batches)
    for b in range(batches):
        n = int(edges[b + 1] - edges[b])
        su, tot, vis = advance(n, True)
        visits += vis
        su_b[b] = su / n
        pu_b[b] = tot[0] / n
        con_b[b] = tot[1] / n
    w = (edges[1:] - edges[:-1]) / slots

    def mean_ci(x):
        m = float(np.dot(w, x))
        if batches < 2:
            return m, float("nan"), float("nan")
        se = float(np.std(x, ddof=1) / np.sqrt(batches))
        return m, float(stats.t.ppf(0.975, batches - 1) * se), se

    per = [mean_ci(su_b[:, n]) for n in range(N)]
    s_m, s_ci, s_se = mean_ci(su_b.sum(axis=1))
    p_m, p_ci, _ = mean_ci(pu_b)
    c_m, c_ci, _ = mean_ci(con_b)
    return SimReport(
        slots=slots, warmup=warmup, batches=batches, seed=seed,
        su_throughput=tuple(p[0] for p in per), su_throughput_ci=tuple(p[1] for p in per),
        su_sum=s_m, su_sum_ci=s_ci, su_sum_se=s_se,
        pu_throughput=p_m, pu_throughput_ci=p_ci,
        constraint=c_m, constraint_ci=c_ci,
        visits=visits,
    )


def empirical_state_occupancy(report: SimReport) -> np.ndarray:
    """Fraction of counted slots spent in each state."""
    return report.visits / report.visits.sum()
