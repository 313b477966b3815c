"""Acceptance suite: eight end-to-end checks, each with a runtime budget.

Every check clears the table cache first so its timing includes the table
builds it needs. ``run_all`` prints one PASS/FAIL line per check.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import channel
from .centralized import (build_model, low_regime_policy, omega_init, regime_boundary,
                          solve_centralized, upper_bound, upper_bound_lp)
from .config import ScenarioConfig
from .decentralized import best_response, nash_solve
from .lpcore import solve_lp
from .markov import JointPolicy, induced_chain, stationary_distribution
from .simulator import empirical_state_occupancy, simulate

EPS_SWEEP = tuple(round(0.05 * k, 2) for k in range(1, 11))
SCHEMES = ("fic-centralized", "fic-decentralized", "no-fic", "pm-known", "one-su")


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    seconds: float
    budget: float
    detail: str

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"[{verdict}] criterion {self.number} {self.name}: {self.detail} "
                f"({self.seconds:.1f}s of {self.budget:g}s)")


def _timed(number, name, budget, body):
    channel._build_tables.cache_clear()
    t0 = time.perf_counter()
    ok, detail = body()
    dt = time.perf_counter() - t0
    return CriterionResult(number, name, bool(ok) and dt < budget, dt, budget, detail)


# --- 1 ---------------------------------------------------------------------

def _pu_baseline():
    rp, tpu = channel.auto_pu_rate(10.0)
    # continuous optimum of R exp(-(2^R - 1)/10) solves R 2^R = 10 / ln 2
    lo, hi = 0.0, 10.0
    target = 10.0 / math.log(2.0)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if mid * 2.0 ** mid < target else (lo, mid)
    ok = abs(rp - 2.52) <= 0.01 + 1e-12 and abs(tpu - 1.57) <= 0.01 and abs(rp - lo) <= 0.01
    return ok, f"R_p={rp:.2f} T_pu^I={tpu:.5f} analytic R*={lo:.4f}"


def criterion_1():
    return _timed(1, "PU baseline", 1.0, _pu_baseline)


# --- 2 ---------------------------------------------------------------------

def _bound_equivalence():
    worst = 0.0
    for N in (1, 2, 3):
        base = ScenarioConfig.defaults(N)
        full = base.n_actions - 1
        rates, out = channel.build_tables(base, "centralized", phis=(full,))
        for eps in (0.05, 0.2, 0.5):
            e_omega = (1.0 - out.rho_p[0]) * eps
            _, closed = upper_bound(rates, out, e_omega)
            sol = solve_lp(upper_bound_lp(rates, out, e_omega))
            if not sol.ok:
                return False, f"bound LP status {sol.status} at N={N} eps={eps}"
            worst = max(worst, abs(closed - sol.objective))
    return worst <= 1e-9, f"max |closed form - LP| = {worst:.2e} over 9 cases"


def criterion_2():
    return _timed(2, "upper-bound equivalence", 10.0, _bound_equivalence)


# --- 3 ---------------------------------------------------------------------

def _low_regime():
    cfg = ScenarioConfig.defaults(2, eps_pu=0.05)
    model = build_model(cfg)
    sol = solve_centralized(cfg, model)
    low = low_regime_policy(model)
    rel = abs(sol.su_sum_throughput - low.value) / low.value
    return (sol.regime == "low" and rel <= 0.01,
            f"regime={sol.regime} LP={sol.su_sum_throughput:.6f} closed form={low.value:.6f} "
            f"rel diff={rel:.2e} (scaled policy alone: {low.exact_value:.6f})")


def criterion_3():
    return _timed(3, "low-regime optimality", 60.0, _low_regime)


# --- 4 ---------------------------------------------------------------------

def _monte_carlo():
    cfg = ScenarioConfig.defaults(2)
    sol = solve_centralized(cfg)
    rep = simulate(sol.policy, cfg, 10**6, rates=sol.model.rates)
    rel = abs(rep.su_sum - sol.su_sum_throughput) / sol.su_sum_throughput
    floor = (1.0 - cfg.eps_pu) * sol.model.pu_idle_throughput - 2.0 * rep.pu_throughput_ci
    ok = rel <= 0.02 and rep.pu_throughput >= floor
    return ok, (f"LP={sol.su_sum_throughput:.5f} sim={rep.su_sum:.5f} rel err={rel:.2e}; "
                f"PU sim={rep.pu_throughput:.5f} >= {floor:.5f}")


def criterion_4():
    return _timed(4, "Monte Carlo agreement", 120.0, _monte_carlo)


# --- 5 ---------------------------------------------------------------------

def nash_properties(cfg: ScenarioConfig, restarts: int = 5):
    """Property check of the best-response iteration for one config.

    Returns ``(ok, detail)``.
    """
    res = nash_solve(cfg, restarts=restarts)
    model = res.model
    steps = [b - a for run in res.runs for a, b in zip(run.trace, run.trace[1:])]
    worst_drop = -min(steps, default=0.0)
    n_conv = sum(run.converged for run in res.runs)
    cent_same = solve_centralized(cfg, model).su_sum_throughput
    cent_own = solve_centralized(cfg).su_sum_throughput
    moved = 0.0
    policies = list(res.policies)
    for m in range(cfg.n_users):
        br = best_response(m, policies, model)
        moved = max(moved, float(np.abs(br.policy.mu - policies[m].mu).max()))
    ok = (worst_drop <= 1e-9 and n_conv >= min(4, restarts)
          and res.su_sum_throughput <= cent_same + 1e-6
          and res.su_sum_throughput <= cent_own + 1e-6
          and moved <= 1e-9
          and res.constraint_value <= res.eps_omega + 1e-9)
    detail = (f"N={cfg.n_users}: value={res.su_sum_throughput:.5f} <= LP {cent_same:.5f} "
              f"(centralized rates {cent_own:.5f}), converged {n_conv}/{restarts}, "
              f"max drop {max(worst_drop, 0.0):.1e}, fixed-point move {moved:.1e}")
    return ok, detail


def _nash():
    parts = [nash_properties(ScenarioConfig.defaults(N)) for N in (2, 3)]
    return all(p[0] for p in parts), "; ".join(p[1] for p in parts)


def criterion_5():
    return _timed(5, "Nash iteration properties", 300.0, _nash)


# --- 6 ---------------------------------------------------------------------

def scheme_config(base: ScenarioConfig, scheme: str) -> ScenarioConfig:
    if scheme in ("fic-centralized", "fic-decentralized"):
        return base
    if scheme == "no-fic":
        return base.replace(fic_enabled=False, pm_known=False)
    if scheme == "pm-known":
        return base.replace(pm_known=True)
    if scheme == "one-su":
        return base.replace(n_users=1, gbar_ps=base.gbar_ps[:1], gbar_sp=base.gbar_sp[:1],
                            gbar_ss=((base.gbar_ss[0][0],),))
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class SchemePoint:
    scheme: str
    su_sum_lp: float
    su_sum_sim: float
    su_sum_se: float
    su_sum_ci: float
    pu_throughput: float
    constraint_value: float
    upper_bound: float
    regime: str
    iterations: int
    converged: bool


def run_scheme(base: ScenarioConfig, scheme: str, sim_slots: int = 0, restarts: int = 5,
               seed: int | None = None) -> SchemePoint:
    """Solve one scheme at one config and optionally simulate its policy."""
    cfg = scheme_config(base, scheme)
    rule = "decentralized" if scheme == "fic-decentralized" else "centralized"
    model = build_model(cfg, rule)
    if scheme == "fic-decentralized":
        res = nash_solve(cfg, restarts=restarts, model=model)
        policy, value, constraint = list(res.policies), res.su_sum_throughput, res.constraint_value
        iterations, converged = res.sweeps, res.converged
        regime = "low" if model.eps_omega <= omega_init(model)[0] else "high"
    else:
        sol = solve_centralized(cfg, model)
        policy, value, constraint = sol.policy, sol.su_sum_throughput, sol.constraint_value
        iterations, converged, regime = sol.lp_iterations, True, sol.regime
    pu = model.pu_idle_throughput - cfg.rp * constraint
    _, ub = upper_bound(model.rates, model.outages, model.eps_omega)
    sim = se = ci = float("nan")
    if sim_slots > 0:
        rep = simulate(policy, cfg, sim_slots, seed=seed, rates=model.rates)
        sim, se, ci = rep.su_sum, rep.su_sum_se, rep.su_sum_ci
    return SchemePoint(scheme, value, sim, se, ci, pu, constraint, ub, regime, iterations, converged)


def _dominance():
    base = ScenarioConfig.defaults(2)
    pts = {s: [run_scheme(base.replace(eps_pu=e), s, sim_slots=200_000) for e in EPS_SWEEP]
           for s in SCHEMES}
    problems = []
    for s, row in pts.items():
        vals = [p.su_sum_lp for p in row]
        if any(b < a - 1e-9 for a, b in zip(vals, vals[1:])):
            problems.append(f"{s} not monotone")

    def tol(p, q):
        return 2.0 * math.hypot(p.su_sum_se, q.su_sum_se)

    pairs = [("pm-known", "fic-centralized"), ("fic-centralized", "fic-decentralized"),
             ("fic-centralized", "no-fic"), ("fic-centralized", "one-su")]
    for hi, lo in pairs:
        for e, p, q in zip(EPS_SWEEP, pts[hi], pts[lo]):
            if p.su_sum_lp < q.su_sum_lp - tol(p, q):
                problems.append(f"{hi} < {lo} at eps={e}")
    boundary = regime_boundary(build_model(base))
    in_band = 0.15 <= boundary <= 0.25
    if not in_band:
        problems.append(f"regime boundary {boundary:.4f} outside [0.15, 0.25]")
    shape_ok = len(problems) == (0 if in_band else 1)
    detail = (f"orderings and monotonicity {'hold' if shape_ok else 'violated'}; "
              f"N=2 centralized low/high boundary at eps_PU={boundary:.4f}")
    if problems:
        detail += "; failures: " + " | ".join(problems)
    return not problems, detail


def criterion_6():
    return _timed(6, "dominance and shape", 600.0, _dominance)


# --- 7 ---------------------------------------------------------------------

def policy_grid_search(model, step: float = 0.01):
    """Best feasible value over per-state access probabilities on a grid (N=1).

    Returns ``(best_value, best_probabilities)``.
    """
    S = len(model.space)
    if model.n_actions != 2:
        raise ValueError("grid search is for one SU")
    g = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    grids = np.meshgrid(*([g] * S), indexing="ij")
    p = np.stack([x.ravel() for x in grids], axis=1)
    mu = np.stack([1.0 - p, p], axis=2)
    M = np.einsum("ksa,sat->kst", mu, model.kernel.P)
    lhs = np.transpose(M, (0, 2, 1)) - np.eye(S)
    lhs[:, -1, :] = 1.0
    rhs = np.zeros((p.shape[0], S, 1))
    rhs[:, -1, 0] = 1.0
    pi = np.linalg.solve(lhs, rhs)[:, :, 0]
    occ = pi[:, :, None] * mu
    val = (occ * model.reward).sum(axis=(1, 2))
    cost = (occ * model.cost).sum(axis=(1, 2))
    val = np.where(cost <= model.eps_omega + 1e-12, val, -np.inf)
    k = int(np.argmax(val))
    return float(val[k]), p[k]


def _small_oracle():
    cfg = ScenarioConfig.defaults(1, arq_deadline=2, eps_pu=0.2)
    model = build_model(cfg)
    sol = solve_centralized(cfg, model)
    best, _ = policy_grid_search(model)
    resolution = 0.01 * float(np.abs(model.reward).max())
    ok = best <= sol.su_sum_throughput + 1e-9 and sol.su_sum_throughput - best <= resolution
    return ok, (f"LP={sol.su_sum_throughput:.6f} grid best={best:.6f} "
                f"gap={sol.su_sum_throughput - best:.2e} (resolution {resolution:.2e})")


def criterion_7():
    return _timed(7, "small-instance oracle", 30.0, _small_oracle)


# --- 8 ---------------------------------------------------------------------

def _kernel_props():
    cfg = ScenarioConfig.defaults(2)
    worst_row = 0.0
    worst_res = 0.0
    for variant in (cfg, cfg.replace(fic_enabled=False), cfg.replace(pm_known=True)):
        model = build_model(variant)
        worst_row = max(worst_row, float(np.abs(model.kernel.P.sum(axis=2) - 1.0).max()))
        sol = solve_centralized(variant, model)
        for pol in (sol.policy, JointPolicy.idle(len(model.space), model.n_actions)):
            M = induced_chain(model.kernel, pol)
            pi = stationary_distribution(M)
            worst_res = max(worst_res, float(np.abs(pi @ M - pi).max()))
    model = build_model(cfg)
    sol = solve_centralized(cfg, model)
    rep = simulate(sol.policy, cfg, 10**6, rates=model.rates)
    pi = stationary_distribution(induced_chain(model.kernel, sol.policy))
    occ_err = float(np.abs(empirical_state_occupancy(rep) - pi).max())
    ok = worst_row <= 1e-12 and worst_res <= 1e-10 and occ_err <= 1e-2
    return ok, (f"row error {worst_row:.1e}, stationary residual {worst_res:.1e}, "
                f"occupancy error {occ_err:.1e}")


def criterion_8():
    return _timed(8, "kernel and stationarity", 60.0, _kernel_props)


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4,
            criterion_5, criterion_6, criterion_7, criterion_8)


def run_all(selected=None, stream=None):
    """Run the chosen criteria (all by default), printing one line each."""
    import sys

    out = stream or sys.stdout
    results = []
    for i, fn in enumerate(CRITERIA, 1):
        if selected and i not in selected:
            continue
        res = fn()
        print(res.line(), file=out, flush=True)
        results.append(res)
    return results
