"""Centralized access design: action scores, closed-form bounds and the CMDP LP."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import OutageTables, RateTable, build_tables, sum_throughput
from .config import ScenarioConfig
from .lpcore import LpProblem, build_occupation_lp, recover_policy, solve_lp
from .markov import JointPolicy, StateSpace, TransitionKernel, build_kernel, evaluate_policy

CONSTRAINT_TOL = 1e-9


class RegimeError(ValueError):
    """The budget lies in the high-access regime, where no closed form applies."""


class SolveError(RuntimeError):
    """The LP did not reach an optimal vertex."""


@dataclass(frozen=True)
class CmdpModel:
    """Everything the LP needs for one scenario and rate rule.

    ``reward[s, a]`` is the expected SU sum throughput and ``cost[s, a]`` the
    excess PU outage ``rho_p[a] - rho_p[0]``.
    """

    config: ScenarioConfig
    rates: RateTable
    outages: OutageTables
    space: StateSpace
    kernel: TransitionKernel
    reward: np.ndarray
    cost: np.ndarray

    @property
    def n_actions(self) -> int:
        return self.config.n_actions

    @property
    def eps_omega(self) -> float:
        return (1.0 - self.outages.rho_p[0]) * self.config.eps_pu

    @property
    def pu_idle_throughput(self) -> float:
        """PU throughput with every SU idle: R_p (1 - rho_p0)."""
        return self.config.rp * (1.0 - self.outages.rho_p[0])

    def evaluate(self, policy: JointPolicy):
        """(SU sum throughput, constraint value, stationary law) of ``policy``."""
        return evaluate_policy(self.kernel, policy, self.reward, self.cost)


def model_from_tables(config: ScenarioConfig, rates: RateTable, outages: OutageTables) -> CmdpModel:
    space = StateSpace(config.n_users, config.arq_deadline)
    kernel = build_kernel(space, outages.rho_p, outages.rho_ps)
    r = sum_throughput(rates, outages)
    phis = space.phis()
    reward = r[:, phis].T.copy()
    cost = np.tile(outages.rho_p - outages.rho_p[0], (len(space), 1))
    return CmdpModel(config, rates, outages, space, kernel, reward, cost)


def build_model(config: ScenarioConfig, rule: str = "centralized") -> CmdpModel:
    rates, outages = build_tables(config, rule)
    return model_from_tables(config, rates, outages)


# --- closed forms ----------------------------------------------------------

def _full_knowledge_throughput(rates: RateTable, outages: OutageTables):
    full = rates.rate.shape[2] - 1
    return sum_throughput(rates, outages)[:, full]


def score_actions(rates: RateTable, outages: OutageTables, eps_omega: float):
    """Scores v_a of every action and the best nonidle action m.

    v_a is the sum throughput of action a with every receiver knowing the PU
    message, scaled by the fraction of slots the budget lets it be used.
    Returns ``(v, m)`` with ``v[0] = 0``; ties go to the lowest index.
    """
    d = _full_knowledge_throughput(rates, outages)
    delta = outages.rho_p - outages.rho_p[0]
    A = d.shape[0]
    v = np.zeros(A)
    for a in range(1, A):
        share = 1.0 if delta[a] <= 0 else min(eps_omega / delta[a], 1.0)
        v[a] = d[a] * share
    m = 1 + int(np.argmax(v[1:]))
    return v, m


def upper_bound(rates: RateTable, outages: OutageTables, eps_omega: float):
    """Closed-form bound: use the best action m a ``min(eps/delta_m, 1)`` share of the time.

    Returns ``(mu, value)`` where ``mu`` is a distribution over actions.
    """
    v, m = score_actions(rates, outages, eps_omega)
    delta = outages.rho_p[m] - outages.rho_p[0]
    share = 1.0 if delta <= 0 else min(eps_omega / delta, 1.0)
    mu = np.zeros(v.shape[0])
    mu[m] = share
    mu[0] = 1.0 - share
    return mu, float(v[m])


def upper_bound_lp(rates: RateTable, outages: OutageTables, eps_omega: float) -> LpProblem:
    """The bound problem as an LP over mu_1..mu_{A-1} (idle share implicit)."""
    d = _full_knowledge_throughput(rates, outages)[1:]
    delta = (outages.rho_p - outages.rho_p[0])[1:]
    A_in = np.vstack([delta, np.ones_like(delta)])
    return LpProblem(d, A_ineq=A_in, b_ineq=np.array([eps_omega, 1.0]))


def _init_policy(model: CmdpModel, m: int, scale: float = 1.0) -> JointPolicy:
    S, A = len(model.space), model.n_actions
    mu = np.zeros((S, A))
    mu[:, 0] = 1.0
    for s in model.space.all_known():
        mu[s, m] = scale
        mu[s, 0] = 1.0 - scale
    return JointPolicy(mu)


def omega_init(model: CmdpModel, eps_omega: float | None = None):
    """Constraint consumed by accessing with action m whenever all receivers know.

    Returns ``(omega_init, m)``.
    """
    eps = model.eps_omega if eps_omega is None else eps_omega
    _, m = score_actions(model.rates, model.outages, eps)
    _, constraint, _ = model.evaluate(_init_policy(model, m))
    return float(constraint), m


@dataclass(frozen=True)
class LowRegimeResult:
    policy: JointPolicy
    value: float
    omega_init: float
    action: int
    scale: float
    exact_value: float
    exact_constraint: float


def low_regime_policy(model: CmdpModel, eps_omega: float | None = None) -> LowRegimeResult:
    """Scaled all-know access policy, valid when the budget is at most omega_init.

    ``value`` is the closed form; ``exact_value`` and ``exact_constraint``
    come from evaluating the scaled policy on its own induced chain, since
    scaling the policy also changes the stationary law.
    """
    eps = model.eps_omega if eps_omega is None else eps_omega
    if eps < 0:
        raise ValueError("budget must be nonnegative")
    w, m = omega_init(model, eps)
    if eps > w + CONSTRAINT_TOL:
        raise RegimeError(f"budget {eps:.6g} exceeds omega_init {w:.6g}: high-access regime")
    scale = 0.0 if w <= 0 else min(eps / w, 1.0)
    policy = _init_policy(model, m, scale)
    _, value = upper_bound(model.rates, model.outages, eps)
    exact_value, exact_constraint, _ = model.evaluate(policy)
    return LowRegimeResult(policy, value, w, m, scale, exact_value, exact_constraint)


# --- LP optimum ------------------------------------------------------------

@dataclass(frozen=True)
class CentralizedSolution:
    policy: JointPolicy
    su_sum_throughput: float
    pu_throughput: float
    constraint_value: float
    eps_omega: float
    regime: str
    upper_bound: float
    omega_init: float
    lp_iterations: int = 0
    model: CmdpModel | None = field(default=None, repr=False, compare=False)


def solve_model(model: CmdpModel, eps_omega: float | None = None):
    """Optimal occupation measure for ``model``; returns ``(policy, lp_solution)``."""
    eps = model.eps_omega if eps_omega is None else eps_omega
    sol = solve_lp(build_occupation_lp(model.kernel, model.reward, model.cost, eps))
    if not sol.ok:
        raise SolveError(f"occupation LP returned status {sol.status}")
    return recover_policy(sol.x, len(model.space), model.n_actions), sol


def solve_centralized(config: ScenarioConfig, model: CmdpModel | None = None) -> CentralizedSolution:
    """Optimal centralized policy for ``config``.

    The LP always decides the policy; the regime tag and bound are reported
    alongside for cross-checking.
    """
    if model is None:
        model = build_model(config, "centralized")
    eps = model.eps_omega
    policy, sol = solve_model(model, eps)
    value, constraint, _ = model.evaluate(policy)
    if constraint > eps + 1e-7:
        raise SolveError(f"recovered policy violates the budget ({constraint:.3g} > {eps:.3g})")
    w, _ = omega_init(model, eps)
    _, ub = upper_bound(model.rates, model.outages, eps)
    pu = model.pu_idle_throughput - config.rp * constraint
    return CentralizedSolution(
        policy=policy,
        su_sum_throughput=value,
        pu_throughput=pu,
        constraint_value=constraint,
        eps_omega=eps,
        regime="low" if eps <= w else "high",
        upper_bound=ub,
        omega_init=w,
        lp_iterations=sol.iterations,
        model=model,
    )


def regime_boundary(model: CmdpModel, tol: float = 1e-6) -> float:
    """Largest eps_PU in the low-access regime (bisection on eps_omega - omega_init)."""
    scale = 1.0 - model.outages.rho_p[0]

    def excess(eps_pu):
        e = scale * eps_pu
        return e - omega_init(model, e)[0]

    lo, hi = 0.0, 1.0
    if excess(hi) <= 0:
        return 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo
