"""Decentralized access: per-user best responses iterated to a Nash equilibrium.

Each SU picks its own binary action from a local randomized policy given the
shared system state. Holding the other users' policies fixed turns the
problem of one user into an ordinary CMDP over two actions, solved by the
same occupation-measure LP as the centralized design.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .centralized import CmdpModel, build_model
from .config import ScenarioConfig
from .lpcore import LpProblem, build_occupation_lp, recover_policy, solve_lp
from .markov import JointPolicy, TransitionKernel, evaluate_policy

CONVERGENCE_TOL = 1e-6
MAX_SWEEPS = 200
DEFAULT_RESTARTS = 5
_NASH_STREAM = 0x4E415348
# keep the incumbent policy when it is already optimal to this tolerance
RETAIN_TOL = 1e-10


class BestResponseError(RuntimeError):
    pass


@dataclass(frozen=True)
class LocalPolicy:
    """mu[s, a_n] for a_n in {0 (idle), 1 (transmit)}."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        if mu.ndim != 2 or mu.shape[1] != 2:
            raise ValueError("local policy must have shape (states, 2)")
        if np.any(mu < -1e-12) or np.abs(mu.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("local policy rows must be probability vectors")
        mu = np.clip(mu, 0.0, None)
        mu = mu / mu.sum(axis=1, keepdims=True)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def from_access(cls, p) -> "LocalPolicy":
        p = np.asarray(p, dtype=float)
        return cls(np.column_stack([1.0 - p, p]))

    @property
    def access(self) -> np.ndarray:
        return self.mu[:, 1]


def compose_action(local_actions) -> int:
    """Joint action index sum_n a_n 2**n from per-user bits (user 0 first)."""
    a = 0
    for n, bit in enumerate(local_actions):
        if bit not in (0, 1):
            raise ValueError("local actions must be 0 or 1")
        a |= int(bit) << n
    return a


def joint_policy(policies) -> JointPolicy:
    """Product distribution mu(a|s) = prod_n mu_n(a_n|s)."""
    S = policies[0].mu.shape[0]
    N = len(policies)
    mu = np.ones((S, 1 << N))
    for a in range(1 << N):
        for n, pol in enumerate(policies):
            mu[:, a] *= pol.mu[:, (a >> n) & 1]
    return JointPolicy(mu)


def _others_weights(m: int, policies, S: int) -> np.ndarray:
    """w[s, a] = prod_{n != m} mu_n(a_n|s); independent of bit m of a."""
    N = len(policies)
    w = np.ones((S, 1 << N))
    for a in range(1 << N):
        for n, pol in enumerate(policies):
            if n != m:
                w[:, a] *= pol.mu[:, (a >> n) & 1]
    return w


def best_response_model(m: int, policies, kernel: TransitionKernel, reward, cost):
    """CMDP seen by user ``m`` when the others follow ``policies``.

    Returns ``(P', r', d')`` with shapes (S, 2, S), (S, 2), (S, 2): the joint
    kernel, reward and cost averaged over the other users' actions.
    """
    P = kernel.P
    S, A, _ = P.shape
    if len(policies) != A.bit_length() - 1 or not 0 <= m < len(policies):
        raise ValueError("policy count does not match the kernel's action set")
    for pol in policies:
        if pol.mu.shape[0] != S:
            raise ValueError("local policy state count does not match the kernel")
    w = _others_weights(m, policies, S)
    P_m = np.zeros((S, 2, S))
    r_m = np.zeros((S, 2))
    d_m = np.zeros((S, 2))
    reward = np.asarray(reward)
    cost = np.asarray(cost)
    for a in range(A):
        bit = (a >> m) & 1
        P_m[:, bit, :] += w[:, a, None] * P[:, a, :]
        r_m[:, bit] += w[:, a] * reward[:, a]
        d_m[:, bit] += w[:, a] * cost[:, a]
    return P_m, r_m, d_m


@dataclass(frozen=True)
class BestResponse:
    policy: LocalPolicy
    value: float
    constraint: float
    feasible: bool


def best_response(m: int, policies, model: CmdpModel, eps_omega: float | None = None,
                  incumbent: bool = True) -> BestResponse:
    """Optimal local policy of user ``m`` with the others fixed.

    If no local policy meets the budget (possible only while the others
    are themselves over budget), the policy minimizing the cost is returned
    with ``feasible=False``. With ``incumbent`` set, the current policy of
    user m is kept when it already attains the optimum.
    """
    eps = model.eps_omega if eps_omega is None else eps_omega
    P_m, r_m, d_m = best_response_model(m, policies, model.kernel, model.reward, model.cost)
    sub = TransitionKernel(P_m, model.space)
    lp = build_occupation_lp(sub, r_m, d_m, eps)
    sol = solve_lp(lp)
    feasible = sol.ok
    if not feasible:
        if sol.status != "infeasible":
            raise BestResponseError(f"best-response LP status {sol.status}")
        # restore feasibility: minimize the cost over the flow polytope
        sol = solve_lp(LpProblem(-d_m.ravel(), lp.A_eq, lp.b_eq))
        if not sol.ok:
            raise BestResponseError(f"cost-minimization LP status {sol.status}")
    S = len(model.space)
    new = LocalPolicy(recover_policy(sol.x, S, 2).mu)
    value, constraint, _ = evaluate_policy(sub, JointPolicy(new.mu), r_m, d_m)
    if incumbent:
        cur = policies[m]
        v0, c0, _ = evaluate_policy(sub, JointPolicy(cur.mu), r_m, d_m)
        if feasible:
            keep = c0 <= eps + 1e-9 and v0 >= value - RETAIN_TOL * max(1.0, abs(value))
        else:
            keep = c0 <= constraint + RETAIN_TOL
        if keep:
            new, value, constraint = cur, v0, c0
    return BestResponse(new, float(value), float(constraint), feasible)


@dataclass(frozen=True)
class NashRun:
    policies: tuple
    value: float
    constraint: float
    trace: tuple
    sweeps: int
    converged: bool
    feasible: bool


@dataclass(frozen=True)
class NashResult:
    policies: tuple
    su_sum_throughput: float
    constraint_value: float
    eps_omega: float
    trace: tuple
    best_restart: int
    converged: bool
    sweeps: int
    runs: tuple = field(default=(), repr=False)
    model: CmdpModel | None = field(default=None, repr=False, compare=False)

    @property
    def joint(self) -> JointPolicy:
        return joint_policy(self.policies)


def _initial_policies(config: ScenarioConfig, S: int, restart: int):
    N = config.n_users
    if restart == 0:
        return [LocalPolicy.from_access(np.full(S, 0.5)) for _ in range(N)]
    rng = np.random.default_rng(np.random.SeedSequence([config.rng_seed, _NASH_STREAM, restart]))
    return [LocalPolicy.from_access(rng.random(S)) for _ in range(N)]


def run_best_response(model: CmdpModel, policies, eps_omega: float | None = None,
                      max_sweeps: int = MAX_SWEEPS, tol: float = CONVERGENCE_TOL) -> NashRun:
    """Cycle best responses over users 0..N-1 until no entry moves more than ``tol``.

    The trace records the joint objective after each sweep, starting from
    the first sweep that ends within budget.
    """
    eps = model.eps_omega if eps_omega is None else eps_omega
    policies = list(policies)
    trace = []
    converged = False
    sweeps = 0
    value = constraint = 0.0
    for sweeps in range(1, max_sweeps + 1):
        change = 0.0
        for m in range(len(policies)):
            br = best_response(m, policies, model, eps)
            change = max(change, float(np.abs(br.policy.mu - policies[m].mu).max()))
            policies[m] = br.policy
        value, constraint, _ = evaluate_policy(model.kernel, joint_policy(policies),
                                               model.reward, model.cost)
        if constraint <= eps + 1e-9:
            trace.append(value)
        if change <= tol:
            converged = True
            break
    feasible = constraint <= eps + 1e-9
    return NashRun(tuple(policies), value, constraint, tuple(trace), sweeps, converged, feasible)


def nash_solve(config: ScenarioConfig, restarts: int = DEFAULT_RESTARTS,
               model: CmdpModel | None = None, max_sweeps: int = MAX_SWEEPS) -> NashResult:
    """Best-response iteration from several starting points; returns the best run.

    Start 0 gives every user access probability 0.5 in every state; the
    others draw uniform access probabilities from a generator seeded by the
    config seed and the restart index.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if model is None:
        model = build_model(config, "decentralized")
    S = len(model.space)
    runs = [run_best_response(model, _initial_policies(config, S, r), max_sweeps=max_sweeps)
            for r in range(restarts)]

    def rank(i):
        run = runs[i]
        return (run.feasible, run.value if run.feasible else -run.constraint, run.converged, -i)

    best = max(range(restarts), key=rank)
    run = runs[best]
    return NashResult(
        policies=run.policies,
        su_sum_throughput=run.value,
        constraint_value=run.constraint,
        eps_omega=model.eps_omega,
        trace=run.trace,
        best_restart=best,
        converged=run.converged,
        sweeps=run.sweeps,
        runs=tuple(runs),
        model=model,
    )
