"""A small dense simplex solver and the occupation-measure LP built on it.

The problems solved here have at most a few hundred variables, so a dense
tableau with Bland's rule is fast enough and returns exact vertices, which
keeps policy recovery crisp.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .markov import JointPolicy, TransitionKernel

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9
ZERO_OCC = 1e-12

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


@dataclass(frozen=True)
class LpProblem:
    """maximize c.x subject to A_eq x = b_eq, A_ineq x <= b_ineq, x >= 0."""

    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.shape[0]
        object.__setattr__(self, "c", c)
        for A_name, b_name in (("A_eq", "b_eq"), ("A_ineq", "b_ineq")):
            A, b = getattr(self, A_name), getattr(self, b_name)
            if A is None:
                A, b = np.zeros((0, n)), np.zeros(0)
            A = np.atleast_2d(np.asarray(A, dtype=float))
            b = np.asarray(b, dtype=float).ravel()
            if A.shape[0] == 0:
                A = A.reshape(0, n)
            if A.shape != (b.shape[0], n):
                raise ValueError(f"{A_name} has shape {A.shape}, expected ({b.shape[0]}, {n})")
            object.__setattr__(self, A_name, A)
            object.__setattr__(self, b_name, b)
        for arr in (self.c, self.A_eq, self.b_eq, self.A_ineq, self.b_ineq):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP coefficients must be finite")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    def residual(self, x) -> float:
        """Largest violation of any constraint (including x >= 0) at ``x``."""
        x = np.asarray(x, dtype=float)
        viol = [max(0.0, -x.min(initial=0.0))]
        if self.A_eq.shape[0]:
            viol.append(np.abs(self.A_eq @ x - self.b_eq).max())
        if self.A_ineq.shape[0]:
            viol.append(max(0.0, (self.A_ineq @ x - self.b_ineq).max()))
        return float(max(viol))


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray | None
    objective: float
    status: str
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Row-reduced tableau [A | b] with an explicit basis list."""

    def __init__(self, A, b, basis):
        self.T = np.hstack([A, b[:, None]])
        self.basis = list(basis)
        self.pivots = 0

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.nonzero(col)[0]
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
        self.basis[r] = j
        self.pivots += 1

    def reduced_costs(self, cost, ncols):
        # reduced cost of column j for a maximization: c_j - c_B B^-1 A_j
        cb = cost[self.basis]
        return cost[:ncols] - cb @ self.T[:, :ncols]

    def run(self, cost, allowed, max_iter):
        """Bland's-rule primal simplex maximizing ``cost`` over ``allowed`` columns."""
        T = self.T
        while True:
            if self.pivots >= max_iter:
                raise RuntimeError("simplex iteration limit reached")
            d = self.reduced_costs(cost, T.shape[1] - 1)
            cand = np.nonzero((d > PIVOT_TOL) & allowed)[0]
            if cand.size == 0:
                return OPTIMAL
            j = int(cand[0])
            col = T[:, j]
            rows = np.nonzero(col > PIVOT_TOL)[0]
            if rows.size == 0:
                return UNBOUNDED
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(min(tied, key=lambda i: self.basis[i]))
            self.pivot(r, j)


def solve_lp(problem: LpProblem, max_iter: int = 50_000) -> LpSolution:
    """Two-phase dense simplex with Bland's anti-cycling rule."""
    n = problem.n_vars
    m_eq, m_in = problem.A_eq.shape[0], problem.A_ineq.shape[0]
    m = m_eq + m_in
    if m == 0:
        if np.any(problem.c > PIVOT_TOL):
            return LpSolution(None, np.inf, UNBOUNDED)
        return LpSolution(np.zeros(n), 0.0, OPTIMAL)

    # standard form: [A_eq 0; A_in I] [x; s] = b, rows flipped so b >= 0
    A = np.zeros((m, n + m_in))
    A[:m_eq, :n] = problem.A_eq
    A[m_eq:, :n] = problem.A_ineq
    A[m_eq:, n:] = np.eye(m_in)
    b = np.concatenate([problem.b_eq, problem.b_ineq])
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    ncore = n + m_in

    # slack columns that still carry +1 start in the basis; other rows get artificials
    basis = [-1] * m
    for i in range(m_eq, m):
        if not neg[i]:
            basis[i] = n + (i - m_eq)
    art_rows = [i for i in range(m) if basis[i] < 0]
    n_art = len(art_rows)
    full = np.zeros((m, ncore + n_art))
    full[:, :ncore] = A
    for k, i in enumerate(art_rows):
        full[i, ncore + k] = 1.0
        basis[i] = ncore + k
    tab = _Tableau(full, b.copy(), basis)

    if n_art:
        cost1 = np.zeros(ncore + n_art + 1)
        cost1[ncore:ncore + n_art] = -1.0
        tab.run(cost1, np.ones(ncore + n_art, dtype=bool), max_iter)
        infeas = tab.T[[i for i, j in enumerate(tab.basis) if j >= ncore], -1].sum()
        if infeas > FEAS_TOL * max(1.0, np.abs(b).max()):
            return LpSolution(None, -np.inf, INFEASIBLE, tab.pivots)
        # drive zero-level artificials out; rows where that is impossible are redundant
        keep = []
        for r in range(m):
            if tab.basis[r] >= ncore:
                cand = np.nonzero(np.abs(tab.T[r, :ncore]) > PIVOT_TOL)[0]
                if cand.size:
                    tab.pivot(r, int(cand[0]))
                    keep.append(r)
            else:
                keep.append(r)
        tab.T = np.hstack([tab.T[keep, :ncore], tab.T[keep, -1:]])
        tab.basis = [tab.basis[r] for r in keep]
        A, b = A[keep], b[keep]

    cost2 = np.zeros(ncore + 1)
    cost2[:n] = problem.c
    status = tab.run(cost2, np.ones(ncore, dtype=bool), max_iter)
    if status == UNBOUNDED:
        return LpSolution(None, np.inf, UNBOUNDED, tab.pivots)

    # polish: recompute the basic values from the original data
    x_all = np.zeros(ncore)
    B = A[:, tab.basis]
    try:
        xb = np.linalg.solve(B, b)
    except np.linalg.LinAlgError:
        xb = tab.T[:, -1]
    if np.any(xb < -FEAS_TOL):
        xb = tab.T[:, -1]
    x_all[tab.basis] = np.clip(xb, 0.0, None)
    x = x_all[:n]
    return LpSolution(x, float(problem.c @ x), OPTIMAL, tab.pivots)


def build_occupation_lp(kernel: TransitionKernel, reward, cost, budget: float) -> LpProblem:
    """Average-reward CMDP as an LP over the occupation measure x(s, a).

    Variables are ordered state-major (index ``s * A + a``). Rows: one flow
    balance per state, the normalization, and one cost row ``cost.x <= budget``.
    """
    P = kernel.P
    S, A, _ = P.shape
    reward = np.asarray(reward, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if reward.shape != (S, A) or cost.shape != (S, A):
        raise ValueError(f"reward and cost must have shape {(S, A)}")
    flow = -P.reshape(S * A, S).T.copy()
    for s in range(S):
        flow[s, s * A:(s + 1) * A] += 1.0
    A_eq = np.vstack([flow, np.ones((1, S * A))])
    b_eq = np.zeros(S + 1)
    b_eq[-1] = 1.0
    return LpProblem(reward.ravel(), A_eq, b_eq, cost.reshape(1, -1), np.array([float(budget)]))


def recover_policy(x, n_states: int, n_actions: int) -> JointPolicy:
    """mu(a|s) = x(s,a) / sum_a x(s,a); states never visited fall back to idle."""
    x = np.asarray(x, dtype=float).reshape(n_states, n_actions)
    if np.any(x < -FEAS_TOL):
        raise ValueError("occupation measure has negative entries")
    x = np.where(x > ZERO_OCC, x, 0.0)  # round-off from the basis polish
    tot = x.sum(axis=1)
    mu = np.zeros_like(x)
    live = tot > ZERO_OCC
    mu[live] = x[live] / tot[live, None]
    mu[~live, 0] = 1.0
    return JointPolicy(mu)
