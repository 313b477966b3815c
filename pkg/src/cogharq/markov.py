"""ARQ/knowledge state space, transition kernels and stationary analysis.

A state is ``(t, phi)``: the ARQ transmission index ``t`` in 1..T and the
knowledge bitmask ``phi`` (bit n set = SU receiver n knows the current PU
message). Index 0 is the restart state (1, no knowledge); state (t, phi)
for t >= 2 has index ``1 + (t - 2) * 2**N + phi``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_TOL = 1e-12


class ChainError(RuntimeError):
    """Raised for non-stochastic kernels or chains without a unique stationary law."""


def action_to_bits(a: int, N: int) -> tuple:
    """Activity vector of action ``a``: entry n is 1 iff SU n transmits."""
    if not 0 <= a < (1 << N):
        raise ValueError(f"action {a} out of range for {N} users")
    return tuple((a >> n) & 1 for n in range(N))


def bits_to_action(bits) -> int:
    """Inverse of :func:`action_to_bits` (sum of bit_n * 2**n)."""
    a = 0
    for n, b in enumerate(bits):
        if b not in (0, 1):
            raise ValueError("activity bits must be 0 or 1")
        a |= b << n
    return a


def phi_string(phi: int, N: int) -> str:
    return "".join("K" if (phi >> n) & 1 else "U" for n in range(N))


@dataclass(frozen=True)
class SystemState:
    t: int
    phi: int

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("ARQ index starts at 1")
        if self.t == 1 and self.phi != 0:
            raise ValueError("only (1, no knowledge) is allowed at t = 1")


class StateSpace:
    def __init__(self, n_users: int, arq_deadline: int):
        if arq_deadline < 2:
            raise ValueError("arq_deadline must be >= 2")
        self.n_users = n_users
        self.T = arq_deadline
        self.n_phi = 1 << n_users
        self.states = [SystemState(1, 0)] + [
            SystemState(t, phi) for t in range(2, arq_deadline + 1) for phi in range(self.n_phi)
        ]

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def index(self, t: int, phi: int) -> int:
        if t == 1:
            if phi != 0:
                raise ValueError("only (1, no knowledge) is allowed at t = 1")
            return 0
        if not 2 <= t <= self.T or not 0 <= phi < self.n_phi:
            raise ValueError(f"no state ({t}, {phi})")
        return 1 + (t - 2) * self.n_phi + phi

    def phis(self):
        """Knowledge bitmask of every state, in index order."""
        return np.array([s.phi for s in self.states])

    def all_known(self):
        """Indices of the states where every receiver knows the PU message."""
        full = self.n_phi - 1
        return [i for i, s in enumerate(self.states) if s.phi == full]


def pu_arq_step(t: int, t_next: int, a: int, rho_p, T: int) -> float:
    """PU ARQ transition probability from ``t`` to ``t_next`` under action ``a``."""
    rho = rho_p[a] if np.ndim(rho_p) else float(rho_p)
    if t_next == 1:
        return 1.0 if t == T else 1.0 - rho
    if t < T and t_next == t + 1:
        return rho
    return 0.0


def knowledge_step(phi: int, phi_next: int, a: int, rho_ps, N: int) -> float:
    """Pr(phi_next | phi, a) as a product of independent per-receiver factors.

    ``rho_ps[n, a, phi]`` is the probability receiver n fails to decode the PU
    message; entries where receiver n already knows it are never read.
    """
    p = 1.0
    for n in range(N):
        known, known_next = (phi >> n) & 1, (phi_next >> n) & 1
        if known:
            if not known_next:
                return 0.0
        else:
            fail = float(rho_ps[n, a, phi])
            p *= fail if not known_next else 1.0 - fail
    return p


@dataclass(frozen=True)
class TransitionKernel:
    """P[s, a, s'] over a :class:`StateSpace`."""

    P: np.ndarray
    space: StateSpace

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        P.setflags(write=False)
        object.__setattr__(self, "P", P)


def build_kernel(space: StateSpace, rho_p, rho_ps, check_tol: float = 1e-9) -> TransitionKernel:
    """Joint ARQ/knowledge kernel.

    On a restart (PU success, or the deadline reached) the next state is
    always (1, no knowledge): a new PU message voids old knowledge.
    """
    N, T = space.n_users, space.T
    A = 1 << N
    S = len(space)
    P = np.zeros((S, A, S))
    know = np.zeros((A, space.n_phi, space.n_phi))
    for a in range(A):
        for phi in range(space.n_phi):
            for phi2 in range(space.n_phi):
                know[a, phi, phi2] = knowledge_step(phi, phi2, a, rho_ps, N)
    for s, st in enumerate(space):
        for a in range(A):
            P[s, a, 0] = pu_arq_step(st.t, 1, a, rho_p, T)
            if st.t < T:
                q = pu_arq_step(st.t, st.t + 1, a, rho_p, T)
                lo = space.index(st.t + 1, 0)
                P[s, a, lo:lo + space.n_phi] = q * know[a, st.phi]
    err = np.abs(P.sum(axis=2) - 1.0).max()
    if err > check_tol:
        raise ChainError(f"kernel rows deviate from 1 by {err:.3g}")
    if P.min() < -check_tol:
        raise ChainError("kernel has negative entries (outage tables outside [0, 1])")
    return TransitionKernel(P, space)


@dataclass(frozen=True)
class JointPolicy:
    """mu[s, a]: probability of joint action a in state s."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        if mu.ndim != 2:
            raise ValueError("policy must be a (states, actions) array")
        if np.any(mu < -ROW_TOL):
            raise ValueError("policy has negative entries")
        mu = np.clip(mu, 0.0, None)
        if np.abs(mu.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("policy rows must sum to 1")
        mu = mu / mu.sum(axis=1, keepdims=True)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def idle(cls, n_states: int, n_actions: int) -> "JointPolicy":
        mu = np.zeros((n_states, n_actions))
        mu[:, 0] = 1.0
        return cls(mu)


def induced_chain(kernel: TransitionKernel, policy: JointPolicy) -> np.ndarray:
    """State-to-state matrix M[s, s'] = sum_a mu(a|s) P[s, a, s']."""
    if policy.mu.shape != kernel.P.shape[:2]:
        raise ValueError(f"policy shape {policy.mu.shape} does not match kernel {kernel.P.shape[:2]}")
    return np.einsum("sa,sat->st", policy.mu, kernel.P)


def stationary_distribution(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Unique pi with pi M = pi, sum(pi) = 1 (dense solve, one balance row replaced)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("transition matrix must be square")
    if np.abs(M.sum(axis=1) - 1.0).max() > 1e-9 or np.any(M < -ROW_TOL):
        raise ChainError("matrix is not row-stochastic")
    A = M.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise ChainError("chain has no unique stationary distribution") from exc
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    if np.any(pi < -1e-9):
        raise ChainError("stationary solve produced negative mass")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = np.abs(pi @ M - pi).max()
    if resid > tol:
        raise ChainError(f"stationary residual {resid:.3g} exceeds {tol:g}")
    return pi


def evaluate_policy(kernel: TransitionKernel, policy: JointPolicy, reward, cost):
    """Long-run average reward and cost of a stationary policy.

    Returns ``(reward, cost, pi)``.
    """
    pi = stationary_distribution(induced_chain(kernel, policy))
    occ = pi[:, None] * policy.mu
    return float((occ * reward).sum()), float((occ * cost).sum()), pi
