import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogharq.markov import (ChainError, JointPolicy, StateSpace, SystemState, action_to_bits,
                            bits_to_action, build_kernel, evaluate_policy, induced_chain,
                            knowledge_step, phi_string, pu_arq_step, stationary_distribution)


def random_tables(rng, N):
    A = 1 << N
    rho_p = rng.uniform(0.1, 0.9, A)
    rho_ps = rng.uniform(0.0, 1.0, (N, A, 1 << N))
    return rho_p, rho_ps


@pytest.mark.parametrize("a,N,bits", [(0, 2, (0, 0)), (3, 2, (1, 1)), (5, 3, (1, 0, 1)),
                                      (2, 2, (0, 1))])
def test_action_bits(a, N, bits):
    assert action_to_bits(a, N) == bits
    assert bits_to_action(bits) == a


def test_action_bits_errors():
    with pytest.raises(ValueError):
        action_to_bits(4, 2)
    with pytest.raises(ValueError):
        bits_to_action((0, 2))


def test_state_space_layout():
    sp = StateSpace(2, 3)
    assert len(sp) == 9
    assert sp.index(1, 0) == 0 and sp.index(2, 0) == 1 and sp.index(3, 3) == 8
    for i, s in enumerate(sp):
        assert sp.index(s.t, s.phi) == i
    assert sp.all_known() == [4, 8]
    assert phi_string(1, 2) == "KU"
    with pytest.raises(ValueError):
        sp.index(1, 1)
    with pytest.raises(ValueError):
        SystemState(1, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(2, 64))
def test_state_space_size(N, T):
    sp = StateSpace(N, T)
    assert len(sp) == 1 + (T - 1) * 2 ** N
    assert len({(s.t, s.phi) for s in sp}) == len(sp)


def test_pu_arq_step():
    rho = np.array([0.3, 0.6])
    T = 4
    assert pu_arq_step(T, 1, 1, rho, T) == 1.0
    assert pu_arq_step(2, 3, 1, rho, T) == 0.6
    assert pu_arq_step(2, 1, 0, rho, T) == pytest.approx(0.7)
    assert pu_arq_step(2, 2, 0, rho, T) == 0.0
    assert pu_arq_step(T, T + 1, 0, rho, T) == 0.0


def test_knowledge_step_cases(rng):
    N = 2
    _, rho_ps = random_tables(rng, N)
    for a in range(4):
        assert knowledge_step(3, 3, a, rho_ps, N) == 1.0
        assert knowledge_step(1, 2, a, rho_ps, N) == 0.0
        # enumerate the two independent decode events from (U, U)
        expected = {}
        for d0, d1 in itertools.product((0, 1), repeat=2):
            p0 = 1 - rho_ps[0, a, 0] if d0 else rho_ps[0, a, 0]
            p1 = 1 - rho_ps[1, a, 0] if d1 else rho_ps[1, a, 0]
            expected[d0 | (d1 << 1)] = p0 * p1
        got = {phi2: knowledge_step(0, phi2, a, rho_ps, N) for phi2 in range(4)}
        assert got == pytest.approx(expected, abs=1e-15)
        assert sum(got.values()) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_knowledge_marginals(rng, N):
    _, rho_ps = random_tables(rng, N)
    for a in range(1 << N):
        for phi in range(1 << N):
            total = sum(knowledge_step(phi, p2, a, rho_ps, N) for p2 in range(1 << N))
            assert total == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("N,T", [(1, 2), (2, 3), (3, 4)])
def test_kernel_structure(rng, N, T):
    sp = StateSpace(N, T)
    rho_p, rho_ps = random_tables(rng, N)
    P = build_kernel(sp, rho_p, rho_ps).P
    np.testing.assert_allclose(P.sum(axis=2), 1.0, atol=1e-12)
    full = (1 << N) - 1
    for s, state in enumerate(sp):
        for a in range(1 << N):
            if state.t == T:
                assert P[s, a, 0] == 1.0
            else:
                assert P[s, a, 0] == pytest.approx(1 - rho_p[a])
                if state.phi == full:
                    assert P[s, a, sp.index(state.t + 1, full)] == pytest.approx(rho_p[a])
    assert not P.flags.writeable


def test_kernel_row_check():
    sp = StateSpace(1, 2)
    with pytest.raises(ChainError):
        build_kernel(sp, np.array([0.5, 0.5]), np.full((1, 2, 2), 1.5))


def test_induced_chain_hand_composed():
    # N=1, T=2, always idle: states (1,U), (2,U), (2,K)
    rho_p = np.array([0.4, 0.7])
    rho_ps = np.array([[[0.25, 0.0], [0.6, 0.0]]])
    sp = StateSpace(1, 2)
    kern = build_kernel(sp, rho_p, rho_ps)
    M = induced_chain(kern, JointPolicy.idle(3, 2))
    expected = np.array([
        [0.6, 0.4 * 0.25, 0.4 * 0.75],
        [1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
    ])
    np.testing.assert_allclose(M, expected, atol=1e-15)
    # deterministic "always transmit" selects the a=1 slice
    mu = np.zeros((3, 2))
    mu[:, 1] = 1
    np.testing.assert_array_equal(induced_chain(kern, JointPolicy(mu)), kern.P[:, 1, :])


def test_joint_policy_validation():
    with pytest.raises(ValueError):
        JointPolicy(np.array([[0.5, 0.4]]))
    with pytest.raises(ValueError):
        JointPolicy(np.array([[1.1, -0.1]]))
    with pytest.raises(ValueError):
        induced_chain(build_kernel(StateSpace(1, 2), np.array([0.5, 0.5]), np.zeros((1, 2, 2))),
                      JointPolicy.idle(4, 2))


def test_stationary_swap_and_errors():
    np.testing.assert_allclose(stationary_distribution(np.array([[0, 1.0], [1.0, 0]])), [0.5, 0.5])
    with pytest.raises(ChainError):
        stationary_distribution(np.eye(3))
    with pytest.raises(ChainError):
        stationary_distribution(np.array([[0.5, 0.4], [0.5, 0.5]]))


def test_stationary_matches_renewal_simulation():
    # forward-or-restart chain: from state k go to k+1 w.p. q[k], else back to 0
    q = np.array([0.7, 0.5, 0.8, 0.3, 0.0])
    n = len(q)
    M = np.zeros((n, n))
    for k in range(n):
        M[k, 0] = 1 - q[k]
        if k + 1 < n:
            M[k, k + 1] = q[k]
    pi = stationary_distribution(M)
    # regenerative simulation, vectorized over independent cycles (~1e7 steps)
    rng = np.random.default_rng(2024)
    cycles = 10**7 // int(np.cumprod(np.r_[1, q[:-1]]).sum())
    alive = np.ones(cycles, dtype=bool)
    counts = np.zeros(n)
    for k in range(n):
        counts[k] = alive.sum()
        alive &= rng.random(cycles) < q[k]
    assert counts.sum() > 9e6
    np.testing.assert_allclose(counts / counts.sum(), pi, atol=1e-3)


def test_default_instance_residual_and_evaluation(model2):
    kern = model2.kernel
    S, A = kern.P.shape[:2]
    rng = np.random.default_rng(5)
    mu = rng.random((S, A))
    pol = JointPolicy(mu / mu.sum(axis=1, keepdims=True))
    M = induced_chain(kern, pol)
    pi = stationary_distribution(M)
    assert np.abs(pi @ M - pi).max() <= 1e-10
    assert pi.min() >= 0 and pi.sum() == pytest.approx(1.0, abs=1e-14)
    r, c, pi2 = evaluate_policy(kern, pol, model2.reward, model2.cost)
    occ = pi[:, None] * pol.mu
    assert r == pytest.approx((occ * model2.reward).sum(), abs=1e-14)
    assert c == pytest.approx((occ * model2.cost).sum(), abs=1e-14)
