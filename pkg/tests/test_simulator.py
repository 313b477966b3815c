import numpy as np
import pytest

from cogharq import kernels
from cogharq.centralized import build_model, solve_centralized, upper_bound
from cogharq.decentralized import LocalPolicy, joint_policy
from cogharq.markov import JointPolicy, StateSpace
from cogharq.simulator import empirical_state_occupancy, simulate


def test_determinism(cfg2, model2):
    pol = solve_centralized(cfg2, model2).policy
    a = simulate(pol, cfg2, 20_000, seed=4, rates=model2.rates)
    b = simulate(pol, cfg2, 20_000, seed=4, rates=model2.rates)
    assert a == b
    c = simulate(pol, cfg2, 20_000, seed=5, rates=model2.rates)
    assert c != a


def test_block_size_does_not_change_the_path(cfg2, model2):
    pol = solve_centralized(cfg2, model2).policy
    a = simulate(pol, cfg2, 30_000, seed=1, rates=model2.rates, block=1 << 16)
    b = simulate(pol, cfg2, 30_000, seed=1, rates=model2.rates, block=5000)
    assert a.su_sum == pytest.approx(b.su_sum, abs=1e-12)
    np.testing.assert_array_equal(a.visits, b.visits)


def test_idle_pu_throughput(cfg2, model2):
    rep = simulate(JointPolicy.idle(len(model2.space), 4), cfg2, 200_000, rates=model2.rates)
    assert rep.su_sum == 0.0 and rep.constraint == 0.0
    assert abs(rep.pu_throughput - model2.pu_idle_throughput) <= rep.pu_throughput_ci
    assert rep.pu_throughput == pytest.approx(1.569, abs=0.01)


def test_frequencies_sum_to_one(cfg2, model2):
    rep = simulate(JointPolicy.idle(len(model2.space), 4), cfg2, 12_345, rates=model2.rates)
    assert rep.visits.sum() == 12_345
    assert empirical_state_occupancy(rep).sum() == pytest.approx(1.0)


def test_pm_known_matches_upper_bound(cfg2):
    cfg = cfg2.replace(pm_known=True)
    model = build_model(cfg)
    mu, ub = upper_bound(model.rates, model.outages, model.eps_omega)
    pol = JointPolicy(np.tile(mu, (len(model.space), 1)))
    rep = simulate(pol, cfg, 400_000, rates=model.rates)
    assert abs(rep.su_sum - ub) <= 2 * rep.su_sum_se + 2e-3  # table MC error allowance


def test_single_user_occupancy(cfg1):
    cfg = cfg1.replace(arq_deadline=2)
    model = build_model(cfg)
    pol = solve_centralized(cfg, model).policy
    _, _, pi = model.evaluate(pol)
    rep = simulate(pol, cfg, 300_000, rates=model.rates)
    np.testing.assert_allclose(empirical_state_occupancy(rep), pi, atol=1e-2)
    assert len(rep.visits) == len(StateSpace(1, 2))


def test_local_and_joint_paths_agree_in_law(cfg2, dec_model2):
    S = len(dec_model2.space)
    rng = np.random.default_rng(0)
    pols = [LocalPolicy.from_access(0.3 * rng.random(S)) for _ in range(2)]
    loc = simulate(pols, cfg2, 200_000, rates=dec_model2.rates)
    jnt = simulate(joint_policy(pols), cfg2, 200_000, seed=99, rates=dec_model2.rates)
    v, c, _ = dec_model2.evaluate(joint_policy(pols))
    for rep in (loc, jnt):
        assert abs(rep.su_sum - v) <= 4 * rep.su_sum_se + 3e-3


def test_bad_inputs(cfg2, model2):
    with pytest.raises(ValueError):
        simulate(JointPolicy.idle(3, 4), cfg2, 100)
    with pytest.raises(ValueError):
        simulate([LocalPolicy.from_access(np.zeros(9))], cfg2, 100)
    with pytest.raises(ValueError):
        simulate(JointPolicy.idle(9, 4), cfg2, 0)


@pytest.mark.skipif("cython" not in kernels.implementations(), reason="compiled backend not built")
def test_backends_give_identical_reports(cfg2, model2, monkeypatch):
    pol = solve_centralized(cfg2, model2).policy
    reps = []
    for name in ("python", "cython"):
        monkeypatch.setattr(kernels, "simulate_chunk", kernels.implementations()[name].simulate_chunk)
        reps.append(simulate(pol, cfg2, 20_000, rates=model2.rates))
    assert reps[0].su_sum == pytest.approx(reps[1].su_sum, rel=1e-12)
    np.testing.assert_array_equal(reps[0].visits, reps[1].visits)
