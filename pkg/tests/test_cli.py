import numpy as np
import pytest

from cogharq import acceptance, cli
from cogharq.centralized import SolveError
from cogharq.config import ScenarioConfig, dump_config
from cogharq.markov import JointPolicy, StateSpace

FAST = ["--samples", "20000"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def kv(text):
    return dict(line.split(" = ", 1) for line in text.splitlines() if " = " in line)


def test_auto_rate(capsys):
    code, out, _ = run(capsys, "auto-rate", "--gbar-pp", "10")
    assert code == 0
    vals = kv(out)
    assert float(vals["pu_rate"]) == pytest.approx(2.52)
    assert float(vals["pu_idle_throughput"]) == pytest.approx(1.569, abs=1e-3)


def test_solve_zero_budget_writes_idle_policy(capsys, tmp_path):
    pfile = tmp_path / "idle.pol"
    code, out, _ = run(capsys, "solve", "--eps", "0", "--policy-out", str(pfile), *FAST)
    assert code == 0
    assert float(kv(out)["su_sum_throughput"]) == 0.0
    policy, rule, scheme = cli.parse_policy(pfile.read_text(), StateSpace(2, 5))
    np.testing.assert_array_equal(policy.mu, JointPolicy.idle(17, 4).mu)
    assert (rule, scheme) == ("centralized", "centralized")


def test_policy_round_trip():
    space = StateSpace(2, 3)
    rng = np.random.default_rng(1)
    mu = rng.random((len(space), 4))
    pol = JointPolicy(mu / mu.sum(axis=1, keepdims=True))
    text = cli.format_policy(pol, space, "decentralized", "decentralized")
    back, rule, scheme = cli.parse_policy(text, space)
    np.testing.assert_allclose(back.mu, pol.mu, atol=1e-9)
    assert rule == scheme == "decentralized"


def test_solve_then_simulate(capsys, tmp_path):
    pfile = tmp_path / "p.pol"
    assert run(capsys, "solve", "--policy-out", str(pfile), *FAST)[0] == 0
    code, out, _ = run(capsys, "simulate", "--policy", str(pfile), "--slots", "20000", *FAST)
    assert code == 0
    vals = kv(out)
    assert float(vals["su_sum"]) > 0 and len(vals["occupancy"].split()) == 17


def test_config_file_and_out(capsys, tmp_path):
    cfg_path = tmp_path / "s.cfg"
    cfg_path.write_text(dump_config(ScenarioConfig.defaults(1, eps_pu=0.1, mc_samples=20000)))
    out_path = tmp_path / "res.txt"
    assert run(capsys, "solve", "--config", str(cfg_path), "--out", str(out_path))[0] == 0
    assert "su_sum_throughput" in out_path.read_text()


def test_exit_codes(capsys, tmp_path, monkeypatch):
    assert run(capsys, "solve", "--config", str(tmp_path / "missing.cfg"))[0] == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("scenario.n_users = 0\n")
    code, _, err = run(capsys, "solve", "--config", str(bad))
    assert code == 1 and "config error" in err
    assert run(capsys, "solve", "--restarts", "0")[0] == 1
    garbage = tmp_path / "g.pol"
    garbage.write_text("not a policy\n")
    assert run(capsys, "simulate", "--policy", str(garbage), *FAST)[0] == 1

    def boom(*a, **k):
        raise SolveError("forced")
    monkeypatch.setattr(cli, "solve_centralized", boom)
    code, _, err = run(capsys, "solve", *FAST)
    assert code == 2 and "numerical failure" in err

    failing = [acceptance.CriterionResult(1, "x", False, 0.0, 1.0, "forced")]
    monkeypatch.setattr(acceptance, "run_all", lambda selected=None, stream=None: failing)
    assert run(capsys, "validate")[0] == 3


def test_sweep_is_deterministic_and_monotone(capsys, tmp_path):
    spec = tmp_path / "sweep.txt"
    spec.write_text("sweep.param = eps_pu\nsweep.values = 0.05, 0.1, 0.2, 0.3\n"
                    "sweep.schemes = fic-centralized, pm-known\nmc.samples = 20000\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "sweep", "--spec", str(spec), "--out", str(a))[0] == 0
    assert run(capsys, "sweep", "--spec", str(spec), "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    header = lines[0].split(",")
    assert header[:4] == ["scheme", "param_name", "param_value", "su_sum_lp"]
    rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
    assert len(rows) == 8
    for scheme in ("fic-centralized", "pm-known"):
        vals = [float(r["su_sum_lp"]) for r in rows if r["scheme"] == scheme]
        assert all(y >= x - 1e-9 for x, y in zip(vals, vals[1:]))
    cen = [float(r["su_sum_lp"]) for r in rows if r["scheme"] == "fic-centralized"]
    ub = [float(r["su_sum_lp"]) for r in rows if r["scheme"] == "pm-known"]
    assert all(c <= u + 1e-6 for c, u in zip(cen, ub))


def test_bad_sweep_spec(capsys, tmp_path):
    spec = tmp_path / "sweep.txt"
    spec.write_text("sweep.param = nonsense\nsweep.values = 1\n")
    assert run(capsys, "sweep", "--spec", str(spec))[0] == 1


def test_validate_single_criterion(capsys):
    code, out, _ = run(capsys, "validate", "--only", "1")
    assert code == 0
    assert "[PASS] criterion 1" in out
