"""Command line interface: ``cogharq <command> [options]``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import acceptance, channel
from .centralized import SolveError, build_model, solve_centralized, upper_bound
from .config import ConfigError, RateGrid, ScenarioConfig, config_from_mapping, load_config, parse_kv
from .decentralized import BestResponseError, nash_solve
from .markov import ChainError, JointPolicy, StateSpace, phi_string
from .simulator import simulate

EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 1, 2, 3

SWEEP_PARAMS = ("eps_pu", "gbar_sp_1", "gbar_sp_all", "gbar_ps_1", "gbar_ps_all")
CSV_COLUMNS = ("scheme", "param_name", "param_value", "su_sum_lp", "su_sum_sim", "su_sum_ci",
               "pu_throughput", "constraint_value", "upper_bound", "regime", "iterations",
               "converged")


def _fmt(x) -> str:
    return repr(float(x))


# --- policy files -------------------------------------------------------------

def format_policy(policy: JointPolicy, space: StateSpace, rule: str = "centralized",
                  scheme: str = "centralized") -> str:
    """One line per state: index, t, knowledge string, then action probabilities.

    Header comments record the rate rule and the scheme (which fixes the
    FIC and known-message flags) so the file can be simulated as solved.
    """
    lines = [f"# rule = {rule}",
             f"# scheme = {scheme}",
             f"# users = {space.n_users} deadline = {space.T}",
             "# state t phi " + " ".join(f"a{a}" for a in range(policy.mu.shape[1]))]
    for s, st in enumerate(space):
        probs = " ".join(_fmt(p) for p in policy.mu[s])
        lines.append(f"{s} {st.t} {phi_string(st.phi, space.n_users)} {probs}")
    return "\n".join(lines) + "\n"


def parse_policy(text: str, space: StateSpace):
    """Inverse of :func:`format_policy`; returns ``(JointPolicy, rule, scheme)``."""
    rule = scheme = "centralized"
    rows = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("rule ="):
                rule = body.split("=", 1)[1].strip()
            elif body.startswith("scheme ="):
                scheme = body.split("=", 1)[1].strip()
            continue
        parts = line.split()
        try:
            s, t = int(parts[0]), int(parts[1])
            probs = [float(p) for p in parts[3:]]
        except (ValueError, IndexError):
            raise ConfigError(f"policy line {lineno}: malformed") from None
        if not 0 <= s < len(space) or space.states[s].t != t:
            raise ConfigError(f"policy line {lineno}: state {s} does not match the scenario")
        if parts[2] != phi_string(space.states[s].phi, space.n_users):
            raise ConfigError(f"policy line {lineno}: knowledge string {parts[2]!r} mismatch")
        rows[s] = probs
    A = 1 << space.n_users
    if sorted(rows) != list(range(len(space))) or any(len(r) != A for r in rows.values()):
        raise ConfigError("policy file must list every state with one probability per action")
    try:
        return JointPolicy(np.array([rows[s] for s in range(len(space))])), rule, scheme
    except ValueError as exc:
        raise ConfigError(f"invalid policy: {exc}") from exc


# --- helpers ------------------------------------------------------------------------

def _config(args, base: ScenarioConfig | None = None) -> ScenarioConfig:
    if base is not None:
        cfg = base
    else:
        cfg = load_config(args.config) if args.config else ScenarioConfig.defaults(2)
    changes = {}
    if args.seed is not None:
        changes["rng_seed"] = args.seed
    if args.samples is not None:
        changes["mc_samples"] = args.samples
    if args.grid is not None:
        changes["rate_grid"] = RateGrid.parse(args.grid)
    if getattr(args, "eps", None) is not None:
        changes["eps_pu"] = args.eps
    return cfg.replace(**changes) if changes else cfg


def _emit(text: str, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _kv_lines(pairs) -> str:
    return "".join(f"{k} = {v}\n" for k, v in pairs)


def scheme_flags(cfg: ScenarioConfig, mode: str) -> ScenarioConfig:
    """Receiver flags implied by a solve mode (the bound assumes a known PU message)."""
    if mode == "no-fic":
        return cfg.replace(fic_enabled=False, pm_known=False)
    if mode == "upper-bound":
        return cfg.replace(pm_known=True)
    if mode in ("centralized", "decentralized"):
        return cfg
    raise ConfigError(f"unknown scheme {mode!r}")


# --- commands ----------------------------------------------------------------------

def cmd_auto_rate(args) -> int:
    gbar = args.gbar_pp
    if gbar is None:
        gbar = load_config(args.config).gbar_pp if args.config else 10.0
    if not gbar > 0:
        raise ConfigError("gbar_pp must be positive")
    rp, tpu = channel.auto_pu_rate(gbar, step=args.step)
    _emit(_kv_lines([("gbar_pp", _fmt(gbar)), ("pu_rate", f"{rp:.6g}"),
                     ("pu_idle_throughput", _fmt(tpu))]), args.out)
    return 0


def cmd_rates(args) -> int:
    cfg = _config(args)
    rates, _ = channel.build_tables(cfg, args.rule)
    N = cfg.n_users
    out = io.StringIO()
    out.write(f"# rule = {args.rule}\n# user action phi rate\n")
    for phi in range(cfg.n_actions):
        for a in range(1, cfg.n_actions):
            for n in range(N):
                if (a >> n) & 1:
                    out.write(f"{n} {a} {phi_string(phi, N)} {_fmt(rates.rate[n, a, phi])}\n")
    _emit(out.getvalue(), args.out)
    return 0


def cmd_tables(args) -> int:
    cfg = _config(args)
    rates, tab = channel.build_tables(cfg, args.rule)
    N = cfg.n_users
    out = io.StringIO()
    out.write(f"# rule = {args.rule}\n# pu outage per action\n")
    for a in range(cfg.n_actions):
        out.write(f"rho_p {a} {_fmt(tab.rho_p[a])}\n")
    out.write("# user action phi rate rho_s rho_s_se rho_ps rho_ps_se (nan = not applicable)\n")
    for phi in range(cfg.n_actions):
        for a in range(cfg.n_actions):
            for n in range(N):
                vals = (rates.rate[n, a, phi], tab.rho_s[n, a, phi], tab.rho_s_se[n, a, phi],
                        tab.rho_ps[n, a, phi], tab.rho_ps_se[n, a, phi])
                out.write(f"{n} {a} {phi_string(phi, N)} " + " ".join(_fmt(v) for v in vals) + "\n")
    _emit(out.getvalue(), args.out)
    return 0


def cmd_solve(args) -> int:
    cfg = _config(args)
    mode = args.mode
    cfg = scheme_flags(cfg, mode)
    rule = "decentralized" if mode == "decentralized" else "centralized"
    model = build_model(cfg, rule)
    pairs = [("mode", mode)]
    if mode == "decentralized":
        res = nash_solve(cfg, restarts=args.restarts, model=model)
        policy = res.joint
        value, constraint = res.su_sum_throughput, res.constraint_value
        pairs += [("sweeps", res.sweeps), ("converged", str(res.converged).lower()),
                  ("best_restart", res.best_restart)]
        for n, p in enumerate(res.policies):
            pairs.append((f"access_{n}", " ".join(_fmt(x) for x in p.access)))
    elif mode == "upper-bound":
        mu, value = upper_bound(model.rates, model.outages, model.eps_omega)
        policy = JointPolicy(np.tile(mu, (len(model.space), 1)))
        constraint = float(mu @ (model.outages.rho_p - model.outages.rho_p[0]))
    else:
        sol = solve_centralized(cfg, model)
        policy, value, constraint = sol.policy, sol.su_sum_throughput, sol.constraint_value
        pairs += [("regime", sol.regime), ("omega_init", _fmt(sol.omega_init)),
                  ("upper_bound", _fmt(sol.upper_bound)), ("lp_iterations", sol.lp_iterations)]
    pu = model.pu_idle_throughput - cfg.rp * constraint
    pairs = pairs[:1] + [("su_sum_throughput", _fmt(value)), ("pu_throughput", _fmt(pu)),
                         ("constraint_value", _fmt(constraint)),
                         ("eps_omega", _fmt(model.eps_omega))] + pairs[1:]
    text = _kv_lines(pairs)
    if args.policy_out:
        Path(args.policy_out).write_text(format_policy(policy, model.space, rule, mode))
    _emit(text, args.out)
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    space = StateSpace(cfg.n_users, cfg.arq_deadline)
    try:
        text = Path(args.policy).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read policy file: {exc}") from exc
    policy, rule, scheme = parse_policy(text, space)
    if rule not in ("centralized", "decentralized"):
        raise ConfigError(f"policy file names unknown rule {rule!r}")
    cfg = scheme_flags(cfg, scheme)
    rates, _ = channel.build_tables(cfg, rule)
    rep = simulate(policy, cfg, args.slots, seed=args.seed, rates=rates)
    pairs = [("slots", rep.slots), ("warmup", rep.warmup), ("seed", rep.seed),
             ("su_sum", _fmt(rep.su_sum)), ("su_sum_ci", _fmt(rep.su_sum_ci))]
    for n, (v, c) in enumerate(zip(rep.su_throughput, rep.su_throughput_ci)):
        pairs += [(f"su_{n}", _fmt(v)), (f"su_{n}_ci", _fmt(c))]
    pairs += [("pu_throughput", _fmt(rep.pu_throughput)), ("pu_throughput_ci", _fmt(rep.pu_throughput_ci)),
              ("constraint", _fmt(rep.constraint)), ("constraint_ci", _fmt(rep.constraint_ci)),
              ("occupancy", " ".join(_fmt(x) for x in rep.visits / rep.visits.sum()))]
    _emit(_kv_lines(pairs), args.out)
    return 0


def apply_sweep_param(cfg: ScenarioConfig, name: str, value: float) -> ScenarioConfig:
    if name == "eps_pu":
        return cfg.replace(eps_pu=value)
    field, which = name.rsplit("_", 1)
    old = getattr(cfg, field)
    new = (value,) + tuple(old[1:]) if which == "1" else (value,) * cfg.n_users
    return cfg.replace(**{field: new})


def load_sweep_spec(path):
    """Sweep file keys: ``sweep.param``, ``sweep.values``, ``sweep.schemes``, ``sweep.sim_slots``.

    Any other keys are scenario keys overriding the base config.
    """
    kv = parse_kv(Path(path).read_text())
    name = kv.pop("sweep.param", None)
    if name not in SWEEP_PARAMS:
        raise ConfigError(f"sweep.param must be one of {', '.join(SWEEP_PARAMS)}")
    try:
        values = [float(v) for v in kv.pop("sweep.values", "").split(",") if v.strip()]
    except ValueError:
        raise ConfigError("sweep.values must be numbers") from None
    if not values or not all(np.isfinite(values)):
        raise ConfigError("sweep.values must be a nonempty list of finite numbers")
    if name != "eps_pu" and min(values) <= 0:
        raise ConfigError("SNR sweep values must be positive")
    schemes = [s.strip() for s in kv.pop("sweep.schemes", ",".join(acceptance.SCHEMES)).split(",")
               if s.strip()]
    bad = [s for s in schemes if s not in acceptance.SCHEMES]
    if bad:
        raise ConfigError(f"unknown schemes: {', '.join(bad)}")
    try:
        slots = int(float(kv.pop("sweep.sim_slots", "0")))
    except ValueError:
        raise ConfigError("sweep.sim_slots must be an integer") from None
    return name, values, schemes, slots, kv


def cmd_sweep(args) -> int:
    name, values, schemes, slots, overrides = load_sweep_spec(args.spec)
    kv = parse_kv(Path(args.config).read_text()) if args.config else {}
    kv.update(overrides)
    base = _config(args, config_from_mapping(kv) if kv else ScenarioConfig.defaults(2))
    if args.sim_slots is not None:
        slots = args.sim_slots
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for scheme in schemes:
        for value in values:
            cfg = apply_sweep_param(base, name, value)
            pt = acceptance.run_scheme(cfg, scheme, sim_slots=slots, restarts=args.restarts)
            writer.writerow([scheme, name, _fmt(value), _fmt(pt.su_sum_lp),
                             "" if slots <= 0 else _fmt(pt.su_sum_sim),
                             "" if slots <= 0 else _fmt(pt.su_sum_ci),
                             _fmt(pt.pu_throughput), _fmt(pt.constraint_value),
                             _fmt(pt.upper_bound), pt.regime, pt.iterations,
                             str(pt.converged).lower()])
    _emit(out.getvalue(), args.out)
    return 0


def cmd_validate(args) -> int:
    selected = set(args.only) if args.only else None
    results = acceptance.run_all(selected)
    return 0 if all(r.passed for r in results) else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file (section.key = value lines)")
    common.add_argument("--seed", type=int, help="override mc.seed")
    common.add_argument("--samples", type=int, help="override mc.samples")
    common.add_argument("--grid", help="override rates.grid as min:max:step")
    common.add_argument("--restarts", type=int, default=5, help="Nash restarts (default 5)")
    common.add_argument("--out", help="write output here instead of stdout")

    p = argparse.ArgumentParser(prog="cogharq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("auto-rate", parents=[common], help="PU rate maximizing idle throughput")
    s.add_argument("--gbar-pp", type=float, help="mean PU direct-link SNR (default: config or 10)")
    s.add_argument("--step", type=float, default=0.01)
    s.set_defaults(func=cmd_auto_rate)

    for name, func, helptext in (("rates", cmd_rates, "emit the rate table"),
                                 ("tables", cmd_tables, "emit outage tables with standard errors")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--rule", choices=("centralized", "decentralized"), default="centralized")
        s.set_defaults(func=func)

    s = sub.add_parser("solve", parents=[common], help="solve for an access policy")
    s.add_argument("--mode", choices=("centralized", "decentralized", "upper-bound", "no-fic"),
                   default="centralized")
    s.add_argument("--eps", type=float, help="override pu.eps")
    s.add_argument("--policy-out", help="write the policy file here")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("simulate", parents=[common], help="simulate a policy file")
    s.add_argument("--policy", required=True)
    s.add_argument("--slots", type=int, default=10**6)
    s.add_argument("--eps", type=float, help="override pu.eps")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="sweep one parameter, emit CSV")
    s.add_argument("--spec", required=True)
    s.add_argument("--sim-slots", type=int, help="override sweep.sim_slots")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("validate", help="run the acceptance suite")
    s.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "restarts", 1) < 1:
            raise ConfigError("--restarts must be >= 1")
        if getattr(args, "slots", 1) < 1:
            raise ConfigError("--slots must be >= 1")
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolveError, ChainError, BestResponseError, np.linalg.LinAlgError,
            FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
