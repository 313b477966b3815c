"""Scenario configuration and the flat ``section.key = value`` file format."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

MAX_USERS = 8


class ConfigError(ValueError):
    """Invalid scenario parameters or malformed configuration text."""


@dataclass(frozen=True)
class RateGrid:
    min: float = 0.05
    max: float = 10.0
    step: float = 0.05

    def __post_init__(self):
        if not (self.min > 0 and self.step > 0 and self.max > self.min):
            raise ConfigError(f"bad rate grid {self.min}:{self.max}:{self.step}")

    def points(self):
        import numpy as np

        n = int(math.floor((self.max - self.min) / self.step + 1e-9)) + 1
        return self.min + self.step * np.arange(n)

    @classmethod
    def parse(cls, text: str) -> "RateGrid":
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"rate grid must be min:max:step, got {text!r}")
        try:
            lo, hi, step = (float(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"rate grid must be numeric, got {text!r}") from exc
        return cls(lo, hi, step)

    def __str__(self):
        return f"{self.min:g}:{self.max:g}:{self.step:g}"


def _ss_matrix(n, direct, cross):
    return tuple(tuple(direct if i == j else cross for j in range(n)) for i in range(n))


@dataclass(frozen=True)
class ScenarioConfig:
    """All parameters of one scenario.

    ``gbar_ss[n][m]`` is the mean SNR from SU transmitter ``n`` to SU
    receiver ``m``. ``pu_rate=None`` selects the rate maximizing the PU
    throughput with all SUs idle. ``pm_known`` models receivers that know the
    PU message beforehand (the upper-bound scheme).
    """

    n_users: int = 2
    arq_deadline: int = 5
    pu_rate: float | None = None
    eps_pu: float = 0.2
    gbar_pp: float = 10.0
    gbar_ps: tuple = (5.0, 5.0)
    gbar_sp: tuple = (2.0, 2.0)
    gbar_ss: tuple = ((5.0, 3.0), (3.0, 5.0))
    fic_enabled: bool = True
    pm_known: bool = False
    mc_samples: int = 200_000
    rng_seed: int = 20140610
    rate_grid: RateGrid = field(default_factory=RateGrid)

    def __post_init__(self):
        n = self.n_users
        if not isinstance(n, int) or not 1 <= n <= MAX_USERS:
            raise ConfigError(f"n_users must be an integer in 1..{MAX_USERS}")
        if not isinstance(self.arq_deadline, int) or self.arq_deadline < 2:
            raise ConfigError("arq_deadline must be an integer >= 2")
        if self.pu_rate is not None and not (self.pu_rate > 0 and math.isfinite(self.pu_rate)):
            raise ConfigError("pu_rate must be positive (or None for auto)")
        if not 0.0 <= self.eps_pu <= 1.0:
            raise ConfigError("eps_pu must lie in [0, 1]")
        object.__setattr__(self, "gbar_ps", tuple(float(x) for x in self.gbar_ps))
        object.__setattr__(self, "gbar_sp", tuple(float(x) for x in self.gbar_sp))
        object.__setattr__(self, "gbar_ss", tuple(tuple(float(x) for x in row) for row in self.gbar_ss))
        if len(self.gbar_ps) != n or len(self.gbar_sp) != n:
            raise ConfigError("gbar_ps and gbar_sp need one entry per SU")
        if len(self.gbar_ss) != n or any(len(row) != n for row in self.gbar_ss):
            raise ConfigError("gbar_ss must be an n_users x n_users matrix")
        means = [self.gbar_pp, *self.gbar_ps, *self.gbar_sp, *(x for row in self.gbar_ss for x in row)]
        if not all(m > 0 and math.isfinite(m) for m in means):
            raise ConfigError("all mean SNRs must be finite and strictly positive")
        if self.mc_samples < 1:
            raise ConfigError("mc_samples must be >= 1")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must be a 64-bit unsigned integer")

    @classmethod
    def defaults(cls, n_users: int = 2, **overrides) -> "ScenarioConfig":
        """The default numerical scenario for ``n_users`` symmetric SUs."""
        base = dict(
            n_users=n_users,
            gbar_ps=(5.0,) * n_users,
            gbar_sp=(2.0,) * n_users,
            gbar_ss=_ss_matrix(n_users, 5.0, 3.0),
        )
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @property
    def n_actions(self) -> int:
        return 1 << self.n_users

    @property
    def eps_omega(self) -> float:
        """Normalized degradation budget (1 - rho_p0) * eps_pu."""
        from .channel import pu_outage

        return (1.0 - pu_outage(0, self)) * self.eps_pu

    @property
    def rp(self) -> float:
        """Resolved PU rate (auto-selected when ``pu_rate`` is None)."""
        if self.pu_rate is not None:
            return self.pu_rate
        from .channel import auto_pu_rate

        return auto_pu_rate(self.gbar_pp)[0]

    def link_means(self):
        """Mean SNR per physical link in the canonical column order.

        Columns: pp, ps[0..N), sp[0..N), ss[n][m] row-major (tx n, rx m).
        """
        import numpy as np

        return np.array([self.gbar_pp, *self.gbar_ps, *self.gbar_sp,
                         *(x for row in self.gbar_ss for x in row)])


# --- text format ---------------------------------------------------------

_BOOL = {"true": True, "yes": True, "1": True, "on": True,
         "false": False, "no": False, "0": False, "off": False}


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _floats(value: str, key: str) -> list[float]:
    try:
        return [float(x) for x in value.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated numbers") from exc


def _per_user(value: str, key: str, n: int) -> tuple:
    vals = _floats(value, key)
    if len(vals) == 1:
        vals = vals * n
    if len(vals) != n:
        raise ConfigError(f"{key}: expected 1 or {n} values, got {len(vals)}")
    return tuple(vals)


def _bool(value: str, key: str) -> bool:
    try:
        return _BOOL[value.lower()]
    except KeyError:
        raise ConfigError(f"{key}: expected a boolean, got {value!r}") from None


KNOWN_KEYS = {
    "scenario.n_users", "scenario.arq_deadline", "scenario.fic", "scenario.pm_known",
    "pu.rate", "pu.eps",
    "channel.gbar_pp", "channel.gbar_ps", "channel.gbar_sp", "channel.gbar_ss",
    "channel.gbar_ss_direct", "channel.gbar_ss_cross",
    "mc.samples", "mc.seed", "rates.grid",
}


def config_from_mapping(kv: dict[str, str], allow_extra: bool = False) -> ScenarioConfig:
    """Build a config from parsed key/value pairs; unspecified keys use defaults."""
    unknown = set(kv) - KNOWN_KEYS
    if unknown and not allow_extra:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    try:
        n = int(kv.get("scenario.n_users", "2"))
    except ValueError:
        raise ConfigError("scenario.n_users must be an integer") from None
    if not 1 <= n <= MAX_USERS:
        raise ConfigError(f"scenario.n_users must be in 1..{MAX_USERS}")
    args: dict = {"n_users": n}
    try:
        if "scenario.arq_deadline" in kv:
            args["arq_deadline"] = int(kv["scenario.arq_deadline"])
        if "scenario.fic" in kv:
            args["fic_enabled"] = _bool(kv["scenario.fic"], "scenario.fic")
        if "scenario.pm_known" in kv:
            args["pm_known"] = _bool(kv["scenario.pm_known"], "scenario.pm_known")
        rate = kv.get("pu.rate", "auto")
        args["pu_rate"] = None if rate.lower() == "auto" else float(rate)
        if "pu.eps" in kv:
            args["eps_pu"] = float(kv["pu.eps"])
        if "channel.gbar_pp" in kv:
            args["gbar_pp"] = float(kv["channel.gbar_pp"])
        if "mc.samples" in kv:
            args["mc_samples"] = int(float(kv["mc.samples"]))
        if "mc.seed" in kv:
            args["rng_seed"] = int(kv["mc.seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    args["gbar_ps"] = _per_user(kv.get("channel.gbar_ps", "5"), "channel.gbar_ps", n)
    args["gbar_sp"] = _per_user(kv.get("channel.gbar_sp", "2"), "channel.gbar_sp", n)
    if "channel.gbar_ss" in kv:
        rows = [r for r in kv["channel.gbar_ss"].split(";") if r.strip()]
        args["gbar_ss"] = tuple(tuple(_floats(r, "channel.gbar_ss")) for r in rows)
    else:
        direct = _floats(kv.get("channel.gbar_ss_direct", "5"), "channel.gbar_ss_direct")
        cross = _floats(kv.get("channel.gbar_ss_cross", "3"), "channel.gbar_ss_cross")
        if len(direct) != 1 or len(cross) != 1:
            raise ConfigError("gbar_ss_direct / gbar_ss_cross take a single value")
        args["gbar_ss"] = _ss_matrix(n, direct[0], cross[0])
    if "rates.grid" in kv:
        args["rate_grid"] = RateGrid.parse(kv["rates.grid"])
    return ScenarioConfig(**args)


def load_config(path: str | Path) -> ScenarioConfig:
    return config_from_mapping(parse_kv(Path(path).read_text()))


def dump_config(cfg: ScenarioConfig) -> str:
    """Serialize to the key/value format (round-trips through load_config)."""
    def join(xs):
        return ",".join(repr(float(x)) for x in xs)

    lines = [
        f"scenario.n_users = {cfg.n_users}",
        f"scenario.arq_deadline = {cfg.arq_deadline}",
        f"scenario.fic = {str(cfg.fic_enabled).lower()}",
        f"scenario.pm_known = {str(cfg.pm_known).lower()}",
        f"pu.rate = {'auto' if cfg.pu_rate is None else repr(cfg.pu_rate)}",
        f"pu.eps = {cfg.eps_pu!r}",
        f"channel.gbar_pp = {cfg.gbar_pp!r}",
        f"channel.gbar_ps = {join(cfg.gbar_ps)}",
        f"channel.gbar_sp = {join(cfg.gbar_sp)}",
        f"channel.gbar_ss = {'; '.join(join(r) for r in cfg.gbar_ss)}",
        f"mc.samples = {cfg.mc_samples}",
        f"mc.seed = {cfg.rng_seed}",
        f"rates.grid = {cfg.rate_grid}",
    ]
    return "\n".join(lines) + "\n"
