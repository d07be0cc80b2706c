# Experiment configuration: schedules, the flat key=value config format,
# and the named seed streams every consumer draws from.
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .wireless import ConfigError, WirelessConfig

ALGORITHMS = ("m_memq", "centralized", "independent", "hysteretic")


@dataclass(frozen=True)
class Schedules:
    """Learning-rate, exploration, and update-ratio schedules (1-based t)."""

    alpha_tau: float = 1000.0
    zeta_decay: float = 0.99
    zeta_floor: float = 0.01
    u_mode: str = "constant"  # constant | exponential
    u_value: float = 0.5
    u_tau: float = 1000.0

    def alpha(self, t: int) -> float:
        return 1.0 / (1.0 + t / self.alpha_tau)

    def zeta(self, t: int) -> float:
        if t * np.log(self.zeta_decay) < -40.0:
            return self.zeta_floor
        return max(self.zeta_decay ** t, self.zeta_floor)

    def u(self, t: int) -> float:
        if self.u_mode == "constant":
            return self.u_value
        return 1.0 - float(np.exp(-t / self.u_tau))


@dataclass(frozen=True)
class ExperimentConfig:
    wireless: WirelessConfig = field(default_factory=WirelessConfig)
    algo: str = "m_memq"
    T: int = 50_000
    l: int = 30
    gamma: float = 0.95
    seeds: tuple[int, ...] = (0,)
    schedules: Schedules = field(default_factory=Schedules)
    # cousin machinery
    orders_pool: tuple[int, ...] = (2, 3, 5)
    buffer_capacity: int = 10_000
    batch_size: int = 32
    power_refresh: int = 50
    ema_decay: float = 0.99
    eps_w: float = 1e-6
    # belief machinery
    delta0: float | None = None  # None -> 2 * cell_size
    belief_temperature: float = 1.0
    # hysteretic baseline
    hysteretic_ratio: float = 0.1  # decrease rate = ratio * increase rate
    # tracking
    snapshot_every: int = 0  # 0 disables joint snapshots
    n_tracked_pairs: int = 8
    joint_enum_cap: int = 300_000

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.l < 1:
            raise ConfigError("trajectory length l must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0,1)")
        if not self.orders_pool or any(n < 2 for n in self.orders_pool):
            raise ConfigError("cousin orders pool must contain integers >= 2")

    def agent_orders(self, agent: int) -> list[int]:
        """Real environment plus one cousin, orders assigned round-robin."""
        return [1, self.orders_pool[agent % len(self.orders_pool)]]

    def effective_delta0(self) -> float:
        return 2.0 * self.wireless.cell_size if self.delta0 is None else self.delta0

    def content_hash(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


# -- flat config-file format --------------------------------------------------

_WIRELESS_KEYS = {
    "grid_length": float,
    "cell_size": float,
    "n_tx": int,
    "n_bs": int,
    "bs_radius_bounds": "float_pair",
    "arss_levels": int,
    "i_thr": float,
    "i_min": float,
    "i_max": float,
    "sigma": float,
    "sigma_c": float,
    "sigma_u": float,
    "tx_powers": "float_list",
    "beta": "float_triple",
    "d_min": float,
    "bs_min_sep": float,
    "tx_radii": "float_list",
    "enum_cap": int,
}

_RUN_KEYS = {
    "algo": str,
    "T": int,
    "l": int,
    "gamma": float,
    "seeds": "int_list",
    "orders_pool": "int_list",
    "buffer_capacity": int,
    "batch_size": int,
    "power_refresh": int,
    "ema_decay": float,
    "eps_w": float,
    "delta0": float,
    "belief_temperature": float,
    "hysteretic_ratio": float,
    "snapshot_every": int,
    "n_tracked_pairs": int,
    "joint_enum_cap": int,
}

_SCHEDULE_KEYS = {
    "alpha_tau": float,
    "zeta_decay": float,
    "zeta_floor": float,
    "u_mode": str,
    "u_value": float,
    "u_tau": float,
}


def _convert(raw: str, kind):
    raw = raw.strip()
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if kind == "int_list":
            return tuple(int(p) for p in parts)
        if kind == "float_list":
            return tuple(float(p) for p in parts)
        if kind == "float_pair":
            vals = tuple(float(p) for p in parts)
            if len(vals) != 2:
                raise ValueError("expected two values")
            return vals
        if kind == "float_triple":
            vals = tuple(float(p) for p in parts)
            if len(vals) != 3:
                raise ValueError("expected three values")
            return vals
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r}: {exc}") from None
    raise ConfigError(f"unknown converter {kind!r}")


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the flat `[section]` / `key = value` experiment format."""
    section = None
    wireless: dict = {}
    run: dict = {}
    sched: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("wireless", "run", "schedules"):
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, raw = (p.strip() for p in line.split("=", 1))
        if section == "wireless":
            if key not in _WIRELESS_KEYS:
                raise ConfigError(f"line {lineno}: unknown wireless key {key!r}")
            wireless[key] = _convert(raw, _WIRELESS_KEYS[key])
        elif section == "run":
            if key not in _RUN_KEYS:
                raise ConfigError(f"line {lineno}: unknown run key {key!r}")
            run[key] = _convert(raw, _RUN_KEYS[key])
        else:
            if key not in _SCHEDULE_KEYS:
                raise ConfigError(f"line {lineno}: unknown schedule key {key!r}")
            sched[key] = _convert(raw, _SCHEDULE_KEYS[key])
    try:
        cfg = ExperimentConfig(wireless=WirelessConfig(**wireless),
                               schedules=Schedules(**sched), **run)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def with_overrides(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    return replace(cfg, **kwargs)
