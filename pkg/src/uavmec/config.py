"""Configuration dataclasses, profiles and YAML loading.

Every physical default mirrors the published deployment (1000 m square,
-30/-20 dB gains, 10/20 MHz, -114 dBm noise, ...). Values that the model
names but never quantifies (decision time, CPU/idle power, load ceiling)
carry explicit, overridable defaults.

Decibel quantities live in the config as dB/dBm and are converted to linear
watts through the ``*_w`` / ``*_lin`` properties.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

log = logging.getLogger(__name__)


def db_to_lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


def lin_to_db(lin: float) -> float:
    return 10.0 * math.log10(lin)


def dbm_to_w(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def w_to_dbm(w: float) -> float:
    return lin_to_db(w) + 30.0


class ConfigError(ValueError):
    """Invalid configuration (unknown key, bad value)."""


@dataclass
class RadioParams:
    g0_db: float = -30.0
    g_inter_db: float = -20.0
    bandwidth: float = 10e6
    bandwidth_inter: float = 20e6
    noise_dbm: float = -114.0
    rssi_min_dbm: float = -90.0
    rssi_fl_dbm: float = -85.0
    r_comm: float = 400.0
    p_tx_uav: float = 0.5
    p_rx_uav: float = 0.1
    p_tx_dev: float = 0.1

    @property
    def g0(self) -> float:
        return db_to_lin(self.g0_db)

    @property
    def g_inter(self) -> float:
        return db_to_lin(self.g_inter_db)

    @property
    def noise_w(self) -> float:
        return dbm_to_w(self.noise_dbm)

    @property
    def rssi_min_w(self) -> float:
        return dbm_to_w(self.rssi_min_dbm)

    @property
    def rssi_fl_w(self) -> float:
        return dbm_to_w(self.rssi_fl_dbm)

    def validate(self) -> None:
        for name in ("bandwidth", "bandwidth_inter", "r_comm", "p_tx_uav", "p_rx_uav", "p_tx_dev"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"radio.{name} must be positive")
        if self.bandwidth_inter < self.bandwidth:
            raise ConfigError("radio.bandwidth_inter must be >= radio.bandwidth")


@dataclass
class EnergyParams:
    p_hover: float = 80.0
    air_density: float = 1.225
    drag_area: float = 0.1
    drag_coeff: float = 0.3
    # J*s^2 per cycle with frequencies in Hz; 1e-18 gives ~1e8 J per task
    kappa: float = 1e-28
    p_cpu: float = 10.0
    p_idle: float = 5.0

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and v <= 0:
                raise ConfigError(f"energy.{f.name} must be positive")


@dataclass
class LearnConfig:
    gat_hidden: tuple[int, int] = (128, 64)
    gat_heads: int = 4
    gru_hidden: int = 128
    spatial_dim: int = 128
    shared_dim: int = 128
    actor_hidden: tuple[int, int] = (128, 128)
    critic_hidden: tuple[int, int] = (128, 64)
    lr_vel: float = 3e-4
    lr_off: float = 3e-4
    lr_critic: float = 5e-4
    # GAT/GRU/shared trunk; not tabulated, follows the actor rate
    lr_features: float = 3e-4
    gamma: float = 0.95
    entropy_coef: float = 0.01
    window: int = 32
    sigma_min: float = 1e-3
    alpha_time: float = 0.5
    beta_energy: float = 0.5
    deadline_penalty: float = 10.0
    coverage_weight: float = 0.1
    gamma_urg: float = 0.5
    reward_time_scale: float = 1.0
    # multiplies the whole reward before learning (keeps critic targets O(1))
    reward_scale: float = 0.01
    # energy increments are divided by hover energy of one step when None
    reward_energy_scale: float | None = None
    normalize_advantage: bool = True
    # "gat" or "mlp" (structureless feedforward extractor for the ablation)
    features: str = "gat"

    def validate(self) -> None:
        if abs(self.alpha_time + self.beta_energy - 1.0) > 1e-12:
            raise ConfigError("learn.alpha_time + learn.beta_energy must equal 1")
        if self.features not in ("gat", "mlp"):
            raise ConfigError("learn.features must be 'gat' or 'mlp'")
        for w in self.gat_hidden:
            if w % self.gat_heads:
                raise ConfigError("learn.gat_heads must divide every gat_hidden width")
        if self.window < 1:
            raise ConfigError("learn.window must be >= 1")


@dataclass
class FedConfig:
    enabled: bool = True
    quantize: bool = True
    reputation: bool = True
    aggregate_features: bool = True
    debit_energy: bool = False
    b_min: int = 4
    b_max: int = 16
    f_base: float = 0.03
    alpha_mobility: float = 0.05
    alpha_succ: float = 0.6
    alpha_stab: float = 0.4
    forgetting: float = 0.75
    drop_prob: float = 0.05
    # seconds; None means one world step
    timeout: float | None = None

    def validate(self) -> None:
        if not 1 <= self.b_min <= self.b_max <= 16:
            raise ConfigError("fed.b_min/b_max must satisfy 1 <= b_min <= b_max <= 16")
        if abs(self.alpha_succ + self.alpha_stab - 1.0) > 1e-12:
            raise ConfigError("fed.alpha_succ + fed.alpha_stab must equal 1")
        if not 0.0 <= self.forgetting <= 1.0:
            raise ConfigError("fed.forgetting must lie in [0, 1]")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ConfigError("fed.drop_prob must lie in [0, 1]")
        if self.f_base <= 0:
            raise ConfigError("fed.f_base must be positive")


@dataclass
class SimConfig:
    area: tuple[float, float] = (1000.0, 1000.0)
    n_uavs: int = 3
    n_devices: int = 10
    dt: float = 1.0
    dt_base: float = 2.0
    alpha_speed: float = 0.1
    episode_len: float = 300.0
    episodes: int = 50
    v_max: float = 20.0
    accel: float = 5.0
    battery: float = 500e3
    cpu_freq_range: tuple[float, float] = (1e9, 3e9)
    altitude_range: tuple[float, float] = (80.0, 150.0)
    rate_range: tuple[float, float] = (0.3, 0.8)
    cycles_range: tuple[float, float] = (50e6, 200e6)
    in_bytes_range: tuple[float, float] = (1e6, 3e6)
    out_bytes_range: tuple[float, float] = (0.1e6, 0.5e6)
    deadline_range: tuple[float, float] = (5.0, 20.0)
    t_decision: float = 0.01
    load_max: float = 1e9
    max_hops: int = 3
    kmeans_iters: int = 50
    # raise instead of warn when dt violates the acceleration bound
    strict_dt: bool = False
    seed: int = 0
    radio: RadioParams = field(default_factory=RadioParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    learn: LearnConfig = field(default_factory=LearnConfig)
    fed: FedConfig = field(default_factory=FedConfig)

    @property
    def steps_per_episode(self) -> int:
        return int(round(self.episode_len / self.dt))

    @property
    def fl_timeout(self) -> float:
        return self.dt if self.fed.timeout is None else self.fed.timeout

    @property
    def energy_scale(self) -> float:
        s = self.learn.reward_energy_scale
        return self.energy.p_hover * self.dt if s is None else s

    def min_dt(self) -> float:
        """Smallest step satisfying the acceleration bound ``2 v_max / a``."""
        return 2.0 * self.v_max / self.accel

    def validate(self) -> None:
        if self.n_uavs < 1 or self.n_devices < 1:
            raise ConfigError("n_uavs and n_devices must be >= 1")
        if self.dt <= 0 or self.dt_base <= 0:
            raise ConfigError("dt and dt_base must be positive")
        if self.alpha_speed < 0:
            raise ConfigError("alpha_speed must be >= 0")
        if self.v_max <= 0 or self.accel <= 0 or self.battery <= 0:
            raise ConfigError("v_max, accel and battery must be positive")
        if not 1 <= self.max_hops <= 4:
            raise ConfigError("max_hops must lie in [1, 4]")
        for name in ("cpu_freq_range", "altitude_range", "rate_range", "cycles_range",
                     "in_bytes_range", "out_bytes_range", "deadline_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ConfigError(f"{name} must be an ordered non-negative pair")
        if self.dt < self.min_dt():
            msg = (f"dt={self.dt} s is below the acceleration bound "
                   f"2*v_max/a={self.min_dt():g} s")
            if self.strict_dt:
                raise ConfigError(msg)
            warnings.warn(msg, stacklevel=2)
        self.radio.validate()
        self.energy.validate()
        self.learn.validate()
        self.fed.validate()

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


PROFILES: dict[str, dict[str, Any]] = {
    "desk": {"n_uavs": 3, "n_devices": 10, "episodes": 50, "episode_len": 300.0},
    "large": {"n_uavs": 6, "n_devices": 40, "episodes": 100, "episode_len": 300.0},
}


def _apply(obj: Any, updates: dict[str, Any], prefix: str = "") -> None:
    known = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in updates.items():
        if key not in known:
            raise ConfigError(f"unknown config key '{prefix}{key}'")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"'{prefix}{key}' must be a mapping")
            _apply(current, value, prefix=f"{prefix}{key}.")
        elif isinstance(current, tuple):
            setattr(obj, key, tuple(value))
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"'{prefix}{key}' must be a boolean")
            setattr(obj, key, value)
        elif isinstance(current, int) and not isinstance(current, bool):
            setattr(obj, key, int(value))
        elif isinstance(current, float):
            setattr(obj, key, float(value))
        else:
            setattr(obj, key, value)


def make_config(profile: str = "desk", overrides: dict[str, Any] | None = None,
                validate: bool = True) -> SimConfig:
    """Build a config: defaults, then ``profile``, then ``overrides``."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile '{profile}' (choose from {sorted(PROFILES)})")
    cfg = SimConfig()
    _apply(cfg, PROFILES[profile])
    if overrides:
        _apply(cfg, overrides)
    if validate:
        cfg.validate()
    return cfg


def load_config(path: str | Path, profile: str | None = None,
                overrides: dict[str, Any] | None = None) -> SimConfig:
    """Load a YAML config file. Precedence: ``overrides`` > file > profile > defaults."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    file_profile = data.pop("profile", "desk")
    cfg = make_config(profile or file_profile, validate=False)
    _apply(cfg, data)
    if overrides:
        for key in overrides:
            log.info("flag overrides config key %s", key)
        _apply(cfg, overrides)
    cfg.validate()
    return cfg


def dump_config(cfg: SimConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
