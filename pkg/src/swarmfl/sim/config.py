"""Scenario configuration: YAML with unit-suffixed physical quantities.

Every physical value is written with its unit (``"10 MHz"``, ``"-174 dBm/Hz"``,
``"3 s"``) and converted to SI on load.  Bare numbers are rejected for those
fields so a missing unit never slips through as a silent factor of 1e6.
"""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..channel import ChannelParams

_LINEAR = {
    "Hz": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "W": {"W": 1.0, "mW": 1e-3},
    "W/Hz": {"W/Hz": 1.0},
    "s": {"s": 1.0, "ms": 1e-3},
    "m": {"m": 1.0, "km": 1e3},
    "J": {"J": 1.0, "mJ": 1e-3, "kJ": 1e3},
    "ratio": {},
}
# logarithmic suffixes: value in dB relative to the given SI reference
_LOG = {
    "W": {"dBm": 1e-3, "dBW": 1.0},
    "W/Hz": {"dBm/Hz": 1e-3, "dBW/Hz": 1.0},
    "ratio": {"dB": 1.0},
}
_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]+)\s*$")

ASSOCIATION_STRATEGIES = ("proposed", "aou", "channel_aware", "random")
SHARING_MODES = ("affinity", "all_shared", "none")


class ConfigError(ValueError):
    pass


def parse_quantity(value, dim: str) -> float:
    """Convert ``"23 dBm"``-style strings to SI floats of dimension ``dim``.

    Dimensionless (``dim="ratio"``) values may also be plain numbers.
    """
    if dim == "ratio" and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{value!r} needs a unit ({dim})")
    m = _QTY.match(value)
    if not m:
        raise ConfigError(f"cannot parse quantity {value!r}")
    num, unit = float(m.group(1)), m.group(2)
    if unit in _LINEAR[dim]:
        return num * _LINEAR[dim][unit]
    if unit in _LOG.get(dim, {}):
        return _LOG[dim][unit] * 10.0 ** (num / 10.0)
    raise ConfigError(f"unit {unit!r} is not a {dim} unit")


def format_quantity(value: float, dim: str):
    if dim == "ratio":
        return value
    return f"{value!r} {dim}"


def _unit(dim: str, default):
    return field(default=default, metadata={"unit": dim})


@dataclass(frozen=True)
class TaskConfig:
    kind: str = "cluster"
    classes: int = 4
    label_noise: float = 0.0
    min_uavs: int = 1
    # multipliers on the model-derived compute and payload (desk model is tiny)
    cost_scale: float = 1.0
    payload_scale: float = 1.0


@dataclass(frozen=True)
class ChannelConfig:
    bandwidth: float = _unit("Hz", 10e6)
    noise_psd: float = _unit("W/Hz", 1e-3 * 10 ** -17.4)
    alpha0: float = _unit("ratio", 1e-5)
    path_loss_exponent: float = 2.2
    nlos_attenuation: float = 0.2
    los_a: float = 9.61
    los_b: float = 0.16

    def params(self) -> ChannelParams:
        return ChannelParams(alpha0=self.alpha0, nu=self.path_loss_exponent,
                             mu_nlos=self.nlos_attenuation, a_env=self.los_a, b_env=self.los_b,
                             noise_psd=self.noise_psd, bandwidth_total=self.bandwidth)


@dataclass(frozen=True)
class GeometryConfig:
    area_side: float = _unit("m", 800.0)
    altitude_min: float = _unit("m", 100.0)
    altitude_max: float = _unit("m", 150.0)


@dataclass(frozen=True)
class ComputeConfig:
    f_max: float = _unit("Hz", 2e9)
    p_max: float = _unit("W", 0.2)
    energy_coeff: float = 1e-28
    cycles_per_flop: float = 4000.0
    uav_spread: float = 0.25  # per-(task, UAV) cycle factor drawn from U(1/(1+s), 1+s)
    bits_per_param: int = 64
    full_batch: bool = False


@dataclass(frozen=True)
class TrainingConfig:
    lr: float = 0.01
    local_iters: int = 10
    batch_size: int = 64
    hidden: tuple = (8, 8)


@dataclass(frozen=True)
class DataConfig:
    input_dim: int = 16
    latent_dim: int = 4
    n_clusters: int = 8
    cluster_radius: float = 2.0
    cluster_spread: float = 0.8
    nuisance_scale: float = 4.0
    group_overlap: float = 1.0
    noise: float = 0.5
    total_samples: int = 6000
    min_samples: int = 32
    alpha1: float = 1.0
    alpha2: float = 0.3
    val_size: int = 256
    test_size: int = 1000


def _default_tasks():
    return (TaskConfig("cluster", 4, label_noise=0.6, cost_scale=1.1, payload_scale=200.0),
            TaskConfig("cluster", 4, cost_scale=1.1, payload_scale=200.0),
            TaskConfig("nuisance", 2, cost_scale=0.7, payload_scale=200.0))


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    rounds: int = 100
    n_uav: int = 10
    deadline: float = _unit("s", 3.0)
    v: float = 1.0
    energy_max: float = _unit("J", 40.0)  # per UAV, whole horizon
    association: str = "proposed"
    sharing: str = "affinity"
    varpi: float = 0.8
    kappa: float = 0.8
    ell: float = 0.8
    tasks: tuple = field(default_factory=_default_tasks)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    compute: ComputeConfig = field(default_factory=ComputeConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        if self.association not in ASSOCIATION_STRATEGIES:
            raise ConfigError(f"association must be one of {ASSOCIATION_STRATEGIES}")
        if self.sharing not in SHARING_MODES:
            raise ConfigError(f"sharing must be one of {SHARING_MODES}")
        if self.rounds < 0 or self.n_uav < 1 or not self.tasks:
            raise ConfigError("need rounds >= 0, at least one UAV and one task")
        if sum(t.min_uavs for t in self.tasks) > self.n_uav:
            raise ConfigError("task minimums exceed the number of UAVs")
        if not (self.v > 0 and self.energy_max > 0 and self.deadline > 0):
            raise ConfigError("v, energy_max and deadline must be positive")
        for name in ("varpi", "kappa", "ell"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def energy_budget_per_round(self) -> float:
        return self.energy_max / max(self.rounds, 1)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return _dump(self)


def _build(cls, raw, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    kw = {}
    for name, value in raw.items():
        f = fields[name]
        where = f"{path}.{name}" if path else name
        dim = f.metadata.get("unit")
        sub = _NESTED.get((cls, name))
        try:
            if dim:
                kw[name] = parse_quantity(value, dim)
            elif name == "tasks" and cls is ScenarioConfig:
                if not isinstance(value, list):
                    raise ConfigError(f"{where}: expected a list")
                kw[name] = tuple(_build(TaskConfig, t, f"{where}[{i}]") for i, t in enumerate(value))
            elif sub is not None:
                kw[name] = _build(sub, value, where)
            elif name == "hidden":
                kw[name] = tuple(int(h) for h in value)
            elif isinstance(f.default, float) and isinstance(value, int) \
                    and not isinstance(value, bool):
                # YAML reads "100" as int; keep float fields float so output is stable
                kw[name] = float(value)
            else:
                kw[name] = value
        except ConfigError as exc:
            if str(exc).startswith(where):
                raise
            raise ConfigError(f"{where}: {exc}") from None
    return cls(**kw)


_NESTED = {
    (ScenarioConfig, "channel"): ChannelConfig,
    (ScenarioConfig, "geometry"): GeometryConfig,
    (ScenarioConfig, "compute"): ComputeConfig,
    (ScenarioConfig, "training"): TrainingConfig,
    (ScenarioConfig, "data"): DataConfig,
}


def _dump(obj):
    if dataclasses.is_dataclass(obj):
        out = {}
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            dim = f.metadata.get("unit")
            out[f.name] = format_quantity(value, dim) if dim else _dump(value)
        return out
    if isinstance(obj, tuple):
        return [_dump(v) for v in obj]
    return obj


def apply_override(raw: dict, assignment: str) -> None:
    """Apply ``a.b.c=value`` in place; list entries are addressed by index."""
    key, sep, text = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {assignment!r} must look like key=value")
    parts = key.strip().split(".")
    node = raw
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node.setdefault(part, {})
    value = yaml.safe_load(text)
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def load_config(path=None, overrides=()) -> ScenarioConfig:
    raw = ScenarioConfig().to_dict()
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        _merge(raw, loaded)
    for item in overrides:
        apply_override(raw, item)
    return _build(ScenarioConfig, raw, "")


def config_from_dict(raw: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, raw, "")


def _merge(base: dict, new: dict) -> None:
    for k, v in new.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v


def dump_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))

