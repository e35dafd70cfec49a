"""Scenario configuration stored as sectioned INI text.

Every key is optional; an empty file yields the defaults. Unknown sections or
keys are rejected and out-of-range values raise ``ConfigError`` naming the
offending ``section.key``.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dynamics import FAILURE_KINDS, MobilityModel
from .policies import PolicyKind, SchemeParams

LATENCY_MODES = ("cap", "residency")
SCHEDULERS = ("lgs", "greedy")


class ConfigError(ValueError):
    pass


def _check(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {msg}")


@dataclass(frozen=True)
class TopologyConfig:
    n_nodes: int = 100
    density: float = 8 / math.pi
    radius: float = 1.0
    rate_low: float = 10.0
    rate_high: float = 42.0
    rate_noise_std: float = 3.0
    rate_halfwidth: float = 9.0

    def validate(self) -> None:
        _check(self.n_nodes >= 2, "topology.n_nodes", "must be at least 2")
        _check(self.density > 0, "topology.density", "must be positive")
        _check(self.radius > 0, "topology.radius", "must be positive")
        _check(0 < self.rate_low <= self.rate_high, "topology.rate_low", "need 0 < rate_low <= rate_high")
        _check(self.rate_noise_std >= 0, "topology.rate_noise_std", "must be nonnegative")
        _check(self.rate_halfwidth >= 0, "topology.rate_halfwidth", "must be nonnegative")


@dataclass(frozen=True)
class TrafficConfig:
    horizon: int = 1000
    p_bursty: float = 0.5
    load_streaming: float = 1.0
    load_bursty: float = 1.0
    burst_len: int = 30
    burst_margin: int = 100
    rate_low: float = 0.2
    rate_high: float = 1.0
    flow_frac_low: float = 0.15
    flow_frac_high: float = 0.30

    def validate(self) -> None:
        _check(self.horizon >= 1, "traffic.horizon", "must be at least 1")
        _check(0 <= self.p_bursty <= 1, "traffic.p_bursty", "must lie in [0, 1]")
        _check(self.load_streaming >= 0, "traffic.load_streaming", "must be nonnegative")
        _check(self.load_bursty >= 0, "traffic.load_bursty", "must be nonnegative")
        _check(self.burst_len >= 1, "traffic.burst_len", "must be at least 1")
        _check(self.burst_margin >= 0, "traffic.burst_margin", "must be nonnegative")
        _check(0 <= self.rate_low <= self.rate_high, "traffic.rate_low", "need 0 <= rate_low <= rate_high")
        _check(0 <= self.flow_frac_low <= self.flow_frac_high, "traffic.flow_frac_low",
               "need 0 <= flow_frac_low <= flow_frac_high")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = PolicyKind.ANTBP.value
    scheduler: str = "lgs"
    virtual_steps: int = 1000
    epsilon: float = 0.01
    virtual_load_streaming: float = -1.0
    virtual_load_bursty: float = -1.0
    rate_mode: str = "own"
    alpha: float = 1.0
    beta: float = 0.0
    deposit: float = 0.01
    evaporation: float = 0.002
    rho_init: float = 1.3
    floor: float = 0.01
    ant_interval: int = 100
    exploration: float = 0.1
    hop_cap_factor: int = 4
    failure_decay: float = 0.05

    def validate(self) -> None:
        kinds = [k.value for k in PolicyKind]
        _check(self.kind in kinds, "policy.kind", f"must be one of {kinds}")
        _check(self.scheduler in SCHEDULERS, "policy.scheduler", f"must be one of {list(SCHEDULERS)}")
        _check(self.virtual_steps >= 1, "policy.virtual_steps", "must be at least 1")
        _check(self.epsilon > 0, "policy.epsilon", "must be positive")
        for key in ("virtual_load_streaming", "virtual_load_bursty"):
            v = getattr(self, key)
            _check(v >= 0 or v == -1.0, f"policy.{key}", "must be nonnegative, or -1 to follow the physical load")
        _check(self.rate_mode in ("own", "common"), "policy.rate_mode", "must be 'own' or 'common'")
        try:
            self.scheme_params()
        except ValueError as exc:
            raise ConfigError(f"policy: {exc}") from None

    def scheme_params(self) -> SchemeParams:
        names = {f.name for f in fields(SchemeParams)}
        return SchemeParams(**{k: getattr(self, k) for k in names})


@dataclass(frozen=True)
class FailureConfig:
    kind: str = "none"
    p_max: float = 0.05
    mean_duration: float = 20.0
    duration_std: float = 5.0
    top_frac: float = 0.05
    hard_down: bool = False

    def validate(self) -> None:
        _check(self.kind in FAILURE_KINDS, "failure.kind", f"must be one of {list(FAILURE_KINDS)}")
        _check(0 <= self.p_max <= 1, "failure.p_max", "must lie in [0, 1]")
        _check(self.mean_duration >= 1, "failure.mean_duration", "must be at least 1")
        _check(self.duration_std >= 0, "failure.duration_std", "must be nonnegative")
        _check(0 < self.top_frac <= 1, "failure.top_frac", "must lie in (0, 1]")


@dataclass(frozen=True)
class MobilityConfig:
    mobile_nodes: int = 0
    sigma: float = 0.1
    walk_steps: int = 1500
    tries: int = 10
    trigger: int = 500
    pause: int = 10
    update: int = 600

    def validate(self) -> None:
        _check(self.mobile_nodes >= 0, "mobility.mobile_nodes", "must be nonnegative")
        _check(self.sigma >= 0, "mobility.sigma", "must be nonnegative")
        _check(self.walk_steps >= 0, "mobility.walk_steps", "must be nonnegative")
        _check(self.tries >= 1, "mobility.tries", "must be at least 1")
        _check(self.trigger >= 0, "mobility.trigger", "must be nonnegative")
        _check(self.pause >= 0, "mobility.pause", "must be nonnegative")
        _check(self.update >= self.trigger, "mobility.update", "must not precede mobility.trigger")

    def model(self) -> MobilityModel:
        return MobilityModel(**dataclasses.asdict(self))


@dataclass(frozen=True)
class OutputConfig:
    latency_mode: str = "cap"
    debug: bool = False
    stability_threshold: float = 0.1

    def validate(self) -> None:
        _check(self.latency_mode in LATENCY_MODES, "output.latency_mode", f"must be one of {list(LATENCY_MODES)}")
        _check(self.stability_threshold > 0, "output.stability_threshold", "must be positive")


@dataclass(frozen=True)
class ReplicationConfig:
    seed: int = 0
    topologies: int = 10
    realizations: int = 10

    def validate(self) -> None:
        _check(self.seed >= 0, "replication.seed", "must be nonnegative")
        _check(self.topologies >= 1, "replication.topologies", "must be at least 1")
        _check(self.realizations >= 1, "replication.realizations", "must be at least 1")

    def seeds(self) -> list[int]:
        return list(range(self.seed, self.seed + self.topologies * self.realizations))


@dataclass(frozen=True)
class ScenarioConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    failure: FailureConfig = field(default_factory=FailureConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    replication: ReplicationConfig = field(default_factory=ReplicationConfig)

    def __post_init__(self):
        for f in fields(self):
            getattr(self, f.name).validate()

    def replace(self, **dotted) -> "ScenarioConfig":
        """Copy with ``section.key`` overrides, e.g. ``replace(**{"traffic.horizon": 50})``."""
        sections = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, value in dotted.items():
            sec, name = _split(key)
            sections[sec] = dataclasses.replace(sections[sec], **{name: _coerce(sec, name, value)})
        return ScenarioConfig(**sections)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        kw = {}
        for f in fields(cls):
            sub = d.get(f.name, {})
            allowed = {x.name for x in fields(f.default_factory)}
            for k in sub:
                if k not in allowed:
                    raise ConfigError(f"{f.name}.{k}: unknown key")
            kw[f.name] = f.default_factory(**{k: _coerce(f.name, k, v) for k, v in sub.items()})
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown section {sorted(unknown)[0]!r}")
        return cls(**kw)


def _section_type(sec: str):
    for f in fields(ScenarioConfig):
        if f.name == sec:
            return f.default_factory
    raise ConfigError(f"unknown section {sec!r}")


def _split(key: str) -> tuple[str, str]:
    if "." not in key:
        raise ConfigError(f"{key}: expected section.key")
    sec, name = key.split(".", 1)
    if name not in {f.name for f in fields(_section_type(sec))}:
        raise ConfigError(f"{key}: unknown key")
    return sec, name


def _coerce(sec: str, name: str, value):
    typ = {f.name: f.type for f in fields(_section_type(sec))}[name]
    key = f"{sec}.{name}"
    try:
        if typ == "bool":
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value) if not isinstance(value, str) else int(value.strip())
        if typ == "float":
            return float(value)
        return str(value).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {value!r} as {typ}") from None


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return ScenarioConfig.from_dict({s: dict(cp.items(s)) for s in cp.sections()})


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for f in fields(cfg):
        lines.append(f"[{f.name}]")
        for sf in fields(getattr(cfg, f.name)):
            v = getattr(getattr(cfg, f.name), sf.name)
            lines.append(f"{sf.name} = {repr(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool) else v}")
        lines.append("")
    return "\n".join(lines)


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))
