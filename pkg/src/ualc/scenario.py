"""Scenario configuration and its key-sectioned (INI) file format."""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .controller import MpcConfig, PidGains, SpeedAdaptConfig
from .core import ConfigError
from .dynamics import BicycleParams
from .perception import AttackSpec, PerceptionConfig, Road
from .pipeline import PipelineConfig
from .planner import PlannerConfig

OUT_OF_LANE_THRESHOLD = 0.735  # m, highway lane departure

# Calibrated against the reference scenario (see `ualc calibrate`).
CALIBRATED_PATH_BIAS_GAIN = 3.0
CALIBRATED_CONF_FLOOR = 0.1


def reference_attack(**overrides) -> AttackSpec:
    """Full-strength patch at 40 m, 96 m long, with calibrated effect sizes."""
    params = dict(
        patch_start=40.0,
        patch_length=96.0,
        strength=1.0,
        path_bias_gain=CALIBRATED_PATH_BIAS_GAIN,
        conf_floor=CALIBRATED_CONF_FLOOR,
        frame_jitter=0.5,
    )
    params.update(overrides)
    return AttackSpec(**params)


@dataclass(frozen=True)
class ScenarioConfig:
    road: Road = field(default_factory=Road)
    attack: AttackSpec = field(default_factory=reference_attack)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    speed: SpeedAdaptConfig = field(default_factory=SpeedAdaptConfig)
    pid: PidGains = field(default_factory=PidGains)
    bicycle: BicycleParams = field(default_factory=BicycleParams)
    duration: float = 20.0  # s
    start_x: float = -80.0  # m, lead-in before the road origin
    seed: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        dt = self.bicycle.dt
        for name, other in (("speed", self.speed.dt), ("pid", self.pid.dt)):
            if not math.isclose(other, dt):
                raise ConfigError(f"{name}.dt={other} differs from the simulation step {dt}")
        if not math.isclose(self.planner.lane_width, self.road.lane_width):
            raise ConfigError("planner.lane_width must match road.lane_width")
        if not self.road.start <= self.start_x <= self.road.length:
            raise ConfigError("start_x lies outside the road")

    @property
    def dt(self) -> float:
        return self.bicycle.dt

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.dt))

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            perception=replace(self.perception, seed=self.seed),
            planner=self.planner,
            mpc=self.mpc,
            speed=self.speed,
            pid=self.pid,
        )

    def with_attack(self, **changes) -> "ScenarioConfig":
        return replace(self, attack=replace(self.attack, **changes))

    def to_dict(self) -> dict:
        return asdict(self)


SECTIONS = {
    "road": Road,
    "attack": AttackSpec,
    "perception": PerceptionConfig,
    "planner": PlannerConfig,
    "mpc": MpcConfig,
    "speed": SpeedAdaptConfig,
    "pid": PidGains,
    "bicycle": BicycleParams,
}
SCENARIO_KEYS = ("duration", "start_x", "seed")
DEGREE_KEYS = {"max_steer_deg": "max_steer", "max_heading_deg": "max_heading"}


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, str):
        return raw
    if isinstance(default, tuple) or default is None:
        if raw.lower() in ("", "none"):
            return None
        if ";" in raw:
            return tuple(tuple(float(v) for v in row.split(",")) for row in raw.split(";") if row.strip())
        return tuple(float(v) for v in raw.split(","))
    raise ConfigError(f"unsupported value type for {raw!r}")


def _apply(obj, values: dict, section: str):
    known = {f.name for f in fields(obj)}
    changes = {}
    for key, raw in values.items():
        if key in DEGREE_KEYS and DEGREE_KEYS[key] in known:
            changes[DEGREE_KEYS[key]] = math.radians(float(raw))
            continue
        if key not in known:
            raise ConfigError(f"unknown key {section}.{key}")
        changes[key] = _parse_value(raw, getattr(obj, key))
    try:
        return replace(obj, **changes)
    except TypeError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def apply_overrides(cfg: ScenarioConfig, overrides: dict) -> ScenarioConfig:
    """Apply ``{"section.key": "value"}`` (or ``{"key": ...}`` for top-level keys)."""
    grouped: dict = {}
    top = {}
    for dotted, raw in overrides.items():
        if "." in dotted:
            section, key = dotted.split(".", 1)
            if section not in SECTIONS and section != "scenario":
                raise ConfigError(f"unknown section {section!r}")
            if section == "scenario":
                top[key] = raw
            else:
                grouped.setdefault(section, {})[key] = raw
        else:
            top[dotted] = raw
    changes = {name: _apply(getattr(cfg, name), vals, name) for name, vals in grouped.items()}
    for key, raw in top.items():
        if key not in SCENARIO_KEYS:
            raise ConfigError(f"unknown scenario key {key!r}")
        changes[key] = _parse_value(raw, getattr(cfg, key))
    # lane width lives in two places; keep them in step
    if "road" in changes and "planner" not in grouped:
        changes["planner"] = replace(cfg.planner, lane_width=changes["road"].lane_width)
    return replace(cfg, **changes)


def load_scenario(path) -> ScenarioConfig:
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    overrides = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            overrides[f"{section}.{key}" if section != "scenario" else key] = value
    return apply_overrides(ScenarioConfig(), overrides)


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(", ".join(repr(v) for v in row) for row in value)
        return ", ".join(repr(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def save_scenario(cfg: ScenarioConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser["scenario"] = {k: _format(getattr(cfg, k)) for k in SCENARIO_KEYS}
    for name in SECTIONS:
        obj = getattr(cfg, name)
        parser[name] = {f.name: _format(getattr(obj, f.name)) for f in fields(obj)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)
