"""Scenario configuration: dataclasses, TOML loading, dotted-key overrides.

Defaults follow the simulation study this toolkit replicates: cruise speed
0.4 m/s, safety factor 4, horizon 20 with update horizon 10, the usual
weight triple, a 20/100 Hz rate split, and the observer/PID gains used for
the payload comparison. Scenario files override only what differs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .model import Disturbance, DisturbanceProfile, DynamicParams
from .nlp import InputSet


class ConfigError(Exception):
    """Invalid scenario file or override (reported with the key path)."""


@dataclass(frozen=True)
class PlannerConfig:
    v_c: float = 0.4                 # m/s
    c_v: float = 4.0
    horizon: int = 20
    update_horizon: int = 10
    q: tuple[float, float, float] = (1.0, 1.0, 0.01)
    r: tuple[float, float] = (0.5, 0.023)
    s: tuple[float, float] = (0.1, 0.05)
    v_max: float = 0.4               # m/s
    w_max: float = 0.4               # rad/s
    spacing: float = 0.02            # m, densification target
    fit_segment_len: float = 1.0     # m of arc per heading-fit segment
    stop_taper: float = 0.2          # m of final speed taper
    smooth: bool = True


@dataclass(frozen=True)
class PidTrackingConfig:
    linear: tuple[float, float, float] = (0.065, 0.0, 0.13)
    angular: tuple[float, float, float] = (0.1, 0.05, 0.2)
    integral_limit: float = 1.0
    cross_track_gain: float = 1.0


@dataclass(frozen=True)
class ResoConfig:
    epsilon: float = 0.02
    gain_l: float = 1.0
    b0_v: float = 1.0
    b0_w: float = 1.0
    k_v: float = -5.0
    k_w: float = -5.0
    m_v: float = 10.0
    m_w: float = 10.0
    rate_slew: float = 2.0           # |dv_r/dt|, |dw_r/dt| clamp


@dataclass(frozen=True)
class PidDynamicConfig:
    k_n: float = 100.04
    k_p: float = 12.74
    k_i: float = 5.17
    k_d: float = 0.88


@dataclass(frozen=True)
class DisturbanceConfig:
    kind: str = "none"               # none | constant | step | sine
    magnitude: float = 0.0           # N or N*m; scaled by mass/inertia if relative
    relative: bool = False
    t0: float = 0.0                  # s, step onset
    period: float = 1.0              # s, sine period


@dataclass(frozen=True)
class PlantConfig:
    base_mass: float = 30.0          # kg
    base_inertia: float = 0.5        # kg*m^2
    half_track: float = 0.25         # m
    wheel_radius: float = 0.1        # m
    mass_multiplier: float = 1.0
    inertia_multiplier: float = 1.0
    force_disturbance: DisturbanceConfig = DisturbanceConfig()
    torque_disturbance: DisturbanceConfig = DisturbanceConfig()


@dataclass(frozen=True)
class NoiseConfig:
    sigma_xy: float = 0.0            # m
    sigma_theta: float = 0.0         # rad


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    map_file: str = ""
    start: tuple[float, float] = (0.0, 0.0)
    goal: tuple[float, float] = (1.0, 1.0)
    duration_cap: float = 300.0      # s
    goal_tolerance: float = 0.05     # m
    seed: int = 0
    high_hz: int = 20
    low_hz: int = 100
    tracking: str = "mpc"            # mpc | pid
    dynamic: str = "reso"            # reso | pid | none
    planner: PlannerConfig = PlannerConfig()
    pid_tracking: PidTrackingConfig = PidTrackingConfig()
    reso: ResoConfig = ResoConfig()
    pid_dynamic: PidDynamicConfig = PidDynamicConfig()
    plant: PlantConfig = PlantConfig()
    noise: NoiseConfig = NoiseConfig()

    def __post_init__(self):
        if self.tracking not in ("mpc", "pid"):
            raise ConfigError(f"tracking must be mpc or pid, got {self.tracking!r}")
        if self.dynamic not in ("reso", "pid", "none"):
            raise ConfigError(f"dynamic must be reso, pid or none, got {self.dynamic!r}")
        if self.low_hz % self.high_hz != 0:
            raise ConfigError("low_hz must be an integer multiple of high_hz")
        if self.low_hz <= 0 or self.high_hz <= 0:
            raise ConfigError("rates must be positive")

    def input_set(self) -> InputSet:
        return InputSet(
            v_max=self.planner.v_max,
            w_max=self.planner.w_max,
            half_track=self.plant.half_track,
            c_v=self.planner.c_v,
        )

    def true_params(self) -> DynamicParams:
        return DynamicParams(
            mass=self.plant.base_mass * self.plant.mass_multiplier,
            inertia=self.plant.base_inertia * self.plant.inertia_multiplier,
            half_track=self.plant.half_track,
            wheel_radius=self.plant.wheel_radius,
            v_max=self.planner.v_max,
        )

    def disturbance(self) -> Disturbance:
        params = self.true_params()

        def profile(cfg: DisturbanceConfig, scale: float) -> DisturbanceProfile:
            magnitude = cfg.magnitude * (scale if cfg.relative else 1.0)
            return DisturbanceProfile(cfg.kind, magnitude, cfg.t0, cfg.period)

        return Disturbance(
            force=profile(self.plant.force_disturbance, params.mass),
            torque=profile(self.plant.torque_disturbance, params.inertia),
        )


# Registry of every configurable key: (dotted key, unit or literal values,
# description). Drives --help and validates overrides and file contents.
CONFIG_KEYS: list[tuple[str, str, str]] = [
    ("name", "text", "scenario label used in output files"),
    ("map_file", "path", "occupancy map, relative to the scenario file"),
    ("start", "[m, m]", "start position in world coordinates"),
    ("goal", "[m, m]", "goal position in world coordinates"),
    ("duration_cap", "s", "abort the run after this much simulated time"),
    ("goal_tolerance", "m", "position error that counts as reaching the goal"),
    ("seed", "integer", "random seed for measurement noise"),
    ("high_hz", "Hz", "kinematic (tracking) loop rate"),
    ("low_hz", "Hz", "dynamic (torque) loop rate, multiple of high_hz"),
    ("tracking", "mpc|pid", "kinematic tracking controller"),
    ("dynamic", "reso|pid|none", "dynamic torque controller; none = ideal velocity plant"),
    ("planner.v_c", "m/s", "constant speed used to timestamp the raw path"),
    ("planner.c_v", ">= 1", "safety scaling of the turn-rate share of the diamond"),
    ("planner.horizon", "steps", "prediction horizon H"),
    ("planner.update_horizon", "steps", "kept prefix per smoothing window"),
    ("planner.q", "[x, y, heading]", "state error weights"),
    ("planner.r", "[v, w]", "input reference deviation weights"),
    ("planner.s", "[v, w]", "input increment weights"),
    ("planner.v_max", "m/s", "wheel speed bound (also forward speed cap)"),
    ("planner.w_max", "rad/s", "turn rate bound"),
    ("planner.spacing", "m", "waypoint spacing after densification"),
    ("planner.fit_segment_len", "m", "arc length per heading-fit segment"),
    ("planner.stop_taper", "m", "final distance over which speed tapers to zero"),
    ("planner.smooth", "bool", "smooth the raw path before tracking"),
    ("pid_tracking.linear", "[kp, ki, kd]", "speed channel gains"),
    ("pid_tracking.angular", "[kp, ki, kd]", "turn channel gains"),
    ("pid_tracking.integral_limit", "error*s", "anti-windup clamp"),
    ("pid_tracking.cross_track_gain", "1/m * m/s", "steer-to-path blend gain"),
    ("reso.epsilon", "(0, 1)", "observer speed / saturation knee width"),
    ("reso.gain_l", "> 0", "observer gain"),
    ("reso.b0_v", "nonzero", "nominal speed-channel control gain (sign matters)"),
    ("reso.b0_w", "nonzero", "nominal turn-channel control gain (sign matters)"),
    ("reso.k_v", "< 0", "speed-channel feedback gain"),
    ("reso.k_w", "< 0", "turn-channel feedback gain"),
    ("reso.m_v", "N*m", "speed-channel command bound"),
    ("reso.m_w", "N*m", "turn-channel command bound"),
    ("reso.rate_slew", "per s", "clamp on reference rate feedforward"),
    ("pid_dynamic.k_n", "rad/s", "derivative filter coefficient"),
    ("pid_dynamic.k_p", "gain", "proportional gain"),
    ("pid_dynamic.k_i", "gain", "integral gain"),
    ("pid_dynamic.k_d", "gain", "derivative gain"),
    ("plant.base_mass", "kg", "vehicle mass without payload"),
    ("plant.base_inertia", "kg*m^2", "yaw inertia without payload"),
    ("plant.half_track", "m", "half the wheel separation"),
    ("plant.wheel_radius", "m", "drive wheel radius"),
    ("plant.mass_multiplier", "x", "true mass = base_mass * multiplier"),
    ("plant.inertia_multiplier", "x", "true inertia = base_inertia * multiplier"),
    ("plant.force_disturbance.kind", "none|constant|step|sine", "body force profile"),
    ("plant.force_disturbance.magnitude", "N (xM if relative)", "profile amplitude"),
    ("plant.force_disturbance.relative", "bool", "scale magnitude by true mass"),
    ("plant.force_disturbance.t0", "s", "step onset time"),
    ("plant.force_disturbance.period", "s", "sine period"),
    ("plant.torque_disturbance.kind", "none|constant|step|sine", "body torque profile"),
    ("plant.torque_disturbance.magnitude", "N*m (xI if relative)", "profile amplitude"),
    ("plant.torque_disturbance.relative", "bool", "scale magnitude by true inertia"),
    ("plant.torque_disturbance.t0", "s", "step onset time"),
    ("plant.torque_disturbance.period", "s", "sine period"),
    ("noise.sigma_xy", "m", "position measurement noise"),
    ("noise.sigma_theta", "rad", "heading measurement noise"),
]

_KNOWN_KEYS = {key for key, _, _ in CONFIG_KEYS}

_SECTION_TYPES = {
    "planner": PlannerConfig,
    "pid_tracking": PidTrackingConfig,
    "reso": ResoConfig,
    "pid_dynamic": PidDynamicConfig,
    "plant": PlantConfig,
    "noise": NoiseConfig,
}

_PLANT_SUBSECTIONS = {
    "force_disturbance": DisturbanceConfig,
    "torque_disturbance": DisturbanceConfig,
}


def _flatten(d: dict, prefix: str = "") -> dict[str, object]:
    flat: dict[str, object] = {}
    for key, value in d.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{path}."))
        else:
            flat[path] = value
    return flat


def _validate_keys(data: dict) -> None:
    for key in _flatten(data):
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")


def _coerce(value, target_example):
    """Normalize TOML values: lists become tuples, ints may serve as floats."""
    if isinstance(target_example, tuple) and isinstance(value, list):
        return tuple(float(v) for v in value)
    if isinstance(target_example, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _build_section(cls, data: dict, path: str):
    kwargs = {}
    defaults = cls()
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data.pop(f.name)
        current = getattr(defaults, f.name)
        if f.name in _PLANT_SUBSECTIONS and isinstance(value, dict):
            kwargs[f.name] = _build_section(_PLANT_SUBSECTIONS[f.name], value, f"{path}{f.name}.")
            continue
        coerced = _coerce(value, current)
        if not isinstance(coerced, type(current)) and current is not None:
            raise ConfigError(
                f"config key {path}{f.name} expects {type(current).__name__}, "
                f"got {type(value).__name__}"
            )
        kwargs[f.name] = coerced
    if data:
        raise ConfigError(f"unknown config key {path}{next(iter(data))!r}")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid value under {path or 'top level'}: {exc}") from exc


def config_from_dict(data: dict, base_dir: Path | None = None) -> ScenarioConfig:
    data = dict(data)
    _validate_keys(data)
    kwargs = {}
    for section, cls in _SECTION_TYPES.items():
        if section in data:
            kwargs[section] = _build_section(cls, dict(data.pop(section)), f"{section}.")
    for key in ("start", "goal"):
        if key in data:
            value = data.pop(key)
            if not (isinstance(value, list) and len(value) == 2):
                raise ConfigError(f"config key {key} expects [x, y]")
            kwargs[key] = (float(value[0]), float(value[1]))
    for f in fields(ScenarioConfig):
        if f.name in data:
            value = data.pop(f.name)
            kwargs[f.name] = _coerce(value, getattr(ScenarioConfig(), f.name))
    if data:
        raise ConfigError(f"unknown config key {next(iter(data))!r}")
    config = ScenarioConfig(**kwargs)
    if base_dir is not None and config.map_file:
        resolved = (base_dir / config.map_file).resolve()
        object.__setattr__(config, "map_file", str(resolved))
    return config


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data, base_dir=path.parent)


def parse_override_value(text: str):
    """Parse a --set value: bool, int, float, bracketed list, or bare string."""
    lowered = text.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    stripped = text.strip()
    if stripped.startswith("[") and stripped.endswith("]"):
        inner = stripped[1:-1].strip()
        return [parse_override_value(v) for v in inner.split(",")] if inner else []
    try:
        return int(stripped)
    except ValueError:
        pass
    try:
        return float(stripped)
    except ValueError:
        return stripped


def apply_overrides(data: dict, overrides: dict[str, object]) -> dict:
    """Apply dotted-key overrides onto a nested scenario dict (copy)."""
    import copy

    result = copy.deepcopy(data)
    for dotted, value in overrides.items():
        if dotted not in _KNOWN_KEYS:
            raise ConfigError(f"unknown override key {dotted!r}")
        node = result
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override key {dotted!r} conflicts with a scalar")
        node[parts[-1]] = value
    return result


def load_scenario_dict(path: str | Path) -> tuple[dict, Path]:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            return tomllib.load(f), path.parent
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def builtin_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (name without extension)."""
    root = Path(__file__).parent / "scenarios"
    candidate = root / f"{name}.toml"
    if not candidate.exists():
        available = sorted(p.stem for p in root.glob("*.toml"))
        raise ConfigError(f"no builtin scenario {name!r}; available: {', '.join(available)}")
    return candidate


def resolve_scenario(spec: str) -> Path:
    """Treat spec as a filesystem path first, then as a builtin name."""
    path = Path(spec)
    if path.exists():
        return path
    if spec.endswith(".toml"):
        raise ConfigError(f"scenario file not found: {spec}")
    return builtin_scenario_path(spec)
