"""Scenario configuration files: schema, parsing and serialization.

A config is a YAML document with the sections ``human``, ``robot``,
``impairment``, ``task``, ``constraints``, ``object`` and ``run``. Units are
part of the key names. Joint indices in ``bound_overrides_rad`` are 1-based.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import MISSING, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

PRESET_DIR = Path(__file__).with_name("presets")
CONFIG_DIR_ENV = "MOBILITY_HQP_CONFIG_DIR"
PRESET_ALIASES = {"mie": "mie_standing", "mis": "mis_standing", "ea": "ea_standing", "sa": "sa_standing",
                  "wb": "wb_seated"}


class ConfigError(ValueError):
    pass


_IIWA_DH = (
    (0.0, 0.0, -np.pi / 2, 0.34),
    (0.0, 0.0, np.pi / 2, 0.0),
    (0.0, 0.0, np.pi / 2, 0.40),
    (0.0, 0.0, -np.pi / 2, 0.0),
    (0.0, 0.0, -np.pi / 2, 0.40),
    (0.0, 0.0, np.pi / 2, 0.0),
    (0.0, 0.0, 0.0, 0.126),
)


@dataclass(frozen=True)
class HumanConfig:
    posture: str
    q_initial_rad: tuple
    pelvis_position_m: tuple
    pelvis_heading_rad: float = float(np.pi)  # facing direction about world z
    l_spine_m: tuple = (0.0, 0.19, 0.48)
    l_humerus_m: tuple = (0.0, 0.0, 0.30)
    l_radius_m: tuple = (0.0, 0.0, 0.26)
    rom_lower_rad: tuple = (-0.8, -2.8, -3.0, -2.0, -2.75, -1.5, -1.2, -0.45)
    rom_upper_rad: tuple = (0.4, 0.5, 1.9, 0.9, 0.05, 1.5, 1.2, 0.55)
    velocity_limit_rad_s: float = 2.5


@dataclass(frozen=True)
class RobotConfig:
    arm_q_initial_rad: tuple
    base_initial_x_m: float = 0.0
    base_initial_y_m: float = 0.0
    base_initial_theta_rad: float = 0.0
    arm_dh: tuple = _IIWA_DH  # rows of (theta_offset_rad, a_m, alpha_rad, d_m)
    arm_q_max_rad: tuple = tuple(np.round(np.radians([170, 120, 170, 120, 170, 120, 175]), 6))
    arm_qd_max_rad_s: tuple = tuple(np.round(np.radians([85, 85, 100, 75, 130, 135, 135]), 6))
    base_xy_range_m: float = 10.0
    base_linear_velocity_m_s: float = 0.5
    base_angular_velocity_rad_s: float = 1.0
    mount_height_m: float = 0.0
    arm_q_homing_rad: tuple | None = None  # defaults to the initial configuration


@dataclass(frozen=True)
class ImpairmentConfig:
    preset: str
    severity: tuple | None = None  # custom diagonal, replaces the preset's
    bound_overrides_rad: dict = field(default_factory=dict)
    zeta_rad: float = 0.17
    wrist_factor: bool = True


@dataclass(frozen=True)
class TaskConfig:
    alpha: float = 100.0
    beta: float = 100.0
    gamma: float = 10.0
    delta: float = 0.001
    pelvis_weight: float = 10.0
    human_damping: float = 0.01
    tikhonov: float = 1e-6
    human_gain: tuple = (40.0,) * 6
    robot_gain: tuple = (10.0, 10.0, 10.0, 2.0, 2.0, 2.0)
    kp_joint: tuple = (1.0, 1.0, 1.0, 10.0, 10.0, 10.0, 10.0, 2.0, 2.0, 2.0)
    kd_joint: tuple = (0.1, 0.1, 0.1, 1.0, 1.0, 1.0, 1.0, 0.2, 0.2, 0.2)
    epsilon: float = 0.01
    epsilon_relative: float = 0.01
    dt_s: float = 0.01
    gate_d_min_m: float = 0.1
    gate_d_max_m: float = 0.2
    gate_orthogonality: float = 0.1
    gate_distance: str = "full"  # full | projected


@dataclass(frozen=True)
class ConstraintsConfig:
    armrest_z_m: float | None = None
    separation_m: float | None = 0.3
    body_clearance_m: float | None = 0.25
    position_box_m: float = 5.0
    orientation_box_rad: float = float(np.pi)
    linear_velocity_m_s: float = 10.0
    angular_velocity_rad_s: float = float(np.pi)
    joint_margin_m: float = 0.002


@dataclass(frozen=True)
class ObjectConfig:
    offset_position_m: tuple
    offset_rotvec_rad: tuple
    name: str = "object"


@dataclass(frozen=True)
class RunConfig:
    time_budget_s: float = 20.0
    hold_duration_s: float = 1.0
    blend_duration_s: float = 0.5
    homing_gain_1_s: float = 2.0
    homing_tolerance_rad: float = 1e-3
    lag_tau_s: float | None = None
    noise_std: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    human: HumanConfig
    robot: RobotConfig
    impairment: ImpairmentConfig
    object: ObjectConfig
    task: TaskConfig = TaskConfig()
    constraints: ConstraintsConfig = ConstraintsConfig()
    run: RunConfig = RunConfig()

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **sections) -> "ScenarioConfig":
        return dataclasses.replace(self, **sections)


_SECTIONS = {
    "human": HumanConfig,
    "robot": RobotConfig,
    "impairment": ImpairmentConfig,
    "task": TaskConfig,
    "constraints": ConstraintsConfig,
    "object": ObjectConfig,
    "run": RunConfig,
}


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def _freeze(v):
    if isinstance(v, (list, tuple)):
        return tuple(_freeze(x) for x in v)
    return v


def _coerce(section: str, f: dataclasses.Field, value):
    key = f"{section}.{f.name}"
    if f.name == "bound_overrides_rad":
        if not isinstance(value, dict):
            raise ConfigError(f"{key} must be a mapping of 1-based joint index to [lower, upper]")
        out = {}
        for j, pair in value.items():
            try:
                j = int(j)
                lo, hi = (float(x) for x in pair)
            except (TypeError, ValueError):
                raise ConfigError(f"{key}[{j}] must be a [lower, upper] pair") from None
            out[j] = (lo, hi)
        return out
    default = f.default if f.default is not MISSING else None
    if isinstance(value, list):
        return _freeze(value)
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _section(name: str, cls, data) -> object:
    if not isinstance(data, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key '{name}.{unknown[0]}'")
    kwargs = {}
    for fname, f in known.items():
        if fname in data:
            kwargs[fname] = _coerce(name, f, data[fname])
        elif f.default is MISSING and f.default_factory is MISSING:
            raise ConfigError(f"missing required key '{name}.{fname}'")
    return cls(**kwargs)


def config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    allowed = {"name"} | set(_SECTIONS)
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}'")
    if "name" not in data:
        raise ConfigError("missing required key 'name'")
    kwargs = {"name": str(data["name"])}
    for sec, cls in _SECTIONS.items():
        if sec in data:
            kwargs[sec] = _section(sec, cls, data[sec])
        elif sec in ("human", "robot", "impairment", "object"):
            raise ConfigError(f"missing required key '{sec}'")
    return ScenarioConfig(**kwargs)


def parse_config(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from None
    return config_from_dict(data)


def resolve_config_path(name_or_path: str) -> Path:
    """A file path, or a preset name looked up in the config dir then the shipped presets."""
    p = Path(name_or_path)
    if p.suffix in (".yaml", ".yml") or p.exists():
        return p
    stem = PRESET_ALIASES.get(name_or_path, name_or_path)
    dirs = []
    if os.environ.get(CONFIG_DIR_ENV):
        dirs.append(Path(os.environ[CONFIG_DIR_ENV]))
    dirs.append(PRESET_DIR)
    for d in dirs:
        for ext in (".yaml", ".yml"):
            cand = d / f"{stem}{ext}"
            if cand.exists():
                return cand
    raise ConfigError(f"no config file or preset named '{name_or_path}'")


def load_config(name_or_path: str) -> ScenarioConfig:
    path = resolve_config_path(name_or_path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)


def preset_names() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))
