"""Experiment configuration: one YAML document, validated on load.

Every section maps onto a dataclass. Unknown keys, wrong types and values
rejected by a module's own checks are reported as ``ConfigError`` with the
dotted path of the offending field, e.g. ``control.dt``.
"""
from __future__ import annotations

import dataclasses
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .control import ComplianceModel, GainSet
from .kinematics import FingerModel
from .scene import Scene
from .sim import PlantSettings, TrialConfig
from .trajopt import TrajoptSettings


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def nominal_finger() -> FingerModel:
    """Three-link finger placed so the distal pad faces the thumb at the start pose."""
    return FingerModel(base_position=(0.0548, 0.0142), base_angle=2.9126)


def nominal_trajopt() -> TrajoptSettings:
    return TrajoptSettings(contact_arc=0.086, q_seed=(0.15, 0.15, 1.5))


_PLANT = PlantSettings()
_TRIAL = TrialConfig()


@dataclass
class ObjectConfig:
    radius: float = 0.0075
    mass: float = 0.01

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("object.radius", f"must be positive, got {self.radius}")
        if not self.mass >= 0:
            raise ConfigError("object.mass", f"must be non-negative, got {self.mass}")


@dataclass
class ContactConfig:
    mu: float = 0.5

    def __post_init__(self):
        if not self.mu >= 0:
            raise ConfigError("contacts.mu", f"must be non-negative, got {self.mu}")


@dataclass
class SensorConfig:
    n_sensors: int = _PLANT.n_sensors
    thumb_sensors: int = _PLANT.thumb_sensors
    pitch: float = _PLANT.sensor_pitch
    sigma: float = _PLANT.sensor_sigma  # footprint spread of the simulated pressure
    threshold: float = _PLANT.threshold
    n_neighbors: int = _PLANT.n_neighbors
    noise: float = _TRIAL.noise  # fraction of the peak reading at F_des

    def __post_init__(self):
        if not 0 < self.threshold < 255:
            raise ValueError("threshold must lie in (0, 255)")
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be at least 1")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")


@dataclass
class ControlConfig:
    gains: GainSet = field(default_factory=GainSet)
    compliance: ComplianceModel = field(default_factory=ComplianceModel)


@dataclass
class SimConfig:
    C_pad: float = _PLANT.C_pad
    psi_tol: float = _PLANT.psi_tol
    fn_min: float = _PLANT.fn_min
    slide_limit: float = _PLANT.slide_limit
    slip_gain: float = _PLANT.slip_gain
    grasp_force: float = _PLANT.grasp_force
    ticks_per_knot: int = _PLANT.ticks_per_knot
    settle_ticks: int = _PLANT.settle_ticks
    max_iter: int = _PLANT.max_iter
    mu_range: float = _TRIAL.mu_range
    C_peak_range: float = _TRIAL.C_peak_range
    radius_range: float = _TRIAL.radius_range
    perturb: bool = _TRIAL.perturb
    tolerance: float = _TRIAL.tolerance
    seed: int = 0
    trials: int = 50
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class OutputConfig:
    dir: str = "out"


@dataclass
class ExperimentConfig:
    finger: FingerModel = field(default_factory=nominal_finger)
    object: ObjectConfig = field(default_factory=ObjectConfig)
    contacts: ContactConfig = field(default_factory=ContactConfig)
    trajopt: TrajoptSettings = field(default_factory=nominal_trajopt)
    sensors: SensorConfig = field(default_factory=SensorConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    # -- views used by the rest of the package -------------------------

    def scene(self) -> Scene:
        return Scene(finger=self.finger, radius=self.object.radius, mass=self.object.mass, mu=self.contacts.mu)

    @property
    def gains(self) -> GainSet:
        return self.control.gains

    def plant_settings(self) -> PlantSettings:
        s, t = self.sim, self.sensors
        return PlantSettings(
            compliance=self.control.compliance,
            C_pad=s.C_pad,
            psi_tol=s.psi_tol,
            fn_min=s.fn_min,
            slide_limit=s.slide_limit,
            slip_gain=s.slip_gain,
            sensor_sigma=t.sigma,
            sensor_pitch=t.pitch,
            n_sensors=t.n_sensors,
            thumb_sensors=t.thumb_sensors,
            threshold=t.threshold,
            n_neighbors=t.n_neighbors,
            grasp_force=s.grasp_force,
            ticks_per_knot=s.ticks_per_knot,
            settle_ticks=s.settle_ticks,
            max_iter=s.max_iter,
        )

    def trial_config(self, mode: str = "force", index: int = 0, seed: int | None = None) -> TrialConfig:
        s = self.sim
        return TrialConfig(
            seed=s.seed if seed is None else seed,
            index=index,
            mode=mode,
            mu_range=s.mu_range,
            C_peak_range=s.C_peak_range,
            radius_range=s.radius_range,
            noise=self.sensors.noise,
            perturb=s.perturb,
            tolerance=s.tolerance,
        )

    def to_dict(self) -> dict:
        return _plain(self)

    def dump(self, path=None) -> str:
        text = yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)
        if path is not None:
            Path(path).write_text(text)
        return text


# -- conversion ----------------------------------------------------------


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    return obj


def _strip_optional(tp):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        optional = len(args) < len(typing.get_args(tp))
        if len(args) == 1:
            return args[0], optional
        return (typing.Union[tuple(args)] if optional else tp), optional
    return tp, False


def _convert(value, tp, path: str):
    tp, optional = _strip_optional(tp)
    if value is None:
        if optional:
            return None
        raise ConfigError(path, "value is required")
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    origin = typing.get_origin(tp)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(path, f"expected a finite number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(path, f"expected {len(args)} entries, got {len(value)}")
        return tuple(_convert(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if origin in (typing.Union, types.UnionType):
        # e.g. float | tuple[float, ...]
        for alt in typing.get_args(tp):
            try:
                return _convert(value, alt, path)
            except ConfigError:
                continue
        raise ConfigError(path, f"unsupported value {value!r}")
    return value


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown field")
    kwargs = {}
    for name in names & set(data):
        sub = f"{path}.{name}" if path else name
        kwargs[name] = _convert(data[name], hints[name], sub)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        culprit = next((n for n in sorted(kwargs, key=len, reverse=True) if n in msg), None)
        where = f"{path}.{culprit}" if culprit else path
        raise ConfigError(where, msg) from None


def from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    cfg = ExperimentConfig()
    sections = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - set(sections))
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    built = {}
    for name, section in data.items():
        default = _plain(getattr(cfg, name))
        merged = _merge(default, section, name)
        built[name] = _build(type(getattr(cfg, name)), merged, name)
    return dataclasses.replace(cfg, **built)


def _merge(default, override, path):
    """Overlay ``override`` on the default section so configs may be partial."""
    if override is None:
        return default
    if not isinstance(override, dict):
        raise ConfigError(path, f"expected a mapping, got {type(override).__name__}")
    out = dict(default)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v, f"{path}.{k}")
        else:
            out[k] = v
    return out


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"invalid YAML in {path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError("", "top level must be a mapping of sections")
    return from_dict(data)
