"""Scenario configuration: TOML file with sections
``[camera]``, ``[target]``, ``[target.script]``, ``[detection]``, ``[ukf]``,
``[controller]`` and ``[run]``. Every key is optional; defaults reproduce the
reference setup (640x480 camera with fx = fy = 381.36, 4.6 m x 1.5 m target,
50 Hz, 150-sample window).
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .measurement import DEFAULT_R_DIAG
from .ukf import DEFAULT_Q0_DIAG

Vec3 = tuple[float, float, float]


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending field(s)."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CameraSection(_Section):
    fx: float = Field(381.36, gt=0)
    fy: float = Field(381.36, gt=0)
    cu: float = 320.5
    cv: float = 240.5
    width: int = Field(640, gt=0)
    height: int = Field(480, gt=0)
    position: Vec3 = (0.0, 5.5, 1.0)
    # vehicle body roll, pitch, yaw (rad) in the inertial frame
    orientation: Vec3 = (0.0, 0.0, -math.pi / 2)
    # first-order lag on the realized twist (s); 0 disables
    lag: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _principal_point(self):
        if not 0 < self.cu < self.width:
            raise ValueError("cu must lie strictly inside the image width")
        if not 0 < self.cv < self.height:
            raise ValueError("cv must lie strictly inside the image height")
        return self


class Segment(_Section):
    duration: float = Field(gt=0)
    velocity: Vec3


class ScriptSection(_Section):
    segments: list[Segment] = Field(default_factory=lambda: [Segment(duration=60.0, velocity=(2.0, 0.0, 0.0))])
    # velocity switch time constant (s); 0 switches instantly
    smoothing: float = Field(0.0, ge=0)
    max_speed: float = Field(4.0, gt=0)

    @model_validator(mode="after")
    def _speed_cap(self):
        for i, seg in enumerate(self.segments):
            if math.hypot(*seg.velocity) > self.max_speed:
                raise ValueError(f"segments[{i}] speed exceeds max_speed={self.max_speed}")
        return self


class TargetSection(_Section):
    position: Vec3 = (0.0, 0.0, 0.0)
    heading: float = 0.0
    length: float = Field(4.6, gt=0)
    height: float = Field(1.5, gt=0)
    # side area assumed by the filter; defaults to length * height
    area: Optional[float] = Field(None, gt=0)
    script: ScriptSection = Field(default_factory=ScriptSection)

    @property
    def side_area(self) -> float:
        return self.area if self.area is not None else self.length * self.height


class DetectionSection(_Section):
    sigma_px: float = Field(2.0, ge=0)
    sigma_area: float = Field(5e-4, ge=0)
    sigma_rc: float = Field(0.01, ge=0)
    p_drop: float = Field(0.02, ge=0, le=1)
    blackouts: list[tuple[float, float]] = Field(default_factory=list)
    # periodic blackouts: `blackout_duration` seconds every `blackout_period`, starting at `blackout_offset`
    blackout_period: float = Field(0.0, ge=0)
    blackout_duration: float = Field(1.0, ge=0)
    blackout_offset: float = Field(0.0, ge=0)
    margin: float = Field(0.0, ge=0)
    require_full_box: bool = True

    @field_validator("blackouts")
    @classmethod
    def _ordered(cls, v):
        for start, end in v:
            if not end > start:
                raise ValueError("each blackout must be [start, end] with end > start")
        return v


class UkfSection(_Section):
    alpha: float = Field(1e-3, gt=0, le=1)
    beta: float = 2.0
    kappa: float = 0.0
    q0: list[float] = Field(default_factory=lambda: list(DEFAULT_Q0_DIAG), min_length=9, max_length=9)
    r: list[float] = Field(default_factory=lambda: list(DEFAULT_R_DIAG), min_length=6, max_length=6)
    p0_scale: float = Field(10.0, gt=0)
    adaptive: bool = True
    window: int = Field(150, ge=1)
    # record weights inside the window; "exponential" fades older records by `forgetting`
    weighting: Literal["uniform", "exponential"] = "uniform"
    forgetting: float = Field(0.97, gt=0, lt=1)
    n_min: Optional[int] = Field(None, ge=1)
    q_min: float = Field(1e-12, gt=0)

    @field_validator("q0", "r")
    @classmethod
    def _positive(cls, v):
        if any(not x > 0 for x in v):
            raise ValueError("all diagonal entries must be positive")
        return v

    @model_validator(mode="after")
    def _kappa(self):
        if not 9 + self.kappa > 0:
            raise ValueError("kappa must satisfy 9 + kappa > 0")
        return self


class ControllerSection(_Section):
    gain: float = Field(0.5, gt=0)
    d_exp: float = Field(5.0, gt=0)
    # defaults to the side-view bearing, target heading + pi/2
    psi_exp: Optional[float] = None
    s_star: Optional[Vec3] = None
    max_linear: float = Field(8.0, gt=0)
    max_angular: float = Field(2.0, gt=0)
    feedforward: bool = True
    # feed ground truth to the controller instead of the filter estimate
    perfect_state: bool = False


class RunSection(_Section):
    duration: float = Field(60.0, gt=0)
    rate: float = Field(50.0, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)

    @property
    def dt(self) -> float:
        return 1.0 / self.rate

    @property
    def steps(self) -> int:
        return int(round(self.duration * self.rate))


class ScenarioConfig(_Section):
    camera: CameraSection = Field(default_factory=CameraSection)
    target: TargetSection = Field(default_factory=TargetSection)
    detection: DetectionSection = Field(default_factory=DetectionSection)
    ukf: UkfSection = Field(default_factory=UkfSection)
    controller: ControllerSection = Field(default_factory=ControllerSection)
    run: RunSection = Field(default_factory=RunSection)

    def with_overrides(self, **sections) -> "ScenarioConfig":
        """Copy with per-section field overrides, e.g. ``with_overrides(ukf={"adaptive": False})``."""
        data = self.model_dump()
        for name, values in sections.items():
            _merge(data[name], values)
        return from_dict(data)


def _merge(base: dict, upd: dict) -> None:
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def from_dict(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"{path}: cannot read ({err.strerror})") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: not valid TOML ({err})") from None
    return from_dict(data)
