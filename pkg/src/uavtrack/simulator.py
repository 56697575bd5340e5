"""Deterministic kinematic world with a geometric stand-in for the box detector.

The camera is a rigid body that realizes twist commands kinematically
(optionally through a first-order lag). The target follows a scripted
piecewise-constant velocity profile and is seen as the bounding box of its
projected side rectangle, with Gaussian noise and dropouts.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field, replace
import math
from typing import Callable, Optional

import numpy as np

from . import adaptive, ukf
from .config import ScenarioConfig
from .controller import ControlConfig, bearing, control, visual_error
from .dynamics import CameraCommand, DegenerateDepthError, state_from_relative
from .geometry import CameraIntrinsics, camera_attitude, propagate_attitude, reorthonormalize, skew
from .measurement import Measurement
from .runlog import RunLog

TIME_EPS = 1e-9


@dataclass(frozen=True)
class WorldState:
    t: float
    target_pos: np.ndarray
    target_vel: np.ndarray
    cam_pos: np.ndarray
    attitude: np.ndarray  # inertial -> camera
    cam_twist: np.ndarray = field(default_factory=lambda: np.zeros(6))  # realized, camera frame

    def relative_position(self) -> np.ndarray:
        """Target position relative to the camera, camera frame."""
        return self.attitude @ (self.target_pos - self.cam_pos)

    def true_state(self) -> np.ndarray:
        return state_from_relative(self.relative_position(), self.target_pos, self.target_vel)

    def realized_command(self) -> CameraCommand:
        return CameraCommand.from_vector(self.cam_twist)


@dataclass(frozen=True)
class TargetScript:
    segments: tuple[tuple[float, tuple[float, float, float]], ...]
    smoothing: float = 0.0  # velocity time constant (s)

    def __post_init__(self):
        if any(d <= 0 for d, _ in self.segments):
            raise ValueError("segment durations must be positive")
        if self.smoothing < 0:
            raise ValueError("smoothing must be non-negative")

    @property
    def starts(self) -> list[float]:
        out, t = [], 0.0
        for d, _ in self.segments:
            out.append(t)
            t += d
        return out

    @property
    def total_duration(self) -> float:
        return float(sum(d for d, _ in self.segments))

    def commanded_velocity(self, t: float) -> np.ndarray:
        """Scripted velocity at ``t``; the target stops after the last segment."""
        if t + TIME_EPS >= self.total_duration or not self.segments:
            return np.zeros(3)
        i = bisect_right(self.starts, t + TIME_EPS) - 1
        return np.asarray(self.segments[max(i, 0)][1], dtype=float)

    def switch_times(self) -> list[float]:
        return self.starts[1:]

    def advance(self, pos: np.ndarray, vel: np.ndarray, t: float, dt: float):
        """Exact position/velocity after ``dt``, splitting the interval at segment breaks."""
        cuts = [b for b in self.starts[1:] + [self.total_duration] if t + TIME_EPS < b < t + dt - TIME_EPS]
        edges = [t, *cuts, t + dt]
        pos = np.array(pos, dtype=float)
        vel = np.array(vel, dtype=float)
        for a, b in zip(edges[:-1], edges[1:]):
            h = b - a
            vc = self.commanded_velocity(a)
            if self.smoothing == 0.0:
                pos = pos + vc * h
                vel = vc
            else:
                decay = math.exp(-h / self.smoothing)
                pos = pos + vc * h + (vel - vc) * self.smoothing * (1.0 - decay)
                vel = vc + (vel - vc) * decay
        if self.smoothing == 0.0:
            vel = self.commanded_velocity(t + dt)
        return pos, vel


@dataclass(frozen=True)
class TargetShape:
    """Side rectangle of the target, centered on the target origin."""

    length: float = 4.6
    height: float = 1.5
    heading: float = 0.0

    @property
    def area(self) -> float:
        return self.length * self.height

    def corners(self, r_q: np.ndarray) -> np.ndarray:
        along = np.array([math.cos(self.heading), math.sin(self.heading), 0.0]) * (0.5 * self.length)
        up = np.array([0.0, 0.0, 0.5 * self.height])
        return np.stack([r_q + along + up, r_q + along - up, r_q - along - up, r_q - along + up])


@dataclass(frozen=True)
class DetectionConfig:
    sigma_px: float = 2.0
    sigma_area: float = 5e-4
    sigma_rc: float = 0.01
    p_drop: float = 0.02
    blackouts: tuple[tuple[float, float], ...] = ()
    blackout_period: float = 0.0
    blackout_duration: float = 1.0
    blackout_offset: float = 0.0
    margin: float = 0.0
    require_full_box: bool = True
    min_depth: float = 1e-3

    def __post_init__(self):
        if min(self.sigma_px, self.sigma_area, self.sigma_rc) < 0:
            raise ValueError("noise levels must be non-negative")
        if not 0.0 <= self.p_drop <= 1.0:
            raise ValueError("p_drop must lie in [0, 1]")

    def in_blackout(self, t: float) -> bool:
        if any(a - TIME_EPS <= t < b - TIME_EPS for a, b in self.blackouts):
            return True
        if self.blackout_period > 0 and t + TIME_EPS >= self.blackout_offset:
            phase = (t - self.blackout_offset + TIME_EPS) % self.blackout_period
            return phase < self.blackout_duration
        return False

    def blackout_intervals(self, t_end: float) -> list[tuple[float, float]]:
        out = [tuple(b) for b in self.blackouts]
        if self.blackout_period > 0:
            start = self.blackout_offset
            while start < t_end:
                out.append((start, start + self.blackout_duration))
                start += self.blackout_period
        return sorted(out)


@dataclass(frozen=True)
class BoundingBox:
    u_min: float
    u_max: float
    v_min: float
    v_max: float

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max)

    @property
    def area(self) -> float:
        return (self.u_max - self.u_min) * (self.v_max - self.v_min)


def project_box(w: WorldState, shape: TargetShape, intr: CameraIntrinsics, min_depth: float = 1e-3) -> Optional[BoundingBox]:
    """Bounding box of the projected side rectangle, or None if any corner is behind the camera."""
    pts = (shape.corners(w.target_pos) - w.cam_pos) @ w.attitude.T
    Z = pts[:, 2]
    if np.any(Z < min_depth):
        return None
    u = intr.fx * pts[:, 0] / Z + intr.cu
    v = intr.fy * pts[:, 1] / Z + intr.cv
    return BoundingBox(u.min(), u.max(), v.min(), v.max())


def box_visible(box: Optional[BoundingBox], intr: CameraIntrinsics, det: DetectionConfig) -> bool:
    if box is None:
        return False
    uc, vc = box.center
    if not intr.contains(uc, vc):
        return False
    if det.require_full_box:
        m = det.margin
        return box.u_min >= m and box.v_min >= m and box.u_max <= intr.width - m and box.v_max <= intr.height - m
    return True


def emulate_detection(
    w: WorldState,
    shape: TargetShape,
    intr: CameraIntrinsics,
    det: DetectionConfig,
    rng: np.random.Generator,
) -> Optional[Measurement]:
    """One detector frame. Always consumes the same number of random draws so
    paired runs with the same seed see the same noise and dropout sequence."""
    noise = rng.standard_normal(6)
    drop = rng.random()
    box = project_box(w, shape, intr, det.min_depth)
    if not box_visible(box, intr, det):
        return None
    if drop < det.p_drop or det.in_blackout(w.t):
        return None
    uc, vc = box.center
    return Measurement(
        u=uc + det.sigma_px * noise[0],
        v=vc + det.sigma_px * noise[1],
        a=box.area * (1.0 + det.sigma_area * noise[2]),
        r_c=w.cam_pos + det.sigma_rc * noise[3:6],
    )


def _position_increment(attitude: np.ndarray, twist: np.ndarray, dt: float) -> np.ndarray:
    """Inertial displacement for a constant camera-frame twist held for ``dt``."""
    v, w = twist[:3], twist[3:]
    W = skew(w)
    th = np.linalg.norm(w)
    if th * dt < 1e-6:
        G = dt * np.eye(3) + 0.5 * dt**2 * W + dt**3 / 6.0 * W @ W
    else:
        a = th * dt
        G = dt * np.eye(3) + (1.0 - math.cos(a)) / th**2 * W + (a - math.sin(a)) / th**3 * W @ W
    return attitude.T @ (G @ v)


def step_world(
    w: WorldState,
    cmd: CameraCommand,
    script: TargetScript,
    dt: float,
    lag: float = 0.0,
) -> WorldState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if lag > 0:
        twist = w.cam_twist + (cmd.as_vector() - w.cam_twist) * (1.0 - math.exp(-dt / lag))
    else:
        twist = cmd.as_vector()
    cam_pos = w.cam_pos + _position_increment(w.attitude, twist, dt)
    attitude = reorthonormalize(propagate_attitude(w.attitude, twist[3:], dt))
    pos, vel = script.advance(w.target_pos, w.target_vel, w.t, dt)
    return WorldState(w.t + dt, pos, vel, cam_pos, attitude, twist)


# --- scenario assembly -------------------------------------------------------------


def intrinsics_from_config(cfg: ScenarioConfig) -> CameraIntrinsics:
    c = cfg.camera
    return CameraIntrinsics(c.fx, c.fy, c.cu, c.cv, c.width, c.height)


def script_from_config(cfg: ScenarioConfig) -> TargetScript:
    s = cfg.target.script
    return TargetScript(tuple((seg.duration, tuple(seg.velocity)) for seg in s.segments), s.smoothing)


def detection_from_config(cfg: ScenarioConfig) -> DetectionConfig:
    d = cfg.detection
    return DetectionConfig(
        sigma_px=d.sigma_px,
        sigma_area=d.sigma_area,
        sigma_rc=d.sigma_rc,
        p_drop=d.p_drop,
        blackouts=tuple(tuple(b) for b in d.blackouts),
        blackout_period=d.blackout_period,
        blackout_duration=d.blackout_duration,
        blackout_offset=d.blackout_offset,
        margin=d.margin,
        require_full_box=d.require_full_box,
    )


def control_from_config(cfg: ScenarioConfig) -> ControlConfig:
    c = cfg.controller
    psi_exp = c.psi_exp if c.psi_exp is not None else cfg.target.heading + math.pi / 2
    return ControlConfig(c.gain, c.d_exp, psi_exp, c.s_star, c.max_linear, c.max_angular)


def initial_world(cfg: ScenarioConfig, script: Optional[TargetScript] = None) -> WorldState:
    script = script or script_from_config(cfg)
    vel0 = script.commanded_velocity(0.0)
    return WorldState(
        t=0.0,
        target_pos=np.asarray(cfg.target.position, dtype=float),
        target_vel=vel0,
        cam_pos=np.asarray(cfg.camera.position, dtype=float),
        attitude=camera_attitude(*cfg.camera.orientation),
    )


def _seed_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def run_scenario(
    cfg: ScenarioConfig,
    seed: Optional[int] = None,
    observer: Optional[Callable[[int, WorldState, Optional[ukf.FilterState]], None]] = None,
) -> RunLog:
    """Fixed-step closed loop: detect, filter, adapt Q, control, move the world.

    Filter divergence ends the run early; the returned log is then flagged and
    holds the rows produced so far. ``observer(k, world, filter_state)`` is
    called once per step after the filter update.
    """
    seed = cfg.run.seed if seed is None else seed
    dt = cfg.run.dt
    intr = intrinsics_from_config(cfg)
    script = script_from_config(cfg)
    det = detection_from_config(cfg)
    ccfg = control_from_config(cfg)
    shape = TargetShape(cfg.target.length, cfg.target.height, cfg.target.heading)
    model = ukf.TargetModel(cfg.target.side_area, intr)
    params = ukf.UkfParams(cfg.ukf.alpha, cfg.ukf.beta, cfg.ukf.kappa)
    Q0 = np.diag(cfg.ukf.q0)
    R = np.diag(cfg.ukf.r)
    if cfg.ukf.weighting == "exponential":
        window = adaptive.ResidualWindow(cfg.ukf.window, adaptive.exponential_weights(cfg.ukf.forgetting))
    else:
        window = adaptive.ResidualWindow(cfg.ukf.window)
    n_min = cfg.ukf.n_min if cfg.ukf.n_min is not None else cfg.ukf.window
    rng = _seed_rng(seed)

    log = RunLog.allocate(cfg.run.steps + 1, dt=dt, seed=seed, adaptive=cfg.ukf.adaptive)
    w = initial_world(cfg, script)
    fs: Optional[ukf.FilterState] = None
    prev_att = w.attitude
    prev_cmd = CameraCommand()

    for k in range(cfg.run.steps + 1):
        w = replace(w, t=k * dt)
        z = emulate_detection(w, shape, intr, det, rng)
        try:
            if fs is None:
                if z is not None:
                    fs = ukf.initial_state(z, model, w.attitude, Q0, cfg.ukf.p0_scale)
            else:
                fs = ukf.step(fs, prev_cmd, prev_att, dt, z, R, model, params, window, attitude_meas=w.attitude)
                if cfg.ukf.adaptive:
                    fs = adaptive.update_filter_Q(fs, window, n_min, cfg.ukf.q_min)
        except (ukf.FilterDivergenceError, DegenerateDepthError) as err:
            log.flag_divergence(k, str(err))
            break

        if observer is not None:
            observer(k, w, fs)
        truth = w.true_state()
        box = project_box(w, shape, intr, det.min_depth)
        in_fov = box is not None and intr.contains(*box.center)

        if cfg.controller.perfect_state:
            s, vq, rq = truth[:3], w.target_vel, w.target_pos
        elif fs is not None:
            s, vq, rq = fs.mean[:3], fs.mean[6:9], fs.mean[3:6]
        else:
            s = None
        if s is None:
            cmd, e = CameraCommand(), None
        else:
            vq_cam = w.attitude @ vq if cfg.controller.feedforward else np.zeros(3)
            cmd = control(s, ccfg, vq_cam, bearing(w.cam_pos, rq), intr)
            e = visual_error(s, ccfg.desired)

        log.record(k, w.t, truth, fs, z, cmd, e, in_fov)
        prev_att = w.attitude
        w = step_world(w, cmd, script, dt, cfg.camera.lag)
        prev_cmd = w.realized_command()

    return log


def run_paired(cfg: ScenarioConfig, seed: Optional[int] = None) -> tuple[RunLog, RunLog]:
    """Adaptive-Q and fixed-Q runs of one scenario sharing a seed (fixed Q is the initial Q)."""
    adaptive_log = run_scenario(cfg.with_overrides(ukf={"adaptive": True}), seed)
    fixed_log = run_scenario(cfg.with_overrides(ukf={"adaptive": False}), seed)
    return adaptive_log, fixed_log
