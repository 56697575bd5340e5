"""Coupled camera/target kinematics and the discrete process model.

The system state is a 9-vector ordered as::

    [x1, x2, x3, x_q, y_q, z_q, v_qx, v_qy, v_qz]

with ``(x1, x2, x3) = (X/Z, Y/Z, 1/Z)`` for the target position relative to
the camera, expressed in the camera frame, and the target position and
velocity expressed in the inertial frame. Every function accepts a single
state of shape ``(9,)`` or a stack of shape ``(..., 9)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import propagate_attitude

STATE_DIM = 9
X1, X2, X3 = 0, 1, 2
FEATURES = slice(0, 3)
POSITION = slice(3, 6)
VELOCITY = slice(6, 9)

DEPTH_EPS = 1e-6


class DegenerateDepthError(ValueError):
    """Raised when the inverse depth is too close to zero to recover a position."""


@dataclass(frozen=True)
class CameraCommand:
    """Camera twist in the camera frame: linear velocity (m/s) and body rate (rad/s)."""

    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float).reshape(3))
        object.__setattr__(self, "angular", np.asarray(self.angular, dtype=float).reshape(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    @classmethod
    def from_vector(cls, vec) -> "CameraCommand":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:3], vec[3:6])

    def saturated(self, max_linear: float, max_angular: float) -> "CameraCommand":
        return CameraCommand(
            np.clip(self.linear, -max_linear, max_linear),
            np.clip(self.angular, -max_angular, max_angular),
        )


def make_state(x1, x2, x3, position=(0.0, 0.0, 0.0), velocity=(0.0, 0.0, 0.0)) -> np.ndarray:
    return np.concatenate([[x1, x2, x3], np.asarray(position, float), np.asarray(velocity, float)])


def state_from_relative(r_qc_cam, position, velocity) -> np.ndarray:
    """Build a state from a camera-frame relative position and inertial target motion."""
    X, Y, Z = np.asarray(r_qc_cam, dtype=float)
    return make_state(X / Z, Y / Z, 1.0 / Z, position, velocity)


def state_derivative(x: np.ndarray, cmd: CameraCommand, attitude: np.ndarray) -> np.ndarray:
    """Continuous-time rate of the coupled state.

    The target velocity is rotated into the camera frame for the image-feature
    rows; position rows integrate the inertial velocity and the velocity rows
    are zero (constant-velocity target).
    """
    x = np.asarray(x, dtype=float)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    vq = x[..., VELOCITY] @ attitude.T
    vqx, vqy, vqz = vq[..., 0], vq[..., 1], vq[..., 2]
    vcx, vcy, vcz = cmd.linear
    wx, wy, wz = cmd.angular

    zeta1 = wz * x2 - wy - wy * x1**2 + wx * x1 * x2
    zeta2 = -wz * x1 + wx + wx * x2**2 - wy * x1 * x2
    eta1 = (vcz * x1 - vcx) * x3
    eta2 = (vcz * x2 - vcy) * x3

    dx = np.zeros_like(x)
    dx[..., 0] = vqx * x3 - vqz * x1 * x3 + zeta1 + eta1
    dx[..., 1] = vqy * x3 - vqz * x2 * x3 + zeta2 + eta2
    dx[..., 2] = -vqz * x3**2 + vcz * x3**2 - (wy * x1 - wx * x2) * x3
    dx[..., POSITION] = x[..., VELOCITY]
    return dx


def integrate(x: np.ndarray, cmd: CameraCommand, attitude: np.ndarray, dt: float) -> np.ndarray:
    """One RK4 step of :func:`state_derivative` over ``dt`` seconds.

    The camera attitude is rotated by the commanded body rate inside the step,
    so stage evaluations see the attitude at their own time.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    att_half = propagate_attitude(attitude, cmd.angular, 0.5 * dt)
    att_end = propagate_attitude(attitude, cmd.angular, dt)

    k1 = state_derivative(x, cmd, attitude)
    k2 = state_derivative(x + 0.5 * dt * k1, cmd, att_half)
    k3 = state_derivative(x + 0.5 * dt * k2, cmd, att_half)
    k4 = state_derivative(x + dt * k3, cmd, att_end)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def relative_position_from_state(x: np.ndarray, eps: float = DEPTH_EPS) -> np.ndarray:
    """Camera-frame relative position ``(x1/x3, x2/x3, 1/x3)``."""
    x = np.asarray(x, dtype=float)
    x3 = x[..., 2]
    if np.any(np.abs(x3) < eps):
        raise DegenerateDepthError(f"|x3| below {eps}: depth is undefined")
    return np.stack([x[..., 0] / x3, x[..., 1] / x3, 1.0 / x3], axis=-1)
