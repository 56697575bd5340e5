"""Frames, camera intrinsics, pinhole projection and the bounding-box area law.

Conventions
-----------
* The inertial frame is Z-up.
* The camera frame has Z along the optical axis, X to the right and Y down.
* An *attitude* is the 3x3 rotation taking inertial-frame vectors into the
  camera frame, ``v_cam = R @ v_world``.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.spatial.transform import Rotation

# Camera axes expressed in a forward-left-up vehicle body frame.
BODY_TO_CAMERA = np.array(
    [
        [0.0, -1.0, 0.0],
        [0.0, 0.0, -1.0],
        [1.0, 0.0, 0.0],
    ]
)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 381.36
    fy: float = 381.36
    cu: float = 320.5
    cv: float = 240.5
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not 0 < self.cu < self.width:
            raise ValueError("principal point must lie inside the image")

    @property
    def fov_u(self) -> float:
        """Horizontal field of view in radians, derived from ``fx`` and the width."""
        return 2.0 * math.atan(self.width / (2.0 * self.fx))

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cu], [0.0, self.fy, self.cv], [0.0, 0.0, 1.0]])

    def contains(self, u, v) -> bool:
        return bool(0.0 <= u <= self.width and 0.0 <= v <= self.height)


def world_to_camera(attitude: np.ndarray, v: np.ndarray) -> np.ndarray:
    return attitude @ np.asarray(v, dtype=float)


def camera_to_world(attitude: np.ndarray, v: np.ndarray) -> np.ndarray:
    return attitude.T @ np.asarray(v, dtype=float)


def attitude_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """World-to-frame rotation for a frame with ZYX Euler angles (roll, pitch, yaw)."""
    return Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix().T


def camera_attitude(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Attitude of a forward-looking camera rigidly mounted on a vehicle body.

    The angles describe the vehicle body (x forward, y left, z up) in the
    inertial frame.
    """
    return BODY_TO_CAMERA @ attitude_from_euler(roll, pitch, yaw)


def skew(w: np.ndarray) -> np.ndarray:
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def propagate_attitude(attitude: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """Rotate the camera by a constant body rate ``omega`` (camera frame) for ``dt``.

    Exact for constant rates: ``R(t) = exp(-[omega]x t) R(0)``.
    """
    step = Rotation.from_rotvec(np.asarray(omega, dtype=float) * dt).as_matrix()
    return step.T @ attitude


def is_rotation(attitude: np.ndarray, tol: float = 1e-9) -> bool:
    attitude = np.asarray(attitude, dtype=float)
    if attitude.shape != (3, 3) or not np.all(np.isfinite(attitude)):
        return False
    orth = np.allclose(attitude @ attitude.T, np.eye(3), atol=tol, rtol=0.0)
    return bool(orth and abs(np.linalg.det(attitude) - 1.0) < tol)


def reorthonormalize(attitude: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(attitude)
    return u @ vt


def project(intr: CameraIntrinsics, x1, x2):
    """Normalized image coordinates to pixels."""
    return intr.fx * x1 + intr.cu, intr.fy * x2 + intr.cv


def unproject(intr: CameraIntrinsics, u, v):
    """Pixels to normalized image coordinates."""
    return (u - intr.cu) / intr.fx, (v - intr.cv) / intr.fy


def area_from_x3(A: float, intr: CameraIntrinsics, x3):
    """Bounding-box area in px^2 of a fronto-parallel target of area ``A`` at inverse depth ``x3``."""
    if A <= 0:
        raise ValueError("target area must be positive")
    return A * intr.fx * intr.fy * np.square(x3)


def x3_from_area(A: float, intr: CameraIntrinsics, a):
    """Invert :func:`area_from_x3` for a positive inverse depth."""
    if A <= 0:
        raise ValueError("target area must be positive")
    return np.sqrt(np.maximum(a, 0.0) / (A * intr.fx * intr.fy))


def wrap_angle(angle):
    """Wrap to [-pi, pi)."""
    return (np.asarray(angle) + np.pi) % (2.0 * np.pi) - np.pi
