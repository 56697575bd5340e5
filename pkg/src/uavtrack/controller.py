"""Image-based visual servoing with target-velocity feedforward.

The feature vector is ``s = (x1, x2, x3)``. The lateral camera velocity is set
by a bearing law that holds the camera at a fixed viewing angle of the
target's side; the remaining five twist components come from the pseudo-
inverse of the interaction matrix with that column removed.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Optional

import numpy as np

from .dynamics import CameraCommand
from .geometry import CameraIntrinsics, wrap_angle

SIGMA_MIN = 1e-8


@dataclass(frozen=True)
class ControlConfig:
    gain: float = 0.5
    d_exp: float = 5.0
    psi_exp: float = math.pi / 2
    s_star: Optional[tuple[float, float, float]] = None  # defaults to (0, 0, 1/d_exp)
    max_linear: float = 8.0
    max_angular: float = 2.0

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError("gain must be positive")
        if not self.d_exp > 0:
            raise ValueError("d_exp must be positive")

    @property
    def desired(self) -> np.ndarray:
        if self.s_star is None:
            return np.array([0.0, 0.0, 1.0 / self.d_exp])
        return np.asarray(self.s_star, dtype=float)


def visual_error(s, s_star) -> np.ndarray:
    return np.asarray(s, dtype=float) - np.asarray(s_star, dtype=float)


def interaction_matrix(s) -> np.ndarray:
    """3x6 map from ``[V_c - V_q; omega_c]`` to ``ds/dt``."""
    x1, x2, x3 = s
    return np.array(
        [
            [-x3, 0.0, x1 * x3, x1 * x2, -(x1**2 + 1.0), x2],
            [0.0, -x3, x2 * x3, x2**2 + 1.0, -x1 * x2, -x1],
            [0.0, 0.0, x3**2, x2 * x3, -x1 * x3, 0.0],
        ]
    )


def reduced_interaction_matrix(s) -> np.ndarray:
    """Interaction matrix without the ``v_cx`` column: (v_cy, v_cz, w_x, w_y, w_z)."""
    return interaction_matrix(s)[:, 1:]


def pinv(M: np.ndarray, sigma_min: float = SIGMA_MIN) -> tuple[np.ndarray, int]:
    """Minimum-norm pseudo-inverse with an absolute singular value cutoff; also returns the rank."""
    U, sv, Vt = np.linalg.svd(M, full_matrices=False)
    keep = sv > sigma_min
    inv = np.zeros_like(sv)
    inv[keep] = 1.0 / sv[keep]
    return (Vt.T * inv) @ U.T, int(keep.sum())


def bearing(r_c, r_q) -> float:
    """Horizontal bearing of the camera as seen from the target (inertial frame)."""
    d = np.asarray(r_c, dtype=float) - np.asarray(r_q, dtype=float)
    return math.atan2(d[1], d[0])


def lateral_velocity(psi: float, cfg: ControlConfig, intr: CameraIntrinsics) -> float:
    dpsi = float(wrap_angle(psi - cfg.psi_exp))
    return -intr.width * cfg.d_exp * dpsi / (intr.fov_u * intr.fx)


def control(
    s,
    cfg: ControlConfig,
    vq_cam,
    psi: float,
    intr: CameraIntrinsics,
) -> CameraCommand:
    """Camera twist from the current features, the target velocity (camera frame) and the bearing."""
    vq_cam = np.asarray(vq_cam, dtype=float)
    e = visual_error(s, cfg.desired)
    L_inv, rank = pinv(reduced_interaction_matrix(s))
    feedforward = np.array([vq_cam[1], vq_cam[2], 0.0, 0.0, 0.0])
    if rank < 3:
        # hold: feedforward only
        vcx, rest = vq_cam[0], feedforward
    else:
        vcx = lateral_velocity(psi, cfg, intr) + vq_cam[0]
        rest = -cfg.gain * (L_inv @ e) + feedforward
    cmd = CameraCommand(np.array([vcx, rest[0], rest[1]]), rest[2:])
    return cmd.saturated(cfg.max_linear, cfg.max_angular)
