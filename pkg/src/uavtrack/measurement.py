"""Bounding-box measurement vector and the filter's measurement function."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DEPTH_EPS, POSITION, relative_position_from_state
from .geometry import CameraIntrinsics

MEAS_DIM = 6

# Default measurement noise covariance (px^2, px^2, px^4, m^2, m^2, m^2).
DEFAULT_R_DIAG = (20.0, 20.0, 500.0, 1e-4, 1e-4, 1e-4)


@dataclass(frozen=True)
class Measurement:
    """Box center ``(u, v)`` in px, box area ``a`` in px^2 and the inertial camera position."""

    u: float
    v: float
    a: float
    r_c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r_c", np.asarray(self.r_c, dtype=float).reshape(3))

    def as_vector(self) -> np.ndarray:
        return np.array([self.u, self.v, self.a, *self.r_c])

    @classmethod
    def from_vector(cls, z) -> "Measurement":
        z = np.asarray(z, dtype=float)
        return cls(z[0], z[1], z[2], z[3:6])


def default_R() -> np.ndarray:
    return np.diag(DEFAULT_R_DIAG)


def predict_measurement(
    x: np.ndarray,
    A: float,
    intr: CameraIntrinsics,
    attitude: np.ndarray,
    eps: float = DEPTH_EPS,
) -> np.ndarray:
    """Expected measurement for state(s) ``x``.

    The area row carries ``sign(x3)`` so that a negative inverse depth yields a
    negative predicted area and the correction pushes ``x3`` back to positive.
    The camera-position rows subtract the relative position, rotated into the
    inertial frame, from the target position.
    """
    x = np.asarray(x, dtype=float)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    r_qc_world = relative_position_from_state(x, eps) @ attitude
    z = np.empty(x.shape[:-1] + (MEAS_DIM,))
    z[..., 0] = intr.fx * x1 + intr.cu
    z[..., 1] = intr.fy * x2 + intr.cv
    z[..., 2] = A * intr.fx * intr.fy * x3**2 * np.sign(x3)
    z[..., 3:6] = x[..., POSITION] - r_qc_world
    return z


def innovation(z, z_hat) -> np.ndarray:
    if isinstance(z, Measurement):
        z = z.as_vector()
    return np.asarray(z, dtype=float) - np.asarray(z_hat, dtype=float)
