"""Unscented Kalman filter with predict-only stepping for missing detections.

The generic pieces (:func:`predict_with`, :func:`correct_with`) take plain
callables and are what the linear-oracle tests exercise; :func:`predict`,
:func:`correct` and :func:`step` bind them to the camera/target model.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .adaptive import ResidualWindow, StepRecord
from .dynamics import STATE_DIM, CameraCommand, integrate
from .geometry import CameraIntrinsics, camera_to_world, propagate_attitude, unproject, x3_from_area
from .measurement import Measurement, innovation, predict_measurement

JITTER_START = 1e-9
JITTER_MAX = 1e-3

# Initial process noise covariance diagonal.
DEFAULT_Q0_DIAG = tuple(v * 1e-2 for v in (0.08, 0.08, 0.02, 5.0, 5.0, 5.0, 1.0, 1.0, 1.0))


class FilterDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class UkfParams:
    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0
    n: int = STATE_DIM

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not self.n + self.kappa > 0:
            raise ValueError("n + kappa must be positive")

    @property
    def lam(self) -> float:
        return self.alpha**2 * (self.n + self.kappa) - self.n

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        n, lam = self.n, self.lam
        wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
        wc = wm.copy()
        wm[0] = lam / (n + lam)
        wc[0] = wm[0] + (1.0 - self.alpha**2 + self.beta)
        return wm, wc


@dataclass(frozen=True)
class SigmaPointSet:
    points: np.ndarray  # (2n+1, n)
    wm: np.ndarray
    wc: np.ndarray

    def mean(self) -> np.ndarray:
        return unscented_mean(self.points, self.wm)


@dataclass(frozen=True)
class FilterState:
    mean: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    k: int = 0
    # Propagated sigma points and their mean from the latest predict; feed the Q window.
    prior_points: Optional[np.ndarray] = None
    prior_mean: Optional[np.ndarray] = None


@dataclass(frozen=True)
class TargetModel:
    """Known quantities the measurement function needs."""

    A: float
    intr: CameraIntrinsics


def default_Q0() -> np.ndarray:
    return np.diag(DEFAULT_Q0_DIAG)


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def cholesky_jittered(M: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, adding ``delta * I`` (1e-9 doubling to 1e-3) on failure."""
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(M.shape[0])
    delta = JITTER_START
    while delta <= JITTER_MAX:
        try:
            return np.linalg.cholesky(M + delta * eye)
        except np.linalg.LinAlgError:
            delta *= 2.0
    raise FilterDivergenceError("covariance is not positive semi-definite even after jitter")


def sigma_points(mean: np.ndarray, P: np.ndarray, params: UkfParams = UkfParams()) -> SigmaPointSet:
    n = params.n
    mean = np.asarray(mean, dtype=float)
    if mean.shape != (n,):
        raise ValueError(f"mean must have shape ({n},)")
    L = cholesky_jittered((n + params.lam) * np.asarray(P, dtype=float))
    pts = np.empty((2 * n + 1, n))
    pts[0] = mean
    pts[1 : n + 1] = mean + L.T
    pts[n + 1 :] = mean - L.T
    wm, wc = params.weights()
    return SigmaPointSet(pts, wm, wc)


def unscented_mean(Y: np.ndarray, wm: np.ndarray) -> np.ndarray:
    # Centered on the first point: with a large negative wm[0] the plain
    # weighted sum cancels catastrophically.
    return Y[0] + wm[1:] @ (Y[1:] - Y[0])


def unscented_cov(Y: np.ndarray, mean: np.ndarray, wc: np.ndarray) -> np.ndarray:
    D = Y - mean
    return symmetrize((D * wc[:, None]).T @ D)


def predict_with(
    fs: FilterState,
    f: Callable[[np.ndarray], np.ndarray],
    params: UkfParams = UkfParams(),
) -> FilterState:
    """Unscented time update through a process function acting on stacked states."""
    sp = sigma_points(fs.mean, fs.P, params)
    Y = f(sp.points)
    if not np.all(np.isfinite(Y)):
        raise FilterDivergenceError(f"non-finite propagated sigma point at step {fs.k + 1}")
    mean = unscented_mean(Y, sp.wm)
    P = unscented_cov(Y, mean, sp.wc) + fs.Q
    return replace(fs, mean=mean, P=symmetrize(P), k=fs.k + 1, prior_points=Y, prior_mean=mean)


def correct_with(
    fs: FilterState,
    z: np.ndarray,
    h: Callable[[np.ndarray], np.ndarray],
    R: np.ndarray,
    params: UkfParams = UkfParams(),
) -> tuple[FilterState, np.ndarray, np.ndarray]:
    """Unscented measurement update. Returns the new state, the innovation and the gain."""
    sp = sigma_points(fs.mean, fs.P, params)
    Z = h(sp.points)
    if not np.all(np.isfinite(Z)):
        raise FilterDivergenceError(f"non-finite predicted measurement at step {fs.k}")
    z_hat = unscented_mean(Z, sp.wm)
    dZ = Z - z_hat
    dX = sp.points - fs.mean
    S = symmetrize((dZ * sp.wc[:, None]).T @ dZ + R)
    Pxz = (dX * sp.wc[:, None]).T @ dZ

    L = cholesky_jittered(S)
    K = linalg.cho_solve((L, True), Pxz.T).T
    eps = innovation(z, z_hat)
    mean = fs.mean + K @ eps
    P = symmetrize(fs.P - K @ S @ K.T)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(P))):
        raise FilterDivergenceError(f"non-finite corrected state at step {fs.k}")
    return replace(fs, mean=mean, P=P), eps, K


def predict(
    fs: FilterState,
    cmd: CameraCommand,
    attitude: np.ndarray,
    dt: float,
    params: UkfParams = UkfParams(),
) -> FilterState:
    return predict_with(fs, lambda X: integrate(X, cmd, attitude, dt), params)


def correct(
    fs: FilterState,
    z: Measurement,
    R: np.ndarray,
    A: float,
    intr: CameraIntrinsics,
    attitude: np.ndarray,
    params: UkfParams = UkfParams(),
) -> tuple[FilterState, np.ndarray, np.ndarray]:
    return correct_with(fs, z.as_vector(), lambda X: predict_measurement(X, A, intr, attitude), R, params)


def step(
    fs: FilterState,
    cmd: CameraCommand,
    attitude: np.ndarray,
    dt: float,
    z: Optional[Measurement],
    R: np.ndarray,
    model: TargetModel,
    params: UkfParams = UkfParams(),
    window: Optional[ResidualWindow] = None,
    attitude_meas: Optional[np.ndarray] = None,
) -> FilterState:
    """Advance one sample period; correct only when a detection is present.

    ``attitude`` is the camera attitude at the start of the period. The
    measurement is evaluated at ``attitude_meas`` when the vehicle reports it,
    otherwise at the attitude reached by applying ``cmd``'s body rate for ``dt``.
    Corrected steps append a record to ``window``.
    """
    fs = predict(fs, cmd, attitude, dt, params)
    if z is None:
        return fs
    if attitude_meas is None:
        attitude_meas = propagate_attitude(attitude, cmd.angular, dt)
    fs, eps, K = correct(fs, z, R, model.A, model.intr, attitude_meas, params)
    if window is not None:
        _, wc = params.weights()
        window.append(
            StepRecord(P=fs.P, K=K, innovation=eps, points=fs.prior_points, mean=fs.prior_mean, wc=wc, k=fs.k)
        )
    return fs


def initial_state(
    z: Measurement,
    model: TargetModel,
    attitude: np.ndarray,
    Q0: np.ndarray,
    p0_scale: float = 10.0,
) -> FilterState:
    """Filter state seeded from a single detection, with zero target velocity."""
    x1, x2 = unproject(model.intr, z.u, z.v)
    x3 = float(x3_from_area(model.A, model.intr, z.a))
    if x3 <= 0:
        raise ValueError("cannot initialize from a detection with zero area")
    r_qc = np.array([x1, x2, 1.0]) / x3
    r_q = z.r_c + camera_to_world(attitude, r_qc)
    mean = np.concatenate([[x1, x2, x3], r_q, np.zeros(3)])
    Q0 = np.asarray(Q0, dtype=float)
    return FilterState(mean=mean, P=p0_scale * Q0, Q=Q0.copy())
