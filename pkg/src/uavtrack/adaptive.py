"""Moving-window process-noise covariance estimation.

Each corrected filter step contributes a record; the estimate averages

    P_k + K_k e_k e_k^T K_k^T - sum_i wc_i (xi_i - xbar)(xi_i - xbar)^T

over the window, where ``xi_i`` are the propagated sigma points of that step
and ``xbar`` their mean. The result is projected onto a diagonal positive
definite matrix before it replaces the filter's Q.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from functools import cached_property
from typing import TYPE_CHECKING, Callable, Iterable, Optional

import numpy as np

if TYPE_CHECKING:
    from .ukf import FilterState

DEFAULT_WINDOW = 150
Q_MIN = 1e-12


@dataclass(frozen=True)
class StepRecord:
    P: np.ndarray  # posterior covariance
    K: np.ndarray  # Kalman gain
    innovation: np.ndarray
    points: np.ndarray  # propagated sigma points
    mean: np.ndarray  # their weighted mean
    wc: np.ndarray  # covariance weights
    k: int = 0

    @cached_property
    def bracket(self) -> np.ndarray:
        d = self.K @ self.innovation
        D = self.points - self.mean
        spread = (D * self.wc[:, None]).T @ D
        B = self.P + np.outer(d, d) - spread
        return 0.5 * (B + B.T)


def uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def exponential_weights(b: float) -> Callable[[int], np.ndarray]:
    """Fading-memory weights with forgetting factor ``b`` in (0, 1); newest record last."""
    if not 0.0 < b < 1.0:
        raise ValueError("forgetting factor must lie in (0, 1)")

    def weights(n: int) -> np.ndarray:
        w = b ** np.arange(n - 1, -1, -1, dtype=float)
        return w / w.sum()

    return weights


class ResidualWindow:
    """Ring buffer of the latest ``capacity`` step records."""

    def __init__(self, capacity: int = DEFAULT_WINDOW, weights: Callable[[int], np.ndarray] = uniform_weights):
        if capacity < 1:
            raise ValueError("window capacity must be at least 1")
        self.capacity = capacity
        self._weights = weights
        self._records: deque[StepRecord] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def append(self, record: StepRecord) -> None:
        self._records.append(record)

    def extend(self, records: Iterable[StepRecord]) -> None:
        for r in records:
            self.append(r)

    def weights(self) -> np.ndarray:
        return self._weights(len(self._records))


def estimate_Q(window: ResidualWindow) -> np.ndarray:
    if len(window) == 0:
        raise ValueError("cannot estimate Q from an empty window")
    brackets = np.stack([r.bracket for r in window])
    return np.einsum("j,jab->ab", window.weights(), brackets)


def diagonalize_abs(Q: np.ndarray, q_min: float = Q_MIN) -> np.ndarray:
    """Keep the absolute diagonal, floored at ``q_min``; drop everything else."""
    d = np.abs(np.diag(np.asarray(Q, dtype=float)))
    return np.diag(np.maximum(d, q_min))


def update_filter_Q(
    fs: "FilterState",
    window: ResidualWindow,
    n_min: Optional[int] = None,
    q_min: float = Q_MIN,
) -> "FilterState":
    """Replace ``fs.Q`` by the projected window estimate once the window holds ``n_min`` records."""
    n_min = window.capacity if n_min is None else n_min
    if len(window) < max(n_min, 1):
        return fs
    return replace(fs, Q=diagonalize_abs(estimate_Q(window), q_min))
