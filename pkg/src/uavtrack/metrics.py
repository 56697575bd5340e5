"""Error metrics over a run log.

Relative position error is the norm of the target position error divided by
the true camera-to-target range, in percent. Everything here is a pure
function of the log, so metrics recomputed from a CSV match the originals.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .runlog import RunLog

RANGE_EPS = 1e-6


def relative_position_error(r_q_est, r_q_true, r_qc) -> float:
    rng = float(np.linalg.norm(r_qc))
    if rng < RANGE_EPS:
        raise ValueError("camera-to-target range is degenerate")
    return 100.0 * float(np.linalg.norm(np.asarray(r_q_est) - np.asarray(r_q_true))) / rng


@dataclass
class RunMetrics:
    rows: int
    t_start: float
    t_end: float
    mean_rel_pos_err_pct: float
    max_rel_pos_err_pct: float
    position_rmse_m: float
    velocity_rmse_m_s: float
    velocity_rmse_x_m_s: float
    velocity_rmse_y_m_s: float
    velocity_rmse_z_m_s: float
    detection_fraction: float
    time_in_fov_fraction: float
    mean_q_trace: float
    final_q_trace: float
    diverged: bool = False
    rel_pos_err_pct: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    q_trace: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def scalars(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.repr}

    def to_text(self) -> str:
        lines = []
        for key, value in self.scalars().items():
            if isinstance(value, bool):
                value = int(value)
            lines.append(f"{key} = {value!r}")
        return "\n".join(lines) + "\n"


def parse_metrics_text(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        value = value.strip()
        try:
            out[key.strip()] = int(value)
        except ValueError:
            out[key.strip()] = float(value)
    return out


def _rms(x: np.ndarray, axis=None) -> float:
    return float(np.sqrt(np.mean(np.square(x), axis=axis)))


def summarize(
    log: RunLog,
    t_start: Optional[float] = None,
    t_end: Optional[float] = None,
    skip_warmup: bool = False,
    warmup_steps: int = 150,
) -> RunMetrics:
    """Aggregate the rows with ``t_start <= t <= t_end`` that carry an estimate.

    With ``skip_warmup`` the first ``warmup_steps`` rows of the log are dropped.
    """
    t = log.t
    mask = np.ones(len(log), dtype=bool)
    if skip_warmup:
        mask[:warmup_steps] = False
    if t_start is not None:
        mask &= t >= t_start - 1e-9
    if t_end is not None:
        mask &= t <= t_end + 1e-9
    mask &= np.all(np.isfinite(log.est_state), axis=1)
    if not mask.any():
        raise ValueError("no estimated rows in the requested interval")

    true, est = log.true_state[mask], log.est_state[mask]
    pos_err = est[:, 3:6] - true[:, 3:6]
    vel_err = est[:, 6:9] - true[:, 6:9]
    rel = log.column("rel_pos_err_pct")[mask]
    q_trace = log.q_diag[mask].sum(axis=1)
    return RunMetrics(
        rows=int(mask.sum()),
        t_start=float(t[mask][0]),
        t_end=float(t[mask][-1]),
        mean_rel_pos_err_pct=float(np.mean(rel)),
        max_rel_pos_err_pct=float(np.max(rel)),
        position_rmse_m=_rms(np.linalg.norm(pos_err, axis=1)),
        velocity_rmse_m_s=_rms(np.linalg.norm(vel_err, axis=1)),
        velocity_rmse_x_m_s=_rms(vel_err[:, 0]),
        velocity_rmse_y_m_s=_rms(vel_err[:, 1]),
        velocity_rmse_z_m_s=_rms(vel_err[:, 2]),
        detection_fraction=float(np.mean(log.detected[mask])),
        time_in_fov_fraction=float(np.mean(log.in_fov[mask])),
        mean_q_trace=float(np.mean(q_trace)),
        final_q_trace=float(q_trace[-1]),
        diverged=log.diverged,
        rel_pos_err_pct=rel,
        q_trace=q_trace,
    )


COMPARE_KEYS = (
    "mean_rel_pos_err_pct",
    "position_rmse_m",
    "velocity_rmse_m_s",
    "velocity_rmse_x_m_s",
    "velocity_rmse_y_m_s",
    "velocity_rmse_z_m_s",
    "time_in_fov_fraction",
    "mean_q_trace",
)


def comparison_table(pairs: dict[str, tuple[RunMetrics, RunMetrics]]) -> str:
    """Paired adaptive/fixed table; ``pairs`` maps an interval label to (adaptive, fixed) metrics."""
    lines = [f"{'interval':<12} {'metric':<24} {'adaptive':>14} {'fixed':>14} {'ratio':>8}"]
    for label, (a, f) in pairs.items():
        for key in COMPARE_KEYS:
            va, vf = getattr(a, key), getattr(f, key)
            ratio = va / vf if vf else float("nan")
            lines.append(f"{label:<12} {key:<24} {va:>14.6g} {vf:>14.6g} {ratio:>8.3f}")
    return "\n".join(lines) + "\n"
