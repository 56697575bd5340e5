"""Per-step run log and its CSV form.

One row per filter period. Absent values (no detection, filter not yet
initialized) are NaN in memory and blank cells on disk. Floats are written
with ``repr`` so a CSV round trip is exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import io
from pathlib import Path
from typing import Union

import numpy as np

SCHEMA = "uavtrack.runlog/1"
STATE_NAMES = ("x1", "x2", "x3", "xq", "yq", "zq", "vqx", "vqy", "vqz")
MEAS_NAMES = ("u", "v", "a", "xc", "yc", "zc")
CMD_NAMES = ("vx", "vy", "vz", "wx", "wy", "wz")

COLUMNS: tuple[str, ...] = (
    ("t",)
    + tuple(f"true_{n}" for n in STATE_NAMES)
    + tuple(f"est_{n}" for n in STATE_NAMES)
    + ("p_trace",)
    + tuple(f"q_{n}" for n in STATE_NAMES)
    + ("detected",)
    + tuple(f"z_{n}" for n in MEAS_NAMES)
    + tuple(f"cmd_{n}" for n in CMD_NAMES)
    + ("e_x1", "e_x2", "e_x3", "rel_pos_err_pct", "in_fov")
)
INT_COLUMNS = frozenset({"detected", "in_fov"})
COL = {name: i for i, name in enumerate(COLUMNS)}

REL_ERR_NOTE = "rel_pos_err_pct = 100*|r_q_est - r_q_true| / |r_q/c_true|"


def _block(prefix: str, names) -> slice:
    start = COL[f"{prefix}_{names[0]}"]
    return slice(start, start + len(names))


TRUE = _block("true", STATE_NAMES)
EST = _block("est", STATE_NAMES)
QDIAG = _block("q", STATE_NAMES)
MEAS = _block("z", MEAS_NAMES)
CMD = _block("cmd", CMD_NAMES)
ERR = slice(COL["e_x1"], COL["e_x3"] + 1)


@dataclass
class RunLog:
    data: np.ndarray
    dt: float
    seed: int = 0
    adaptive: bool = True
    diverged: bool = False
    message: str = ""
    meta: dict = field(default_factory=dict)

    @classmethod
    def allocate(cls, rows: int, **kwargs) -> "RunLog":
        return cls(np.full((rows, len(COLUMNS)), np.nan), **kwargs)

    def __len__(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, COL[name]]

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    @property
    def true_state(self) -> np.ndarray:
        return self.data[:, TRUE]

    @property
    def est_state(self) -> np.ndarray:
        return self.data[:, EST]

    @property
    def q_diag(self) -> np.ndarray:
        return self.data[:, QDIAG]

    @property
    def detected(self) -> np.ndarray:
        return self.column("detected") == 1.0

    @property
    def in_fov(self) -> np.ndarray:
        return self.column("in_fov") == 1.0

    def record(self, k: int, t: float, truth, fs, z, cmd, e, in_fov: bool) -> None:
        from .metrics import relative_position_error

        row = self.data[k]
        row[COL["t"]] = t
        row[TRUE] = truth
        if fs is not None:
            row[EST] = fs.mean
            row[COL["p_trace"]] = np.trace(fs.P)
            row[QDIAG] = np.diag(fs.Q)
            x3 = truth[2]
            r_qc = np.array([truth[0], truth[1], 1.0]) / x3
            row[COL["rel_pos_err_pct"]] = relative_position_error(fs.mean[3:6], truth[3:6], r_qc)
        row[COL["detected"]] = 0.0 if z is None else 1.0
        if z is not None:
            row[MEAS] = z.as_vector()
        row[CMD] = cmd.as_vector()
        if e is not None:
            row[ERR] = e
        row[COL["in_fov"]] = 1.0 if in_fov else 0.0

    def flag_divergence(self, k: int, message: str) -> None:
        """Mark the run as diverged at row ``k`` and drop the unfilled rows."""
        self.diverged = True
        self.message = message
        self.data = self.data[:k].copy()

    def header_comment(self) -> str:
        fields = [
            SCHEMA,
            f"dt={self.dt!r}",
            f"seed={self.seed}",
            f"adaptive={int(self.adaptive)}",
            f"diverged={int(self.diverged)}",
            REL_ERR_NOTE,
        ]
        return "# " + "; ".join(fields)

    def to_csv(self, path: Union[str, Path, None] = None) -> str:
        buf = io.StringIO()
        buf.write(self.header_comment() + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        int_idx = {COL[c] for c in INT_COLUMNS}
        for row in self.data:
            writer.writerow(
                "" if np.isnan(v) else (str(int(v)) if i in int_idx else repr(float(v))) for i, v in enumerate(row)
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "RunLog":
        text = Path(path).read_text()
        lines = text.splitlines()
        meta = {}
        if lines and lines[0].startswith("#"):
            for part in lines[0][1:].split(";"):
                if "=" in part and "|" not in part:
                    key, _, value = part.strip().partition("=")
                    meta[key] = value
            lines = lines[1:]
        reader = csv.reader(lines)
        header = tuple(next(reader))
        if header != COLUMNS:
            raise ValueError(f"{path}: unexpected CSV header")
        rows = [[float(c) if c != "" else np.nan for c in r] for r in reader]
        data = np.array(rows, dtype=float).reshape(-1, len(COLUMNS))
        return cls(
            data,
            dt=float(meta.get("dt", "nan")),
            seed=int(meta.get("seed", 0)),
            adaptive=bool(int(meta.get("adaptive", 1))),
            diverged=bool(int(meta.get("diverged", 0))),
        )

