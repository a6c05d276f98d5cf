"""Mission log: full-resolution arrays in memory, versioned CSV on disk."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

SCHEMA_VERSION = "cxsmc-log/1"


class MissionPhase(enum.IntEnum):
    LongRangeRendezvous = 0
    MidRangeApproach = 1
    TerminalDocking = 2
    Docked = 3


# (name, width) in CSV column order; vectors expand to name_x/_y/_z, matrices to name_ij.
COLUMNS = [
    ("t", 1), ("phase", 1),
    ("chaser_p", 3), ("chaser_v", 3), ("chaser_B", 9), ("chaser_omega", 3),
    ("target_p", 3), ("target_v", 3), ("target_B", 9), ("target_omega", 3),
    ("d", 3), ("w", 3),
    ("e_p", 3), ("e_v", 3), ("e_r", 3), ("e_omega", 3),
    ("s_p", 3), ("s_r", 3),
    ("force", 3), ("torque", 3),
    ("v1", 1), ("v2", 1), ("dv_cum", 1),
    ("euler", 3), ("rel_omega", 3),
    ("keep_out_margin", 1), ("cone_margin", 1), ("fov_margin", 1), ("closed_loop", 1),
]
_SHAPES = {"chaser_B": (3, 3), "target_B": (3, 3)}


def column_names() -> list:
    names = []
    for name, width in COLUMNS:
        if width == 1:
            names.append(name)
        elif width == 3:
            names.extend(f"{name}_{a}" for a in "xyz")
        else:
            names.extend(f"{name}_{i}{j}" for i in range(3) for j in range(3))
    return names


@dataclass
class MissionLog:
    """Per-sample mission record; every attribute in :data:`COLUMNS` is an array.

    ``d``/``w`` are the raw chaser-minus-target position and velocity (inertial);
    ``e_*`` are tracking errors against the active reference (chaser body frame);
    ``euler`` is the unwrapped Z-Y-X reading of ``B_t^T B_c``.
    """

    arrays: dict = field(default_factory=dict)

    def __getattr__(self, name):
        arrays = self.__dict__.get("arrays", {})
        if name in arrays:
            return arrays[name]
        raise AttributeError(name)

    def __len__(self):
        return len(self.arrays.get("t", ()))

    @classmethod
    def from_rows(cls, rows: dict) -> "MissionLog":
        arrays = {}
        for name, _ in COLUMNS:
            data = rows.get(name, [])
            arr = np.asarray(data, dtype=float)
            if name == "phase":
                arr = arr.astype(int)
            elif name == "closed_loop":
                arr = arr.astype(bool)
            arrays[name] = arr
        log = cls(arrays)
        log.check()
        return log

    def check(self):
        t = self.arrays["t"]
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise InvalidArgumentError("log times must be strictly increasing")
        ph = self.arrays["phase"]
        if len(ph) > 1 and np.any(np.diff(ph) < 0):
            raise InvalidArgumentError("log phases must be monotone")

    def select(self, mask) -> "MissionLog":
        return MissionLog({k: v[mask] for k, v in self.arrays.items()})

    def decimate(self, stride_by_phase: dict) -> "MissionLog":
        """Keep samples on a per-phase time stride, plus every phase's first and last sample."""
        t, ph = self.arrays["t"], self.arrays["phase"]
        keep = np.zeros(len(t), bool)
        for p in np.unique(ph):
            idx = np.nonzero(ph == p)[0]
            stride = stride_by_phase.get(int(p), 0.0)
            keep[idx[0]] = keep[idx[-1]] = True
            if stride > 0:
                bucket = np.floor((t[idx] - t[idx[0]]) / stride + 1e-9)
                first = np.r_[True, np.diff(bucket) > 0]
                keep[idx[first]] = True
            else:
                keep[idx] = True
        return self.select(keep)

    def to_csv(self, path):
        names = column_names()
        n = len(self)
        blocks = []
        for name, width in COLUMNS:
            blocks.append(np.asarray(self.arrays[name], float).reshape(n, width))
        table = np.hstack(blocks) if n else np.zeros((0, len(names)))
        with open(path, "w", newline="") as fh:
            fh.write(f"# {SCHEMA_VERSION}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for row in table:
                w.writerow([_fmt(x) for x in row])

    @classmethod
    def from_csv(cls, path) -> "MissionLog":
        with open(path, newline="") as fh:
            first = fh.readline().strip()
            if first != f"# {SCHEMA_VERSION}":
                raise InvalidArgumentError(f"unsupported log schema line {first!r}")
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise InvalidArgumentError("log has no header")
            missing = [c for c in column_names() if c not in header]
            if missing:
                raise InvalidArgumentError(f"log is missing columns: {', '.join(missing[:5])}")
            data = np.array([[float(x) for x in row] for row in reader if row], dtype=float)
        if data.size == 0:
            raise InvalidArgumentError("log contains no samples")
        col = {c: i for i, c in enumerate(header)}
        arrays = {}
        names = iter(column_names())
        for name, width in COLUMNS:
            idx = [col[next(names)] for _ in range(width)]
            block = data[:, idx]
            arr = block[:, 0] if width == 1 else block.reshape((-1,) + _SHAPES.get(name, (width,)))
            arrays[name] = arr
        arrays["phase"] = arrays["phase"].astype(int)
        arrays["closed_loop"] = arrays["closed_loop"].astype(bool)
        log = cls(arrays)
        log.check()
        return log


def _fmt(x: float) -> str:
    # 17 significant digits round-trip a double exactly
    return format(float(x), ".17g")
