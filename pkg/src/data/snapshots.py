"""
Snapshot sets and the ``ROMS`` container.

A snapshot set is a full (parameter x time) grid of fields of shape
(m, n_y, n_x); one-dimensional problems use n_y = 1.
"""
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from src.utils.errors import ShapeError
from src.utils.helpers import BinaryReader, write_array, write_header

logger = logging.getLogger(__name__)

MAGIC = b"ROMS"
VERSION = 1
SPLITS = ("train", "validation", "test")
UNIFORM_RTOL = 1e-9


@dataclass
class SnapshotSet:
    parameters: np.ndarray
    times: np.ndarray
    fields: np.ndarray
    split: str = "train"

    def __post_init__(self):
        self.parameters = np.asarray(self.parameters, dtype=np.float64)
        if self.parameters.ndim == 1:
            self.parameters = self.parameters[:, None]
        self.times = np.asarray(self.times, dtype=np.float64)
        self.fields = np.asarray(self.fields, dtype=np.float64)

        if self.split not in SPLITS:
            raise ShapeError(f"unknown split tag '{self.split}'")
        if self.parameters.ndim != 2 or self.times.ndim != 1:
            raise ShapeError("parameters must be (n_p, d_p) and times (n_t,)")
        expected = (self.parameters.shape[0], self.times.shape[0])
        if self.fields.ndim != 5 or self.fields.shape[:2] != expected:
            raise ShapeError(f"fields must have shape {expected} + (m, n_y, n_x), got {self.fields.shape}")
        if not np.all(np.isfinite(self.fields)):
            raise ShapeError("fields contain non-finite values")

    @property
    def n_params(self) -> int:
        return self.parameters.shape[0]

    @property
    def param_dim(self) -> int:
        return self.parameters.shape[1]

    @property
    def n_times(self) -> int:
        return self.times.shape[0]

    @property
    def field_shape(self) -> Tuple[int, int, int]:
        return tuple(self.fields.shape[2:])

    @property
    def n_snapshots(self) -> int:
        return self.n_params * self.n_times

    def is_uniform(self, rtol: float = UNIFORM_RTOL) -> bool:
        if self.n_times < 2:
            return False
        steps = np.diff(self.times)
        dt = (self.times[-1] - self.times[0]) / (self.n_times - 1)
        return dt > 0 and bool(np.all(np.abs(steps - dt) <= rtol * dt))

    @property
    def dt(self) -> float:
        if not self.is_uniform():
            raise ShapeError("time grid is not uniform")
        return float((self.times[-1] - self.times[0]) / (self.n_times - 1))

    def flat_fields(self) -> np.ndarray:
        """Fields as one batch, parameter-major: (n_p * n_t, m, n_y, n_x)."""
        return self.fields.reshape((-1,) + self.field_shape)

    def sample_ids(self) -> List[Tuple[float, Tuple[float, ...]]]:
        return [(float(t), tuple(float(w) for w in omega)) for omega in self.parameters for t in self.times]


_COUNTS = struct.Struct("<6Q")


def write_snapshots(snapshots: SnapshotSet, path: Path) -> Path:
    """
    Write ``ROMS``: magic, version u32, d_p, n_p, n_t, m, n_y, n_x u64, then
    parameters, times and fields as little-endian f8 in
    (param, time, channel, y, x) order.
    """
    path = Path(path)
    m, n_y, n_x = snapshots.field_shape
    with open(path, "wb") as fh:
        write_header(fh, MAGIC, VERSION)
        fh.write(_COUNTS.pack(snapshots.param_dim, snapshots.n_params, snapshots.n_times, m, n_y, n_x))
        write_array(fh, snapshots.parameters)
        write_array(fh, snapshots.times)
        write_array(fh, snapshots.fields)
    logger.info(f"Saved {snapshots.n_snapshots} {snapshots.split} snapshots of shape {snapshots.field_shape} to {path}")
    return path


def read_snapshots(path: Path, split: str = "train") -> SnapshotSet:
    reader = BinaryReader(path, MAGIC, VERSION)
    d_p, n_p, n_t, m, n_y, n_x = reader.unpack(_COUNTS.format)
    parameters = reader.array(n_p * d_p, shape=(n_p, d_p))
    times = reader.array(n_t)
    fields = reader.array(n_p * n_t * m * n_y * n_x, shape=(n_p, n_t, m, n_y, n_x))
    reader.finish()
    logger.info(f"Loaded {n_p * n_t} snapshots of shape {(m, n_y, n_x)} from {path}")
    return SnapshotSet(parameters=parameters, times=times, fields=fields, split=split)
