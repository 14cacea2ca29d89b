"""
Dataset generation: the closed-form viscous Burgers solution and a synthetic
family of translating Gaussian fields for exercising the 2-D code paths.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import expit

from src.data.snapshots import SnapshotSet
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

DATASET_KINDS = ("burgers1d", "synthetic2d")
SAMPLING_MODES = ("seeded-random", "uniform")
GRID_CONVENTIONS = ("cell", "node")
BURGERS_LENGTH = 2.0


@dataclass
class DatasetSpec:
    kind: str = "burgers1d"
    param_ranges: List[List[float]] = field(default_factory=lambda: [[100.0, 800.0]])
    train_param_counts: List[int] = field(default_factory=lambda: [10])
    time_range: List[float] = field(default_factory=lambda: [0.0, 2.0])
    n_train_times: int = 101
    n_val_params: int = 4
    n_val_times: int = 20
    n_test_params: int = 2
    n_test_times: int = 10
    test_time_range: Optional[List[float]] = None
    sampling: str = "seeded-random"
    # explicit parameter points for validation/test; removed from the training grid when present on it
    validation_params: Optional[List[List[float]]] = None
    test_params: Optional[List[List[float]]] = None
    seed: int = 0
    channels: int = 1
    n_y: int = 1
    n_x: int = 128
    grid: str = "cell"
    domain_size: List[float] = field(default_factory=lambda: [2.0, 1.0])
    n_gaussians: int = 3

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset kind must be one of {DATASET_KINDS}, got '{self.kind}'")
        if self.sampling not in SAMPLING_MODES:
            raise ConfigError(f"sampling must be one of {SAMPLING_MODES}")
        if self.grid not in GRID_CONVENTIONS:
            raise ConfigError(f"grid must be one of {GRID_CONVENTIONS}")
        if not self.param_ranges or len(self.param_ranges) != len(self.train_param_counts):
            raise ConfigError("param_ranges and train_param_counts need one entry per parameter dimension")
        for lo, hi in self.param_ranges:
            if not lo <= hi:
                raise ConfigError(f"empty parameter range [{lo}, {hi}]")
        if self.time_range[0] >= self.time_range[1]:
            raise ConfigError(f"empty time range {self.time_range}")
        counts = [self.n_train_times, self.n_val_params, self.n_val_times, self.n_test_params, self.n_test_times,
                  self.channels, self.n_y, self.n_x, self.n_gaussians, *self.train_param_counts]
        if min(counts) < 1:
            raise ConfigError("all dataset counts must be >= 1")
        if self.kind == "burgers1d" and (len(self.param_ranges) != 1 or self.channels != 1 or self.n_y != 1):
            raise ConfigError("burgers1d has one parameter (Re), one channel and n_y = 1")
        if self.kind == "synthetic2d" and len(self.param_ranges) > 2:
            raise ConfigError("synthetic2d supports one or two velocity parameters")

    @property
    def param_dim(self) -> int:
        return len(self.param_ranges)


def burgers_exact(x, t, re):
    """
    Closed-form viscous Burgers solution on [0, 2].

    ``u = (x / (t + 1)) / (1 + sqrt((t + 1) / t0) * exp(Re x^2 / (4 t + 4)))``
    with ``t0 = exp(Re / 8)``. The denominator is evaluated through its
    logarithm, so large ``Re x^2`` underflows to 0 instead of overflowing.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    re = np.asarray(re, dtype=np.float64)
    log_ratio = 0.5 * (np.log1p(t) - re / 8.0) + re * x ** 2 / (4.0 * t + 4.0)
    return x / (t + 1.0) * expit(-log_ratio)


def spatial_grid(n: int, length: float, convention: str = "cell") -> np.ndarray:
    if convention == "node":
        return np.linspace(0.0, length, n)
    return (np.arange(n) + 0.5) * (length / n)


def _train_parameters(spec: DatasetSpec) -> np.ndarray:
    axes = [np.linspace(lo, hi, count) for (lo, hi), count in zip(spec.param_ranges, spec.train_param_counts)]
    grid = np.array(list(itertools.product(*axes)), dtype=np.float64)

    held_out = [np.asarray(p, dtype=np.float64) for p in (spec.validation_params or []) + (spec.test_params or [])]
    if held_out:
        keep = [not any(np.allclose(point, h, rtol=0.0, atol=1e-12) for h in held_out) for point in grid]
        grid = grid[keep]
    if grid.shape[0] == 0:
        raise ConfigError("no training parameters left after removing validation/test points")
    return grid


def _sampled_parameters(
    spec: DatasetSpec, rng: np.random.Generator, count: int, explicit: Optional[List[List[float]]]
) -> np.ndarray:
    if explicit is not None:
        points = np.asarray(explicit, dtype=np.float64).reshape(-1, spec.param_dim)
    elif spec.sampling == "uniform":
        axes = [np.linspace(lo, hi, count) for lo, hi in spec.param_ranges]
        points = np.stack(axes, axis=1)
    else:
        lows, highs = np.array(spec.param_ranges, dtype=np.float64).T
        points = rng.uniform(lows, highs, size=(count, spec.param_dim))
    order = np.lexsort(points.T[::-1])
    return points[order]


def _sampled_times(spec: DatasetSpec, rng: np.random.Generator, count: int, time_range: List[float]) -> np.ndarray:
    lo, hi = time_range
    if spec.sampling == "uniform":
        return np.linspace(lo, hi, count)
    return np.sort(rng.uniform(lo, hi, size=count))


def _splits(spec: DatasetSpec) -> List[Tuple[str, np.ndarray, np.ndarray]]:
    """(split, parameters, times) for train, validation and test, in that order."""
    rng = np.random.default_rng(spec.seed)
    train = ("train", _train_parameters(spec), np.linspace(*spec.time_range, spec.n_train_times))
    val_params = _sampled_parameters(spec, rng, spec.n_val_params, spec.validation_params)
    val_times = _sampled_times(spec, rng, spec.n_val_times, spec.time_range)
    test_params = _sampled_parameters(spec, rng, spec.n_test_params, spec.test_params)
    test_times = _sampled_times(spec, rng, spec.n_test_times, spec.test_time_range or spec.time_range)
    return [train, ("validation", val_params, val_times), ("test", test_params, test_times)]


def make_burgers_dataset(spec: DatasetSpec) -> Tuple[SnapshotSet, SnapshotSet, SnapshotSet]:
    """
    Train/validation/test sets of the Burgers solution sampled at ``n_x`` points of [0, 2].
    """
    if spec.kind != "burgers1d":
        raise ConfigError(f"make_burgers_dataset needs a burgers1d spec, got '{spec.kind}'")
    x = spatial_grid(spec.n_x, BURGERS_LENGTH, spec.grid)

    sets = []
    for split, params, times in _splits(spec):
        re = params[:, 0]
        u = burgers_exact(x[None, None, :], times[None, :, None], re[:, None, None])
        fields = u.reshape(len(re), len(times), 1, 1, spec.n_x)
        sets.append(SnapshotSet(parameters=params, times=times, fields=fields, split=split))
        logger.info(f"Generated Burgers {split} set: {len(re)} Re x {len(times)} times")
    return tuple(sets)


@dataclass(frozen=True)
class _Blob:
    center: Tuple[float, float]
    width: float
    amplitude: float
    phases: Tuple[float, ...]


def _blobs(spec: DatasetSpec) -> List[_Blob]:
    rng = np.random.default_rng([spec.seed, 2])
    length_x, length_y = spec.domain_size
    blobs = []
    for _ in range(spec.n_gaussians):
        center = (rng.uniform(0.0, length_x), rng.uniform(0.0, length_y))
        width = rng.uniform(0.05, 0.15) * min(length_x, length_y)
        amplitude = rng.uniform(0.5, 1.5)
        phases = tuple(rng.uniform(0.0, 2.0 * np.pi, size=spec.channels))
        blobs.append(_Blob(center, width, amplitude, phases))
    return blobs


def _periodic_offset(coord: np.ndarray, center: np.ndarray, length: float) -> np.ndarray:
    return (coord - center + 0.5 * length) % length - 0.5 * length


def synthetic_fields(spec: DatasetSpec, params: np.ndarray, times: np.ndarray) -> np.ndarray:
    """
    Sums of periodic Gaussians translating with velocity ``omega`` (the x
    component, and the y component when d_p = 2); each channel is scaled by
    ``1 + 0.5 cos(phase + 2 pi |v| t)``. Returns (n_p, n_t, m, n_y, n_x).
    """
    length_x, length_y = spec.domain_size
    x = spatial_grid(spec.n_x, length_x)
    y = spatial_grid(spec.n_y, length_y)
    fields = np.zeros((len(params), len(times), spec.channels, spec.n_y, spec.n_x))

    for p, omega in enumerate(params):
        velocity = np.array([omega[0], omega[1] if len(omega) > 1 else 0.0])
        speed = float(np.hypot(*velocity))
        for blob in _blobs(spec):
            cx = blob.center[0] + velocity[0] * times
            cy = blob.center[1] + velocity[1] * times
            dx = _periodic_offset(x[None, :], cx[:, None], length_x)
            dy = _periodic_offset(y[None, :], cy[:, None], length_y)
            # (n_t, n_y, n_x)
            bump = np.exp(-(dy[:, :, None] ** 2 + dx[:, None, :] ** 2) / (2.0 * blob.width ** 2))
            for c, phase in enumerate(blob.phases):
                scale = blob.amplitude * (1.0 + 0.5 * np.cos(phase + 2.0 * np.pi * speed * times))
                fields[p, :, c] += scale[:, None, None] * bump
    return fields


def make_synthetic2d_dataset(spec: DatasetSpec) -> Tuple[SnapshotSet, SnapshotSet, SnapshotSet]:
    if spec.kind != "synthetic2d":
        raise ConfigError(f"make_synthetic2d_dataset needs a synthetic2d spec, got '{spec.kind}'")
    sets = []
    for split, params, times in _splits(spec):
        fields = synthetic_fields(spec, params, times)
        sets.append(SnapshotSet(parameters=params, times=times, fields=fields, split=split))
        logger.info(
            f"Generated synthetic {split} set: {len(params)} parameters x {len(times)} times, "
            f"shape {(spec.channels, spec.n_y, spec.n_x)}"
        )
    return tuple(sets)


def make_dataset(spec: DatasetSpec) -> Tuple[SnapshotSet, SnapshotSet, SnapshotSet]:
    if spec.kind == "burgers1d":
        return make_burgers_dataset(spec)
    return make_synthetic2d_dataset(spec)


def cell_volume(spec: DatasetSpec) -> float:
    """Area (2-D) or length (1-D) of one grid cell."""
    if spec.kind == "burgers1d":
        return BURGERS_LENGTH / spec.n_x
    length_x, length_y = spec.domain_size
    return (length_x / spec.n_x) * (length_y / spec.n_y)


def grid_coordinates(spec: DatasetSpec) -> Tuple[np.ndarray, np.ndarray]:
    """(y, x) coordinates of the field grid; 1-D problems get y = [0]."""
    if spec.kind == "burgers1d":
        return np.zeros(1), spatial_grid(spec.n_x, BURGERS_LENGTH, spec.grid)
    length_x, length_y = spec.domain_size
    return spatial_grid(spec.n_y, length_y), spatial_grid(spec.n_x, length_x)
