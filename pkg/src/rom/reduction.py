"""
Reducers: maps between full-order fields and latent vectors.

``PodModel`` is the linear reducer (mean + orthonormal basis), ``CaeModel`` the
convolutional autoencoder. Both take fields shaped (m, n_y, n_x), or batches
(N, m, n_y, n_x), and return latent vectors (n_latent,) or (N, n_latent).
"""
import itertools
import logging
import math
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import ClassVar, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch

from src.data.snapshots import SnapshotSet
from src.linalg.numerics import RANK_RTOL, thin_svd, truncate_rank
from src.nn.checkpoint import MAGIC as ROMW_MAGIC
from src.nn.checkpoint import read_networks, write_networks
from src.nn.layers import DTYPE, LayerSpec, Network
from src.nn.training import TrainConfig, TrainingResult, train_autoencoder
from src.utils.errors import BadMagicError, ConfigError, DivergenceError, NumericalError, RomIOError, ShapeError
from src.utils.helpers import BinaryReader, peek_magic, write_array, write_header

logger = logging.getLogger(__name__)

ROMP_MAGIC = b"ROMP"
ROMP_VERSION = 1
REDUCER_KINDS = ("cae", "pod")

# Depth, channel count, latent size and field shape of the reference architectures
ARCHITECTURE_PRESETS = {
    "burgers": {"n_conv": 6, "channels": 32, "n_latent": 2, "field_shape": (1, 1, 128)},
    "rbc": {"n_conv": 4, "channels": 16, "n_latent": 10, "field_shape": (3, 64, 128)},
    "khi": {"n_conv": 4, "channels": 16, "n_latent": 8, "field_shape": (4, 128, 128)},
}

FieldArray = Union[np.ndarray, SnapshotSet]


@dataclass
class ArchitectureConfig:
    reducer: str = "cae"
    preset: Optional[str] = "burgers"
    n_conv: Optional[int] = None
    channels: Optional[int] = None
    n_latent: Optional[int] = None
    hidden_width: Optional[int] = None
    kernel: int = 5
    stride: int = 2
    padding: int = 2
    latent_activation: bool = True
    output_activation: bool = True
    pod_epsilon: float = 0.0
    pod_rank: Optional[int] = None

    def __post_init__(self):
        if self.reducer not in REDUCER_KINDS:
            raise ConfigError(f"reducer must be one of {REDUCER_KINDS}, got '{self.reducer}'")
        if self.preset is not None and self.preset not in ARCHITECTURE_PRESETS:
            raise ConfigError(f"unknown architecture preset '{self.preset}'")
        if self.preset is None and None in (self.n_conv, self.channels, self.n_latent):
            raise ConfigError("without a preset, n_conv, channels and n_latent must be given")
        if not 0.0 <= self.pod_epsilon < 1.0:
            raise ConfigError(f"pod_epsilon must lie in [0, 1), got {self.pod_epsilon}")

    def resolved(self) -> dict:
        """Depth, channels and latent size after applying overrides to the preset."""
        preset = ARCHITECTURE_PRESETS.get(self.preset, {})
        return {
            "n_conv": self.n_conv if self.n_conv is not None else preset["n_conv"],
            "channels": self.channels if self.channels is not None else preset["channels"],
            "n_latent": self.n_latent if self.n_latent is not None else preset["n_latent"],
        }


@dataclass
class GridSearchSpace:
    weight_decays: List[float] = field(default_factory=lambda: [1e-8, 1e-9, 1e-10, 1e-11])
    conv_layers: List[int] = field(default_factory=lambda: [4, 5, 6])
    latent_dims: List[int] = field(default_factory=lambda: [2, 4, 6, 8, 10])

    def __post_init__(self):
        if not (self.weight_decays and self.conv_layers and self.latent_dims):
            raise ConfigError("every grid-search axis needs at least one value")
        if min(self.weight_decays) < 0 or min(self.conv_layers + self.latent_dims) < 1:
            raise ConfigError("grid weight decays must be >= 0, depths and latent sizes >= 1")

    def points(self) -> List[Tuple[float, int, int]]:
        """Grid points (weight_decay, n_conv, n_latent) in lexicographic order."""
        return list(itertools.product(self.weight_decays, self.conv_layers, self.latent_dims))


def _as_fields(snapshots: FieldArray) -> np.ndarray:
    if isinstance(snapshots, SnapshotSet):
        return snapshots.flat_fields()
    return np.asarray(snapshots, dtype=np.float64)


class Reducer(ABC):
    kind: ClassVar[str]
    field_shape: Tuple[int, int, int]

    @property
    @abstractmethod
    def n_latent(self) -> int:
        ...

    @abstractmethod
    def encode(self, u) -> np.ndarray:
        ...

    @abstractmethod
    def decode(self, q) -> np.ndarray:
        ...

    @abstractmethod
    def save(self, path: Path) -> Path:
        ...

    def reconstruct(self, u) -> np.ndarray:
        return self.decode(self.encode(u))

    def _field_batch(self, u) -> Tuple[np.ndarray, bool]:
        u = np.asarray(u, dtype=np.float64)
        single = u.shape == tuple(self.field_shape)
        if single:
            u = u[None]
        if u.ndim != 4 or u.shape[1:] != tuple(self.field_shape):
            raise ShapeError(f"expected fields of shape {tuple(self.field_shape)}, got {u.shape}")
        return u, single

    def _latent_batch(self, q) -> Tuple[np.ndarray, bool]:
        q = np.asarray(q, dtype=np.float64)
        single = q.ndim == 1
        if single:
            q = q[None]
        if q.ndim != 2 or q.shape[1] != self.n_latent:
            raise ShapeError(f"expected latent vectors of length {self.n_latent}, got {q.shape}")
        return q, single


@dataclass
class PodModel(Reducer):
    kind: ClassVar[str] = "pod"

    mean: np.ndarray
    basis: np.ndarray
    singular_values: np.ndarray
    field_shape: Tuple[int, int, int]

    @property
    def n_latent(self) -> int:
        return self.basis.shape[1]

    def encode(self, u) -> np.ndarray:
        """``V_rb^T (u - mean)``."""
        u, single = self._field_batch(u)
        q = (u.reshape(u.shape[0], -1) - self.mean) @ self.basis
        return q[0] if single else q

    def decode(self, q) -> np.ndarray:
        """``V_rb q + mean``."""
        q, single = self._latent_batch(q)
        u = (q @ self.basis.T + self.mean).reshape((q.shape[0],) + tuple(self.field_shape))
        return u[0] if single else u

    def save(self, path: Path) -> Path:
        """
        ``ROMP``: magic, version u32, m, n_y, n_x, n_rb u64, then mean,
        singular values and the row-major basis as little-endian f8.
        """
        path = Path(path)
        with open(path, "wb") as fh:
            write_header(fh, ROMP_MAGIC, ROMP_VERSION)
            fh.write(struct.pack("<4Q", *self.field_shape, self.n_latent))
            write_array(fh, self.mean)
            write_array(fh, self.singular_values)
            write_array(fh, self.basis)
        logger.info(f"Saved POD reducer (n_rb={self.n_latent}) to {path}")
        return path

    @classmethod
    def load(cls, path: Path) -> "PodModel":
        reader = BinaryReader(path, ROMP_MAGIC, ROMP_VERSION)
        m, n_y, n_x, n_rb = reader.unpack("<4Q")
        n_h = m * n_y * n_x
        mean = reader.array(n_h)
        sigma = reader.array(n_rb)
        basis = reader.array(n_h * n_rb, shape=(n_h, n_rb))
        reader.finish()
        return cls(mean=mean, basis=basis, singular_values=sigma, field_shape=(m, n_y, n_x))


def pod_fit(
    snapshots: FieldArray, epsilon: float = 0.0, n_rb: Optional[int] = None, rank_rtol: float = RANK_RTOL
) -> PodModel:
    """
    POD of the mean-centred snapshot matrix; the rank comes from the energy
    threshold ``epsilon`` unless ``n_rb`` fixes it.
    """
    fields = _as_fields(snapshots)
    if fields.ndim != 4 or fields.shape[0] == 0:
        raise ShapeError(f"POD needs a non-empty batch of (m, n_y, n_x) fields, got {fields.shape}")
    field_shape = tuple(fields.shape[1:])
    matrix = fields.reshape(fields.shape[0], -1).T
    mean = matrix.mean(axis=1)
    centered = matrix - mean[:, None]

    if not np.any(centered):
        logger.warning("Centred snapshot matrix is zero; POD falls back to one arbitrary unit mode")
        basis = np.zeros((matrix.shape[0], 1))
        basis[0, 0] = 1.0
        return PodModel(mean=mean, basis=basis, singular_values=np.zeros(1), field_shape=field_shape)

    svd = thin_svd(centered)
    available = truncate_rank(svd.sigma, 0.0, rank_rtol)
    if n_rb is not None:
        if not 1 <= n_rb <= available:
            raise NumericalError(f"requested n_rb={n_rb} but the snapshot matrix has numerical rank {available}")
        rank = n_rb
    else:
        rank = truncate_rank(svd.sigma, epsilon, rank_rtol)
    logger.info(f"POD: {matrix.shape[1]} snapshots of size {matrix.shape[0]}, rank {rank} (numerical rank {available})")
    return PodModel(
        mean=mean, basis=np.ascontiguousarray(svd.U[:, :rank]), singular_values=svd.sigma[:rank].copy(),
        field_shape=field_shape,
    )


class CaeModel(Reducer):
    """
    Convolutional autoencoder reducer; the reference field is zero, offsets are
    left to the network biases.
    """

    kind: ClassVar[str] = "cae"

    def __init__(self, encoder: Network, decoder: Network):
        self.encoder = encoder
        self.decoder = decoder
        self._n_latent = encoder.specs[-1].out_size
        if decoder.specs[0].in_size != self._n_latent:
            raise ShapeError(f"encoder emits {self._n_latent} latents, decoder takes {decoder.specs[0].in_size}")
        net_shape = decoder.output_shape((self._n_latent,))
        self.spatial_dims = len(net_shape) - 1
        self.field_shape = (net_shape[0], 1, net_shape[1]) if self.spatial_dims == 1 else tuple(net_shape)
        if encoder.output_shape(self._net_shape()) != (self._n_latent,):
            raise ShapeError("encoder does not map the decoder's output shape back to the latent space")

    @property
    def n_latent(self) -> int:
        return self._n_latent

    def _net_shape(self) -> Tuple[int, ...]:
        m, n_y, n_x = self.field_shape
        return (m, n_x) if self.spatial_dims == 1 else (m, n_y, n_x)

    def to_network_layout(self, fields) -> torch.Tensor:
        u, _ = self._field_batch(fields)
        return torch.as_tensor(u.reshape((u.shape[0],) + self._net_shape()), dtype=DTYPE)

    def encode(self, u) -> np.ndarray:
        single = np.shape(u) == tuple(self.field_shape)
        with torch.no_grad():
            q = self.encoder(self.to_network_layout(u)).numpy()
        return q[0] if single else q

    def decode(self, q) -> np.ndarray:
        q, single = self._latent_batch(q)
        with torch.no_grad():
            u = self.decoder(torch.as_tensor(q, dtype=DTYPE)).numpy()
        u = u.reshape((q.shape[0],) + tuple(self.field_shape))
        return u[0] if single else u

    def save(self, path: Path) -> Path:
        return write_networks(path, [self.encoder, self.decoder])

    @classmethod
    def load(cls, path: Path) -> "CaeModel":
        networks = read_networks(path)
        if len(networks) != 2:
            raise RomIOError(f"{path}: a CAE checkpoint holds 2 networks, found {len(networks)}")
        return cls(*networks)


def hidden_width_rule(flat_width: int, n_latent: int) -> int:
    """Intermediate linear width: floor of the geometric mean of the two ends."""
    return math.isqrt(flat_width * n_latent)


def cae_layer_specs(
    field_shape: Sequence[int],
    n_latent: int,
    n_conv: int,
    channels: int,
    hidden_width: Optional[int] = None,
    kernel: int = 5,
    stride: int = 2,
    padding: int = 2,
    latent_activation: bool = True,
    output_activation: bool = True,
) -> Tuple[List[LayerSpec], List[LayerSpec]]:
    m, n_y, n_x = field_shape
    spatial = (n_x,) if n_y == 1 else (n_y, n_x)
    suffix = f"{len(spatial)}d"
    factor = 2 ** n_conv
    if any(n % factor for n in spatial):
        raise ShapeError(f"spatial shape {spatial} is not divisible by 2^{n_conv}")

    encoder: List[LayerSpec] = []
    shape: Tuple[int, ...] = (m,) + spatial
    for _ in range(n_conv):
        spec = LayerSpec(f"conv{suffix}", in_size=shape[0], out_size=channels, kernel=kernel, stride=stride,
                         padding=padding, activation="silu")
        shape = spec.output_shape(shape)
        encoder.append(spec)
    reduced = shape
    flat = int(np.prod(reduced))
    hidden = hidden_width or hidden_width_rule(flat, n_latent)
    encoder += [
        LayerSpec("flatten"),
        LayerSpec("linear", in_size=flat, out_size=hidden, activation="silu"),
        LayerSpec("linear", in_size=hidden, out_size=n_latent, activation="silu" if latent_activation else "none"),
    ]

    decoder = [
        LayerSpec("linear", in_size=n_latent, out_size=hidden, activation="silu"),
        LayerSpec("linear", in_size=hidden, out_size=flat, activation="silu"),
        LayerSpec("unflatten", shape=reduced),
    ]
    for i in range(n_conv):
        last = i == n_conv - 1
        decoder.append(
            LayerSpec(
                f"conv_transpose{suffix}", in_size=channels, out_size=m if last else channels,
                kernel=kernel, stride=stride, padding=padding, output_padding=1,
                activation="silu" if (output_activation or not last) else "none",
            )
        )
    return encoder, decoder


def cae_build(
    field_shape: Sequence[int],
    n_latent: int,
    n_conv: int,
    channels: int,
    seed: int = 0,
    **layer_options,
) -> CaeModel:
    """
    Untrained autoencoder: ``n_conv`` stride-2 convolutions, flatten, two
    linear layers down to ``n_latent``, and the mirrored decoder.
    """
    encoder_specs, decoder_specs = cae_layer_specs(field_shape, n_latent, n_conv, channels, **layer_options)
    generator = torch.Generator().manual_seed(seed)
    model = CaeModel(Network(encoder_specs, generator), Network(decoder_specs, generator))
    if tuple(model.field_shape) != tuple(field_shape):
        raise ShapeError(f"decoder produces {model.field_shape}, expected {tuple(field_shape)}")
    return model


def _layer_options(arch: ArchitectureConfig) -> dict:
    return {
        "hidden_width": arch.hidden_width, "kernel": arch.kernel, "stride": arch.stride, "padding": arch.padding,
        "latent_activation": arch.latent_activation, "output_activation": arch.output_activation,
    }


def train_cae(
    model: CaeModel, train: FieldArray, validation: FieldArray, cfg: TrainConfig
) -> Tuple[CaeModel, TrainingResult]:
    """Train an autoencoder with ``model``'s architecture from a fresh seeded start."""
    result = train_autoencoder(
        model.encoder.specs, model.decoder.specs,
        model.to_network_layout(_as_fields(train)), model.to_network_layout(_as_fields(validation)), cfg,
    )
    return CaeModel(result.encoder, result.decoder), result


def fit_reducer(
    arch: ArchitectureConfig, cfg: TrainConfig, train: SnapshotSet, validation: Optional[SnapshotSet] = None
) -> Tuple[Reducer, Optional[TrainingResult]]:
    if arch.reducer == "pod":
        n_rb = arch.pod_rank if arch.pod_rank is not None else arch.n_latent
        return pod_fit(train, epsilon=arch.pod_epsilon, n_rb=n_rb), None

    if validation is None:
        raise ConfigError("training a CAE needs a validation set")
    sizes = arch.resolved()
    model = cae_build(train.field_shape, sizes["n_latent"], sizes["n_conv"], sizes["channels"],
                      seed=cfg.seed, **_layer_options(arch))
    return train_cae(model, train, validation, cfg)


def grid_search(
    space: GridSearchSpace,
    train: SnapshotSet,
    validation: SnapshotSet,
    arch: ArchitectureConfig,
    cfg: TrainConfig,
) -> Tuple[CaeModel, pd.DataFrame, TrainingResult]:
    """
    Train one autoencoder per grid point (seed = base seed + point index) and
    keep the one with the smallest validation error; ties keep the earlier point.
    """
    sizes = arch.resolved()
    rows = []
    best: Optional[Tuple[float, CaeModel, TrainingResult]] = None

    for index, (weight_decay, n_conv, n_latent) in enumerate(space.points()):
        point_cfg = replace(cfg, weight_decay=weight_decay, seed=cfg.seed + index)
        row = {"point": index, "weight_decay": weight_decay, "n_conv": n_conv, "n_latent": n_latent,
               "seed": point_cfg.seed, "status": "ok", "best_epoch": -1, "val_error": np.nan}
        model = cae_build(train.field_shape, n_latent, n_conv, sizes["channels"], seed=point_cfg.seed,
                          **_layer_options(arch))
        try:
            trained, result = train_cae(model, train, validation, point_cfg)
        except DivergenceError as exc:
            logger.warning(f"Grid point {index} (wd={weight_decay}, n_conv={n_conv}, n_latent={n_latent}) failed: {exc}")
            row["status"] = "failed"
            rows.append(row)
            continue

        row["best_epoch"] = result.best_epoch
        row["val_error"] = result.best_validation
        rows.append(row)
        logger.info(f"Grid point {index} (wd={weight_decay}, n_conv={n_conv}, n_latent={n_latent}): "
                    f"validation {result.best_validation:.6e}")
        if best is None or result.best_validation < best[0]:
            best = (result.best_validation, trained, result)

    report = pd.DataFrame(rows)
    if best is None:
        raise DivergenceError("every grid-search point diverged")
    return best[1], report, best[2]


def load_reducer(path: Path) -> Reducer:
    magic = peek_magic(path)
    if magic == ROMP_MAGIC:
        return PodModel.load(path)
    if magic == ROMW_MAGIC:
        return CaeModel.load(path)
    raise BadMagicError(f"{path}: not a reducer file (magic {magic!r})")
