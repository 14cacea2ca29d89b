from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar, Tuple

import numpy as np
import pytest

from src.data.generators import DatasetSpec
from src.data.snapshots import SnapshotSet
from src.rom.reduction import Reducer


def rotation_system(seed: int, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Real diagonalizable ``dim x dim`` matrix with eigenvalues of modulus in
    [0.9, 1] and well separated angles; returns (A, eigenvalues).
    """
    rng = np.random.default_rng(seed)
    blocks = []
    eigenvalues = []
    for j in range(dim // 2):
        r = rng.uniform(0.9, 1.0)
        theta = 0.4 + 0.8 * j + rng.uniform(-0.1, 0.1)
        blocks.append(r * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]))
        eigenvalues += [r * np.exp(1j * theta), r * np.exp(-1j * theta)]
    if dim % 2:
        r = rng.uniform(0.9, 1.0)
        blocks.append(np.array([[r]]))
        eigenvalues.append(r + 0j)

    D = np.zeros((dim, dim))
    offset = 0
    for block in blocks:
        size = block.shape[0]
        D[offset:offset + size, offset:offset + size] = block
        offset += size
    P, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return P @ D @ P.T, np.array(eigenvalues)


def linear_trajectory(A: np.ndarray, x0: np.ndarray, n_steps: int) -> np.ndarray:
    X = np.empty((A.shape[0], n_steps))
    X[:, 0] = x0
    for k in range(1, n_steps):
        X[:, k] = A @ X[:, k - 1]
    return X


def decaying_snapshots(rates, n_times: int = 41, n_x: int = 16, t_end: float = 2.0) -> SnapshotSet:
    """
    One rank-1 field ``sin(pi x) exp(-rate t)`` per parameter (parameter = rate).
    """
    rates = np.asarray(rates, dtype=np.float64)
    x = (np.arange(n_x) + 0.5) / n_x
    times = np.linspace(0.0, t_end, n_times)
    profile = np.sin(np.pi * x)
    fields = profile[None, None, :] * np.exp(-rates[:, None, None] * times[None, :, None])
    return SnapshotSet(parameters=rates[:, None], times=times, fields=fields.reshape(len(rates), n_times, 1, 1, n_x))


@dataclass
class MaskedIdentity(Reducer):
    """Latents are the field values; decoding zeroes the entries where ``keep`` is False."""

    kind: ClassVar[str] = "pod"
    keep: np.ndarray
    field_shape: Tuple[int, int, int] = (1, 1, 2)

    @property
    def n_latent(self) -> int:
        return int(np.prod(self.field_shape))

    def encode(self, u) -> np.ndarray:
        u, single = self._field_batch(u)
        q = u.reshape(u.shape[0], -1)
        return q[0] if single else q

    def decode(self, q) -> np.ndarray:
        q, single = self._latent_batch(q)
        u = (q * self.keep).reshape((q.shape[0],) + tuple(self.field_shape))
        return u[0] if single else u

    def save(self, path: Path) -> Path:
        raise NotImplementedError


@pytest.fixture
def small_burgers_spec() -> DatasetSpec:
    return DatasetSpec(
        kind="burgers1d", train_param_counts=[4], n_train_times=21, n_val_params=2, n_val_times=5,
        n_test_params=2, n_test_times=4, n_x=32, seed=7,
    )


@pytest.fixture
def decaying_set() -> SnapshotSet:
    return decaying_snapshots([0.5, 1.0, 1.5, 2.0])
