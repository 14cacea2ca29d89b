"""
DMD and higher-order DMD surrogates for latent trajectories.

A trajectory q(t_1), ..., q(t_{n_t}) on a uniform grid is delay-embedded
(``n_delay`` stacked states), the best linear one-step map of the embedded
sequence is fitted by exact DMD, and the latent state at any time is the first
``n_latent`` rows of ``sum_l a_l xi_l lambda_l ** ((t - t_1) / dt)``.
"""
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from src.linalg.numerics import PINV_RCOND, RANK_RTOL, eig_dense, pinv, thin_svd, truncate_rank, vandermonde
from src.utils.errors import ConfigError, NumericalError, ShapeError
from src.utils.helpers import BinaryReader, write_array, write_header

logger = logging.getLogger(__name__)

ROMD_MAGIC = b"ROMD"
ROMD_VERSION = 1
AMPLITUDE_MODES = ("optimal", "pinv")
GRID_RTOL = 1e-9
INTEGER_STEP_TOL = 1e-9
IMAG_WARN_RTOL = 1e-6


@dataclass
class HodmdConfig:
    n_delay: int = 8
    epsilon: float = 0.0
    amplitudes: str = "optimal"
    rank_rtol: float = RANK_RTOL
    pinv_rcond: float = PINV_RCOND

    def __post_init__(self):
        if self.n_delay < 1:
            raise ConfigError(f"n_delay must be >= 1, got {self.n_delay}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.amplitudes not in AMPLITUDE_MODES:
            raise ConfigError(f"amplitudes must be one of {AMPLITUDE_MODES}")


@dataclass(frozen=True)
class LatentTrajectory:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[None, :]
        if times.ndim != 1 or times.size < 2:
            raise ShapeError("a trajectory needs at least two time points")
        if values.ndim != 2 or values.shape[1] != times.size:
            raise ShapeError(f"values must be (n_latent, {times.size}), got {values.shape}")
        dt = (times[-1] - times[0]) / (times.size - 1)
        if not dt > 0 or np.any(np.abs(np.diff(times) - dt) > GRID_RTOL * dt):
            raise ShapeError("trajectory times are not a uniform increasing grid")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n_latent(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.times.size

    @property
    def dt(self) -> float:
        return float((self.times[-1] - self.times[0]) / (self.n_times - 1))


@dataclass(frozen=True)
class HodmdModel:
    n_latent: int
    n_delay: int
    eigenvalues: np.ndarray
    modes: np.ndarray
    amplitudes: np.ndarray
    t1: float
    dt: float

    @property
    def rank(self) -> int:
        return self.eigenvalues.size

    def continuous_eigenvalues(self) -> np.ndarray:
        """``Log(lambda) / dt``: growth rate (real part) and angular frequency (imaginary part)."""
        with np.errstate(divide="ignore"):
            return np.log(self.eigenvalues) / self.dt

    def spectrum_frame(self) -> pd.DataFrame:
        rates = self.continuous_eigenvalues()
        return pd.DataFrame({
            "mode": np.arange(self.rank),
            "abs_lambda": np.abs(self.eigenvalues),
            "growth_rate": rates.real,
            "frequency": rates.imag,
            "weight": np.abs(self.amplitudes) * np.linalg.norm(self.modes, axis=0),
        })

    def save(self, path: Path) -> Path:
        """
        ``ROMD``: magic, version u32, n_latent, n_delay, L u64, t1, dt f8, then
        eigenvalues, modes (row-major) and amplitudes as interleaved
        real/imaginary little-endian f8.
        """
        path = Path(path)
        with open(path, "wb") as fh:
            write_header(fh, ROMD_MAGIC, ROMD_VERSION)
            fh.write(struct.pack("<3Q2d", self.n_latent, self.n_delay, self.rank, self.t1, self.dt))
            write_array(fh, self.eigenvalues, dtype="<c16")
            write_array(fh, self.modes, dtype="<c16")
            write_array(fh, self.amplitudes, dtype="<c16")
        return path

    @classmethod
    def load(cls, path: Path) -> "HodmdModel":
        reader = BinaryReader(path, ROMD_MAGIC, ROMD_VERSION)
        n_latent, n_delay, rank, t1, dt = reader.unpack("<3Q2d")
        rows = n_latent * n_delay
        eigenvalues = reader.array(rank, dtype="<c16")
        modes = reader.array(rows * rank, dtype="<c16", shape=(rows, rank))
        amplitudes = reader.array(rank, dtype="<c16")
        reader.finish()
        return cls(n_latent=n_latent, n_delay=n_delay, eigenvalues=eigenvalues, modes=modes,
                   amplitudes=amplitudes, t1=t1, dt=dt)


def dmd_fit(Q1, Q2, epsilon: float = 0.0, rank_rtol: float = RANK_RTOL) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact DMD of the pair ``Q2 ~ A Q1``; returns eigenvalues and modes.
    """
    Q1 = np.asarray(Q1, dtype=np.float64)
    Q2 = np.asarray(Q2, dtype=np.float64)
    if Q1.ndim != 2 or Q1.shape != Q2.shape or Q1.shape[1] < 1:
        raise ShapeError(f"snapshot pair must share a 2-D shape with >= 1 column, got {Q1.shape} and {Q2.shape}")
    if not np.any(Q1):
        raise NumericalError("first snapshot matrix is identically zero")

    svd = thin_svd(Q1)
    rank = truncate_rank(svd.sigma, epsilon, rank_rtol)
    if rank == 0:
        raise NumericalError("SVD truncation left no modes")
    X = svd.U[:, :rank]
    # Q2 X~ Sigma^-1, shared by the reduced operator and the exact modes
    projected = Q2 @ svd.V[:, :rank] / svd.sigma[:rank]
    reduced_operator = X.T @ projected
    eigenvalues, reduced_modes = eig_dense(reduced_operator)
    modes = projected @ reduced_modes
    return eigenvalues, modes


def amplitudes_pinv(modes, q_first, rcond: float = PINV_RCOND) -> np.ndarray:
    modes = np.asarray(modes)
    q_first = np.asarray(q_first)
    if modes.ndim != 2 or q_first.shape != (modes.shape[0],):
        raise ShapeError(f"modes {modes.shape} and first snapshot {q_first.shape} do not match")
    return pinv(modes, rcond) @ q_first


def amplitudes_optimal(modes, eigenvalues, Q1) -> np.ndarray:
    """
    Amplitudes minimising ``|Q1 - Xi diag(a) V_and|_F`` over all snapshot columns.

    Solves ``((Xi^H Xi) * conj(V V^H)) a = conj(diag(V Q1^H Xi))`` with a
    Cholesky factorisation; a ridge of 1e-12 * trace is added if the system is
    numerically singular.
    """
    modes = np.asarray(modes, dtype=np.complex128)
    Q1 = np.asarray(Q1)
    if Q1.ndim != 2 or modes.shape[0] != Q1.shape[0] or modes.shape[1] != np.size(eigenvalues):
        raise ShapeError(f"modes {modes.shape}, eigenvalues {np.shape(eigenvalues)} and data {Q1.shape} do not match")
    vander = vandermonde(eigenvalues, Q1.shape[1])
    system = (modes.conj().T @ modes) * np.conj(vander @ vander.conj().T)
    rhs = np.conj(np.einsum("ij,ji->i", vander @ Q1.conj().T, modes))

    try:
        factor = scipy.linalg.cho_factor(system)
    except np.linalg.LinAlgError:
        ridge = 1e-12 * np.trace(system).real
        logger.warning(f"Amplitude system is singular; retrying with ridge {ridge:.3e}")
        try:
            factor = scipy.linalg.cho_factor(system + ridge * np.eye(system.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"amplitude system stays singular after ridge regularisation: {exc}") from exc
    return scipy.linalg.cho_solve(factor, rhs)


def hankel_embed(traj: LatentTrajectory, n_delay: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Delay-embedded pair; column k of the first matrix stacks q(t_k) .. q(t_{k+n_delay-1}).
    Both have shape (n_latent * n_delay, n_t - n_delay).
    """
    if not 1 <= n_delay <= traj.n_times - 2:
        raise ShapeError(f"n_delay must lie in [1, {traj.n_times - 2}], got {n_delay}")
    # (n_latent, columns, n_delay) -> (n_delay, n_latent, columns), delays outermost
    windows = np.lib.stride_tricks.sliding_window_view(traj.values, n_delay, axis=1)
    hankel = np.ascontiguousarray(windows.transpose(2, 0, 1).reshape(n_delay * traj.n_latent, -1))
    return np.ascontiguousarray(hankel[:, :-1]), np.ascontiguousarray(hankel[:, 1:])


def hodmd_fit(
    traj: LatentTrajectory,
    n_delay: int,
    epsilon: float = 0.0,
    amplitudes: str = "optimal",
    rank_rtol: float = RANK_RTOL,
    pinv_rcond: float = PINV_RCOND,
) -> HodmdModel:
    if amplitudes not in AMPLITUDE_MODES:
        raise ConfigError(f"amplitudes must be one of {AMPLITUDE_MODES}")
    Q1, Q2 = hankel_embed(traj, n_delay)
    eigenvalues, modes = dmd_fit(Q1, Q2, epsilon, rank_rtol)
    if amplitudes == "optimal":
        amps = amplitudes_optimal(modes, eigenvalues, Q1)
    else:
        amps = amplitudes_pinv(modes, Q1[:, 0], pinv_rcond)

    order = np.argsort(-(np.abs(amps) * np.linalg.norm(modes, axis=0)), kind="stable")
    logger.debug(f"HODMD fit: n_delay={n_delay}, L={eigenvalues.size} of {Q1.shape[0]} embedded rows")
    return HodmdModel(
        n_latent=traj.n_latent, n_delay=n_delay, eigenvalues=eigenvalues[order],
        modes=np.ascontiguousarray(modes[:, order]), amplitudes=amps[order],
        t1=float(traj.times[0]), dt=traj.dt,
    )


def _time_powers(model: HodmdModel, times: np.ndarray) -> np.ndarray:
    """``lambda_l ** s`` for every time, shape (n_times, L); principal branch for fractional s."""
    steps = (times - model.t1) / model.dt
    powers = np.empty((times.size, model.rank), dtype=np.complex128)
    zero = model.eigenvalues == 0
    for i, s in enumerate(steps):
        k = np.rint(s)
        if abs(s - k) <= INTEGER_STEP_TOL and k >= 0:
            powers[i] = model.eigenvalues ** int(k)
        else:
            if np.any(zero):
                logger.warning(f"Dropping {int(zero.sum())} zero eigenvalue(s) at fractional step {s:.6g}")
            with np.errstate(divide="ignore", invalid="ignore"):
                powers[i] = np.where(zero, 0.0, np.exp(s * np.log(np.where(zero, 1.0, model.eigenvalues))))
    return powers


def predict_embedded(model: HodmdModel, times) -> np.ndarray:
    """Complex embedded state at the given times, shape (n_times, n_latent * n_delay)."""
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if not model.dt > 0:
        raise NumericalError(f"model time step must be positive, got {model.dt}")
    return (_time_powers(model, times) * model.amplitudes) @ model.modes.T


def hodmd_predict(model: HodmdModel, t):
    """
    Latent state at time ``t`` (scalar -> (n_latent,), array -> (n_times, n_latent)).
    """
    scalar = np.ndim(t) == 0
    state = predict_embedded(model, t)[:, :model.n_latent]
    real = state.real
    imag = np.linalg.norm(state.imag, axis=1)
    scale = np.linalg.norm(real, axis=1)
    if np.any(imag > IMAG_WARN_RTOL * np.maximum(scale, np.finfo(float).tiny)):
        logger.warning(f"HODMD prediction carries imaginary residual up to {imag.max():.3e}")
    return real[0] if scalar else real


def hodmd_reconstruct(model: HodmdModel, n_steps: int) -> np.ndarray:
    """Latent states at the first ``n_steps`` grid times, shape (n_latent, n_steps)."""
    vander = vandermonde(model.eigenvalues, n_steps)
    return (model.modes[:model.n_latent] @ (model.amplitudes[:, None] * vander)).real
