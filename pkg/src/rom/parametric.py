"""
Parametric reduced-order model: one HODMD surrogate per training parameter,
glued together by interpolation across parameters at a fixed time.

Offline: train or fit the reducer, encode every training snapshot, fit a HODMD
model on each parameter's latent trajectory. Online: predict every node's
latent state at the query time, interpolate to the query parameter, decode.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import interp1d
from scipy.spatial.distance import cdist, pdist, squareform

from src.data.snapshots import SnapshotSet
from src.linalg.numerics import lstsq
from src.nn.training import TrainConfig
from src.rom.dmd import HodmdConfig, HodmdModel, LatentTrajectory, hodmd_fit, hodmd_predict, hodmd_reconstruct
from src.rom.reduction import ArchitectureConfig, Reducer, fit_reducer
from src.utils.errors import ConfigError, ExtrapolationError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

INTERPOLATORS = ("auto", "linear", "rbf")
REPORT_COLUMNS = ["t", "omega", "eps_cae", "eps_latent", "eps_cae_phodmd"]
SWEEP_COLUMNS = ["n_delay", "E_cae", "E_latent", "E_cae_phodmd", "E_cae_phodmd_in_window"]


def thin_plate(r):
    """Radial kernel ``r^2 log(1 + r)``."""
    r = np.asarray(r, dtype=np.float64)
    return r ** 2 * np.log1p(r)


def interp_linear(params, values, omega) -> np.ndarray:
    """
    Piecewise-linear interpolation along axis 0 of ``values`` at the scalar
    parameter ``omega``. Nodes are returned exactly; queries outside
    [min, max] raise ``ExtrapolationError``.
    """
    params = np.asarray(params, dtype=np.float64).ravel()
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] != params.size or params.size == 0:
        raise ShapeError(f"{params.size} parameters but {values.shape[0]} value rows")
    if np.any(np.diff(params) <= 0):
        raise ShapeError("linear interpolation needs strictly increasing parameters")
    if np.size(omega) != 1:
        raise ShapeError(f"linear interpolation takes a scalar parameter, got shape {np.shape(omega)}")
    omega = float(np.ravel(omega)[0])

    hit = np.flatnonzero(params == omega)
    if hit.size:
        return values[hit[0]].copy()
    if not params[0] <= omega <= params[-1]:
        raise ExtrapolationError(f"parameter {omega:.17g} lies outside [{params[0]:.17g}, {params[-1]:.17g}]")
    return interp1d(params, values, axis=0, kind="linear", assume_sorted=True)(omega)


class RbfInterpolant:
    """
    Thin-plate RBF interpolant ``f(w) = sum_s c_s phi(|w - w_s|)`` over
    scattered parameter points; coefficients are the minimum-norm
    least-squares solution of the collocation system.
    """

    def __init__(self, params, values):
        params = np.asarray(params, dtype=np.float64)
        self.params = params[:, None] if params.ndim == 1 else params
        values = np.asarray(values, dtype=np.float64)
        n_p = self.params.shape[0]
        if n_p < 2:
            raise ShapeError("RBF interpolation needs at least two parameter points")
        if values.shape[0] != n_p:
            raise ShapeError(f"{n_p} parameter points but {values.shape[0]} value rows")
        distances = pdist(self.params)
        if np.any(distances == 0.0):
            raise ShapeError("duplicate parameter points in RBF interpolation")

        collocation = thin_plate(squareform(distances))
        self.condition = float(np.linalg.cond(collocation))
        logger.debug(f"RBF collocation system {n_p}x{n_p}, condition estimate {self.condition:.3e}")
        self.value_shape = values.shape[1:]
        self.weights = lstsq(collocation, values.reshape(n_p, -1))

    def __call__(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=np.float64).reshape(1, -1)
        if omega.shape[1] != self.params.shape[1]:
            raise ShapeError(f"query has dimension {omega.shape[1]}, nodes have {self.params.shape[1]}")
        phi = thin_plate(cdist(omega, self.params))[0]
        return (phi @ self.weights).reshape(self.value_shape)


def interp_rbf(params, values, omega) -> np.ndarray:
    return RbfInterpolant(params, values)(omega)


def field_energy(u, cell_volume: float = 1.0) -> float:
    """``0.5 |u|^2`` times the cell volume, summed over all channels and cells."""
    u = np.asarray(u, dtype=np.float64)
    return 0.5 * float(np.sum(u * u)) * cell_volume


def fit_latent_models(latents: np.ndarray, times: np.ndarray, cfg: HodmdConfig) -> List[HodmdModel]:
    """One HODMD model per parameter from latents shaped (n_p, n_t, n_latent)."""
    models = []
    for j, trajectory in enumerate(latents):
        model = hodmd_fit(
            LatentTrajectory(times, trajectory.T), cfg.n_delay, epsilon=cfg.epsilon,
            amplitudes=cfg.amplitudes, rank_rtol=cfg.rank_rtol, pinv_rcond=cfg.pinv_rcond,
        )
        scale = float(np.linalg.norm(trajectory))
        residual = float(np.linalg.norm(hodmd_reconstruct(model, len(times)) - trajectory.T))
        logger.info(
            f"Parameter {j}: HODMD with n_delay={cfg.n_delay} kept {model.rank} modes, "
            f"training fit error {residual / scale if scale else residual:.3e}"
        )
        models.append(model)
    return models


@dataclass
class ParametricRom:
    reducer: Reducer
    parameters: np.ndarray
    times: np.ndarray
    latents: np.ndarray
    models: List[HodmdModel]
    hodmd: HodmdConfig = field(default_factory=HodmdConfig)
    interpolator: str = "auto"

    def __post_init__(self):
        self.parameters = np.asarray(self.parameters, dtype=np.float64)
        if self.parameters.ndim == 1:
            self.parameters = self.parameters[:, None]
        self.times = np.asarray(self.times, dtype=np.float64)
        self.latents = np.asarray(self.latents, dtype=np.float64)

        if self.interpolator not in INTERPOLATORS:
            raise ConfigError(f"interpolator must be one of {INTERPOLATORS}, got '{self.interpolator}'")
        if self.n_params == 0 or len(self.models) != self.n_params:
            raise ShapeError(f"{len(self.models)} HODMD models for {self.n_params} parameters")
        if self.latents.shape != (self.n_params, self.times.size, self.reducer.n_latent):
            raise ShapeError(f"latents have shape {self.latents.shape}, expected "
                             f"{(self.n_params, self.times.size, self.reducer.n_latent)}")
        first = self.models[0]
        for model in self.models:
            if (model.n_latent, model.t1, model.dt) != (first.n_latent, first.t1, first.dt):
                raise ShapeError("HODMD models disagree on n_latent, t1 or dt")
        if first.n_latent != self.reducer.n_latent:
            raise ShapeError(f"HODMD latent size {first.n_latent} differs from reducer's {self.reducer.n_latent}")

        kind = self.interpolation_kind
        if kind == "linear":
            if self.param_dim != 1:
                raise ConfigError("linear interpolation needs one parameter dimension")
            if np.any(np.diff(self.parameters[:, 0]) <= 0):
                raise ShapeError("training parameters must be strictly increasing")
        elif self.n_params < 2:
            raise ConfigError("RBF interpolation needs at least two training parameters")

    @property
    def n_params(self) -> int:
        return self.parameters.shape[0]

    @property
    def param_dim(self) -> int:
        return self.parameters.shape[1]

    @property
    def n_latent(self) -> int:
        return self.reducer.n_latent

    @property
    def interpolation_kind(self) -> str:
        if self.interpolator == "auto":
            return "linear" if self.param_dim == 1 else "rbf"
        return self.interpolator

    def in_time_window(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return (t >= self.times[0]) & (t <= self.times[-1])

    def node_latents(self, times) -> np.ndarray:
        """HODMD predictions of every training parameter: (n_p, n_times, n_latent)."""
        times = np.atleast_1d(np.asarray(times, dtype=np.float64))
        return np.stack([hodmd_predict(model, times) for model in self.models])

    def interpolate(self, values: np.ndarray, omega) -> np.ndarray:
        omega = np.atleast_1d(np.asarray(omega, dtype=np.float64))
        if omega.size != self.param_dim:
            raise ShapeError(f"parameter has dimension {omega.size}, ROM expects {self.param_dim}")
        if self.interpolation_kind == "linear":
            return interp_linear(self.parameters[:, 0], values, omega)
        return interp_rbf(self.parameters, values, omega)

    def predict_latents(self, times, omega) -> np.ndarray:
        """Interpolated latent states at ``omega``: (n_times, n_latent)."""
        nodes = self.node_latents(times)
        return self.interpolate(nodes, omega)

    def refit(self, cfg: HodmdConfig) -> "ParametricRom":
        """Same reducer and training latents, HODMD models rebuilt with ``cfg``."""
        return replace(self, models=fit_latent_models(self.latents, self.times, cfg), hodmd=cfg)


def offline(
    train: SnapshotSet,
    hodmd_cfg: HodmdConfig,
    reducer: Optional[Reducer] = None,
    arch: Optional[ArchitectureConfig] = None,
    train_cfg: Optional[TrainConfig] = None,
    validation: Optional[SnapshotSet] = None,
    interpolator: str = "auto",
) -> ParametricRom:
    """
    Build a parametric ROM from a training set on a uniform time grid. The
    reducer is trained (or fitted) here unless one is passed in.
    """
    if train.n_params == 0:
        raise ShapeError("training set holds no parameters")
    dt = train.dt
    if reducer is None:
        reducer, _ = fit_reducer(arch or ArchitectureConfig(), train_cfg or TrainConfig(), train, validation)
    if tuple(reducer.field_shape) != tuple(train.field_shape):
        raise ShapeError(f"reducer expects fields {tuple(reducer.field_shape)}, data has {train.field_shape}")

    latents = reducer.encode(train.flat_fields()).reshape(train.n_params, train.n_times, reducer.n_latent)
    logger.info(f"Encoded {train.n_snapshots} snapshots to n_latent={reducer.n_latent} (dt={dt:.6g})")
    models = fit_latent_models(latents, train.times, hodmd_cfg)
    return ParametricRom(
        reducer=reducer, parameters=train.parameters, times=train.times, latents=latents,
        models=models, hodmd=hodmd_cfg, interpolator=interpolator,
    )


def online(rom: ParametricRom, t: float, omega) -> np.ndarray:
    """Full-order field (m, n_y, n_x) at time ``t`` and parameter ``omega``."""
    return rom.reducer.decode(rom.predict_latents([t], omega)[0])


def latent_trajectory_frame(
    rom: ParametricRom,
    omega,
    times: Optional[Sequence[float]] = None,
    cell_volume: float = 1.0,
    reference_latents: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """
    Predicted latent evolution ``t, q0 .. q{n-1}, energy`` at ``omega``
    (default grid: the training times); ``reference_latents`` (n_times, n_latent)
    adds ``ref_q*`` columns.
    """
    times = rom.times if times is None else np.asarray(times, dtype=np.float64)
    latents = rom.predict_latents(times, omega)
    fields = rom.reducer.decode(latents)

    frame = pd.DataFrame({"t": times})
    for k in range(rom.n_latent):
        frame[f"q{k}"] = latents[:, k]
    frame["energy"] = [field_energy(u, cell_volume) for u in fields]
    if reference_latents is not None:
        reference_latents = np.asarray(reference_latents, dtype=np.float64)
        if reference_latents.shape != latents.shape:
            raise ShapeError(f"reference latents {reference_latents.shape} do not match {latents.shape}")
        for k in range(rom.n_latent):
            frame[f"ref_q{k}"] = reference_latents[:, k]
    return frame


def _relative(difference: np.ndarray, reference_norm: float) -> float:
    return float(np.linalg.norm(difference) / reference_norm)


def _format_omega(omega: np.ndarray):
    if omega.size == 1:
        return float(omega[0])
    return ";".join(f"{w:.17g}" for w in omega)


def _mean(values) -> float:
    values = list(values)
    if not values:
        raise NumericalError("no evaluable samples to aggregate")
    return math.fsum(values) / len(values)


@dataclass
class EvalReport:
    samples: pd.DataFrame
    skipped: List[Tuple[float, Tuple[float, ...], str]] = field(default_factory=list)

    def aggregates(self, in_window_only: bool = False) -> Dict[str, float]:
        samples = self.samples[self.samples["in_time_window"]] if in_window_only else self.samples
        return {
            "E_cae": _mean(samples["eps_cae"]),
            "E_latent": _mean(samples["eps_latent"]),
            "E_cae_phodmd": _mean(samples["eps_cae_phodmd"]),
        }

    @property
    def E_cae(self) -> float:
        return _mean(self.samples["eps_cae"])

    @property
    def E_latent(self) -> float:
        return _mean(self.samples["eps_latent"])

    @property
    def E_cae_phodmd(self) -> float:
        return _mean(self.samples["eps_cae_phodmd"])

    def frame(self) -> pd.DataFrame:
        return self.samples[REPORT_COLUMNS]


def evaluate(rom: ParametricRom, test: SnapshotSet) -> EvalReport:
    """
    Per-sample relative errors over the test grid:
    eps_cae = |u - dec(enc(u))| / |u|, eps_latent = |enc(u) - q| / |enc(u)| and
    eps_cae_phodmd = |u - dec(q)| / |u|, with q the interpolated HODMD latent.
    Samples whose reference norm is zero are skipped and listed.
    """
    if tuple(test.field_shape) != tuple(rom.reducer.field_shape):
        raise ShapeError(f"test fields {test.field_shape} do not match the ROM's {tuple(rom.reducer.field_shape)}")
    window = rom.in_time_window(test.times)
    ids = test.sample_ids()
    rows = []
    skipped = []

    for p, omega in enumerate(test.parameters):
        truth = test.fields[p]
        encoded = rom.reducer.encode(truth)
        reconstructed = rom.reducer.decode(encoded)
        predicted_latents = rom.predict_latents(test.times, omega)
        predicted = rom.reducer.decode(predicted_latents)

        for i, t in enumerate(test.times):
            u_norm = float(np.linalg.norm(truth[i]))
            q_norm = float(np.linalg.norm(encoded[i]))
            if u_norm == 0.0 or q_norm == 0.0:
                reason = "zero-norm field" if u_norm == 0.0 else "zero-norm latent"
                logger.warning(f"Skipping sample t={t:.6g}, omega={omega.tolist()}: {reason}")
                skipped.append((*ids[p * test.n_times + i], reason))
                continue
            rows.append({
                "t": float(t),
                "omega": _format_omega(omega),
                "eps_cae": _relative(truth[i] - reconstructed[i], u_norm),
                "eps_latent": _relative(encoded[i] - predicted_latents[i], q_norm),
                "eps_cae_phodmd": _relative(truth[i] - predicted[i], u_norm),
                "in_time_window": bool(window[i]),
            })

    samples = pd.DataFrame(rows, columns=REPORT_COLUMNS + ["in_time_window"])
    report = EvalReport(samples=samples, skipped=skipped)
    if len(samples):
        logger.info(f"Evaluated {len(samples)} samples ({len(skipped)} skipped): "
                    f"E_cae={report.E_cae:.6e} E_latent={report.E_latent:.6e} E_cae_phodmd={report.E_cae_phodmd:.6e}")
    return report


def sweep_n_delay(
    rom: ParametricRom, test: SnapshotSet, n_delays: Sequence[int]
) -> Tuple[pd.DataFrame, Dict[int, EvalReport]]:
    """Evaluate the ROM with its HODMD models rebuilt for every delay count."""
    rows = []
    reports = {}
    for n_delay in n_delays:
        report = evaluate(rom.refit(replace(rom.hodmd, n_delay=n_delay)), test)
        reports[n_delay] = report
        in_window = report.samples["in_time_window"]
        rows.append({
            "n_delay": n_delay,
            **report.aggregates(),
            "E_cae_phodmd_in_window": (
                report.aggregates(in_window_only=True)["E_cae_phodmd"] if in_window.any() else np.nan
            ),
        })
        logger.info(f"n_delay={n_delay}: E_cae_phodmd={rows[-1]['E_cae_phodmd']:.6e}")
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS), reports
