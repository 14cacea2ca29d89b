"""
ROM bundle directory: the reducer file, one ``ROMD`` file per training
parameter, the training latents as a ``ROMS`` file and ``manifest.json``.
"""
import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from src.data.snapshots import SnapshotSet, read_snapshots, write_snapshots
from src.data.snapshots import VERSION as ROMS_VERSION
from src.nn.checkpoint import VERSION as ROMW_VERSION
from src.rom.dmd import ROMD_VERSION, HodmdConfig, HodmdModel
from src.rom.parametric import ParametricRom
from src.rom.reduction import ROMP_VERSION, load_reducer
from src.utils.errors import CorruptFileError, RomIOError, VersionMismatchError
from src.utils.helpers import ensure_directory, validate_path

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
BUNDLE_VERSION = 1
LATENTS_FILE = "latents.roms"
REDUCER_FILES = {"pod": "reducer.romp", "cae": "reducer.romw"}


def _model_file(j: int) -> str:
    return f"hodmd_{j:03d}.romd"


def write_bundle(rom: ParametricRom, directory: Path) -> Path:
    directory = ensure_directory(Path(directory))
    reducer_file = REDUCER_FILES[rom.reducer.kind]
    rom.reducer.save(directory / reducer_file)

    model_files = []
    for j, model in enumerate(rom.models):
        model.save(directory / _model_file(j))
        model_files.append(_model_file(j))

    latents = SnapshotSet(
        parameters=rom.parameters, times=rom.times,
        fields=rom.latents.reshape(rom.n_params, rom.times.size, 1, 1, rom.n_latent),
    )
    write_snapshots(latents, directory / LATENTS_FILE)

    manifest = {
        "bundle_version": BUNDLE_VERSION,
        "formats": {"ROMS": ROMS_VERSION, "ROMW": ROMW_VERSION, "ROMP": ROMP_VERSION, "ROMD": ROMD_VERSION},
        "reducer": {"kind": rom.reducer.kind, "file": reducer_file, "n_latent": rom.n_latent},
        "parameters": rom.parameters.tolist(),
        "times": rom.times.tolist(),
        "t1": rom.models[0].t1,
        "dt": rom.models[0].dt,
        "interpolator": rom.interpolator,
        "hodmd": asdict(rom.hodmd),
        "models": model_files,
        "latents": LATENTS_FILE,
    }
    with open(directory / MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2)
    logger.info(f"Saved ROM bundle ({rom.n_params} parameters, {rom.reducer.kind} reducer) to {directory.resolve()}")
    return directory


def read_bundle(directory: Path) -> ParametricRom:
    directory = Path(directory)
    validate_path(directory)
    manifest_path = directory / MANIFEST
    if not manifest_path.exists():
        raise RomIOError(f"{directory}: no {MANIFEST} in bundle")
    try:
        with open(manifest_path, "r") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"{manifest_path}: {exc}") from exc

    if manifest.get("bundle_version") != BUNDLE_VERSION:
        raise VersionMismatchError(
            f"{manifest_path}: bundle version {manifest.get('bundle_version')}, expected {BUNDLE_VERSION}"
        )
    try:
        reducer = load_reducer(directory / manifest["reducer"]["file"])
        models = [HodmdModel.load(directory / name) for name in manifest["models"]]
        latents = read_snapshots(directory / manifest["latents"])
        parameters = np.asarray(manifest["parameters"], dtype=np.float64)
        times = np.asarray(manifest["times"], dtype=np.float64)
        hodmd = HodmdConfig(**manifest["hodmd"])
        interpolator = manifest["interpolator"]
    except (KeyError, TypeError) as exc:
        raise CorruptFileError(f"{manifest_path}: missing or malformed entry {exc}") from exc

    if not (np.array_equal(latents.parameters, parameters) and np.array_equal(latents.times, times)):
        raise CorruptFileError(f"{directory}: latent file disagrees with the manifest's parameters or times")
    logger.info(f"Loaded ROM bundle with {len(models)} parameters from {directory.resolve()}")
    return ParametricRom(
        reducer=reducer,
        parameters=parameters,
        times=times,
        latents=latents.fields.reshape(latents.n_params, latents.n_times, -1),
        models=models,
        hodmd=hodmd,
        interpolator=interpolator,
    )
