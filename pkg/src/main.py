import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import torch

from src.data.generators import cell_volume, grid_coordinates, make_dataset
from src.data.loader import CsvLoader
from src.data.snapshots import SnapshotSet, read_snapshots, write_snapshots
from src.rom.bundle import read_bundle, write_bundle
from src.rom.parametric import REPORT_COLUMNS, SWEEP_COLUMNS, latent_trajectory_frame, offline, online, sweep_n_delay
from src.rom.reduction import fit_reducer, grid_search, load_reducer
from src.utils.config import RomConfig, apply_overrides, dump_config, load_config
from src.utils.errors import ConfigError, RomError
from src.utils.helpers import ensure_directory, validate_file
from src.utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_CONFIG_NAME = "rom_config.yaml"


def _load(args: argparse.Namespace) -> RomConfig:
    cfg = load_config(Path(args.config)) if args.config else RomConfig()
    cfg = apply_overrides(cfg, seed=args.seed, threads=args.threads)
    if cfg.threads is not None:
        torch.set_num_threads(cfg.threads)
    return cfg


def _read_split(cfg: RomConfig, split: str, path: Optional[str] = None) -> SnapshotSet:
    path = Path(path) if path else cfg.paths.split_file(split)
    validate_file(path)
    logger.info(f"Reading {split} snapshots from {path.resolve()}")
    return read_snapshots(path, split=split)


def _csv_target(path: Path) -> tuple:
    return CsvLoader(str(path.parent)), path.stem


def cmd_init(args: argparse.Namespace) -> None:
    out = Path(args.out or DEFAULT_CONFIG_NAME)
    dump_config(_load(args), out)
    logger.info(f"Wrote default config to {out.resolve()}")


def cmd_generate(args: argparse.Namespace) -> None:
    cfg = _load(args)
    out_dir = ensure_directory(Path(args.out or cfg.paths.data_dir))
    for snapshots in make_dataset(cfg.dataset):
        write_snapshots(snapshots, out_dir / f"{snapshots.split}.roms")


def _save_training_log(cfg: RomConfig, log: pd.DataFrame) -> None:
    CsvLoader(cfg.paths.output_dir).save_to_csv(log, "training_log")


def cmd_train(args: argparse.Namespace) -> None:
    cfg = _load(args)
    train = _read_split(cfg, "train")
    validation = _read_split(cfg, "validation") if cfg.architecture.reducer == "cae" else None
    reducer, result = fit_reducer(cfg.architecture, cfg.training, train, validation)

    out = Path(args.out) if args.out else cfg.paths.reducer_path(cfg.architecture.reducer)
    ensure_directory(out.parent)
    reducer.save(out)
    logger.info(f"Saved {reducer.kind} reducer (n_latent={reducer.n_latent}) to {out.resolve()}")
    if result is not None:
        _save_training_log(cfg, result.log)


def cmd_grid_search(args: argparse.Namespace) -> None:
    cfg = _load(args)
    if cfg.architecture.reducer != "cae":
        raise ConfigError("grid search applies to the autoencoder reducer only")
    train = _read_split(cfg, "train")
    validation = _read_split(cfg, "validation")
    model, report, result = grid_search(cfg.grid_search, train, validation, cfg.architecture, cfg.training)

    out = Path(args.out) if args.out else cfg.paths.reducer_path("cae")
    ensure_directory(out.parent)
    model.save(out)
    logger.info(f"Saved best grid-search autoencoder (n_latent={model.n_latent}) to {out.resolve()}")
    CsvLoader(cfg.paths.output_dir).save_to_csv(report, "grid_search")
    _save_training_log(cfg, result.log)


def cmd_build_rom(args: argparse.Namespace) -> None:
    cfg = _load(args)
    if args.n_delay:
        cfg = replace(cfg, hodmd=replace(cfg.hodmd, n_delay=args.n_delay[0]))
    reducer_path = Path(args.reducer) if args.reducer else cfg.paths.reducer_path(cfg.architecture.reducer)
    validate_file(reducer_path)
    reducer = load_reducer(reducer_path)
    train = _read_split(cfg, "train")

    rom = offline(train, cfg.hodmd, reducer=reducer, interpolator=cfg.interpolator)
    write_bundle(rom, Path(args.out) if args.out else cfg.paths.bundle_path())

    spectra = [model.spectrum_frame().assign(param_index=j) for j, model in enumerate(rom.models)]
    spectrum = pd.concat(spectra, ignore_index=True)
    CsvLoader(cfg.paths.output_dir).save_to_csv(
        spectrum, "hodmd_spectrum", ["param_index", "mode", "abs_lambda", "growth_rate", "frequency", "weight"]
    )


def _node_index(rom, omega: np.ndarray) -> Optional[int]:
    hits = np.flatnonzero(np.all(rom.parameters == omega, axis=1))
    return int(hits[0]) if hits.size else None


def cmd_predict(args: argparse.Namespace) -> None:
    cfg = _load(args)
    if args.time is None or not args.param:
        raise ConfigError("predict needs --time and --param")
    rom = read_bundle(Path(args.bundle) if args.bundle else cfg.paths.bundle_path())
    omega = np.asarray(args.param, dtype=np.float64)
    u = online(rom, args.time, omega)

    out = Path(args.out) if args.out else Path(cfg.paths.output_dir) / "prediction.roms"
    ensure_directory(out.parent)
    write_snapshots(SnapshotSet(parameters=omega[None, :], times=[args.time], fields=u[None, None], split="test"), out)

    if args.csv:
        y, x = grid_coordinates(cfg.dataset)
        if (y.size, x.size) != u.shape[1:]:
            y, x = np.arange(u.shape[1], dtype=np.float64), np.arange(u.shape[2], dtype=np.float64)
        channel, iy, ix = np.indices(u.shape).reshape(3, -1)
        profile = pd.DataFrame({"channel": channel, "y": y[iy], "x": x[ix], "u": u.ravel()})
        loader, name = _csv_target(Path(args.csv))
        loader.save_to_csv(profile, name)

    if args.latent_csv:
        node = _node_index(rom, omega)
        frame = latent_trajectory_frame(
            rom, omega, cell_volume=cell_volume(cfg.dataset),
            reference_latents=rom.latents[node] if node is not None else None,
        )
        loader, name = _csv_target(Path(args.latent_csv))
        loader.save_to_csv(frame, name)


def cmd_evaluate(args: argparse.Namespace) -> None:
    cfg = _load(args)
    rom = read_bundle(Path(args.bundle) if args.bundle else cfg.paths.bundle_path())
    test = _read_split(cfg, "test", args.test)
    n_delays = args.n_delay or cfg.sweep_n_delays

    summary, reports = sweep_n_delay(rom, test, n_delays)
    loader = CsvLoader(args.out or cfg.paths.output_dir)
    loader.save_to_csv(summary, "evaluation", SWEEP_COLUMNS)
    for n_delay, report in reports.items():
        loader.save_to_csv(report.frame(), f"evaluation_n_delay_{n_delay}", REPORT_COLUMNS)
        for t, omega, reason in report.skipped:
            logger.warning(f"n_delay={n_delay}: sample t={t:.17g}, omega={list(omega)} skipped ({reason})")


COMMANDS = {
    "init": cmd_init,
    "generate-data": cmd_generate,
    "train": cmd_train,
    "grid-search": cmd_grid_search,
    "build-rom": cmd_build_rom,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--seed", type=int, help="Seed for every stochastic step")
    common.add_argument("--threads", type=int, help="Cap on worker threads")
    common.add_argument("--out", help="Output file or directory")

    parser = argparse.ArgumentParser(description="Latent reduced-order modelling tool (autoencoder + parametric HODMD)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, parents=[common])
        if name in ("predict", "evaluate"):
            cmd.add_argument("--bundle", help="ROM bundle directory")
        if name == "build-rom":
            cmd.add_argument("--reducer", help="Reducer file (ROMW or ROMP)")
        if name in ("build-rom", "evaluate"):
            cmd.add_argument("--n-delay", type=int, nargs="+", help="Delay count(s) for the HODMD models")
        if name == "predict":
            cmd.add_argument("--time", type=float, help="Query time")
            cmd.add_argument("--param", type=float, nargs="+", help="Query parameter vector")
            cmd.add_argument("--csv", help="Write the predicted field as a CSV profile")
            cmd.add_argument("--latent-csv", help="Write the predicted latent trajectory as CSV")
        if name == "evaluate":
            cmd.add_argument("--test", help="Test snapshot file (ROMS)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except RomError as exc:
        logger.error(f"{args.command} failed: {exc}")
        return exc.exit_code
    except OSError as exc:
        logger.error(f"{args.command} failed: {exc}")
        return 4
    logger.info(f"{args.command} completed successfully.")
    return 0


def cli() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli()
