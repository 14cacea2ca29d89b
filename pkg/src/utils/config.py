"""
Tool configuration: a tree of dataclasses loaded from YAML (or JSON) files.

Every field has a default, so a config file only lists what it changes.
Unknown keys are rejected, and every value is checked against its field type.
"""
import json
import logging
import re
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_args, get_origin, get_type_hints

import yaml

from src.data.generators import DatasetSpec
from src.nn.training import TrainConfig
from src.rom.dmd import HodmdConfig
from src.rom.parametric import INTERPOLATORS
from src.rom.reduction import ArchitectureConfig, GridSearchSpace
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)


class ConfigLoader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-11`` (no dot) as a float, as JSON and YAML 1.2 do."""


ConfigLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


@dataclass
class PathsConfig:
    data_dir: str = "data"
    output_dir: str = "output"
    reducer_file: Optional[str] = None
    bundle_dir: Optional[str] = None

    def split_file(self, split: str) -> Path:
        return Path(self.data_dir) / f"{split}.roms"

    def reducer_path(self, reducer: str) -> Path:
        if self.reducer_file:
            return Path(self.reducer_file)
        return Path(self.output_dir) / ("reducer.romp" if reducer == "pod" else "reducer.romw")

    def bundle_path(self) -> Path:
        return Path(self.bundle_dir) if self.bundle_dir else Path(self.output_dir) / "bundle"


@dataclass
class RomConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    grid_search: GridSearchSpace = field(default_factory=GridSearchSpace)
    hodmd: HodmdConfig = field(default_factory=HodmdConfig)
    interpolator: str = "auto"
    sweep_n_delays: List[int] = field(default_factory=lambda: [2, 4, 6, 8])
    threads: Optional[int] = None
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        if self.interpolator not in INTERPOLATORS:
            raise ConfigError(f"interpolator must be one of {INTERPOLATORS}, got '{self.interpolator}'")
        if not self.sweep_n_delays or min(self.sweep_n_delays) < 1:
            raise ConfigError("sweep_n_delays needs at least one delay count >= 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")


def _check_value(value: Any, hint: Any, where: str) -> Any:
    """Return ``value`` converted to ``hint`` (ints widen to float); anything else raises ConfigError."""
    origin = get_origin(hint)
    if origin is Union:
        options = [arg for arg in get_args(hint) if arg is not type(None)]
        if value is None and len(options) < len(get_args(hint)):
            return None
        return _check_value(value, options[0], where)
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(f"'{where}' must be a list, got {value!r}")
        (item,) = get_args(hint) or (Any,)
        return [_check_value(v, item, f"{where}[{k}]") for k, v in enumerate(value)]
    if hint is Any:
        return value
    if hint is bool:
        ok = isinstance(value, bool)
    elif hint is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif hint is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, hint)
    if not ok:
        raise ConfigError(f"'{where}' must be {getattr(hint, '__name__', hint)}, got {value!r}")
    return value


def _build(cls, data: Optional[Dict[str, Any]], section: str):
    """Instantiate dataclass ``cls`` from a mapping, recursing into nested dataclass fields."""
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be a mapping, got {type(data).__name__}")

    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")

    hints = get_type_hints(cls)
    kwargs = {}
    for name, value in data.items():
        where = f"{section}.{name}" if section else name
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, where)
        else:
            kwargs[name] = _check_value(value, hints[name], where)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid values in '{section or 'config'}': {exc}") from exc


def config_from_dict(data: Optional[Dict[str, Any]]) -> RomConfig:
    return _build(RomConfig, data, "")


def load_config(path: Path) -> RomConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, "r") as fh:
            if path.suffix.lower() == ".json":
                data = json.load(fh)
            else:
                data = yaml.load(fh, Loader=ConfigLoader)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    logger.info(f"Loaded config from {path.resolve()}")
    return config_from_dict(data)


def dump_config(cfg: RomConfig, path: Path) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        yaml.safe_dump(asdict(cfg), fh, sort_keys=False, default_flow_style=None)
    return path


def apply_overrides(cfg: RomConfig, seed: Optional[int] = None, threads: Optional[int] = None) -> RomConfig:
    """Command-line flags win over file values; ``seed`` replaces every seed in the tree."""
    if seed is not None:
        cfg = replace(
            cfg,
            dataset=replace(cfg.dataset, seed=seed),
            training=replace(cfg.training, seed=seed),
        )
    if threads is not None:
        cfg = replace(cfg, threads=threads)
    return cfg
