"""
``ROMW`` checkpoint container for one or more layer stacks.

Layout (little-endian):
    magic "ROMW", version u32, network count u32
    per network: layer count u64, then one record per layer
        kind u32, activation u32, in_size, out_size, kernel, stride,
        padding, output_padding, shape rank u64, shape[3] u64
    per network, per layer with parameters: weight then bias as f8
"""
import logging
import struct
from pathlib import Path
from typing import List, Sequence

import torch

from src.nn.layers import ACTIVATIONS, LAYER_KINDS, LayerSpec, Network
from src.utils.errors import CorruptFileError
from src.utils.helpers import BinaryReader, write_array, write_header

logger = logging.getLogger(__name__)

MAGIC = b"ROMW"
VERSION = 1
_MAX_SHAPE_RANK = 3
_LAYER_RECORD = "<II" + "Q" * (7 + _MAX_SHAPE_RANK)


def _pack_spec(spec: LayerSpec) -> bytes:
    shape = list(spec.shape) + [0] * (_MAX_SHAPE_RANK - len(spec.shape))
    return struct.pack(
        _LAYER_RECORD,
        LAYER_KINDS.index(spec.kind), ACTIVATIONS.index(spec.activation),
        spec.in_size, spec.out_size, spec.kernel, spec.stride, spec.padding, spec.output_padding,
        len(spec.shape), *shape,
    )


def _unpack_spec(reader: BinaryReader) -> LayerSpec:
    kind, activation, in_size, out_size, kernel, stride, padding, output_padding, rank, *shape = reader.unpack(
        _LAYER_RECORD
    )
    if kind >= len(LAYER_KINDS) or activation >= len(ACTIVATIONS) or rank > _MAX_SHAPE_RANK:
        raise CorruptFileError(f"{reader.path}: invalid layer record (kind={kind}, activation={activation})")
    return LayerSpec(
        kind=LAYER_KINDS[kind], in_size=in_size, out_size=out_size, kernel=kernel, stride=stride,
        padding=padding, output_padding=output_padding, activation=ACTIVATIONS[activation],
        shape=tuple(shape[:rank]),
    )


def write_networks(path: Path, networks: Sequence[Network]) -> Path:
    path = Path(path)
    with open(path, "wb") as fh:
        write_header(fh, MAGIC, VERSION)
        fh.write(struct.pack("<I", len(networks)))
        for net in networks:
            fh.write(struct.pack("<Q", len(net.specs)))
            for spec in net.specs:
                fh.write(_pack_spec(spec))
        for net in networks:
            for params in net.layer_params():
                if params is not None:
                    write_array(fh, params.weight.detach().cpu().numpy())
                    write_array(fh, params.bias.detach().cpu().numpy())
    logger.info(f"Saved {len(networks)} network(s) to {path}")
    return path


def read_networks(path: Path) -> List[Network]:
    reader = BinaryReader(path, MAGIC, VERSION)
    (count,) = reader.unpack("<I")
    spec_lists = []
    for _ in range(count):
        (n_layers,) = reader.unpack("<Q")
        spec_lists.append([_unpack_spec(reader) for _ in range(n_layers)])

    networks = []
    for specs in spec_lists:
        net = Network(specs)
        with torch.no_grad():
            for spec, params in zip(net.specs, net.layer_params()):
                if params is None:
                    continue
                weight_shape, bias_shape = spec.param_shapes()
                params.weight.copy_(torch.from_numpy(reader.array(params.weight.numel(), shape=weight_shape)))
                params.bias.copy_(torch.from_numpy(reader.array(params.bias.numel(), shape=bias_shape)))
        networks.append(net)
    reader.finish()
    return networks
