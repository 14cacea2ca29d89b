"""
Layer stacks for the convolutional autoencoder.

A network is described by a list of ``LayerSpec`` records (the same records
that are stored in ``ROMW`` checkpoints) and evaluated with the functional
forward kernels below on float64 tensors laid out as (batch, channel, y, x).
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from scipy.special import expit
from torch import nn

from src.utils.errors import BackwardBeforeForwardError, ShapeError

logger = logging.getLogger(__name__)

DTYPE = torch.float64

CONV_KINDS = ("conv1d", "conv2d")
CONV_TRANSPOSE_KINDS = ("conv_transpose1d", "conv_transpose2d")
LAYER_KINDS = CONV_KINDS + CONV_TRANSPOSE_KINDS + ("linear", "flatten", "unflatten")
ACTIVATIONS = ("silu", "none")


def silu(x):
    """
    NumPy reference for the activation the networks apply through ``F.silu``:
    ``x / (1 + exp(-x))``, with ``expit`` keeping the logistic factor finite for
    any |x|. Used to check layer outputs outside torch.
    """
    return x * expit(x)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_size: int = 0
    out_size: int = 0
    kernel: int = 5
    stride: int = 2
    padding: int = 2
    output_padding: int = 0
    activation: str = "none"
    shape: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ShapeError(f"unknown layer kind '{self.kind}'")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation '{self.activation}'")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    @property
    def has_params(self) -> bool:
        return self.kind not in ("flatten", "unflatten")

    @property
    def spatial_dims(self) -> int:
        return 2 if self.kind.endswith("2d") else 1

    def param_shapes(self) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        """Weight and bias shapes, in the torch conventions of the matching kernel."""
        window = (self.kernel,) * self.spatial_dims
        if self.kind in CONV_KINDS:
            return (self.out_size, self.in_size) + window, (self.out_size,)
        if self.kind in CONV_TRANSPOSE_KINDS:
            return (self.in_size, self.out_size) + window, (self.out_size,)
        if self.kind == "linear":
            return (self.out_size, self.in_size), (self.out_size,)
        return (), ()

    def output_shape(self, input_shape: Sequence[int]) -> Tuple[int, ...]:
        """Per-sample output shape (no batch axis) for a per-sample input shape."""
        input_shape = tuple(int(s) for s in input_shape)
        if self.kind == "flatten":
            return (int(np.prod(input_shape)),)
        if self.kind == "unflatten":
            if input_shape != (int(np.prod(self.shape)),):
                raise ShapeError(f"unflatten to {self.shape} cannot take input {input_shape}")
            return self.shape
        if self.kind == "linear":
            if input_shape != (self.in_size,):
                raise ShapeError(f"linear layer expects ({self.in_size},), got {input_shape}")
            return (self.out_size,)

        if len(input_shape) != 1 + self.spatial_dims or input_shape[0] != self.in_size:
            raise ShapeError(
                f"{self.kind} expects {self.in_size} channels and {self.spatial_dims} spatial axes, got {input_shape}"
            )
        spatial = input_shape[1:]
        if self.kind in CONV_KINDS:
            if any(n + 2 * self.padding < self.kernel for n in spatial):
                raise ShapeError(f"{self.kind}: spatial size {spatial} smaller than kernel {self.kernel} after padding")
            out = tuple((n + 2 * self.padding - self.kernel) // self.stride + 1 for n in spatial)
        else:
            out = tuple(
                (n - 1) * self.stride - 2 * self.padding + self.kernel + self.output_padding for n in spatial
            )
        return (self.out_size,) + out


class LayerParams(NamedTuple):
    weight: torch.Tensor
    bias: torch.Tensor


def _activate(spec: LayerSpec, y: torch.Tensor) -> torch.Tensor:
    return F.silu(y) if spec.activation == "silu" else y


def _check_input(spec: LayerSpec, x: torch.Tensor) -> None:
    if x.ndim < 2:
        raise ShapeError(f"{spec.kind} expects a batched tensor, got shape {tuple(x.shape)}")
    spec.output_shape(x.shape[1:])


def conv_forward(spec: LayerSpec, params: LayerParams, x: torch.Tensor) -> torch.Tensor:
    if spec.kind not in CONV_KINDS:
        raise ShapeError(f"conv_forward cannot run a '{spec.kind}' layer")
    _check_input(spec, x)
    conv = F.conv1d if spec.spatial_dims == 1 else F.conv2d
    y = conv(x, params.weight, params.bias, stride=spec.stride, padding=spec.padding)
    return _activate(spec, y)


def conv_transpose_forward(spec: LayerSpec, params: LayerParams, x: torch.Tensor) -> torch.Tensor:
    if spec.kind not in CONV_TRANSPOSE_KINDS:
        raise ShapeError(f"conv_transpose_forward cannot run a '{spec.kind}' layer")
    _check_input(spec, x)
    conv = F.conv_transpose1d if spec.spatial_dims == 1 else F.conv_transpose2d
    y = conv(
        x, params.weight, params.bias,
        stride=spec.stride, padding=spec.padding, output_padding=spec.output_padding,
    )
    return _activate(spec, y)


def linear_forward(spec: LayerSpec, params: LayerParams, x: torch.Tensor) -> torch.Tensor:
    if spec.kind != "linear":
        raise ShapeError(f"linear_forward cannot run a '{spec.kind}' layer")
    _check_input(spec, x)
    return _activate(spec, F.linear(x, params.weight, params.bias))


def layer_forward(spec: LayerSpec, params: Optional[LayerParams], x: torch.Tensor) -> torch.Tensor:
    if spec.kind in CONV_KINDS:
        return conv_forward(spec, params, x)
    if spec.kind in CONV_TRANSPOSE_KINDS:
        return conv_transpose_forward(spec, params, x)
    if spec.kind == "linear":
        return linear_forward(spec, params, x)
    _check_input(spec, x)
    # channel-outermost row-major order, matching the field layout
    if spec.kind == "flatten":
        return x.reshape(x.shape[0], -1)
    return x.reshape((x.shape[0],) + spec.shape)


class _ForwardRecord(NamedTuple):
    source: torch.Tensor
    leaf: torch.Tensor
    output: torch.Tensor


class _Layer(nn.Module):
    def __init__(self, spec: LayerSpec, generator: Optional[torch.Generator]):
        super().__init__()
        self.spec = spec
        weight_shape, bias_shape = spec.param_shapes()
        self.weight = nn.Parameter(torch.empty(weight_shape, dtype=DTYPE))
        self.bias = nn.Parameter(torch.empty(bias_shape, dtype=DTYPE))
        # fan_in is taken from weight dim 1 times the window, as torch does for
        # both conv and transposed conv
        fan_in = weight_shape[1] * math.prod(weight_shape[2:])
        bound = 1.0 / math.sqrt(fan_in)
        with torch.no_grad():
            self.weight.uniform_(-bound, bound, generator=generator)
            self.bias.uniform_(-bound, bound, generator=generator)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layer_forward(self.spec, LayerParams(self.weight, self.bias), x)


class _Reshape(nn.Module):
    def __init__(self, spec: LayerSpec):
        super().__init__()
        self.spec = spec

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layer_forward(self.spec, None, x)


class Network(nn.Module):
    """
    Sequential network built from ``LayerSpec`` records.

    Weights and biases start uniform on ``(-1/sqrt(fan_in), 1/sqrt(fan_in))``,
    drawn from ``generator`` so that a seed fixes the initial state.
    """

    def __init__(self, specs: Sequence[LayerSpec], generator: Optional[torch.Generator] = None):
        super().__init__()
        self.specs: List[LayerSpec] = list(specs)
        self.layers = nn.ModuleList(
            _Layer(spec, generator) if spec.has_params else _Reshape(spec) for spec in self.specs
        )
        self._record: Optional[_ForwardRecord] = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def output_shape(self, input_shape: Sequence[int]) -> Tuple[int, ...]:
        shape = tuple(input_shape)
        for spec in self.specs:
            shape = spec.output_shape(shape)
        return shape

    def layer_params(self) -> List[Optional[LayerParams]]:
        return [
            LayerParams(layer.weight, layer.bias) if isinstance(layer, _Layer) else None
            for layer in self.layers
        ]

    def record(self, x: torch.Tensor) -> torch.Tensor:
        """
        Forward pass that keeps the graph so ``backward`` can be called for ``x``.
        """
        leaf = x.detach().to(DTYPE).requires_grad_(True)
        output = self(leaf)
        self._record = _ForwardRecord(source=x, leaf=leaf, output=output)
        return output.detach()


def backward(
    net: Network, x: torch.Tensor, upstream: torch.Tensor
) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    """
    Reverse-mode gradients of ``<upstream, net(x)>`` with respect to the input
    and every parameter; requires a preceding ``net.record(x)``.
    """
    record = net._record
    if record is None or record.source is not x:
        raise BackwardBeforeForwardError("backward called without a recorded forward pass for this input")
    if upstream.shape != record.output.shape:
        raise ShapeError(f"upstream gradient shape {tuple(upstream.shape)} != output shape {tuple(record.output.shape)}")

    named = list(net.named_parameters())
    names = [name for name, _ in named]
    params = tuple(param for _, param in named)
    grads = torch.autograd.grad(record.output, (record.leaf,) + params, grad_outputs=upstream.to(DTYPE))
    net._record = None
    return grads[0], dict(zip(names, grads[1:]))
