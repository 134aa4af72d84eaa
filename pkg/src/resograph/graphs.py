"""Multi-resolution patch embedding and per-resolution channel graphs.

Each resolution m downsamples the input with a per-channel convolution of
kernel size k_m and stride k_m, then treats every channel as a graph node
whose feature vector is its downsampled series. The graph over channels is
learned: a raw score matrix, row-softmaxed into edge weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ShapeError
from .tensor import Tensor, depthwise_conv1d, softmax


@dataclass(frozen=True)
class ResolutionSpec:
    """Downsampling kernel sizes plus the shared aligned feature width."""

    kernel_sizes: tuple
    embed_dim: int

    def __post_init__(self):
        sizes = tuple(int(k) for k in self.kernel_sizes)
        object.__setattr__(self, "kernel_sizes", sizes)
        if not sizes:
            raise ConfigError("resolution spec needs at least one kernel size")
        if any(k <= 0 for k in sizes):
            raise ConfigError(f"kernel sizes must be positive, got {sizes}")
        if len(set(sizes)) != len(sizes):
            raise ConfigError(f"kernel sizes must be distinct, got {sizes}")
        if self.embed_dim <= 0:
            raise ConfigError(f"embed_dim must be positive, got {self.embed_dim}")

    @property
    def resolutions(self) -> int:
        return len(self.kernel_sizes)

    def output_lengths(self, t: int) -> tuple:
        return tuple(t // k for k in self.kernel_sizes)


@dataclass
class ChannelConvParams:
    """Weights of one resolution's patch embedding: kernels [C, k], bias [C]."""

    kernels: Tensor
    bias: Tensor


@dataclass
class ResolutionGraph:
    """One resolution's node features [..., C, T_m] and raw adjacency scores."""

    node_features: Tensor
    adjacency_raw: Tensor
    resolution_index: int


def multi_scale_embed(x: Tensor, spec: ResolutionSpec, params) -> list:
    """Embed [..., T, C] once per kernel size; returns [..., T_m, C] per m."""
    x = Tensor._coerce(x)
    if len(params) != spec.resolutions:
        raise ConfigError(
            f"{len(params)} embedding parameter blocks for {spec.resolutions} resolutions"
        )
    out = []
    for m, (k, block) in enumerate(zip(spec.kernel_sizes, params)):
        try:
            out.append(depthwise_conv1d(x, block.kernels, k, block.bias))
        except (ShapeError, ConfigError) as exc:
            raise type(exc)(f"resolution {m} (kernel {k}): {exc}") from None
    return out


def build_resolution_graph(z: Tensor, adjacency_raw: Tensor, m: int) -> ResolutionGraph:
    """Turn an embedded block [..., T_m, C] into channel-node features [..., C, T_m]."""
    z = Tensor._coerce(z)
    adjacency_raw = Tensor._coerce(adjacency_raw)
    if adjacency_raw.ndim != 2 or adjacency_raw.shape[0] != adjacency_raw.shape[1]:
        raise ShapeError(f"adjacency must be square, got {adjacency_raw.shape}")
    c = adjacency_raw.shape[0]
    if z.shape[-1] != c:
        raise ShapeError(
            f"resolution {m}: {z.shape[-1]} channels in features vs adjacency {adjacency_raw.shape}"
        )
    return ResolutionGraph(z.transpose(), adjacency_raw, m)


def adjacency_weights(adjacency_raw: Tensor) -> Tensor:
    """Row-stochastic edge weights: softmax over each node's outgoing scores."""
    return softmax(adjacency_raw, axis=-1)


def normalize_adjacency(adjacency_raw: Tensor) -> Tensor:
    """Symmetrically normalized adjacency with self-loops.

    A = row-softmax(raw); A~ = A + I; D~ = diag(row sums of A~);
    returns D~^(-1/2) A~ D~^(-1/2).
    """
    adjacency_raw = Tensor._coerce(adjacency_raw)
    if adjacency_raw.ndim != 2 or adjacency_raw.shape[0] != adjacency_raw.shape[1]:
        raise ShapeError(f"adjacency must be square, got {adjacency_raw.shape}")
    c = adjacency_raw.shape[0]
    with_loops = adjacency_weights(adjacency_raw) + Tensor(np.eye(c))
    degree = with_loops.sum(axis=-1)  # [C]
    inv_root = 1.0 / degree.sqrt()
    return with_loops * inv_root.reshape(c, 1) * inv_root.reshape(1, c)
