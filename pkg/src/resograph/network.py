"""The full classifier: per-resolution graph encoder over fused temporal views.

Per resolution: patch-embed, build the channel graph, run difference
attention and frequency convolution in parallel, sum the two views, then L
rounds of {edge-biased local attention over nodes, normalized graph
convolution}. Resolutions are aligned to a common width, averaged, flattened
and classified with a linear head + softmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from .exceptions import ConfigError, NumericError, ShapeError
from .graphs import (ChannelConvParams, ResolutionSpec, adjacency_weights,
                     build_resolution_graph, multi_scale_embed, normalize_adjacency)
from .temporal import (DifferenceAttentionParams, FrequencyKernel,
                       difference_attention, frequency_convolution)
from .tensor import Tensor, softmax
from .fourier import num_bins


@dataclass(frozen=True)
class ArchitectureConfig:
    """Width/depth knobs of the network, independent of any dataset."""

    kernel_sizes: tuple = (2, 4, 8)
    embed_dim: int = 64       # shared width after cross-resolution alignment
    heads: int = 4
    head_dim: int = 16
    attn_dim: int = 32        # projection width of the node-attention similarity
    layers: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))
        for name in ("embed_dim", "heads", "head_dim", "attn_dim", "layers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

    def resolution_spec(self) -> ResolutionSpec:
        return ResolutionSpec(self.kernel_sizes, self.embed_dim)


@dataclass
class GraphLayerParams:
    """One encoder round: similarity projection [T_m, g], conv weight [T_m, T_m]."""

    attn_proj: Tensor
    conv_weight: Tensor


@dataclass
class ResolutionBlockParams:
    """Per-resolution encoder stack plus the alignment projection [T_m, D]."""

    layers: list
    align: Tensor


@dataclass
class ClassifierParams:
    """Final linear head: weight [C*D, K], bias [K]."""

    weight: Tensor
    bias: Tensor


@dataclass
class ClassProbabilities:
    """Softmax output along with the raw logits it came from."""

    probabilities: Tensor
    logits: Tensor


@dataclass
class NetworkParams:
    """Every learnable tensor of the model, grouped per resolution."""

    arch: ArchitectureConfig
    channels: int
    classes: int
    input_length: int
    embed: list = field(default_factory=list)        # ChannelConvParams per m
    adjacency: list = field(default_factory=list)    # raw [C, C] per m
    attention: list = field(default_factory=list)    # DifferenceAttentionParams per m
    freq: list = field(default_factory=list)         # FrequencyKernel per m
    graph: list = field(default_factory=list)        # ResolutionBlockParams per m
    classifier: ClassifierParams = None

    def named_parameters(self) -> list:
        """Stable (name, tensor) pairs; the order defines checkpoint layout."""
        out = []
        for m in range(len(self.embed)):
            out.append((f"embed.{m}.kernels", self.embed[m].kernels))
            out.append((f"embed.{m}.bias", self.embed[m].bias))
            out.append((f"adjacency.{m}", self.adjacency[m]))
            att = self.attention[m]
            for h in range(att.heads):
                out.append((f"attention.{m}.{h}.query", att.queries[h]))
                out.append((f"attention.{m}.{h}.key", att.keys[h]))
                out.append((f"attention.{m}.{h}.value", att.values[h]))
            out.append((f"attention.{m}.out_weight", att.out_weight))
            out.append((f"attention.{m}.out_bias", att.out_bias))
            out.append((f"freq.{m}.real", self.freq[m].real))
            out.append((f"freq.{m}.imag", self.freq[m].imag))
            block = self.graph[m]
            for i, layer in enumerate(block.layers):
                out.append((f"graph.{m}.{i}.attn_proj", layer.attn_proj))
                out.append((f"graph.{m}.{i}.conv_weight", layer.conv_weight))
            out.append((f"graph.{m}.align", block.align))
        out.append(("classifier.weight", self.classifier.weight))
        out.append(("classifier.bias", self.classifier.bias))
        return out

    def parameters(self) -> list:
        return [t for _, t in self.named_parameters()]


def _uniform(rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(arch: ArchitectureConfig, channels: int, classes: int,
                input_length: int, rng: np.random.Generator) -> NetworkParams:
    """Fresh parameters; every draw comes from `rng`, so a seed fixes them all.

    Weights are uniform +-1/sqrt(fan_in), biases zero, adjacency scores zero
    (a uniform fully-connected graph after the row softmax), and frequency
    kernels near-identity: 1 + small Gaussian real part, small Gaussian imag.
    """
    if channels < 1 or classes < 2:
        raise ConfigError(f"need channels >= 1 and classes >= 2, got {channels}/{classes}")
    lengths = arch.resolution_spec().output_lengths(input_length)
    if any(t == 0 for t in lengths):
        raise ConfigError(
            f"input length {input_length} too short for kernels {arch.kernel_sizes}"
        )
    params = NetworkParams(arch, channels, classes, input_length)
    c, d, h = channels, arch.head_dim, arch.heads
    for k, t_m in zip(arch.kernel_sizes, lengths):
        params.embed.append(ChannelConvParams(
            kernels=Tensor(_uniform(rng, k, (c, k)), requires_grad=True),
            bias=Tensor(np.zeros(c), requires_grad=True),
        ))
        params.adjacency.append(Tensor(np.zeros((c, c)), requires_grad=True))
        params.attention.append(DifferenceAttentionParams(
            queries=[Tensor(_uniform(rng, c, (c, d)), requires_grad=True) for _ in range(h)],
            keys=[Tensor(_uniform(rng, c, (c, d)), requires_grad=True) for _ in range(h)],
            values=[Tensor(_uniform(rng, c, (c, d)), requires_grad=True) for _ in range(h)],
            out_weight=Tensor(_uniform(rng, h * d, (h * d, c)), requires_grad=True),
            out_bias=Tensor(np.zeros(c), requires_grad=True),
        ))
        s = num_bins(t_m)
        params.freq.append(FrequencyKernel(
            real=Tensor(1.0 + rng.normal(0.0, 0.01, size=(c, s)), requires_grad=True),
            imag=Tensor(rng.normal(0.0, 0.01, size=(c, s)) * _zero_dc(t_m, s),
                        requires_grad=True),
        ))
        params.graph.append(ResolutionBlockParams(
            layers=[GraphLayerParams(
                attn_proj=Tensor(_uniform(rng, t_m, (t_m, arch.attn_dim)), requires_grad=True),
                conv_weight=Tensor(_uniform(rng, t_m, (t_m, t_m)), requires_grad=True),
            ) for _ in range(arch.layers)],
            align=Tensor(_uniform(rng, t_m, (t_m, arch.embed_dim)), requires_grad=True),
        ))
    params.classifier = ClassifierParams(
        weight=Tensor(_uniform(rng, c * arch.embed_dim, (c * arch.embed_dim, classes)),
                      requires_grad=True),
        bias=Tensor(np.zeros(classes), requires_grad=True),
    )
    return params


def _zero_dc(length: int, s: int) -> np.ndarray:
    mask = np.ones(s)
    mask[0] = 0.0
    if length % 2 == 0:
        mask[-1] = 0.0
    return mask


def fuse_views(x_da: Tensor, x_fc: Tensor) -> Tensor:
    """Element-wise sum of the two temporal views."""
    x_da = Tensor._coerce(x_da)
    x_fc = Tensor._coerce(x_fc)
    if x_da.shape != x_fc.shape:
        raise ShapeError(f"fuse: views disagree, {x_da.shape} vs {x_fc.shape}")
    return x_da + x_fc


def local_graph_attention(x: Tensor, edge_weights: Tensor, proj: Tensor,
                          context: str = "") -> Tensor:
    """Attention over channel nodes, biased by the learned edge weights.

    x: [..., C, T]. Similarity is the scaled dot product of projected node
    features; each logit is multiplied by its edge weight before the row
    softmax, so the learned graph gates which neighbours a node listens to.
    """
    x = Tensor._coerce(x)
    scale = 1.0 / sqrt(proj.shape[-1])
    p = x @ proj                                  # [..., C, g]
    logits = (p @ p.transpose()) * scale * edge_weights   # [..., C, C]
    if not np.all(np.isfinite(logits.data)):
        where = f" in {context}" if context else ""
        raise NumericError(f"non-finite attention logits{where}")
    return softmax(logits, axis=-1) @ x


def graph_convolution(adjacency_norm: Tensor, x: Tensor, weight: Tensor,
                      activation: str = "relu") -> Tensor:
    """Normalized-adjacency message passing with a temporal mixing weight.

    [..., C, T] -> [..., C, T]: adjacency_norm @ x @ weight, then the
    activation ("relu" or "identity").
    """
    x = Tensor._coerce(x)
    out = adjacency_norm @ x @ weight
    if activation == "relu":
        return out.relu()
    if activation == "identity":
        return out
    raise ConfigError(f"unknown activation {activation!r}")


def cross_resolution_pool(features: list, aligns: list) -> Tensor:
    """Align every resolution to the shared width and average them."""
    if not features or len(features) != len(aligns):
        raise ShapeError(
            f"pool: {len(features)} feature blocks vs {len(aligns)} alignment maps"
        )
    total = None
    for x, align in zip(features, aligns):
        projected = x @ align
        total = projected if total is None else total + projected
    return total / float(len(features))


def classify(pooled: Tensor, head: ClassifierParams) -> ClassProbabilities:
    """Flatten [..., C, D] and apply the linear head + softmax."""
    pooled = Tensor._coerce(pooled)
    c, d = pooled.shape[-2], pooled.shape[-1]
    flat = pooled.reshape(pooled.shape[:-2] + (c * d,))
    if flat.ndim == 1:
        logits = (flat.reshape(1, c * d) @ head.weight).reshape(head.weight.shape[-1]) + head.bias
    else:
        logits = flat @ head.weight + head.bias
    return ClassProbabilities(softmax(logits, axis=-1), logits)


def forward(x: Tensor, params: NetworkParams, disable_da: bool = False,
            disable_fcn: bool = False) -> ClassProbabilities:
    """Run the full network on [..., T, C] input (batched or single).

    The ablation switches replace a view with the identity: disable_da makes
    the attended view the raw features, disable_fcn does the same for the
    spectral view.
    """
    spec = params.arch.resolution_spec()

    def stage(name: str, m, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ShapeError, ConfigError, NumericError) as exc:
            where = name if m is None else f"{name}[resolution {m}]"
            raise type(exc)(f"{where}: {exc}") from None

    embedded = stage("embed", None, multi_scale_embed, x, spec, params.embed)
    per_resolution = []
    aligns = []
    for m, z in enumerate(embedded):
        graph = stage("graph", m, build_resolution_graph, z, params.adjacency[m], m)
        feats = graph.node_features
        x_da = feats if disable_da else stage(
            "difference_attention", m, difference_attention, feats, params.attention[m])
        x_fc = feats if disable_fcn else stage(
            "frequency_convolution", m, frequency_convolution, feats, params.freq[m])
        fused = stage("fuse", m, fuse_views, x_da, x_fc)
        edge_w = stage("adjacency", m, adjacency_weights, graph.adjacency_raw)
        adj_norm = stage("adjacency", m, normalize_adjacency, graph.adjacency_raw)
        h = fused
        for i, layer in enumerate(params.graph[m].layers):
            h = stage("local_attention", m, local_graph_attention, h, edge_w,
                      layer.attn_proj, context=f"layer {i}")
            h = stage("graph_convolution", m, graph_convolution, adj_norm, h,
                      layer.conv_weight)
        per_resolution.append(h)
        aligns.append(params.graph[m].align)
    pooled = stage("pool", None, cross_resolution_pool, per_resolution, aligns)
    return stage("classify", None, classify, pooled, params.classifier)
