"""The two parallel temporal views of each resolution's node features.

Difference attention runs multi-head self-attention over the first-order
temporal differences, which makes the attended features invariant to
per-channel constant offsets (slow baseline shifts); the raw series is added
back as a residual. Frequency convolution filters each channel in the
spectral domain with a learnable complex kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from .exceptions import ShapeError
from .fourier import ComplexSpectrum, complex_hadamard, irfft, num_bins, rfft
from .tensor import Tensor, concat, softmax


@dataclass
class DifferenceAttentionParams:
    """Per-head projections [C, d] and the output merge [H*d, C] + bias [C]."""

    queries: list
    keys: list
    values: list
    out_weight: Tensor
    out_bias: Tensor

    @property
    def heads(self) -> int:
        return len(self.queries)

    @property
    def head_dim(self) -> int:
        return self.queries[0].shape[-1]


@dataclass
class FrequencyKernel:
    """Learnable complex filter, one row per channel: real/imag [C, S]."""

    real: Tensor
    imag: Tensor


def temporal_difference(x: Tensor) -> Tensor:
    """First-order difference along time with replicate padding on the right.

    [..., C, T] -> [..., C, T]; the last column is exactly zero, and the
    output is unchanged by adding any per-channel constant to x.
    """
    x = Tensor._coerce(x)
    padded = concat([x, x[..., -1:]], axis=-1)
    return padded[..., 1:] - padded[..., :-1]


def difference_attention(x: Tensor, params: DifferenceAttentionParams) -> Tensor:
    """Self-attention over difference tokens plus the raw residual.

    x: [..., C, T]. Tokens are the T time steps of the differenced series,
    each a C-vector. Heads are merged by concatenation and a linear map back
    to C channels; the result is transposed back and added to x.
    """
    x = Tensor._coerce(x)
    c = x.shape[-2]
    if params.queries[0].shape[0] != c:
        raise ShapeError(
            f"attention projections expect {params.queries[0].shape[0]} channels, got {c}"
        )
    tokens = temporal_difference(x).transpose()  # [..., T, C]
    scale = 1.0 / sqrt(params.head_dim)
    merged = []
    for wq, wk, wv in zip(params.queries, params.keys, params.values):
        q = tokens @ wq
        k = tokens @ wk
        v = tokens @ wv
        weights = softmax((q @ k.transpose()) * scale, axis=-1)
        merged.append(weights @ v)
    out = concat(merged, axis=-1) @ params.out_weight + params.out_bias
    return out.transpose() + x


def _imag_mask(length: int) -> np.ndarray:
    mask = np.ones(num_bins(length))
    mask[0] = 0.0
    if length % 2 == 0:
        mask[-1] = 0.0
    return mask


def frequency_convolution(x: Tensor, kernel: FrequencyKernel) -> Tensor:
    """Per-channel spectral filtering: rfft, bin-wise kernel product, irfft.

    x: [..., C, T]. The kernel's imaginary part is structurally zero at bin 0
    (and the Nyquist bin for even T): those bins scale a purely real spectrum
    coordinate, so a real output requires a real gain there. The mask is part
    of the op and the masked coordinates get exactly zero gradient.
    """
    x = Tensor._coerce(x)
    t = x.shape[-1]
    s = num_bins(t)
    if kernel.real.shape != kernel.imag.shape:
        raise ShapeError(
            f"kernel real {kernel.real.shape} vs imag {kernel.imag.shape}"
        )
    if kernel.real.shape[-1] != s:
        raise ShapeError(
            f"kernel has {kernel.real.shape[-1]} bins, input length {t} needs {s}"
        )
    gain = ComplexSpectrum(kernel.real, kernel.imag * Tensor(_imag_mask(t)), t)
    return irfft(complex_hadamard(rfft(x), gain), t)
