"""Real FFT for the spectral filtering path, written from scratch.

Power-of-two lengths go through an iterative radix-2 transform; everything
else through Bluestein's chirp-z algorithm, which reduces an arbitrary-length
DFT to a power-of-two convolution. The forward transform is unnormalized
(plain DFT sums); the inverse divides by the length.

One-sided storage: a length-T real signal keeps bins 0..T//2, i.e.
S = T//2 + 1 complex values. Bin 0 always has zero imaginary part, and so
does the Nyquist bin when T is even; both are stored as exact zeros.

All functions here are pure; the module-level caches only memoize twiddle
factors and chirp transforms per length, so concurrent use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError
from .tensor import Tensor

_TWIDDLES: dict = {}
_BITREV: dict = {}
_BLUESTEIN: dict = {}


def _bit_reverse(n: int) -> np.ndarray:
    perm = _BITREV.get(n)
    if perm is None:
        bits = n.bit_length() - 1
        perm = np.zeros(n, dtype=np.intp)
        for i in range(n):
            r = 0
            v = i
            for _ in range(bits):
                r = (r << 1) | (v & 1)
                v >>= 1
            perm[i] = r
        _BITREV[n] = perm
    return perm


def _fft_pow2(a: np.ndarray, inverse: bool) -> np.ndarray:
    """DFT along the last axis; length must be a power of two."""
    n = a.shape[-1]
    if n == 1:
        return a.copy()
    x = a[..., _bit_reverse(n)].astype(np.complex128)
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        key = (size, inverse)
        tw = _TWIDDLES.get(key)
        if tw is None:
            tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
            _TWIDDLES[key] = tw
        blocks = x.reshape(x.shape[:-1] + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        x = np.concatenate([even + odd, even - odd], axis=-1).reshape(x.shape)
        size *= 2
    return x


def _bluestein_setup(n: int):
    cached = _BLUESTEIN.get(n)
    if cached is None:
        # chirp via k^2 mod 2n keeps the angle argument small and exact
        k = np.arange(n)
        exponent = (k * k) % (2 * n)
        chirp = np.exp(-1j * np.pi * exponent / n)
        m = 1 << (2 * n - 1).bit_length()
        b = np.zeros(m, dtype=np.complex128)
        b[0] = 1.0
        b[1:n] = np.conj(chirp[1:])
        b[m - n + 1:] = np.conj(chirp[1:][::-1])
        cached = (chirp, _fft_pow2(b, inverse=False), m)
        _BLUESTEIN[n] = cached
    return cached


def _fft_bluestein(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    chirp, b_hat, m = _bluestein_setup(n)
    pad = np.zeros(a.shape[:-1] + (m,), dtype=np.complex128)
    pad[..., :n] = a * chirp
    conv = _fft_pow2(_fft_pow2(pad, inverse=False) * b_hat, inverse=True) / m
    return chirp * conv[..., :n]


def _dft(a: np.ndarray) -> np.ndarray:
    """Unnormalized complex DFT along the last axis, any length."""
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[-1]
    if n & (n - 1) == 0:
        return _fft_pow2(a, inverse=False)
    return _fft_bluestein(a)


def _idft(a: np.ndarray) -> np.ndarray:
    """Normalized inverse DFT along the last axis."""
    a = np.asarray(a, dtype=np.complex128)
    return np.conj(_dft(np.conj(a))) / a.shape[-1]


def num_bins(length: int) -> int:
    return length // 2 + 1


def _one_sided_weights(length: int) -> np.ndarray:
    """Multiplicity of each stored bin in the full spectrum."""
    w = np.full(num_bins(length), 2.0)
    w[0] = 1.0
    if length % 2 == 0:
        w[-1] = 1.0
    return w


def rfft_array(x: np.ndarray) -> np.ndarray:
    """One-sided spectrum of a real signal along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    t = x.shape[-1]
    spec = _dft(x)[..., : num_bins(t)].copy()
    spec.imag[..., 0] = 0.0
    if t % 2 == 0:
        spec.imag[..., -1] = 0.0
    return spec


def irfft_array(spec: np.ndarray, length: int) -> np.ndarray:
    """Real signal whose one-sided spectrum is `spec`."""
    spec = np.asarray(spec, dtype=np.complex128)
    s = num_bins(length)
    if spec.shape[-1] != s:
        raise ShapeError(f"irfft: {spec.shape[-1]} bins but length {length} needs {s}")
    full = np.zeros(spec.shape[:-1] + (length,), dtype=np.complex128)
    full[..., :s] = spec
    if length > 1:
        full[..., s:] = np.conj(spec[..., 1 : length - s + 1][..., ::-1])
    return _idft(full).real


@dataclass
class ComplexSpectrum:
    """One-sided spectrum as a (real, imag) Tensor pair.

    Both tensors share shape [..., S] with S = original_length//2 + 1.
    """

    real: Tensor
    imag: Tensor
    original_length: int

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ShapeError(
                f"spectrum: real {self.real.shape} vs imag {self.imag.shape}"
            )
        s = num_bins(self.original_length)
        if self.real.shape[-1] != s:
            raise ShapeError(
                f"spectrum: {self.real.shape[-1]} bins but length "
                f"{self.original_length} needs {s}"
            )

    @property
    def shape(self) -> tuple:
        return self.real.shape

    @property
    def bins(self) -> int:
        return self.real.shape[-1]


def rfft(x: Tensor) -> ComplexSpectrum:
    """Differentiable one-sided DFT along the last axis."""
    x = Tensor._coerce(x)
    t = x.shape[-1]
    spec = rfft_array(x.data)
    even = t % 2 == 0

    def backward_real(g):
        # adjoint of Re(DFT): unnormalized inverse of the zero-padded grads
        full = np.zeros(g.shape[:-1] + (t,), dtype=np.complex128)
        full[..., : g.shape[-1]] = g
        x._accumulate(np.conj(_dft(np.conj(full))).real)

    def backward_imag(g):
        g = g.copy()
        g[..., 0] = 0.0  # stored as exact zero, no dependence on x
        if even:
            g[..., -1] = 0.0
        full = np.zeros(g.shape[:-1] + (t,), dtype=np.complex128)
        full[..., : g.shape[-1]] = 1j * g
        x._accumulate(np.conj(_dft(np.conj(full))).real)

    real = Tensor._from_op(np.ascontiguousarray(spec.real), (x,), backward_real)
    imag = Tensor._from_op(np.ascontiguousarray(spec.imag), (x,), backward_imag)
    return ComplexSpectrum(real, imag, t)


def irfft(spec: ComplexSpectrum, length: int) -> Tensor:
    """Differentiable inverse of rfft; returns a real Tensor of `length`."""
    if spec.original_length != length:
        raise ShapeError(
            f"irfft: spectrum is for length {spec.original_length}, asked for {length}"
        )
    re, im = spec.real, spec.imag
    out_data = irfft_array(re.data + 1j * im.data, length)
    weights = _one_sided_weights(length) / length
    even = length % 2 == 0

    def backward(g):
        g_hat = _dft(g.astype(np.complex128))[..., : num_bins(length)]
        re._accumulate(weights * g_hat.real)
        g_im = weights * g_hat.imag
        g_im[..., 0] = 0.0  # real-part inverse never reads these coords
        if even:
            g_im[..., -1] = 0.0
        im._accumulate(g_im)

    return Tensor._from_op(out_data, (re, im), backward)


def complex_hadamard(a: ComplexSpectrum, b: ComplexSpectrum) -> ComplexSpectrum:
    """Bin-wise complex product; broadcasting over leading axes is allowed."""
    if a.original_length != b.original_length:
        raise ShapeError(
            f"hadamard: spectra for lengths {a.original_length} and {b.original_length}"
        )
    real = a.real * b.real - a.imag * b.imag
    imag = a.real * b.imag + a.imag * b.real
    return ComplexSpectrum(real, imag, a.original_length)
