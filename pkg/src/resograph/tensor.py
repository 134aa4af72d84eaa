"""Reverse-mode autodiff on numpy arrays.

A Tensor wraps a float64 ndarray plus a gradient buffer. Every operation
records a closure that knows how to push the output gradient back to its
parents; backward() walks the recorded graph once in reverse topological
order and then frees it. The tape is rebuilt on every forward pass.

Ops follow numpy broadcasting. Gradients of broadcast operands are summed
back down to the operand's shape, so batched ([B, C, T]) and single-sample
([C, T]) code share one path as long as axes are addressed from the end.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeError

Arrayish = "np.ndarray | float | int | list"


def _as_data(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    # ascontiguousarray would promote 0-d scalars to shape (1,)
    return arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad


def _check_broadcast(a_shape, b_shape, op: str):
    try:
        np.broadcast_shapes(a_shape, b_shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a_shape} and {b_shape} do not broadcast") from None


class Tensor:
    """64-bit float array with reverse-mode gradient support."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_data(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents = ()

    # -- construction ------------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents: tuple, backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- basic introspection ----------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        """The underlying array. A view; do not mutate."""
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    # -- elementwise arithmetic -------------------------------------------

    @staticmethod
    def _coerce(value) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(value)

    def __add__(self, other):
        other = Tensor._coerce(other)
        _check_broadcast(self.shape, other.shape, "add")
        out_data = self.data + other.data

        def backward(g):
            self._accumulate(_unbroadcast(g, self.shape))
            other._accumulate(_unbroadcast(g, other.shape))

        return Tensor._from_op(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self._accumulate(-g)

        return Tensor._from_op(-self.data, (self,), backward)

    def __sub__(self, other):
        other = Tensor._coerce(other)
        _check_broadcast(self.shape, other.shape, "sub")
        out_data = self.data - other.data

        def backward(g):
            self._accumulate(_unbroadcast(g, self.shape))
            other._accumulate(_unbroadcast(-g, other.shape))

        return Tensor._from_op(out_data, (self, other), backward)

    def __rsub__(self, other):
        return Tensor._coerce(other) - self

    def __mul__(self, other):
        other = Tensor._coerce(other)
        _check_broadcast(self.shape, other.shape, "mul")
        out_data = self.data * other.data

        def backward(g):
            self._accumulate(_unbroadcast(g * other.data, self.shape))
            other._accumulate(_unbroadcast(g * self.data, other.shape))

        return Tensor._from_op(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._coerce(other)
        _check_broadcast(self.shape, other.shape, "div")
        out_data = self.data / other.data

        def backward(g):
            self._accumulate(_unbroadcast(g / other.data, self.shape))
            other._accumulate(_unbroadcast(-g * self.data / (other.data * other.data), other.shape))

        return Tensor._from_op(out_data, (self, other), backward)

    def __rtruediv__(self, other):
        return Tensor._coerce(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        p = float(exponent)
        out_data = self.data ** p

        def backward(g):
            self._accumulate(g * p * self.data ** (p - 1.0))

        return Tensor._from_op(out_data, (self,), backward)

    # -- unary math --------------------------------------------------------

    def exp(self):
        out_data = np.exp(self.data)

        def backward(g):
            self._accumulate(g * out_data)

        return Tensor._from_op(out_data, (self,), backward)

    def log(self):
        def backward(g):
            self._accumulate(g / self.data)

        return Tensor._from_op(np.log(self.data), (self,), backward)

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def backward(g):
            self._accumulate(g * 0.5 / out_data)

        return Tensor._from_op(out_data, (self,), backward)

    def relu(self):
        mask = self.data > 0.0

        def backward(g):
            self._accumulate(g * mask)

        return Tensor._from_op(np.where(mask, self.data, 0.0), (self,), backward)

    # -- shape manipulation ------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old_shape = self.shape
        try:
            out_data = self.data.reshape(shape)
        except ValueError:
            raise ShapeError(f"reshape: cannot view {old_shape} as {shape}") from None

        def backward(g):
            self._accumulate(g.reshape(old_shape))

        return Tensor._from_op(out_data, (self,), backward)

    def transpose(self):
        """Swap the last two axes."""
        if self.ndim < 2:
            raise ShapeError(f"transpose: need at least 2 dims, got shape {self.shape}")
        out_data = np.swapaxes(self.data, -1, -2)

        def backward(g):
            self._accumulate(np.swapaxes(g, -1, -2))

        return Tensor._from_op(out_data, (self,), backward)

    def __getitem__(self, key):
        if isinstance(key, (list, np.ndarray)):
            raise TypeError("only basic indexing (ints, slices, Ellipsis) is supported")
        if isinstance(key, tuple) and any(isinstance(k, (list, np.ndarray)) for k in key):
            raise TypeError("only basic indexing (ints, slices, Ellipsis) is supported")
        out_data = self.data[key]
        in_shape = self.shape

        def backward(g):
            scatter = np.zeros(in_shape)
            scatter[key] += g
            self._accumulate(scatter)

        return Tensor._from_op(out_data, (self,), backward)

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        in_shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, in_shape).copy())

        return Tensor._from_op(out_data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = 1
            for ax in axes:
                count *= self.shape[ax]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    # -- linear algebra ----------------------------------------------------

    def __matmul__(self, other):
        other = Tensor._coerce(other)
        if self.ndim < 2 or other.ndim < 2:
            raise ShapeError(
                f"matmul: need at least 2 dims, got {self.shape} and {other.shape}"
            )
        if self.shape[-1] != other.shape[-2]:
            raise ShapeError(f"matmul: inner dims differ for {self.shape} @ {other.shape}")
        try:
            out_data = np.matmul(self.data, other.data)
        except ValueError:
            raise ShapeError(
                f"matmul: batch dims do not broadcast for {self.shape} @ {other.shape}"
            ) from None

        def backward(g):
            self._accumulate(_unbroadcast(np.matmul(g, np.swapaxes(other.data, -1, -2)), self.shape))
            other._accumulate(_unbroadcast(np.matmul(np.swapaxes(self.data, -1, -2), g), other.shape))

        return Tensor._from_op(out_data, (self, other), backward)

    # -- backward ----------------------------------------------------------

    def backward(self):
        """Reverse pass from a scalar. Frees the tape afterwards."""
        if self.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward on a tensor that does not require grad")

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)
        # free the tape; parameters keep their grads, the graph is one-shot
        for node in order:
            node._backward = None
            node._parents = ()


# -- free functions --------------------------------------------------------


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [Tensor._coerce(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty sequence")
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: incompatible shapes {[t.shape for t in tensors]} along axis {axis}"
        ) from None
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, offsets, axis=axis)):
            t._accumulate(piece)

    return Tensor._from_op(out_data, tuple(tensors), backward)


def _normalize_axis(axis: int, ndim: int, op: str) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"{op}: axis {axis} out of range for {ndim} dims")
    return axis % ndim


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stabilized softmax along `axis`; rows sum to 1 within 1e-12."""
    x = Tensor._coerce(x)
    axis = _normalize_axis(axis, x.ndim, "softmax") - x.ndim  # negative form
    shift = Tensor(np.max(x.data, axis=axis, keepdims=True))  # constant, no grad path
    e = (x - shift).exp()
    return e / e.sum(axis=axis, keepdims=True)


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    x = Tensor._coerce(x)
    axis = _normalize_axis(axis, x.ndim, "logsumexp") - x.ndim
    shift_data = np.max(x.data, axis=axis, keepdims=True)
    shift = Tensor(shift_data)
    lse = (x - shift).exp().sum(axis=axis, keepdims=False).log()
    return lse + Tensor(np.squeeze(shift_data, axis=axis))


def depthwise_conv1d(x: Tensor, kernels: Tensor, stride: int, bias: Tensor = None) -> Tensor:
    """Per-channel 1-d convolution with non-overlapping patches.

    x: [..., T, C], kernels: [C, k], stride must equal k. Output [..., T//k, C];
    the remainder of T modulo k is dropped. Optional per-channel bias [C].
    """
    from .exceptions import ConfigError

    x = Tensor._coerce(x)
    kernels = Tensor._coerce(kernels)
    if x.ndim < 2:
        raise ShapeError(f"depthwise_conv1d: input must be [..., T, C], got {x.shape}")
    if kernels.ndim != 2:
        raise ShapeError(f"depthwise_conv1d: kernels must be [C, k], got {kernels.shape}")
    c, k = kernels.shape
    if x.shape[-1] != c:
        raise ShapeError(
            f"depthwise_conv1d: {c} kernel channels vs input shape {x.shape}"
        )
    if stride != k:
        raise ConfigError(
            f"depthwise_conv1d: stride {stride} != kernel size {k}; only patch mode is supported"
        )
    t = x.shape[-2]
    t_out = t // k
    if t_out == 0:
        raise ShapeError(
            f"depthwise_conv1d: input length {t} shorter than kernel size {k} (empty output)"
        )
    lead = x.shape[:-2]
    patches = x.data[..., : t_out * k, :].reshape(lead + (t_out, k, c))
    out_data = np.einsum("...tkc,kc->...tc", patches, kernels.data.T)
    if bias is not None:
        bias = Tensor._coerce(bias)
        if bias.shape != (c,):
            raise ShapeError(f"depthwise_conv1d: bias shape {bias.shape} != ({c},)")
        out_data = out_data + bias.data

    def backward(g):
        # g: [..., t_out, c]
        gk = (g[..., :, None, :] * patches).reshape(-1, k, c).sum(axis=0)
        kernels._accumulate(gk.T)
        gx_patches = g[..., :, None, :] * kernels.data.T  # [..., t_out, k, c]
        gx = np.zeros(x.shape)
        gx[..., : t_out * k, :] = gx_patches.reshape(lead + (t_out * k, c))
        x._accumulate(gx)
        if bias is not None:
            bias._accumulate(g.reshape(-1, c).sum(axis=0))

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return Tensor._from_op(out_data, parents, backward)
