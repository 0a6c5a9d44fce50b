"""Minimal deterministic rank-4 tensor engine with reverse-mode differentiation.

Every value in the system is a rank-4 array laid out (batch, channel, height,
width): scalars are (1, 1, 1, 1), per-channel vectors are (1, C, 1, 1), conv
weights reuse the four extents as (out_c, in_c, kh, kw).  Differentiable ops
append nodes to a global execution-ordered graph; ``backward`` walks it in
exact reverse order and accumulates gradients into every tensor that requires
them.  Storage defaults to float32 with float64 accumulation inside
reductions; every op follows the dtype of its inputs, so float64 tensors run
the identical code path (the finite-difference tests rely on this).

Single-threaded by design: one global graph, no locking.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ContractError, DimensionError, ParameterError

Array = np.ndarray

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """Rank-4 numeric carrier with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if arr.ndim != 4:
            raise DimensionError(
                f"tensors are rank-4 (batch, channel, height, width); got rank {arr.ndim}"
            )
        self.data: Array = arr
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor; got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Copy of the values with no gradient and no graph history."""
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # Operator sugar; the free functions below do the real work.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)


class _Node:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Graph:
    """Execution-ordered record of differentiable operations."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[_Node] = []


_graph = Graph()
_grad_enabled = True


def reset_graph() -> None:
    """Drop any recorded-but-unconsumed nodes (test hygiene)."""
    _graph.nodes.clear()


def graph_size() -> int:
    return len(_graph.nodes)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording; outputs created inside are detached constants."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _make_output(data: Array, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    requires = _grad_enabled and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    if requires:
        _graph.nodes.append(_Node(out, inputs, vjp))
    return out


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar loss; consumes the recorded graph.

    Gradients accumulate (+=) into ``.grad`` of every tensor on the path that
    requires them, leaves included; call again and they keep accumulating.
    """
    if loss.shape != (1, 1, 1, 1):
        raise ContractError(f"backward needs a scalar (1,1,1,1) loss; got shape {loss.shape}")
    nodes = _graph.nodes
    try:
        if loss.grad is None:
            loss.grad = np.zeros_like(loss.data)
        loss.grad += np.ones_like(loss.data)
        for node in reversed(nodes):
            gout = node.out.grad
            if gout is None:
                continue
            for tensor, gin in zip(node.inputs, node.vjp(gout)):
                if gin is None:
                    continue
                if tensor.grad is None:
                    tensor.grad = np.zeros(tensor.data.shape, dtype=tensor.data.dtype)
                np.add(tensor.grad, gin, out=tensor.grad, casting="unsafe")
    finally:
        _graph.nodes.clear()


def _as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        dtype = like.data.dtype if like is not None else np.float32
        return Tensor(np.full((1, 1, 1, 1), value, dtype=dtype))
    return Tensor(value)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _as_tensor(b, like=a)
    if isinstance(b, Tensor):
        return _as_tensor(a, like=b), b
    return _as_tensor(a), _as_tensor(b)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    axes = tuple(i for i in range(4) if shape[i] == 1 and grad.shape[i] != 1)
    reduced = grad.sum(axis=axes, keepdims=True, dtype=np.float64)
    return reduced.astype(grad.dtype)


# ---------------------------------------------------------------------------
# elementwise binary ops (numpy broadcasting between rank-4 operands)

def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def vjp(g: Array):
        return (
            _unbroadcast(g, a.data.shape) if a.requires_grad else None,
            _unbroadcast(g, b.data.shape) if b.requires_grad else None,
        )

    return _make_output(a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def vjp(g: Array):
        return (
            _unbroadcast(g, a.data.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.data.shape) if b.requires_grad else None,
        )

    return _make_output(a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def vjp(g: Array):
        return (
            _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None,
        )

    return _make_output(a.data * b.data, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)

    def vjp(g: Array):
        ga = _unbroadcast(g / b.data, a.data.shape) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return _make_output(a.data / b.data, (a, b), vjp)


def maximum(a, b) -> Tensor:
    """Elementwise max; ties split the gradient evenly between operands."""
    a, b = _pair(a, b)
    out_data = np.maximum(a.data, b.data)

    def vjp(g: Array):
        dt = g.dtype
        ga = gb = None
        if a.requires_grad:
            wa = (a.data > b.data).astype(dt) + 0.5 * (a.data == b.data).astype(dt)
            ga = _unbroadcast(g * wa, a.data.shape)
        if b.requires_grad:
            wb = (b.data > a.data).astype(dt) + 0.5 * (a.data == b.data).astype(dt)
            gb = _unbroadcast(g * wb, b.data.shape)
        return ga, gb

    return _make_output(out_data, (a, b), vjp)


# ---------------------------------------------------------------------------
# elementwise unary ops

def neg(x) -> Tensor:
    x = _as_tensor(x)
    return _make_output(-x.data, (x,), lambda g: (-g,))


def relu(x) -> Tensor:
    x = _as_tensor(x)

    def vjp(g: Array):
        return (g * (x.data > 0),)

    return _make_output(np.maximum(x.data, 0), (x,), vjp)


def abs_(x) -> Tensor:
    """|x| with the zero-subgradient convention at 0."""
    x = _as_tensor(x)

    def vjp(g: Array):
        return (g * np.sign(x.data),)

    return _make_output(np.abs(x.data), (x,), vjp)


def square(x) -> Tensor:
    x = _as_tensor(x)
    return mul(x, x)


def sqrt_(x) -> Tensor:
    """Elementwise square root; inputs must be positive for a finite gradient."""
    x = _as_tensor(x)
    out_data = np.sqrt(x.data)

    def vjp(g: Array):
        return (g * 0.5 / out_data,)

    return _make_output(out_data, (x,), vjp)


# ---------------------------------------------------------------------------
# reductions (float64 accumulation regardless of storage dtype)

def sum_all(x) -> Tensor:
    x = _as_tensor(x)
    total = x.data.sum(dtype=np.float64)
    out_data = np.full((1, 1, 1, 1), total, dtype=x.data.dtype)

    def vjp(g: Array):
        return (np.broadcast_to(g, x.data.shape),)

    return _make_output(out_data, (x,), vjp)


def mean_all(x) -> Tensor:
    x = _as_tensor(x)
    if x.data.size == 0:
        raise DimensionError("mean of an empty tensor")
    total = x.data.mean(dtype=np.float64)
    out_data = np.full((1, 1, 1, 1), total, dtype=x.data.dtype)
    inv = 1.0 / x.data.size

    def vjp(g: Array):
        return (np.broadcast_to(g * inv, x.data.shape),)

    return _make_output(out_data, (x,), vjp)


def global_avg_pool(x) -> Tensor:
    """(B, C, H, W) -> (B, C, 1, 1) spatial mean per channel and instance."""
    x = _as_tensor(x)
    b, c, h, w = x.data.shape
    if h * w == 0:
        raise DimensionError("global_avg_pool on an empty spatial extent")
    out_data = x.data.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(x.data.dtype)
    inv = 1.0 / (h * w)

    def vjp(g: Array):
        return (np.broadcast_to(g * inv, x.data.shape),)

    return _make_output(out_data, (x,), vjp)


# ---------------------------------------------------------------------------
# structural ops

def reshape(x, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4:
        raise DimensionError(f"reshape target must be rank-4; got {shape}")
    if int(np.prod(shape)) != x.data.size:
        raise DimensionError(f"cannot reshape {x.data.shape} (size {x.data.size}) to {shape}")

    def vjp(g: Array):
        return (g.reshape(x.data.shape),)

    return _make_output(x.data.reshape(shape), (x,), vjp)


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the channel axis; batch/spatial extents must agree."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat_channels needs at least one tensor")
    first = parts[0].data.shape
    for i, p in enumerate(parts[1:], start=1):
        s = p.data.shape
        if (s[0], s[2], s[3]) != (first[0], first[2], first[3]):
            raise DimensionError(
                f"concat_channels operand {i} has batch/spatial extents "
                f"{(s[0], s[2], s[3])}; expected {(first[0], first[2], first[3])}"
            )
    widths = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def vjp(g: Array):
        return tuple(
            g[:, offsets[i]:offsets[i + 1]] if p.requires_grad else None
            for i, p in enumerate(parts)
        )

    return _make_output(np.concatenate([p.data for p in parts], axis=1), tuple(parts), vjp)


def detach(x: Tensor) -> Tensor:
    return x.detach()


# ---------------------------------------------------------------------------
# convolution

def _reflect_fold(gpad: Array, pad_h: int, pad_w: int, h: int, w: int) -> Array:
    """Adjoint of reflect padding: fold padded-border gradient back inside.

    Reflection is separable, so folding rows first (across the full padded
    width) and then columns handles the corners exactly.
    """
    out = gpad[:, :, pad_h:pad_h + h, :].copy()
    if pad_h:
        out[:, :, 1:pad_h + 1, :] += gpad[:, :, pad_h - 1::-1, :]
        out[:, :, h - pad_h - 1:h - 1, :] += gpad[:, :, :pad_h + h - 1:-1, :]
    folded = out[:, :, :, pad_w:pad_w + w].copy()
    if pad_w:
        folded[:, :, :, 1:pad_w + 1] += out[:, :, :, pad_w - 1::-1]
        folded[:, :, :, w - pad_w - 1:w - 1] += out[:, :, :, :pad_w + w - 1:-1]
    return folded


def conv2d(x, weight: Tensor, bias: Tensor | None = None,
           padding: str = "reflect", stride: int = 1) -> Tensor:
    """2-D cross-correlation with implicit (k-1)//2 padding.

    Args:
        x: input (B, C_in, H, W).
        weight: kernel (C_out, C_in, kh, kw).
        bias: optional (1, C_out, 1, 1), added per output channel.
        padding: "reflect" or "zero".
        stride: positive sampling step for the output grid.
    """
    x = _as_tensor(x)
    if padding not in ("reflect", "zero"):
        raise ParameterError(f"padding must be 'reflect' or 'zero'; got {padding!r}")
    stride = int(stride)
    if stride < 1:
        raise ParameterError(f"stride must be >= 1; got {stride}")
    b, c_in, h, w = x.data.shape
    c_out, wc_in, kh, kw = weight.data.shape
    if c_in != wc_in:
        raise DimensionError(
            f"conv2d channel axis mismatch: input has {c_in} channels, weight expects {wc_in}"
        )
    if bias is not None and bias.data.shape != (1, c_out, 1, 1):
        raise DimensionError(
            f"conv2d bias must be (1, {c_out}, 1, 1); got {bias.data.shape}"
        )
    pad_h, pad_w = (kh - 1) // 2, (kw - 1) // 2
    if padding == "reflect" and (pad_h >= h or pad_w >= w):
        raise DimensionError(
            f"reflect padding ({pad_h}, {pad_w}) needs spatial extents larger "
            f"than the pad; got ({h}, {w})"
        )
    mode = "reflect" if padding == "reflect" else "constant"
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)), mode=mode)
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    h_out, w_out = windows.shape[2], windows.shape[3]
    k = c_in * kh * kw
    # One contiguous im2col copy in GEMM layout; the backward pass reuses it.
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(-1, k)
    wmat = weight.data.reshape(c_out, k)
    out_data = np.ascontiguousarray(
        (cols @ wmat.T).reshape(b, h_out, w_out, c_out).transpose(0, 3, 1, 2))
    if bias is not None:
        out_data += bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g: Array):
        gx = gw = gb = None
        g_flat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, c_out)
        if weight.requires_grad:
            gw = (g_flat.T @ cols).reshape(c_out, c_in, kh, kw)
        if x.requires_grad:
            spread = (g_flat @ wmat).reshape(b, h_out, w_out, c_in, kh, kw)
            spread = spread.transpose(0, 3, 1, 2, 4, 5)  # (B, Cin, Ho, Wo, kh, kw)
            gpad = np.zeros_like(xp)
            for u in range(kh):
                for v in range(kw):
                    gpad[:, :, u:u + stride * h_out:stride, v:v + stride * w_out:stride] += (
                        spread[:, :, :, :, u, v]
                    )
            if padding == "reflect":
                gx = _reflect_fold(gpad, pad_h, pad_w, h, w)
            else:
                gx = gpad[:, :, pad_h:pad_h + h, pad_w:pad_w + w]
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3), keepdims=True, dtype=np.float64).astype(g.dtype)
        if bias is None:
            return gx, gw
        return gx, gw, gb

    return _make_output(out_data, inputs, vjp)


# ---------------------------------------------------------------------------
# spectral op

def dft2_amplitude(x) -> Tensor:
    """Per-plane 2-D DFT amplitude, normalized by 1/(H*W).

    With this normalization the (0, 0) bin of a non-negative plane equals the
    plane's mean.  At bins where the spectrum is exactly zero the amplitude is
    non-differentiable; the zero subgradient is used there.
    """
    x = _as_tensor(x)
    b, c, h, w = x.data.shape
    if h * w == 0:
        raise DimensionError("dft2_amplitude on an empty spatial extent")
    spectrum = np.fft.fft2(x.data, axes=(-2, -1))
    n = h * w
    out_data = (np.abs(spectrum) / n).astype(x.data.dtype)

    def vjp(g: Array):
        mag = np.abs(spectrum)
        phase_conj = np.divide(spectrum.conj(), mag, out=np.zeros_like(spectrum), where=mag > 0)
        packed = np.asarray(g, dtype=np.complex128) * phase_conj
        gx = np.real(np.fft.fft2(packed, axes=(-2, -1))) / n
        return (gx.astype(x.data.dtype),)

    return _make_output(out_data, (x,), vjp)
