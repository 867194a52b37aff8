"""Reverse-mode autodiff over dense numpy arrays.

Every operation eagerly computes its forward value and records a vector-Jacobian
closure, so a fresh graph is traced on every forward pass. ``backward()`` on a
scalar root walks the trace once in reverse topological order and accumulates
gradients into every reachable leaf that requires them.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A graph node: cached forward value plus gradient accumulator.

    Leaves are created directly (inputs, parameters, constants); interior nodes
    are created by the ops below and carry parent references and a VJP closure.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, op="leaf", _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64) if not isinstance(data, np.ndarray) else data
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(leaf) into .grad of every reachable node.

        The root must be a scalar. Calling twice without zeroing accumulates,
        matching the usual autodiff convention.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward root must be scalar, got op={self.op!r} shape={self.data.shape}"
            )
        order = _toposort(self)
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            parent_grads = node._vjp(node.grad)
            for parent, g in zip(node._parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g if g.shape == parent.data.shape else np.broadcast_to(g, parent.data.shape).copy()
                else:
                    parent.grad = parent.grad + g

    # Operator sugar; constants are wrapped on the fly.
    def __add__(self, other):
        return add(self, _wrap(other, self))

    def __radd__(self, other):
        return add(_wrap(other, self), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self))

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self))

    def __rmul__(self, other):
        return mul(_wrap(other, self), self)

    def __truediv__(self, other):
        return div(self, _wrap(other, self))

    def __matmul__(self, other):
        return matmul(self, _wrap(other, self))

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data, dtype=np.float64):
    """Leaf that never receives gradients."""
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=False, op="const")


def _wrap(value, like):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype), requires_grad=False, op="const")


def _toposort(root):
    """Iterative DFS; deterministic order given deterministic graph construction."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the parent shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _needs(*tensors):
    return any(t.requires_grad for t in tensors)


def _coerce(a, b):
    """Allow raw scalars/arrays on either side of a binary op."""
    if not isinstance(a, Tensor):
        a = _wrap(a, b)
    if not isinstance(b, Tensor):
        b = _wrap(b, a)
    return a, b


# ---------------------------------------------------------------------------
# Elementwise arithmetic (numpy broadcasting rules apply)
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = _coerce(a, b)
    out_data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(out_data, _needs(a, b), "add", (a, b), vjp)


def sub(a, b):
    a, b = _coerce(a, b)
    out_data = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return Tensor(out_data, _needs(a, b), "sub", (a, b), vjp)


def mul(a, b):
    a, b = _coerce(a, b)
    out_data = a.data * b.data

    def vjp(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, _needs(a, b), "mul", (a, b), vjp)


def div(a, b):
    a, b = _coerce(a, b)
    out_data = a.data / b.data

    def vjp(g):
        return (_unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return Tensor(out_data, _needs(a, b), "div", (a, b), vjp)


def neg(a):
    def vjp(g):
        return (-g,)

    return Tensor(-a.data, a.requires_grad, "neg", (a,), vjp)


def relu(a):
    """max(x, 0); subgradient at 0 is 0."""
    mask = a.data > 0
    out_data = np.where(mask, a.data, 0.0)

    def vjp(g):
        return (g * mask,)

    return Tensor(out_data, a.requires_grad, "relu", (a,), vjp)


def absolute(a):
    """|x|; subgradient at 0 is 0 (np.sign convention)."""
    sgn = np.sign(a.data)

    def vjp(g):
        return (g * sgn,)

    return Tensor(np.abs(a.data), a.requires_grad, "abs", (a,), vjp)


def log(a):
    out_data = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return Tensor(out_data, a.requires_grad, "log", (a,), vjp)


def exp(a):
    out_data = np.exp(a.data)

    def vjp(g):
        return (g * out_data,)

    return Tensor(out_data, a.requires_grad, "exp", (a,), vjp)


def sqrt(a):
    """Elementwise square root; subgradient at 0 is 0 to keep replay finite."""
    out_data = np.sqrt(a.data)

    def vjp(g):
        safe = np.where(a.data > 0, out_data, 1.0)
        return (np.where(a.data > 0, 0.5 * g / safe, 0.0),)

    return Tensor(out_data, a.requires_grad, "sqrt", (a,), vjp)


# ---------------------------------------------------------------------------
# Reductions and shape ops
# ---------------------------------------------------------------------------

def tensor_sum(a, axis=None, keepdims=False):
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return Tensor(np.asarray(out_data), a.requires_grad, "sum", (a,), vjp)


def mean(a, axis=None, keepdims=False):
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.data.shape[ax]

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.data.shape).copy(),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, a.data.shape).copy(),)

    return Tensor(np.asarray(out_data), a.requires_grad, "mean", (a,), vjp)


def reshape(a, shape):
    out_data = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return Tensor(out_data, a.requires_grad, "reshape", (a,), vjp)


def swapaxes(a, ax0, ax1):
    out_data = np.swapaxes(a.data, ax0, ax1)

    def vjp(g):
        return (np.swapaxes(g, ax0, ax1),)

    return Tensor(out_data, a.requires_grad, "swapaxes", (a,), vjp)


def concat(tensors, axis=0):
    tensors = list(tensors)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out_data, _needs(*tensors), "concat", tuple(tensors), vjp)


# ---------------------------------------------------------------------------
# Linear algebra and network layers
# ---------------------------------------------------------------------------

def matmul(a, b):
    """a @ b with a of shape (..., K) and b of shape (K, M)."""
    a, b = _coerce(a, b)
    if b.data.ndim != 2:
        raise ValueError(f"matmul: rhs must be 2-D, got {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ValueError(
            f"matmul: inner dims differ, lhs {a.data.shape} vs rhs {b.data.shape}"
        )
    out_data = a.data @ b.data

    def vjp(g):
        ga = g @ b.data.T if a.requires_grad else None
        if b.requires_grad:
            a2 = a.data.reshape(-1, a.data.shape[-1])
            g2 = g.reshape(-1, g.shape[-1])
            gb = a2.T @ g2
        else:
            gb = None
        return ga, gb

    return Tensor(out_data, _needs(a, b), "matmul", (a, b), vjp)


def log_softmax(a, axis=-1):
    m = a.data.max(axis=axis, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse

    def vjp(g):
        softmax = np.exp(out_data)
        return (g - softmax * g.sum(axis=axis, keepdims=True),)

    return Tensor(out_data, a.requires_grad, "log_softmax", (a,), vjp)


def conv1d(x, w, b=None, dilation=1, padding=0):
    """Temporal convolution, stride 1.

    x: (B, Cin, T), w: (Cout, Cin, K), b: (Cout,) or None.
    Output length is T + 2*padding - (K-1)*dilation.
    """
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ValueError(f"conv1d: need x (B,Cin,T) and w (Cout,Cin,K), got {x.data.shape}, {w.data.shape}")
    batch, c_in, t_in = x.data.shape
    c_out, c_in_w, k = w.data.shape
    if c_in != c_in_w:
        raise ValueError(f"conv1d: channel mismatch, x has {c_in}, w expects {c_in_w}")
    span = (k - 1) * dilation + 1
    t_pad = t_in + 2 * padding
    t_out = t_pad - span + 1
    if t_out < 1:
        raise ValueError(f"conv1d: input length {t_in} too short for kernel span {span}")

    xp = x.data
    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
    # im2col: (B, Cin, K, Tout) gathered at offsets k*dilation
    s0, s1, s2 = xp.strides
    cols = np.lib.stride_tricks.as_strided(
        xp, shape=(batch, c_in, k, t_out), strides=(s0, s1, s2 * dilation, s2)
    )
    cols_mat = cols.reshape(batch, c_in * k, t_out).transpose(0, 2, 1).reshape(batch * t_out, c_in * k)
    w_mat = w.data.reshape(c_out, c_in * k).T
    out_mat = cols_mat @ w_mat
    if b is not None:
        out_mat = out_mat + b.data
    out_data = out_mat.reshape(batch, t_out, c_out).transpose(0, 2, 1)

    parents = (x, w) if b is None else (x, w, b)

    def vjp(g):
        g_mat = g.transpose(0, 2, 1).reshape(batch * t_out, c_out)
        gx = gw = gb = None
        if w.requires_grad:
            gw = (cols_mat.T @ g_mat).T.reshape(c_out, c_in, k)
        if b is not None and b.requires_grad:
            gb = g_mat.sum(axis=0)
        if x.requires_grad:
            gcols = (g_mat @ w_mat.T).reshape(batch, t_out, c_in, k).transpose(0, 2, 3, 1)
            gxp = np.zeros((batch, c_in, t_pad), dtype=x.data.dtype)
            for kk in range(k):
                off = kk * dilation
                gxp[:, :, off:off + t_out] += gcols[:, :, kk, :]
            gx = gxp[:, :, padding:t_pad - padding] if padding else gxp
        if b is None:
            return gx, gw
        return gx, gw, gb

    return Tensor(out_data, _needs(*parents), "conv1d", parents, vjp)


def maxpool1d(x, kernel, stride=None):
    """Max over non-overlapping (or strided) windows; ties take the lowest index."""
    if stride is None:
        stride = kernel
    if x.data.ndim != 3:
        raise ValueError(f"maxpool1d: need (B,C,T), got {x.data.shape}")
    batch, chan, t_in = x.data.shape
    t_out = (t_in - kernel) // stride + 1
    if t_out < 1:
        raise ValueError(f"maxpool1d: input length {t_in} shorter than kernel {kernel}")
    s0, s1, s2 = x.data.strides
    windows = np.lib.stride_tricks.as_strided(
        x.data, shape=(batch, chan, t_out, kernel), strides=(s0, s1, s2 * stride, s2)
    )
    arg = windows.argmax(axis=-1)  # first occurrence wins ties
    out_data = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        gx = np.zeros_like(x.data)
        b_idx, c_idx, t_idx = np.indices(arg.shape)
        np.add.at(gx, (b_idx, c_idx, t_idx * stride + arg), g)
        return (gx,)

    return Tensor(out_data, x.requires_grad, "maxpool1d", (x,), vjp)


# ---------------------------------------------------------------------------
# Signal ops used by the audio front-end
# ---------------------------------------------------------------------------

def frame_signal(x, frame_length, hop_length):
    """Slice (B, L) into overlapping frames (B, n_frames, frame_length)."""
    if x.data.ndim != 2:
        raise ValueError(f"frame_signal: need (B, L), got {x.data.shape}")
    batch, length = x.data.shape
    if length < frame_length:
        raise ValueError(f"frame_signal: signal length {length} < frame length {frame_length}")
    n_frames = 1 + (length - frame_length) // hop_length
    s0, s1 = x.data.strides
    frames = np.lib.stride_tricks.as_strided(
        x.data, shape=(batch, n_frames, frame_length), strides=(s0, s1 * hop_length, s1)
    ).copy()

    def vjp(g):
        gx = np.zeros_like(x.data)
        for t in range(n_frames):
            gx[:, t * hop_length:t * hop_length + frame_length] += g[:, t, :]
        return (gx,)

    return Tensor(frames, x.requires_grad, "frame", (x,), vjp)


def power_spectrum(frames, fft_size):
    """Magnitude-squared rfft of each frame, zero-padded to fft_size.

    frames: (..., n) with n <= fft_size. Output (..., fft_size // 2 + 1).
    The adjoint is written by hand from |S_k|^2 = S_k conj(S_k).
    """
    n = frames.data.shape[-1]
    if n > fft_size:
        raise ValueError(f"power_spectrum: frame length {n} exceeds fft size {fft_size}")
    spec = np.fft.rfft(frames.data, n=fft_size, axis=-1)
    out_data = (spec.real ** 2 + spec.imag ** 2)

    def vjp(g):
        h = np.zeros(g.shape[:-1] + (fft_size,), dtype=np.complex128)
        h[..., :g.shape[-1]] = g * spec
        grad_full = 2.0 * fft_size * np.fft.ifft(h, axis=-1).real
        return (np.ascontiguousarray(grad_full[..., :n], dtype=frames.data.dtype),)

    return Tensor(out_data, frames.requires_grad, "power_spectrum", (frames,), vjp)
