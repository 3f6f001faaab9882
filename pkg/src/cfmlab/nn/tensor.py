"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array.  Operations on tensors that require
gradients record a closure which, when :meth:`Tensor.backward` is called on a
scalar result, accumulates ``d(result)/d(tensor)`` into ``tensor.grad``.

Only the operations needed by the encoder / forward-model / decoder stacks are
provided; broadcasting is supported for the elementwise arithmetic ops.
"""
from __future__ import annotations

import contextlib

import numba
import numpy as np

_GRAD_ENABLED = True
_KINK_LOG = None


class NonFiniteError(FloatingPointError):
    """Raised when a forward or backward pass produces NaN or Inf."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation / finite differences)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def record_kinks():
    """Collect the activation sign patterns of every leaky ReLU evaluated in the block."""
    global _KINK_LOG
    prev = _KINK_LOG
    _KINK_LOG = []
    try:
        yield _KINK_LOG
    finally:
        _KINK_LOG = prev


def _check_finite(arr, what):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by {what}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op})"

    def __len__(self):
        return len(self.data)

    def detach(self):
        return Tensor(self.data)

    # -- graph machinery --------------------------------------------------
    def backward(self, grad=None):
        """Accumulate gradients of this tensor into every upstream leaf."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            _check_finite(g, f"backward of {node.op}")
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- arithmetic -------------------------------------------------------
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
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data, parents, backward, op):
    _check_finite(data, op)
    out = Tensor(data)
    out.op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _pair(a, b):
    # plain numbers adopt the dtype of the tensor operand
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif not isinstance(b, Tensor) and isinstance(a, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    else:
        a, b = as_tensor(a), as_tensor(b)
    return a, b


# -- elementwise ----------------------------------------------------------
def add(a, b):
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward, "mul")


def power(a, p):
    a = as_tensor(a)
    p = float(p)

    def backward(g):
        return (g * p * a.data ** (p - 1.0),)

    return _result(a.data**p, (a,), backward, f"pow{p:g}")


def exp(a):
    out_data = np.exp(a.data)

    def backward(g):
        return (g * out_data,)

    return _result(out_data, (a,), backward, "exp")


def log(a):
    def backward(g):
        return (g / a.data,)

    return _result(np.log(a.data), (a,), backward, "log")


def leaky_relu(x, slope=0.01):
    """Elementwise ``max(x, slope*x)``; the gradient at exactly 0 is ``slope``."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    x = as_tensor(x)
    pos = x.data > 0
    if _KINK_LOG is not None:
        _KINK_LOG.append(np.packbits(pos))
    factor = np.where(pos, 1.0, slope).astype(x.dtype)

    def backward(g):
        return (g * factor,)

    return _result(x.data * factor, (x,), backward, "leaky_relu")


# -- reductions / shape ---------------------------------------------------
def tsum(a, axis=None, keepdims=False):
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward, "sum")


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / float(n))


def reshape(a, shape):
    def backward(g):
        return (g.reshape(a.shape),)

    return _result(a.data.reshape(shape), (a,), backward, "reshape")


def getitem(a, idx):
    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _result(a.data[idx], (a,), backward, "getitem")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward, "concat")


def logsumexp(a, axis=-1):
    """Stable log-sum-exp along ``axis``.

    Terms are summed in sorted order, so the result is bit-identical under any
    permutation of the reduced axis.
    """
    m = np.max(a.data, axis=axis, keepdims=True)
    shifted = np.exp(a.data - m)
    total = np.sum(np.sort(shifted, axis=axis), axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(total), axis=axis)

    def backward(g):
        return (np.expand_dims(g, axis) * shifted / total,)

    return _result(out, (a,), backward, "logsumexp")


def sorted_mean(a):
    """Mean of a 1-D tensor summed in sorted order (permutation-invariant bits)."""
    n = a.data.size

    def backward(g):
        return (np.full_like(a.data, g / n),)

    return _result(np.sum(np.sort(a.data)) / n, (a,), backward, "sorted_mean")


# -- linear algebra -------------------------------------------------------
def matmul(a, b):
    a, b = _pair(a, b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def dense(x, W, b):
    """Fully connected layer ``y = x W + b`` for ``x`` of shape (B, in)."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.ndim != 2 or W.ndim != 2 or b.ndim != 1:
        raise ValueError(f"dense expects x[B,in], W[in,out], b[out]; got {x.shape}, {W.shape}, {b.shape}")
    if x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ValueError(f"dense shape mismatch: x{x.shape} W{W.shape} b{b.shape}")

    def backward(g):
        return g @ W.data.T, x.data.T @ g, g.sum(axis=0)

    return _result(x.data @ W.data + b.data, (x, W, b), backward, "dense")


# -- convolutions ---------------------------------------------------------
def conv_output_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


@numba.njit(cache=True)
def _im2col_kernel(xp, cols, k, stride, ho, wo):
    B, C = xp.shape[0], xp.shape[1]
    for b in range(B):
        for y in range(ho):
            for x in range(wo):
                r = (b * ho + y) * wo + x
                for c in range(C):
                    base = c * k * k
                    for i in range(k):
                        for j in range(k):
                            cols[r, base + i * k + j] = xp[b, c, y * stride + i, x * stride + j]


@numba.njit(cache=True)
def _col2im_kernel(cols, out, k, stride, ho, wo):
    B, C = out.shape[0], out.shape[1]
    for b in range(B):
        for y in range(ho):
            for x in range(wo):
                r = (b * ho + y) * wo + x
                for c in range(C):
                    base = c * k * k
                    for i in range(k):
                        for j in range(k):
                            out[b, c, y * stride + i, x * stride + j] += cols[r, base + i * k + j]


def _im2col(xp, k, stride, ho, wo):
    # xp: (B, C, Hp, Wp) already padded -> (B*ho*wo, C*k*k)
    B, C = xp.shape[:2]
    cols = np.empty((B * ho * wo, C * k * k), dtype=xp.dtype)
    _im2col_kernel(np.ascontiguousarray(xp), cols, k, stride, ho, wo)
    return cols


def _col2im(cols, shape, k, stride, ho, wo):
    # adjoint scatter-add of _im2col; shape is the padded input shape
    out = np.zeros(shape, dtype=cols.dtype)
    _col2im_kernel(np.ascontiguousarray(cols), out, k, stride, ho, wo)
    return out


def conv2d(x, kernel, bias=None, stride=1, pad=0):
    """2-D cross-correlation, NCHW layout, kernel (F, C, k, k)."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ValueError(f"conv2d expects x[B,C,H,W] and kernel[F,C,k,k]; got {x.shape}, {kernel.shape}")
    B, C, H, W = x.shape
    F, Ck, k, k2 = kernel.shape
    if Ck != C or k != k2:
        raise ValueError(f"conv2d channel/kernel mismatch: x{x.shape} kernel{kernel.shape}")
    ho, wo = conv_output_size(H, k, stride, pad), conv_output_size(W, k, stride, pad)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d output size {ho}x{wo} is not positive (input {H}x{W}, k={k}, stride={stride}, pad={pad})")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _im2col(xp, k, stride, ho, wo)
    wmat = kernel.data.reshape(F, -1)
    y = cols @ wmat.T
    if bias is not None:
        bias = as_tensor(bias)
        y = y + bias.data
    out = y.reshape(B, ho, wo, F).transpose(0, 3, 1, 2)
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, F)
        gx = None
        if x.requires_grad:
            gxp = _col2im(gmat @ wmat, xp.shape, k, stride, ho, wo)
            gx = gxp[:, :, pad : pad + H, pad : pad + W] if pad else gxp
        gk = (gmat.T @ cols).reshape(kernel.shape)
        if bias is None:
            return gx, gk
        return gx, gk, gmat.sum(axis=0)

    return _result(np.ascontiguousarray(out), parents, backward, "conv2d")


def conv_transpose2d(x, kernel, bias=None, stride=1, pad=0):
    """Transposed convolution (adjoint of :func:`conv2d` w.r.t. its input).

    ``x`` is (B, F, h, w) and ``kernel`` is (F, C, k, k); the output is
    (B, C, (h-1)*stride - 2*pad + k, ...).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    B, F, h, w = x.shape
    Fk, C, k, _ = kernel.shape
    if Fk != F:
        raise ValueError(f"conv_transpose2d channel mismatch: x{x.shape} kernel{kernel.shape}")
    H = (h - 1) * stride - 2 * pad + k
    W = (w - 1) * stride - 2 * pad + k
    if H < 1 or W < 1:
        raise ValueError(f"conv_transpose2d output size {H}x{W} is not positive")
    padded = (B, C, H + 2 * pad, W + 2 * pad)
    xmat = x.data.transpose(0, 2, 3, 1).reshape(-1, F)
    wmat = kernel.data.reshape(F, -1)
    outp = _col2im(xmat @ wmat, padded, k, stride, h, w)
    out = outp[:, :, pad : pad + H, pad : pad + W] if pad else outp
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def backward(g):
        gp = np.pad(g, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else g
        cols = _im2col(gp, k, stride, h, w)
        gx = (cols @ wmat.T).reshape(B, h, w, F).transpose(0, 3, 1, 2) if x.requires_grad else None
        gk = (xmat.T @ cols).reshape(kernel.shape)
        if bias is None:
            return gx, gk
        return gx, gk, g.sum(axis=(0, 2, 3))

    return _result(np.ascontiguousarray(out), parents, backward, "conv_transpose2d")
