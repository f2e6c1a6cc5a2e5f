"""Dense float64 tensors with taped reverse-mode differentiation.

Every array in the package is a :class:`Tensor`: a C-contiguous row-major
float64 buffer plus an optional gradient accumulator.  Primitive ops record
their inputs and a backward rule on the output tensor; :func:`backward`
collects the reachable records into a :class:`GradTape` and replays them in
reverse to populate ``.grad`` on every ``requires_grad`` leaf.

Ops that produce non-finite values from finite inputs raise
:class:`NumericError` immediately instead of letting NaNs propagate.
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy.special import erf

from . import kernels
from .errors import NumericError, ShapeError, UsageError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

_grad_enabled = True
_finite_checks = True


@contextlib.contextmanager
def no_grad():
    """Disable op recording inside the block (inference, data prep)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


@contextlib.contextmanager
def finite_checks(enabled: bool):
    """Toggle the NaN/Inf guard on op outputs (on by default)."""
    global _finite_checks
    previous = _finite_checks
    _finite_checks = enabled
    try:
        yield
    finally:
        _finite_checks = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _non_scalar(self)

    def numpy(self) -> np.ndarray:
        """The underlying array. Treat as read-only; ops never alias it."""
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise UsageError("tensor/tensor division is not a primitive; multiply by a reciprocal")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, *axes):
        return transpose(self, axes[0] if len(axes) == 1 and isinstance(axes[0], (tuple, list)) else axes)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _non_scalar(t):
    raise UsageError(f"item() needs a single-element tensor, got shape {t.shape}")


class _Node:
    """One recorded primitive application: inputs + backward rule."""

    __slots__ = ("op", "inputs", "vjp")

    def __init__(self, op, inputs, vjp):
        self.op = op
        self.inputs = inputs
        self.vjp = vjp


def _finite_or_raise(arr, op):
    if _finite_checks and not np.all(np.isfinite(arr)):
        raise NumericError(f"op {op!r} produced non-finite values")


def _make(out_data, op, inputs, vjp):
    _finite_or_raise(out_data, op)
    out = Tensor(out_data)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = _Node(op, inputs, vjp)
    return out


def _reduce_to(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class GradTape:
    """Ordered list of primitive applications reachable from a root tensor.

    Replaying the entries in reverse order drives gradients from the root
    to every ``requires_grad`` leaf below it.
    """

    def __init__(self, root: Tensor):
        entries = []
        seen = set()
        stack = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            if tensor.node is None:
                continue
            if expanded:
                entries.append(tensor)
                continue
            if id(tensor) in seen:
                continue
            seen.add(id(tensor))
            stack.append((tensor, True))
            for parent in tensor.node.inputs:
                stack.append((parent, False))
        self.entries = entries  # topological order: producers first

    def replay_backward(self, root: Tensor, seed: np.ndarray):
        grads = {id(root): seed}
        for tensor in reversed(self.entries):
            grad_out = grads.pop(id(tensor), None)
            if grad_out is None:
                continue
            for parent, grad in zip(tensor.node.inputs, tensor.node.vjp(grad_out)):
                if grad is None or not parent.requires_grad:
                    continue
                if parent.node is None:  # leaf: accumulate into .grad
                    if parent.grad is None:
                        parent.grad = np.zeros_like(parent.data)
                    parent.grad += grad
                else:
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + grad
                    else:
                        grads[key] = grad


def backward(loss: Tensor, seed=None):
    """Populate ``.grad`` on every requires_grad leaf reachable from loss.

    Repeated calls accumulate; zero grads between steps.  A non-scalar
    root needs an explicit seed gradient of the same shape.
    """
    if seed is None:
        if loss.size != 1:
            raise UsageError(f"backward on non-scalar shape {loss.shape} requires a seed gradient")
        seed = np.ones_like(loss.data)
    else:
        seed = np.ascontiguousarray(seed, dtype=np.float64)
        if seed.shape != loss.data.shape:
            raise ShapeError(f"seed shape {seed.shape} != loss shape {loss.data.shape}")
    if loss.node is None:
        if loss.requires_grad:
            if loss.grad is None:
                loss.grad = np.zeros_like(loss.data)
            loss.grad += seed
        return
    GradTape(loss).replay_backward(loss, seed)


# -- elementwise and structural primitives ---------------------------------

def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        out = a.data + b.data
        return _make(out, "add", (a, b),
                     lambda g: (_reduce_to(g, a.data.shape), _reduce_to(g, b.data.shape)))
    return _make(a.data + float(b), "add", (a,), lambda g: (g,))


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        out = a.data * b.data
        return _make(out, "mul", (a, b),
                     lambda g: (_reduce_to(g * b.data, a.data.shape),
                                _reduce_to(g * a.data, b.data.shape)))
    s = float(b)
    return _make(a.data * s, "mul", (a,), lambda g: (g * s,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = np.matmul(a.data, b.data)

    def vjp(g):
        ga = _reduce_to(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape)
        gb = _reduce_to(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape)
        return ga, gb

    return _make(out, "matmul", (a, b), vjp)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    out = x.data.reshape(shape)
    return _make(out, "reshape", (x,), lambda g: (g.reshape(x.data.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(int(a) for a in axes)
    inverse = tuple(np.argsort(axes))
    return _make(x.data.transpose(axes), "transpose", (x,),
                 lambda g: (np.ascontiguousarray(g.transpose(inverse)),))


def concat(tensors, axis: int) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(out, "concat", tuple(tensors), vjp)


def tsum(x: Tensor) -> Tensor:
    return _make(np.asarray(x.data.sum()), "sum", (x,),
                 lambda g: (np.broadcast_to(g, x.data.shape).copy(),))


def tmean(x: Tensor) -> Tensor:
    n = x.data.size
    return _make(np.asarray(x.data.mean()), "mean", (x,),
                 lambda g: (np.broadcast_to(g / n, x.data.shape).copy(),))


# -- nonlinearities ---------------------------------------------------------

def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return ((g - inner) * out,)

    return _make(out, "softmax", (x,), vjp)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def vjp(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
        return (g * (cdf + x.data * pdf),)

    return _make(out, "gelu", (x,), vjp)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    D = x.shape[-1]
    if gamma.shape != (D,) or beta.shape != (D,):
        raise ShapeError(f"layer_norm affine params must be ({D},), got {gamma.shape} and {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = gamma.data * xhat + beta.data

    def vjp(g):
        dgamma = _reduce_to(g * xhat, gamma.data.shape).reshape(gamma.data.shape)
        dbeta = _reduce_to(g, beta.data.shape).reshape(beta.data.shape)
        dxhat = g * gamma.data
        dx = (dxhat - dxhat.mean(axis=-1, keepdims=True)
              - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)) * inv_std
        return dx, dgamma, dbeta

    return _make(out, "layer_norm", (x, gamma, beta), vjp)


def smooth_l1(pred: Tensor, target: Tensor, beta: float = 1.0) -> Tensor:
    """Mean Huber penalty: 0.5 d^2/beta inside |d|<beta, |d|-0.5 beta outside."""
    if pred.shape != target.shape:
        raise ShapeError(f"smooth_l1 shapes disagree: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    absd = np.abs(diff)
    quad = absd < beta
    vals = np.where(quad, 0.5 * diff * diff / beta, absd - 0.5 * beta)
    n = diff.size

    def vjp(g):
        d = np.where(quad, diff / beta, np.sign(diff)) * (g / n)
        return d, -d

    return _make(np.asarray(vals.mean()), "smooth_l1", (pred, target), vjp)


# -- convolutions ------------------------------------------------------------

def _batched(x: Tensor, spatial_ndim: int):
    if x.ndim == spatial_ndim + 1:
        return x.data[None], True
    if x.ndim == spatial_ndim + 2:
        return x.data, False
    raise ShapeError(f"expected {spatial_ndim + 1}-d or {spatial_ndim + 2}-d input, got shape {x.shape}")


def _conv_checks(xs, w, stride, padding, groups, spatial_ndim, op):
    Cin = xs.shape[1]
    Cout, Cg = w.shape[0], w.shape[1]
    if Cin % groups or Cout % groups:
        raise ShapeError(f"{op}: groups={groups} must divide channels in={Cin} out={Cout}")
    if Cg != Cin // groups:
        raise ShapeError(f"{op}: weight expects {Cg * groups} input channels, input has {Cin}")
    for i in range(spatial_ndim):
        size = xs.shape[2 + i] + 2 * padding
        k = w.shape[2 + i]
        if k > size:
            raise ShapeError(f"{op}: kernel {k} larger than padded input {size} on axis {i}")
        if (size - k) // stride + 1 < 1:
            raise ShapeError(f"{op}: empty output on axis {i}")


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """2D cross-correlation. x is [C,H,W] or [B,C,H,W]; w is [Cout,Cin/groups,kh,kw]."""
    xs, squeeze = _batched(x, 2)
    _conv_checks(xs, w.data, stride, padding, groups, 2, "conv2d")
    H, W = xs.shape[2], xs.shape[3]
    kh, kw = w.shape[2], w.shape[3]
    y = kernels.conv2d_fwd(xs, w.data, stride, padding, groups)
    if bias is not None:
        y = y + bias.data[None, :, None, None]
    inputs = (x, w) if bias is None else (x, w, bias)

    def vjp(g):
        g = g[None] if squeeze else g
        gx = kernels.conv2d_gx(g, w.data, stride, padding, groups, H, W)
        gw = kernels.conv2d_gw(xs, g, stride, padding, groups, kh, kw)
        gx = gx[0] if squeeze else gx
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _make(y[0] if squeeze else y, "conv2d", inputs, vjp)


def conv_transpose2d(x: Tensor, w: Tensor, bias: Tensor | None = None,
                     stride: int = 2, padding: int = 0) -> Tensor:
    """Transposed 2D conv (adjoint of conv2d). w is [Cin,Cout,kh,kw]."""
    xs, squeeze = _batched(x, 2)
    if xs.shape[1] != w.shape[0]:
        raise ShapeError(f"conv_transpose2d: input channels {xs.shape[1]} != weight Cin {w.shape[0]}")
    kh, kw = w.shape[2], w.shape[3]
    if (xs.shape[2] - 1) * stride - 2 * padding + kh < 1:
        raise ShapeError("conv_transpose2d: empty output")
    y = kernels.convt2d_fwd(xs, w.data, stride, padding)
    if bias is not None:
        y = y + bias.data[None, :, None, None]
    inputs = (x, w) if bias is None else (x, w, bias)

    def vjp(g):
        g = g[None] if squeeze else g
        gx = kernels.convt2d_gx(g, w.data, stride, padding)
        gw = kernels.convt2d_gw(xs, g, stride, padding, kh, kw)
        gx = gx[0] if squeeze else gx
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _make(y[0] if squeeze else y, "conv_transpose2d", inputs, vjp)


def conv3d(x: Tensor, w: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """3D cross-correlation over (depth, height, width); depthwise when groups==Cin."""
    xs, squeeze = _batched(x, 3)
    _conv_checks(xs, w.data, stride, padding, groups, 3, "conv3d")
    D, H, W = xs.shape[2], xs.shape[3], xs.shape[4]
    kd, kh, kw = w.shape[2], w.shape[3], w.shape[4]
    y = kernels.conv3d_fwd(xs, w.data, stride, padding, groups)
    if bias is not None:
        y = y + bias.data[None, :, None, None, None]
    inputs = (x, w) if bias is None else (x, w, bias)

    def vjp(g):
        g = g[None] if squeeze else g
        gx = kernels.conv3d_gx(g, w.data, stride, padding, groups, D, H, W)
        gw = kernels.conv3d_gw(xs, g, stride, padding, groups, kd, kh, kw)
        gx = gx[0] if squeeze else gx
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3, 4))

    return _make(y[0] if squeeze else y, "conv3d", inputs, vjp)


def linear(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ w (+ bias broadcast over leading axes)."""
    y = matmul(x, w)
    return add(y, bias) if bias is not None else y
