"""Dense tensors with reverse-mode automatic differentiation on a numpy backend.

Every operation builds a tape node holding references to its inputs and a
closure that routes the output gradient back to them.  `backward()` on a
scalar walks the tape in reverse topological order.  Training runs in
float32; gradient-check suites switch the default dtype to float64 via
`default_dtype`.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    """Dimension mismatch; the message names the offending axis."""


class NonFiniteError(FloatingPointError):
    """A NaN/Inf reached a place that requires finite values."""


_state = threading.local()


def _dtype() -> np.dtype:
    return getattr(_state, "dtype", np.float32)


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def default_dtype(dtype):
    """Temporarily switch the dtype used for new tensors (float32/float64)."""
    prev = _dtype()
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = prev


@contextmanager
def no_grad():
    """Disable tape construction inside the block (inference mode)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf", _parents=()):
        if isinstance(data, Tensor):
            data = data.data
        if isinstance(data, (np.ndarray, np.generic)) and data.dtype in (
            np.float32,
            np.float64,
        ):
            arr = np.asarray(data)
        else:
            arr = np.asarray(data, dtype=_dtype())
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents = _parents
        self._backward = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.shape}, grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray, own: bool = False):
        """Add g into .grad; own=True lets this tensor keep g without copying
        (callers promise g is freshly derived for this tensor alone)."""
        if g.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g if own else g.copy()
        else:
            self.grad += g

    # -- autodiff ------------------------------------------------------------

    def backward(self):
        """Populate .grad on every reachable requires_grad tensor.

        Repeated calls without zero_grad accumulate.  The loss must be a
        finite scalar.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError(f"non-finite loss produced by op {self.op!r}")
        order = topo_order(self)
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def topo_order(root: Tensor) -> list:
    """Iterative DFS topological ordering of the tape rooted at `root`."""
    order, visited = [], set()
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


def backward(loss: Tensor):
    """Free-function alias for Tensor.backward."""
    loss.backward()


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, op, backward_fn) -> Tensor:
    tracked = _grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=tracked, op=op, _parents=tuple(parents) if tracked else ())
    if tracked:
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to `shape`."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic ---------------------------------------------------------------


def add(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        scalar = float(b)

        def bwd_scalar(g):
            a.accumulate_grad(g)

        return _make(a.data + scalar, (a,), "add", bwd_scalar)
    if isinstance(a, (int, float)):
        return add(b, a)
    a, b = _wrap(a), _wrap(b)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), "add", bwd)


def sub(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        return add(a, -float(b))
    if isinstance(a, (int, float)) and isinstance(b, Tensor):
        scalar = float(a)

        def bwd_scalar(g):
            b.accumulate_grad(-g, own=True)

        return _make(scalar - b.data, (b,), "sub", bwd_scalar)
    a, b = _wrap(a), _wrap(b)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), "sub", bwd)


def mul(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        scalar = float(b)

        def bwd_scalar(g):
            a.accumulate_grad(g * scalar, own=True)

        return _make(a.data * scalar, (a,), "mul", bwd_scalar)
    a, b = _wrap(a), _wrap(b)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape), own=True)
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape), own=True)

    return _make(a.data * b.data, (a, b), "mul", bwd)


def div(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        scalar = float(b)

        def bwd_by_scalar(g):
            a.accumulate_grad(g / scalar, own=True)

        return _make(a.data / scalar, (a,), "div", bwd_by_scalar)
    if isinstance(a, (int, float)) and isinstance(b, Tensor):
        scalar = float(a)

        def bwd_scalar(g):
            b.accumulate_grad(-g * scalar / (b.data * b.data), own=True)

        return _make(scalar / b.data, (b,), "div", bwd_scalar)
    a, b = _wrap(a), _wrap(b)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.data, a.shape), own=True)
        if b.requires_grad:
            b.accumulate_grad(
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape), own=True
            )

    return _make(a.data / b.data, (a, b), "div", bwd)


def power(a, exponent: float) -> Tensor:
    a = _wrap(a)
    e = float(exponent)

    def bwd(g):
        a.accumulate_grad(g * e * np.power(a.data, e - 1.0), own=True)

    return _make(np.power(a.data, e), (a,), "pow", bwd)


def sqrt(a) -> Tensor:
    a = _wrap(a)
    out_data = np.sqrt(a.data)

    def bwd(g):
        a.accumulate_grad(g * 0.5 / out_data, own=True)

    return _make(out_data, (a,), "sqrt", bwd)


def exp(a) -> Tensor:
    a = _wrap(a)
    out_data = np.exp(a.data)

    def bwd(g):
        a.accumulate_grad(g * out_data, own=True)

    return _make(out_data, (a,), "exp", bwd)


def log(a) -> Tensor:
    a = _wrap(a)

    def bwd(g):
        a.accumulate_grad(g / a.data, own=True)

    return _make(np.log(a.data), (a,), "log", bwd)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes through inside [lo, hi] inclusive."""
    a = _wrap(a)
    mask = (a.data >= lo) & (a.data <= hi)

    def bwd(g):
        a.accumulate_grad(g * mask, own=True)

    return _make(np.clip(a.data, lo, hi), (a,), "clip", bwd)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner axes disagree: axis 1 of left is {a.shape[1]}, "
            f"axis 0 of right is {b.shape[0]}"
        )

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T, own=True)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g, own=True)

    return _make(a.data @ b.data, (a, b), "matmul", bwd)


def reshape(a, *shape) -> Tensor:
    a = _wrap(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])

    def bwd(g):
        a.accumulate_grad(g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), "reshape", bwd)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)

    def bwd(g):
        if axis is None:
            a.accumulate_grad(np.broadcast_to(g, a.shape).copy(), own=True)
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(g, a.shape).copy(), own=True)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum", bwd)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    count = a.size if axis is None else math.prod(
        a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))
    )

    def bwd(g):
        if axis is None:
            a.accumulate_grad(np.broadcast_to(g / count, a.shape).copy(), own=True)
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(g / count, a.shape).copy(), own=True)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), "mean", bwd)


def concat_channels(a, b) -> Tensor:
    """Concatenate along the trailing (channel) axis."""
    a, b = _wrap(a), _wrap(b)
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(
            f"concat_channels needs matching leading axes, got {a.shape} vs {b.shape}"
        )
    split = a.shape[-1]

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g[..., :split])
        if b.requires_grad:
            b.accumulate_grad(g[..., split:])

    return _make(np.concatenate([a.data, b.data], axis=-1), (a, b), "concat_channels", bwd)


def slice_batch(a, start: int, stop: int) -> Tensor:
    """View of rows [start, stop) along the leading axis."""
    a = _wrap(a)
    if not 0 <= start < stop <= a.shape[0]:
        raise ShapeError(
            f"slice_batch [{start}:{stop}] outside leading axis of {a.shape[0]}"
        )

    def bwd(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        a.accumulate_grad(full, own=True)

    return _make(a.data[start:stop], (a,), "slice_batch", bwd)


# -- activations and pointwise nonlinearities ---------------------------------


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _wrap(a)
    one = a.data.dtype.type(1.0)
    factor = np.where(a.data > 0, one, a.data.dtype.type(slope))

    def bwd(g):
        a.accumulate_grad(g * factor, own=True)

    return _make(a.data * factor, (a,), "leaky_relu", bwd)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    # split by sign for overflow-free evaluation
    out_data = np.empty_like(a.data)
    pos = a.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    out_data[~pos] = ez / (1.0 + ez)

    def bwd(g):
        a.accumulate_grad(g * out_data * (1.0 - out_data), own=True)

    return _make(out_data, (a,), "sigmoid", bwd)


def softmax_channels(a) -> Tensor:
    """Softmax over the trailing (channel) axis; sums to 1 per position."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        gs = g * out_data
        a.accumulate_grad(gs - out_data * gs.sum(axis=-1, keepdims=True), own=True)

    return _make(out_data, (a,), "softmax_channels", bwd)


def dropout(a, rate: float, rng: np.random.Generator, train: bool = True) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-rate); identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    a = _wrap(a)
    if not train or rate == 0.0:
        return a
    keep = (rng.random(a.shape, dtype=np.float32) >= rate).astype(a.dtype)
    keep /= 1.0 - rate

    def bwd(g):
        a.accumulate_grad(g * keep, own=True)

    return _make(a.data * keep, (a,), "dropout", bwd)


# -- spatial ops (NHWC layout) -------------------------------------------------


def _check_nhwc(a: Tensor, name: str):
    if a.ndim != 4:
        raise ShapeError(f"{name} needs a B,H,W,C tensor, got {a.ndim} axes")


def downsample2x(a) -> Tensor:
    """2x2 average pooling, stride 2."""
    a = _wrap(a)
    _check_nhwc(a, "downsample2x")
    b, h, w, c = a.shape
    if h % 2 or w % 2:
        raise ShapeError(f"downsample2x needs even spatial axes, got H={h}, W={w}")
    out_data = a.data.reshape(b, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

    def bwd(g):
        gexp = np.broadcast_to(
            g[:, :, None, :, None, :] * 0.25, (b, h // 2, 2, w // 2, 2, c)
        )
        a.accumulate_grad(gexp.reshape(b, h, w, c), own=True)

    return _make(out_data, (a,), "downsample2x", bwd)


def upsample2x(a) -> Tensor:
    """Nearest-neighbour 2x upsampling."""
    a = _wrap(a)
    _check_nhwc(a, "upsample2x")
    b, h, w, c = a.shape
    out_data = np.broadcast_to(
        a.data[:, :, None, :, None, :], (b, h, 2, w, 2, c)
    ).reshape(b, 2 * h, 2 * w, c)

    def bwd(g):
        a.accumulate_grad(g.reshape(b, h, 2, w, 2, c).sum(axis=(2, 4)), own=True)

    return _make(out_data, (a,), "upsample2x", bwd)


def _conv_geometry(extent: int, k: int, stride: int, dilation: int, padding: str):
    """Output extent and (before, after) zero padding for one spatial axis."""
    ke = (k - 1) * dilation + 1
    if padding == "same":
        out = -(-extent // stride)  # ceil
        total = max(0, (out - 1) * stride + ke - extent)
        return out, total // 2, total - total // 2
    if padding == "valid":
        if extent < ke:
            raise ShapeError(
                f"valid conv needs extent >= effective kernel {ke}, got {extent}"
            )
        return (extent - ke) // stride + 1, 0, 0
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def _gather_cols(xp: np.ndarray, oh: int, ow: int, k: int, stride: int, dilation: int):
    """im2col: strided view of the padded input, materialised contiguously."""
    b, _, _, ci = xp.shape
    sb, sh, sw, sc = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, oh, ow, k, k, ci),
        strides=(sb, sh * stride, sw * stride, sh * dilation, sw * dilation, sc),
    )
    return np.ascontiguousarray(view).reshape(b * oh * ow, k * k * ci)


def _pad_nhwc(x: np.ndarray, pt: int, pb: int, pl: int, pr: int) -> np.ndarray:
    if pt == pb == pl == pr == 0:
        return x
    b, h, w, c = x.shape
    xp = np.zeros((b, h + pt + pb, w + pl + pr, c), dtype=x.dtype)
    xp[:, pt : pt + h, pl : pl + w, :] = x
    return xp


def conv2d(x, kernel, stride: int = 1, dilation: int = 1, padding: str = "same") -> Tensor:
    """Dilated 2-D cross-correlation, NHWC input against a K,K,I,O kernel."""
    x, kernel = _wrap(x), _wrap(kernel)
    _check_nhwc(x, "conv2d")
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d kernel needs K,K,I,O axes, got {kernel.ndim} axes")
    k, k2, ci, co = kernel.shape
    if k != k2:
        raise ShapeError(f"conv2d kernel must be square, got axes 0/1 = {k}x{k2}")
    if k < 1 or stride < 1 or dilation < 1:
        raise ValueError("conv2d needs kernel size, stride and dilation >= 1")
    b, h, w, cx = x.shape
    if cx != ci:
        raise ShapeError(
            f"conv2d channel mismatch: input axis 3 is {cx}, kernel axis 2 is {ci}"
        )

    oh, pt, pb = _conv_geometry(h, k, stride, dilation, padding)
    ow, pl, pr = _conv_geometry(w, k, stride, dilation, padding)
    w2 = kernel.data.reshape(k * k * ci, co)

    if k == 1 and stride == 1:
        x2 = x.data.reshape(b * h * w, ci)
        out_data = (x2 @ w2).reshape(b, h, w, co)

        def bwd_1x1(g):
            g2 = g.reshape(b * h * w, co)
            if kernel.requires_grad:
                kernel.accumulate_grad((x2.T @ g2).reshape(kernel.shape), own=True)
            if x.requires_grad:
                x.accumulate_grad((g2 @ w2.T).reshape(x.shape), own=True)

        return _make(out_data, (x, kernel), "conv2d", bwd_1x1)

    xp = _pad_nhwc(x.data, pt, pb, pl, pr)
    cols = _gather_cols(xp, oh, ow, k, stride, dilation)
    out_data = (cols @ w2).reshape(b, oh, ow, co)

    # input-gradient route: scatter-add is cheaper when the transposed
    # correlation's padding blow-up and channel count outweigh it
    pad_blowup = ((h + 2 * (k - 1) * dilation) / h) ** 2
    use_scatter = stride > 1 or 3 * ci <= 2 * co * pad_blowup

    def bwd(g):
        g2 = g.reshape(b * oh * ow, co)
        if kernel.requires_grad:
            kernel.accumulate_grad((cols.T @ g2).reshape(kernel.shape), own=True)
        if not x.requires_grad:
            return
        if use_scatter:
            dcols = (g2 @ w2.T).reshape(b, oh, ow, k, k, ci)
            dxp = np.zeros_like(xp)
            for ki in range(k):
                for kj in range(k):
                    dxp[
                        :,
                        ki * dilation : ki * dilation + oh * stride : stride,
                        kj * dilation : kj * dilation + ow * stride : stride,
                        :,
                    ] += dcols[:, :, :, ki, kj, :]
        else:
            # correlate the padded output gradient with the spatially
            # flipped, I/O-swapped kernel
            wf = kernel.data[::-1, ::-1].transpose(0, 1, 3, 2)
            pad = (k - 1) * dilation
            gp = _pad_nhwc(g, pad, pad, pad, pad)
            gcols = _gather_cols(gp, h + pt + pb, w + pl + pr, k, 1, dilation)
            dxp = (gcols @ np.ascontiguousarray(wf).reshape(k * k * co, ci)).reshape(
                b, h + pt + pb, w + pl + pr, ci
            )
        x.accumulate_grad(dxp[:, pt : pt + h, pl : pl + w, :], own=True)

    return _make(out_data, (x, kernel), "conv2d", bwd)


def dense(x, weight, bias) -> Tensor:
    """Affine map for a 1,N row vector: x @ weight + bias."""
    x, weight, bias = _wrap(x), _wrap(weight), _wrap(bias)
    if x.ndim != 2 or weight.ndim != 2 or bias.ndim != 2:
        raise ShapeError("dense needs 2-D input, weight and bias")
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(
            f"dense inner axes disagree: input axis 1 is {x.shape[1]}, "
            f"weight axis 0 is {weight.shape[0]}"
        )
    if bias.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"dense bias axis 1 is {bias.shape[1]}, expected {weight.shape[1]}"
        )
    return add(matmul(x, weight), bias)


# -- losses as primitive ops ---------------------------------------------------


def mse(a, b) -> Tensor:
    """Mean squared error over all elements."""
    a, b = _wrap(a), _wrap(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse needs matching shapes, got {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size

    def bwd(g):
        scale = g * (2.0 / n)
        if a.requires_grad:
            a.accumulate_grad(scale * diff, own=True)
        if b.requires_grad:
            b.accumulate_grad(-scale * diff, own=True)

    return _make(np.asarray((diff * diff).mean(), dtype=a.dtype), (a, b), "mse", bwd)


BCE_CLAMP = 1e-7


def bce(p, target) -> Tensor:
    """Binary cross-entropy, mean per element; p clamped to (0,1) at 1e-7.

    The target is a constant (labels / scheduled targets) and may broadcast
    against p; it must lie in [0, 1].
    """
    p = _wrap(p)
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=p.dtype)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("bce target must lie in [0, 1]")
    inside = (p.data >= BCE_CLAMP) & (p.data <= 1.0 - BCE_CLAMP)
    pc = np.clip(p.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    tb = np.broadcast_to(t, pc.shape)
    val = -(tb * np.log(pc) + (1.0 - tb) * np.log1p(-pc)).mean()
    n = pc.size

    def bwd(g):
        dp = (pc - tb) / (pc * (1.0 - pc)) * (g / n)
        p.accumulate_grad(np.where(inside, dp, 0.0).astype(p.dtype), own=True)

    return _make(np.asarray(val, dtype=p.dtype), (p,), "bce", bwd)
