"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation returns a new ``Tensor``.  When any input requires a
gradient (and recording is enabled), the result remembers its parents and a
closure mapping the output adjoint to one adjoint per parent.  ``backward``
walks the recorded graph in reverse topological order.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import kernels
from .errors import ContractError, DimensionError, NumericError

__all__ = [
    "Tensor", "no_grad", "graph", "as_tensor",
    "add", "sub", "mul", "div", "matmul", "conv2d", "relu", "softmax_rows",
    "channel_stats", "upsample2x", "concat", "l2norm", "sqrt",
]

_recording = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph."""
    global _recording
    prev, _recording = _recording, False
    try:
        yield
    finally:
        _recording = prev


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    __array_ufunc__ = None  # ndarray (op) Tensor defers to Tensor

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return _result(-self.data, (self,), lambda g: (-g,), "neg")

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise TypeError("tensor exponents are not supported")
        x = self.data
        e = float(exponent)
        return _result(x ** e, (self,), lambda g: (g * e * x ** (e - 1),), "pow")

    def __getitem__(self, index):
        x = self.data
        out = x[index]

        parts = index if isinstance(index, tuple) else (index,)
        basic = all(isinstance(i, (int, slice)) or i is None or i is Ellipsis for i in parts)

        def backward(g):
            gx = np.zeros_like(x)
            if basic:
                gx[index] += g
            else:
                np.add.at(gx, index, g)
            return (gx,)

        return _result(out, (self,), backward, "getitem")

    # -- reductions and shape -----------------------------------------------
    def sum(self, axis=None, keepdims=False):
        x = self.data
        out = x.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, x.shape),)

        return _result(out, (self,), backward, "sum")

    def mean(self, axis=None, keepdims=False):
        x = self.data
        if axis is None:
            n = x.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = int(np.prod([x.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.data.shape
        return _result(self.data.reshape(shape), (self,), lambda g: (g.reshape(src),), "reshape")

    def transpose(self, *axes):
        inv = np.argsort(axes)
        return _result(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),), "transpose")

    def swapaxes(self, a, b):
        return _result(np.swapaxes(self.data, a, b), (self,),
                       lambda g: (np.swapaxes(g, a, b),), "swapaxes")

    @property
    def mT(self):
        return self.swapaxes(-1, -2)

    def relu(self):
        return relu(self)

    def sqrt(self):
        return sqrt(self)

    # -- differentiation ----------------------------------------------------
    def backward(self):
        """Accumulate d(self)/d(node) into ``grad`` of every reachable node."""
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("loss is not connected to any tensor that requires grad")
        adjoints = {id(self): np.ones_like(self.data)}
        for node in reversed(graph(self)):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            node.grad = np.array(g, copy=True) if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                adjoints[key] = pg if key not in adjoints else adjoints[key] + pg


def graph(root):
    """Nodes reachable from ``root`` through requires-grad edges, inputs first."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward, op):
    out = Tensor(data)
    if _recording and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        out.op = op
    return out


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    x, y = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g * y, x.shape) if a.requires_grad else None
        gb = _unbroadcast(g * x, y.shape) if b.requires_grad else None
        return ga, gb

    return _result(x * y, (a, b), backward, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    x, y = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g / y, x.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * x / (y * y), y.shape) if b.requires_grad else None
        return ga, gb

    return _result(x / y, (a, b), backward, "div")


def sqrt(x):
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return _result(out, (x,), lambda g: (0.5 * g / out,), "sqrt")


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def l2norm(x, axis=None):
    """Euclidean norm over ``axis``; the subgradient at zero is taken as 0."""
    x = as_tensor(x)
    v = x.data
    n = np.sqrt(np.sum(v * v, axis=axis))

    def backward(g):
        nn, gg = n, g
        if axis is not None:
            nn, gg = np.expand_dims(n, axis), np.expand_dims(g, axis)
        safe = np.where(nn > 0, nn, 1.0)
        return (np.where(nn > 0, gg * v / safe, 0.0),)

    return _result(n, (x,), backward, "l2norm")


# ---------------------------------------------------------------------------
# linear algebra and network operators
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    x, y = a.data, b.data
    if x.ndim < 2 or y.ndim < 2 or x.shape[-1] != y.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {x.shape} @ {y.shape}")

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(y, -1, -2), x.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(x, -1, -2) @ g, y.shape) if b.requires_grad else None
        return ga, gb

    return _result(x @ y, (a, b), backward, "matmul")


def conv2d(x, kernel, stride=1, padding=0):
    """2-D cross-correlation of (B, C, H, W) with (O, C, k, k), zero padding."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    xd, wd = x.data, kernel.data
    if xd.ndim != 4 or wd.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {xd.shape} and {wd.shape}")
    B, C, H, W = xd.shape
    O, Ck, k, k2 = wd.shape
    if Ck != C or k != k2:
        raise DimensionError(f"conv2d kernel {wd.shape} does not fit input {xd.shape}")
    if stride < 1 or padding < 0:
        raise DimensionError(f"invalid stride={stride} / padding={padding}")
    hp, wp = H + 2 * padding, W + 2 * padding
    if k > hp or k > wp:
        raise DimensionError(f"kernel size {k} exceeds padded input {hp}x{wp}")
    ho, wo = (hp - k) // stride + 1, (wp - k) // stride + 1
    w2 = wd.reshape(O, C * k * k)

    if k == 1 and stride == 1 and padding == 0:
        cols = xd.reshape(B, C, H * W)
    else:
        xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
        cols = kernels.im2col(np.ascontiguousarray(xp), k, stride, ho, wo)
    out = np.matmul(w2, cols).reshape(B, O, ho, wo)

    def backward(g):
        g = g.reshape(B, O, ho * wo)
        gw = gx = None
        if kernel.requires_grad:
            gw = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(wd.shape)
        if x.requires_grad:
            gcols = np.matmul(w2.T, g)
            if k == 1 and stride == 1 and padding == 0:
                gx = gcols.reshape(xd.shape)
            else:
                gxp = kernels.col2im(gcols, B, C, hp, wp, k, stride, ho, wo)
                gx = gxp[:, :, padding:padding + H, padding:padding + W] if padding else gxp
        return gx, gw

    return _result(out, (x, kernel), backward, "conv2d")


def softmax_rows(x):
    """Softmax over the last axis with per-row max subtraction."""
    x = as_tensor(x)
    if np.isnan(x.data).any():
        raise NumericError("softmax_rows received NaN input")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - np.sum(g * s, axis=-1, keepdims=True)),)

    return _result(s, (x,), backward, "softmax")


def channel_stats(x):
    """Per-sample, per-channel spatial mean and population variance."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"channel_stats expects (B, C, H, W), got {x.shape}")
    mean = x.mean(axis=(2, 3))
    centered = x - mean.reshape(*mean.shape, 1, 1)
    var = (centered * centered).mean(axis=(2, 3))
    return mean, var


def upsample2x(x):
    """Nearest-neighbour x2 upsampling of (B, C, H, W)."""
    x = as_tensor(x)
    B, C, H, W = x.shape
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    return _result(out, (x,), lambda g: (g.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5)),), "upsample")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis),
                   tuple(tensors), backward, "concat")
