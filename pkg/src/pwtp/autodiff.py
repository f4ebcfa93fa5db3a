"""Minimal reverse-mode differentiation over dense float64 arrays.

The op set is exactly what the projector, objectives and recognizer need:
broadcasting elementwise arithmetic, matmul, strided 2D convolution, batched
SPD solves, bilinear upsampling, reductions and a few pointwise
nonlinearities. It is a tape of Var nodes, not a general framework.
"""

import numpy as np
from scipy.special import erf

from .linalg import spd_solve_batch


class Var:
    """A node in the computation graph: a value plus a gradient slot."""

    __slots__ = ("value", "grad", "parents")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        # parents: sequence of (Var, vjp) where vjp maps the output cotangent
        # to this parent's cotangent contribution
        self.parents = parents

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    # convenience arithmetic so composite code reads naturally
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

    def __neg__(self):
        return mul(self, -1.0)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _toposort(root: Var):
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
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order  # parents before children


def backward(root: Var):
    """Accumulate gradients of a scalar root into every reachable node.

    Each node is visited exactly once, in reverse topological order.
    """
    if root.value.size != 1:
        raise ValueError("backward requires a scalar root")
    order = _toposort(root)
    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        g = node.grad
        for parent, vjp in node.parents:
            parent.grad = parent.grad + vjp(g)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a cotangent back down to the original (broadcast-from) shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = as_var(a), as_var(b)
    return Var(
        a.value + b.value,
        [
            (a, lambda g, s=a.shape: _unbroadcast(g, s)),
            (b, lambda g, s=b.shape: _unbroadcast(g, s)),
        ],
    )


def sub(a, b):
    a, b = as_var(a), as_var(b)
    return Var(
        a.value - b.value,
        [
            (a, lambda g, s=a.shape: _unbroadcast(g, s)),
            (b, lambda g, s=b.shape: _unbroadcast(-g, s)),
        ],
    )


def mul(a, b):
    a, b = as_var(a), as_var(b)
    return Var(
        a.value * b.value,
        [
            (a, lambda g, bv=b.value, s=a.shape: _unbroadcast(g * bv, s)),
            (b, lambda g, av=a.value, s=b.shape: _unbroadcast(g * av, s)),
        ],
    )


def div(a, b):
    a, b = as_var(a), as_var(b)
    out = a.value / b.value
    return Var(
        out,
        [
            (a, lambda g, bv=b.value, s=a.shape: _unbroadcast(g / bv, s)),
            (
                b,
                lambda g, av=a.value, bv=b.value, s=b.shape: _unbroadcast(
                    -g * av / (bv * bv), s
                ),
            ),
        ],
    )


def exp(a):
    a = as_var(a)
    out = np.exp(a.value)
    return Var(out, [(a, lambda g, o=out: g * o)])


def log(a):
    a = as_var(a)
    return Var(np.log(a.value), [(a, lambda g, v=a.value: g / v)])


def sqrt(a):
    a = as_var(a)
    out = np.sqrt(a.value)
    return Var(out, [(a, lambda g, o=out: g * 0.5 / o)])


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a):
    """Exact (erf-based) GELU."""
    a = as_var(a)
    x = a.value
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))

    def vjp(g, x=x, cdf=cdf):
        return g * (cdf + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI)

    return Var(x * cdf, [(a, vjp)])


def stop_gradient(a) -> Var:
    return Var(as_var(a).value)


# ----------------------------------------------------------------- reshaping


def reshape(a, shape):
    a = as_var(a)
    old = a.shape
    return Var(a.value.reshape(shape), [(a, lambda g, s=old: g.reshape(s))])


def transpose(a, axes):
    a = as_var(a)
    inv = np.argsort(axes)
    return Var(
        a.value.transpose(axes), [(a, lambda g, inv=tuple(inv): g.transpose(inv))]
    )


def swap_last2(a):
    a = as_var(a)
    return Var(
        np.swapaxes(a.value, -1, -2), [(a, lambda g: np.swapaxes(g, -1, -2))]
    )


# ---------------------------------------------------------------- reductions


def sum_(a, axis=None, keepdims=False):
    a = as_var(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)
    in_shape = a.shape

    def vjp(g, axis=axis, keepdims=keepdims, in_shape=in_shape):
        if axis is None:
            return np.broadcast_to(g, in_shape).copy()
        if not keepdims:
            ax = axis if isinstance(axis, tuple) else (axis,)
            ax = tuple(a % len(in_shape) for a in ax)
            shape = [1 if i in ax else n for i, n in enumerate(in_shape)]
            g = g.reshape(shape)
        return np.broadcast_to(g, in_shape).copy()

    return Var(out, [(a, vjp)])


def mean_(a, axis=None, keepdims=False):
    a = as_var(a)
    if axis is None:
        n = a.value.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[i] for i in ax]))
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


# -------------------------------------------------------------------- matmul


def matmul(a, b):
    a, b = as_var(a), as_var(b)
    out = np.matmul(a.value, b.value)

    def vjp_a(g, bv=b.value, s=a.shape):
        ga = np.matmul(g, np.swapaxes(bv, -1, -2))
        return _unbroadcast(ga, s) if ga.shape != tuple(s) else ga

    def vjp_b(g, av=a.value, s=b.shape):
        gb = np.matmul(np.swapaxes(av, -1, -2), g)
        return _unbroadcast(gb, s) if gb.shape != tuple(s) else gb

    return Var(out, [(a, vjp_a), (b, vjp_b)])


# ----------------------------------------------------------- batched solves


def spd_solve(mats, rhs, ridge: float = 0.0):
    """Differentiable z = (M + ridge*I)^{-1} r for stacks of small SPD M.

    Cotangents: r_bar = (M+eI)^{-1} g, M_bar = -r_bar z^T.
    """
    mats, rhs = as_var(mats), as_var(rhs)
    reg = mats.value + ridge * np.eye(mats.value.shape[-1])
    z = spd_solve_batch(mats.value, rhs.value, ridge=ridge)

    def solve_reg(g):
        return spd_solve_batch(reg, g, ridge=0.0)

    def vjp_rhs(g):
        return solve_reg(g)

    def vjp_mats(g):
        rbar = solve_reg(g)
        return -np.matmul(rbar, np.swapaxes(z, -1, -2))

    return Var(z, [(mats, vjp_mats), (rhs, vjp_rhs)])


# -------------------------------------------------- pairwise frame products


def pairwise_dot(x, scale: float = 1.0):
    """All scaled inner products between distinct rows of each batch item.

    x: (B, T, F) -> (B, T*(T-1)/2) with pairs (t1, t2), t1 < t2, in ascending
    row-major order.
    """
    x = as_var(x)
    t = x.shape[-2]
    iu = np.triu_indices(t, k=1)
    gram = np.matmul(x.value, np.swapaxes(x.value, -1, -2)) * scale
    out = gram[..., iu[0], iu[1]]

    def vjp(g, xv=x.value, iu=iu, t=t, scale=scale):
        s = np.zeros(xv.shape[:-2] + (t, t))
        s[..., iu[0], iu[1]] = g
        return scale * np.matmul(s + np.swapaxes(s, -1, -2), xv)

    return Var(out, [(x, vjp)])


# --------------------------------------------------------------- convolution


def conv_output_size(n: int, k: int, s: int):
    out = -(-n // s)  # ceil
    pad = max((out - 1) * s + k - n, 0)
    return out, pad


def conv2d(x, w, stride: int):
    """Per-frame 2D convolution with zero padding and ceil output size.

    x: (N, H, W, Cin), w: (k, k, Cin, Cout) -> (N, ceil(H/s), ceil(W/s), Cout).
    The total pad per axis is split floor/ceil between the two sides.
    """
    x, w = as_var(x), as_var(w)
    n, h, wd, cin = x.shape
    k = w.shape[0]
    if h < k or wd < k:
        raise ValueError(f"clip too small: spatial extent {h}x{wd} < kernel {k}")
    s = stride
    oh, ph = conv_output_size(h, k, s)
    ow, pw = conv_output_size(wd, k, s)
    xpad = np.pad(
        x.value,
        ((0, 0), (ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2), (0, 0)),
    )
    out = np.zeros((n, oh, ow, w.shape[3]))
    for di in range(k):
        for dj in range(k):
            sl = xpad[:, di : di + (oh - 1) * s + 1 : s, dj : dj + (ow - 1) * s + 1 : s]
            out += np.matmul(sl, w.value[di, dj])

    def vjp_x(g, xpad_shape=xpad.shape, wv=w.value):
        gx = np.zeros(xpad_shape)
        for di in range(k):
            for dj in range(k):
                gx[
                    :, di : di + (oh - 1) * s + 1 : s, dj : dj + (ow - 1) * s + 1 : s
                ] += np.matmul(g, wv[di, dj].T)
        return gx[:, ph // 2 : ph // 2 + h, pw // 2 : pw // 2 + wd]

    def vjp_w(g, xpad=xpad):
        gw = np.zeros(w.shape)
        for di in range(k):
            for dj in range(k):
                sl = xpad[
                    :, di : di + (oh - 1) * s + 1 : s, dj : dj + (ow - 1) * s + 1 : s
                ]
                gw[di, dj] = np.tensordot(sl, g, axes=([0, 1, 2], [0, 1, 2]))
        return gw

    return Var(out, [(x, vjp_x), (w, vjp_w)])


# --------------------------------------------------------- bilinear upsample

_RESIZE_CACHE = {}


def _resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Corner-aligned 1D linear interpolation matrix (n_out, n_in)."""
    key = (n_in, n_out)
    if key in _RESIZE_CACHE:
        return _RESIZE_CACHE[key]
    m = np.zeros((n_out, n_in))
    if n_in == 1:
        m[:, 0] = 1.0
    else:
        pos = np.arange(n_out) * (n_in - 1) / max(n_out - 1, 1)
        lo = np.minimum(pos.astype(int), n_in - 2)
        frac = pos - lo
        m[np.arange(n_out), lo] = 1.0 - frac
        m[np.arange(n_out), lo + 1] = frac
    _RESIZE_CACHE[key] = m
    return m


def bilinear_upsample(x, out_h: int, out_w: int):
    """Corner-aligned bilinear resize. x: (B, h, w, F) -> (B, out_h, out_w, F)."""
    x = as_var(x)
    _, h, w, _ = x.shape
    if (h, w) == (out_h, out_w):
        return x
    mh = _resize_matrix(h, out_h)
    mw = _resize_matrix(w, out_w)
    out = np.einsum("Hh,bhwf,Ww->bHWf", mh, x.value, mw, optimize=True)

    def vjp(g, mh=mh, mw=mw):
        return np.einsum("Hh,bHWf,Ww->bhwf", mh, g, mw, optimize=True)

    return Var(out, [(x, vjp)])
