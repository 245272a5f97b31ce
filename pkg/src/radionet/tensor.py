"""Dense float tensors with reverse-mode automatic differentiation.

Design notes
------------
* float32 throughout by default; `using_dtype(np.float64)` switches the
  working precision for verification code (gradient checks) without
  touching call sites.
* The graph is recorded dynamically per forward pass (define-by-run).
  Each op result keeps references to its parents plus a closure that
  scatters the incoming gradient; `backward()` does one reverse
  topological sweep and then drops the closures, so a graph can be
  differentiated exactly once.
* conv2d is cross-correlation (no kernel flip), the deep-learning
  convention. conv_transpose2d is its adjoint: with kernel 2, stride 2,
  padding 0 (or kernel 4, stride 2, padding 1) it exactly doubles the
  spatial resolution.
* maxpool2d routes the gradient to the first maximal element of each
  window in row-major order.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class GradientError(RuntimeError):
    """Backward pass invoked on something that cannot supply gradients."""


_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True
_CHECK_FINITE = False


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def using_dtype(dtype):
    """Temporarily switch the dtype new tensors are created with."""
    global _DEFAULT_DTYPE
    saved = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = saved


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference / finite-difference probes)."""
    global _GRAD_ENABLED
    saved = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = saved


def set_check_finite(flag: bool) -> None:
    """Assert that every op output is finite (debug aid, off by default)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(flag)


class Tensor:
    """N-dimensional float array with an optional gradient buffer.

    Leaf tensors created with ``requires_grad=True`` get a zero gradient
    buffer eagerly, so an unused parameter reports a zero gradient after
    ``backward`` rather than ``None``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self._op = "leaf"

    # -- constructors ------------------------------------------------

    @staticmethod
    def zeros(*shape, requires_grad=False):
        return Tensor(np.zeros(shape, dtype=_DEFAULT_DTYPE), requires_grad)

    @staticmethod
    def ones(*shape, requires_grad=False):
        return Tensor(np.ones(shape, dtype=_DEFAULT_DTYPE), requires_grad)

    @staticmethod
    def from_op(data, parents, backward, op):
        """Internal: wrap an op result, recording the graph edge if needed."""
        if _CHECK_FINITE and not np.all(np.isfinite(data)):
            raise FloatingPointError(f"non-finite values out of op '{op}'")
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._op = op
        needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- introspection -----------------------------------------------

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
        return float(self.data.item())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -- gradients ---------------------------------------------------

    def zero_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def accum_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        backward(self)

    # -- operator sugar ----------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every reachable ``requires_grad`` tensor.

    The loss must be scalar. The recorded graph is consumed: a second
    call is a no-op and intermediate gradients are released.
    """
    if loss.size != 1:
        raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    loss.accum_grad(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)
        is_leaf = node._op == "leaf"
        node._backward = None
        node._parents = ()
        if not is_leaf:
            node.grad = None


def graph_op_sequence(root: Tensor) -> list[str]:
    """Op kinds of the recorded graph feeding ``root``, in topological order."""
    topo: list[str] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node._op)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if id(p) not in visited:
                stack.append((p, False))
    return topo


# ---------------------------------------------------------------------------
# elementwise and shape ops
# ---------------------------------------------------------------------------


def _suffix_reduce(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over leading axes so it matches ``shape`` (suffix broadcast)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    """a + b. b may have a shape that is a suffix of a's (bias-style broadcast)."""
    if a.shape != b.shape and a.shape[a.ndim - b.ndim :] != b.shape:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")

    def bwd(g):
        a.accum_grad(g)
        b.accum_grad(_suffix_reduce(g, b.shape))

    return Tensor.from_op(a.data + b.data, (a, b), bwd, "add")


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        a.accum_grad(-g)

    return Tensor.from_op(-a.data, (a,), bwd, "neg")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")

    def bwd(g):
        a.accum_grad(g * b.data)
        b.accum_grad(g * a.data)

    return Tensor.from_op(a.data * b.data, (a, b), bwd, "mul")


def scale(a: Tensor, s: float) -> Tensor:
    def bwd(g):
        a.accum_grad(g * s)

    return Tensor.from_op(a.data * np.asarray(s, dtype=a.data.dtype), (a,), bwd, "scale")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        a.accum_grad(g * mask)

    return Tensor.from_op(np.where(mask, a.data, 0), (a,), bwd, "relu")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)

    def bwd(g):
        a.accum_grad(g * y * (1.0 - y))

    return Tensor.from_op(y, (a,), bwd, "sigmoid")


def abs_(a: Tensor) -> Tensor:
    """|a| with subgradient 0 at 0."""
    sgn = np.sign(a.data)

    def bwd(g):
        a.accum_grad(g * sgn)

    return Tensor.from_op(np.abs(a.data), (a,), bwd, "abs")


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bwd(g):
        if axis is None:
            a.accum_grad(np.broadcast_to(g, a.shape))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            a.accum_grad(np.broadcast_to(ge, a.shape))

    return Tensor.from_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else a.shape[axis]

    def bwd(g):
        gn = g / n
        if axis is None:
            a.accum_grad(np.broadcast_to(gn, a.shape))
        else:
            ge = gn if keepdims else np.expand_dims(gn, axis)
            a.accum_grad(np.broadcast_to(ge, a.shape))

    return Tensor.from_op(a.data.mean(axis=axis, keepdims=keepdims), (a,), bwd, "mean")


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def bwd(g):
        a.accum_grad(g.reshape(a.shape))

    return Tensor.from_op(a.data.reshape(shape), (a,), bwd, "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        a.accum_grad(g.transpose(inv))

    return Tensor.from_op(np.ascontiguousarray(a.data.transpose(axes)), (a,), bwd, "transpose")


def concat(xs: Sequence[Tensor], axis: int) -> Tensor:
    if not xs:
        raise ShapeError("concat of empty sequence")
    nd = xs[0].ndim
    if axis >= nd or axis < -nd:
        raise ShapeError(f"concat: axis {axis} out of range for ndim {nd}")
    ref = list(xs[0].shape)
    for x in xs[1:]:
        other = list(x.shape)
        if len(other) != nd or [s for i, s in enumerate(other) if i != axis % nd] != [
            s for i, s in enumerate(ref) if i != axis % nd
        ]:
            raise ShapeError(f"concat: mismatched shapes {xs[0].shape} vs {x.shape}")
    sizes = [x.shape[axis] for x in xs]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for x, lo, hi in zip(xs, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * nd
            idx[axis % nd] = slice(lo, hi)
            x.accum_grad(g[tuple(idx)])

    return Tensor.from_op(np.concatenate([x.data for x in xs], axis=axis), tuple(xs), bwd, "concat")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (max subtraction)."""
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        a.accum_grad(y * (g - dot))

    return Tensor.from_op(y, (a,), bwd, "softmax")


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean / unit variance along ``axis``, then scale and shift."""
    d = a.shape[axis]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: scale/shift must have shape ({d},)")
    bshape = [1] * a.ndim
    bshape[axis] = d
    gb = gamma.data.reshape(bshape)
    mu = a.data.mean(axis=axis, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xh = xc * inv
    y = gb * xh + beta.data.reshape(bshape)
    other_axes = tuple(i for i in range(a.ndim) if i != axis % a.ndim)

    def bwd(g):
        gamma.accum_grad((g * xh).sum(axis=other_axes))
        beta.accum_grad(g.sum(axis=other_axes))
        dxh = g * gb
        m1 = dxh.mean(axis=axis, keepdims=True)
        m2 = (dxh * xh).mean(axis=axis, keepdims=True)
        a.accum_grad(inv * (dxh - m1 - xh * m2))

    return Tensor.from_op(y, (a, gamma, beta), bwd, "layer_norm")


# ---------------------------------------------------------------------------
# matmul / linear
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. Supports stacked operands whose leading dims match
    (or a plain 2-D weight shared across the stack)."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims disagree between {a.shape} and {b.shape}")
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: leading dims disagree between {a.shape} and {b.shape}")

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        a.accum_grad(_suffix_reduce(ga, a.shape))
        b.accum_grad(_suffix_reduce(gb, b.shape))

    return Tensor.from_op(np.matmul(a.data, b.data), (a, b), bwd, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w (+ b) applied to the last axis of x."""
    y = matmul(x, w)
    if b is not None:
        y = add(y, b)
    return y


# ---------------------------------------------------------------------------
# convolution / pooling
# ---------------------------------------------------------------------------


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def _im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, ho: int, wo: int) -> np.ndarray:
    b, c = xp.shape[:2]
    cols = np.empty((b, c, kh, kw, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw]
    return cols


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Cross-correlation of [B,C,H,W] with kernel [F,C,kh,kw]."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: need 4-D input/kernel, got {x.shape} and {w.shape}")
    bsz, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeError(f"conv2d: input channels {c} != kernel channels {cw}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    hp, wp = h + 2 * ph, wd + 2 * pw
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d: kernel ({kh},{kw}) exceeds padded input ({hp},{wp})")
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    cols = _im2col(xp, kh, kw, sh, sw, ho, wo)
    # [B*ho*wo, C*kh*kw] @ [C*kh*kw, F]
    cols_mat = cols.transpose(0, 4, 5, 1, 2, 3).reshape(bsz * ho * wo, c * kh * kw)
    w_mat = w.data.reshape(f, c * kh * kw)
    out = cols_mat @ w_mat.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(bsz, ho, wo, f).transpose(0, 3, 1, 2))

    def bwd(g):
        g_mat = g.transpose(0, 2, 3, 1).reshape(bsz * ho * wo, f)
        w.accum_grad((g_mat.T @ cols_mat).reshape(w.shape))
        if bias is not None:
            bias.accum_grad(g_mat.sum(axis=0))
        dcols = (g_mat @ w_mat).reshape(bsz, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
        dxp = np.zeros((bsz, c, hp, wp), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += dcols[:, :, i, j]
        x.accum_grad(dxp[:, :, ph : ph + h, pw : pw + wd])

    parents = (x, w) if bias is None else (x, w, bias)
    return Tensor.from_op(out, parents, bwd, "conv2d")


def conv_transpose2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Transposed convolution (adjoint of conv2d). Kernel layout [C_in, F, kh, kw].

    Output size per axis: (in - 1) * stride - 2 * padding + kernel.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv_transpose2d: need 4-D input/kernel, got {x.shape} and {w.shape}")
    bsz, c, h, wd = x.shape
    cw, f, kh, kw = w.shape
    if cw != c:
        raise ShapeError(f"conv_transpose2d: input channels {c} != kernel channels {cw}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if sh < 1 or sw < 1:
        raise ShapeError("conv_transpose2d: stride must be >= 1")
    hp = (h - 1) * sh + kh
    wp = (wd - 1) * sw + kw
    ho, wo = hp - 2 * ph, wp - 2 * pw
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv_transpose2d: output ({ho},{wo}) collapsed by padding")
    out_pad = np.zeros((bsz, f, hp, wp), dtype=x.data.dtype)
    xt = x.data.transpose(0, 2, 3, 1)  # [B,H,W,C]
    for i in range(kh):
        for j in range(kw):
            # [B,H,W,C] @ [C,F] scattered onto the strided grid
            out_pad[:, :, i : i + sh * (h - 1) + 1 : sh, j : j + sw * (wd - 1) + 1 : sw] += (
                xt @ w.data[:, :, i, j]
            ).transpose(0, 3, 1, 2)
    out = out_pad[:, :, ph : ph + ho, pw : pw + wo]
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def bwd(g):
        gp = np.pad(g, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else g
        gt = gp.transpose(0, 2, 3, 1)  # [B,hp,wp,F]
        dx = np.zeros((bsz, h, wd, c), dtype=g.dtype)
        dw = np.zeros_like(w.data)
        for i in range(kh):
            for j in range(kw):
                gs = gt[:, i : i + sh * (h - 1) + 1 : sh, j : j + sw * (wd - 1) + 1 : sw, :]
                dx += gs @ w.data[:, :, i, j].T
                dw[:, :, i, j] = np.tensordot(xt, gs, axes=([0, 1, 2], [0, 1, 2]))
        x.accum_grad(dx.transpose(0, 3, 1, 2))
        w.accum_grad(dw)
        if bias is not None:
            bias.accum_grad(g.sum(axis=(0, 2, 3)))

    parents = (x, w) if bias is None else (x, w, bias)
    return Tensor.from_op(out, parents, bwd, "conv_transpose2d")


def maxpool2d(x: Tensor, k: int, stride: int | None = None) -> Tensor:
    """Per-window maximum; gradient goes to the first max (row-major) on ties."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d: need 4-D input, got {x.shape}")
    bsz, c, h, w = x.shape
    s = k if stride is None else stride
    if k > h or k > w:
        raise ShapeError(f"maxpool2d: window {k} exceeds input ({h},{w})")
    ho = (h - k) // s + 1
    wo = (w - k) // s + 1
    cols = _im2col(x.data, k, k, s, s, ho, wo)
    flat = cols.transpose(0, 1, 4, 5, 2, 3).reshape(bsz, c, ho, wo, k * k)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def bwd(g):
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, idx[..., None], g[..., None], axis=-1)
        dcols = dflat.reshape(bsz, c, ho, wo, k, k).transpose(0, 1, 4, 5, 2, 3)
        dx = np.zeros_like(x.data)
        for i in range(k):
            for j in range(k):
                dx[:, :, i : i + s * ho : s, j : j + s * wo : s] += dcols[:, :, i, j]
        x.accum_grad(dx)

    return Tensor.from_op(np.ascontiguousarray(out), (x,), bwd, "maxpool2d")


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


def finite_difference_check(
    f: Callable[..., Tensor],
    xs: Sequence[Tensor],
    eps: float = 1e-3,
    rel_floor: float = 1.0,
) -> float:
    """Compare reverse-mode gradients of scalar ``f(*xs)`` against central
    differences; return the worst relative error over all input elements.

    The error of a pair (g_ad, g_fd) is |g_ad - g_fd| divided by
    max(|g_ad|, |g_fd|, rel_floor): relative above the floor, absolute
    below it. The default floor of 1.0 is what float32 supports — the
    quantization of the loss scalar puts an absolute noise floor of about
    ulp(|loss|)/(2*eps) on every finite-difference quotient, so relative
    error on vanishing gradients is not measurable. Checks run under
    ``using_dtype(np.float64)`` can pass rel_floor=1e-6 for a strict
    relative comparison.
    """
    for t in xs:
        t.zero_grad()
    loss = f(*xs)
    backward(loss)
    grads = [np.array(t.grad, dtype=np.float64, copy=True) for t in xs]
    worst = 0.0
    with no_grad():
        for t, g in zip(xs, grads):
            flat = t.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                fp = f(*xs).item()
                flat[i] = orig - eps
                fm = f(*xs).item()
                flat[i] = orig
                fd = (fp - fm) / (2.0 * eps)
                denom = max(abs(gflat[i]), abs(fd), rel_floor)
                worst = max(worst, abs(gflat[i] - fd) / denom)
    return worst


# ---------------------------------------------------------------------------
# random state
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class RngState:
    """Counter-based splitmix64 stream.

    The algorithm is fixed: output i of a stream seeded with s is
    mix64(s + (i+1) * golden_gamma), all mod 2**64. Integer-derived
    uniforms are bit-identical everywhere; ``normal`` goes through libm
    (log/cos) and is bit-stable per platform.
    """

    ALGORITHM = "splitmix64"

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._counter = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + idx * np.uint64(_GOLDEN)
            return _mix64(z)

    def _raw1(self) -> int:
        # scalar fast path; bit-identical to _raw(1) but in pure ints
        self._counter += 1
        z = (self.seed + self._counter * _GOLDEN) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0):
        """float64 uniforms in [low, high), exact 53-bit construction.
        Scalar for shape=(), ndarray otherwise."""
        if shape == () or shape is None:
            u = (self._raw1() >> 11) * (2.0**-53)
            return low + (high - low) * u
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)
        return (low + (high - low) * u).reshape(shape)

    def normal(self, shape=(), mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Box-Muller normals (cosine branch only, one raw pair per value)."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u1 = ((self._raw(n) >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0**-53)
        u2 = (self._raw(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        out = mean + std * z
        return out.reshape(shape) if shape else out[0]

    def randint(self, low: int, high: int) -> int:
        """Integer in [low, high). Modulo mapping; bias is negligible for
        the range sizes used here and determinism is what matters."""
        if high <= low:
            raise ValueError(f"randint: empty range [{low}, {high})")
        return low + int(self._raw(1)[0] % np.uint64(high - low))

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self._raw(n), kind="stable")

    def child(self, i: int) -> "RngState":
        """Independent stream for worker/sample ``i`` (derived, deterministic)."""
        z = np.array([(self.seed ^ ((i + 1) * _GOLDEN)) & _MASK64], dtype=np.uint64)
        return RngState(int(_mix64(z)[0]))

    def tensor_uniform(self, shape, low=0.0, high=1.0, requires_grad=False) -> Tensor:
        return Tensor(self.uniform(shape, low, high), requires_grad=requires_grad)

    def tensor_normal(self, shape, mean=0.0, std=1.0, requires_grad=False) -> Tensor:
        return Tensor(self.normal(shape, mean, std), requires_grad=requires_grad)
