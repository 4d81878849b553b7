"""Dense NCHW tensors with tape-based reverse-mode automatic differentiation.

Everything downstream (blocks, losses, the training loop) is built from the
operations in this module.  Forward functions run on plain numpy arrays; when
a Tape is active and an input requires gradients, a backward rule is recorded
so that `backward(tape, loss)` can replay the tape in reverse.

Values are immutable once an op returns; gradient buffers are the only thing
mutated during backward.  Single precision is used for training, double
precision for finite-difference gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


class ContractError(ValueError):
    """Raised when a non-shape precondition is violated."""


class Tensor:
    """A dense numeric array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


_ACTIVE_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of operations; replaying it in reverse yields gradients."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPES.pop()
        return False


def _record(inputs, out_data, backward):
    """Create the output tensor and, if a tape is live, record the op."""
    out = Tensor(out_data)
    tape = _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append(_Node(tuple(inputs), out, backward))
    return out


def backward(tape: Tape, loss: Tensor):
    """Propagate dLoss through the tape, filling .grad on requires_grad tensors.

    Tensors that require gradients but are unreachable from the loss receive
    zero gradients.  An empty tape yields zeros everywhere.
    """
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
    leaves = {}
    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad:
                leaves[id(t)] = t
    if tape.nodes:
        outputs = {id(n.output) for n in tape.nodes}
        if id(loss) not in outputs:
            raise ContractError("loss tensor was not produced on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        in_grads = node.backward(g)
        for t, ig in zip(node.inputs, in_grads):
            if ig is None:
                continue
            acc = grads.get(id(t))
            grads[id(t)] = ig if acc is None else acc + ig
        if node.output.requires_grad and id(node.output) in leaves:
            # Output also feeds a later op as a leaf; nothing extra to do.
            pass
    for key, t in leaves.items():
        g = grads.get(key)
        t.grad = np.zeros_like(t.data) if g is None else g


def _unbroadcast(g, shape):
    """Reduce gradient g down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / structural ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record([a, b], out, back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def back(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _record([a, b], out, back)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(list(tensors), out, back)


def tsum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())

    def back(g):
        return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=True),)

    return _record([x], out, back)


def tmean(x: Tensor) -> Tensor:
    n = x.data.size
    out = np.asarray(x.data.mean())

    def back(g):
        return (np.broadcast_to(g / n, x.data.shape).astype(x.data.dtype, copy=True),)

    return _record([x], out, back)


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign to avoid overflow in exp.
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    e = np.exp(xd[~pos])
    out[~pos] = e / (1.0 + e)

    def back(g):
        return (g * out * (1.0 - out),)

    return _record([x], out, back)


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """PReLU with slope broadcast per channel; a length-1 slope is shared."""
    if x.data.ndim != 4:
        raise ShapeError(f"prelu expects NCHW input, got {x.data.shape}")
    c = x.data.shape[1]
    if slope.data.ndim != 1 or slope.data.shape[0] not in (1, c):
        raise ShapeError(
            f"slope length {slope.data.shape} incompatible with {c} channels")
    s = slope.data.reshape(1, -1, 1, 1)
    neg = x.data < 0
    out = np.where(neg, s * x.data, x.data)

    def back(g):
        gx = np.where(neg, s * g, g)
        gs_full = np.where(neg, g * x.data, 0.0)
        if slope.data.shape[0] == 1:
            gs = np.asarray([gs_full.sum()], dtype=slope.data.dtype)
        else:
            gs = gs_full.sum(axis=(0, 2, 3))
        return gx, gs

    return _record([x, slope], out, back)


# ---------------------------------------------------------------------------
# convolution


def _im2col(xd, kh, kw, stride, padding):
    n, c, h, w = xd.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if padding:
        xd = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    sn, sc, sh, sw = xd.strides
    cols = as_strided(
        xd, (n, c, kh, kw, oh, ow),
        (sn, sc, sh, sw, sh * stride, sw * stride))
    return np.ascontiguousarray(cols).reshape(n, c * kh * kw, oh * ow), oh, ow


def _col2im(gcols, x_shape, kh, kw, stride, padding, oh, ow):
    n, c, h, w = x_shape
    gcols = gcols.reshape(n, c, kh, kw, oh, ow)
    gx = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=gcols.dtype)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += gcols[:, :, i, j]
    if padding:
        gx = gx[:, :, padding:-padding, padding:-padding]
    return gx


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding (deep-learning convention)."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and weight")
    n, cin, h, w = x.data.shape
    cout, wcin, kh, kw = weight.data.shape
    if cin != wcin:
        raise ShapeError(f"input has {cin} channels, weight expects {wcin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel extents must be odd, got {kh}x{kw}")
    if stride < 1 or padding < 0:
        raise ContractError("stride must be >= 1 and padding >= 0")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"non-positive output extent {oh}x{ow} for input {h}x{w}")
    if bias is not None and bias.data.shape != (cout,):
        raise ShapeError(f"bias shape {bias.data.shape} != ({cout},)")

    cols, oh, ow = _im2col(x.data, kh, kw, stride, padding)
    w2 = weight.data.reshape(cout, -1)
    out = np.matmul(w2, cols)
    if bias is not None:
        out = out + bias.data[None, :, None]
    out = out.reshape(n, cout, oh, ow)

    inputs = [x, weight] if bias is None else [x, weight, bias]

    def back(g):
        g2 = g.reshape(n, cout, oh * ow)
        gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.data.shape)
        gcols = np.matmul(w2.T, g2)
        gx = _col2im(gcols, x.data.shape, kh, kw, stride, padding, oh, ow)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _record(inputs, out, back)


# ---------------------------------------------------------------------------
# pooling and resampling


def global_avg_pool(x: Tensor) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeError(f"expected NCHW input, got {x.data.shape}")
    n, c, h, w = x.data.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def back(g):
        return (np.broadcast_to(g / (h * w), x.data.shape).astype(x.data.dtype, copy=True),)

    return _record([x], out, back)


def channel_pool(x: Tensor) -> Tensor:
    """Per-position mean and max over channels, stacked as a 2-channel map."""
    if x.data.ndim != 4:
        raise ShapeError(f"expected NCHW input, got {x.data.shape}")
    n, c, h, w = x.data.shape
    mean = x.data.mean(axis=1, keepdims=True)
    amax = x.data.argmax(axis=1)
    mx = np.take_along_axis(x.data, amax[:, None], axis=1)
    out = np.concatenate([mean, mx], axis=1)

    def back(g):
        gx = np.broadcast_to(g[:, 0:1] / c, x.data.shape).astype(x.data.dtype, copy=True)
        np.put_along_axis(
            gx, amax[:, None],
            np.take_along_axis(gx, amax[:, None], axis=1) + g[:, 1:2], axis=1)
        return (gx,)

    return _record([x], out, back)


def branch_softmax(logits: list[Tensor]) -> list[Tensor]:
    """Softmax across branches at each (batch, channel) position.

    Inputs are k descriptor tensors of identical shape (typically N,C,1,1);
    outputs sum to one across branches.  Computed with max subtraction.
    """
    if len(logits) < 2:
        raise ShapeError("branch_softmax needs at least two branches")
    shape = logits[0].data.shape
    for t in logits[1:]:
        if t.data.shape != shape:
            raise ShapeError(
                f"branch shape mismatch: {t.data.shape} != {shape}")
    stack = np.stack([t.data for t in logits], axis=0)
    stack = stack - stack.max(axis=0, keepdims=True)
    e = np.exp(stack)
    s = e / e.sum(axis=0, keepdims=True)

    outs = []
    for i in range(len(logits)):
        def back(g, i=i):
            return tuple(
                g * s[i] * ((1.0 if j == i else 0.0) - s[j])
                for j in range(len(logits)))
        outs.append(_record(list(logits), s[i].copy(), back))
    return outs


def replicate_pad1(x: Tensor) -> Tensor:
    """Pad H and W by one pixel on each side, replicating edge values."""
    if x.data.ndim != 4:
        raise ShapeError(f"expected NCHW input, got {x.data.shape}")
    n, c, h, w = x.data.shape
    iy = np.concatenate([[0], np.arange(h), [h - 1]])
    ix = np.concatenate([[0], np.arange(w), [w - 1]])
    out = x.data[:, :, iy][:, :, :, ix]

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, np.s_[:, :, iy[:, None], ix[None, :]], g)
        return (gx,)

    return _record([x], out, back)


def bilinear_upsample2x(x: Tensor) -> Tensor:
    """2x bilinear upsampling with half-pixel sampling and clamped edges."""
    if x.data.ndim != 4:
        raise ShapeError(f"expected NCHW input, got {x.data.shape}")
    n, c, h, w = x.data.shape

    def coords(extent):
        src = (np.arange(2 * extent) + 0.5) / 2.0 - 0.5
        i0 = np.floor(src).astype(np.int64)
        t = src - i0
        lo = np.clip(i0, 0, extent - 1)
        hi = np.clip(i0 + 1, 0, extent - 1)
        return lo, hi, t

    y0, y1, ty = coords(h)
    x0, x1, tx = coords(w)
    ty = ty[:, None]
    tx = tx[None, :]
    d = x.data
    out = ((1 - ty) * (1 - tx) * d[:, :, y0][:, :, :, x0]
           + (1 - ty) * tx * d[:, :, y0][:, :, :, x1]
           + ty * (1 - tx) * d[:, :, y1][:, :, :, x0]
           + ty * tx * d[:, :, y1][:, :, :, x1]).astype(d.dtype)

    def back(g):
        gx = np.zeros_like(x.data)
        for yi, wy in ((y0, 1 - ty), (y1, ty)):
            for xi, wx in ((x0, 1 - tx), (x1, tx)):
                contrib = (g * wy * wx).astype(g.dtype)
                np.add.at(gx, np.s_[:, :, yi[:, None], xi[None, :]], contrib)
        return (gx,)

    return _record([x], out, back)


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    max_abs_err: float
    max_rel_err: float
    passed: bool
    n_coords: int


def grad_check(f, wrt: Tensor | list[Tensor], step: float = 1e-5,
               tolerance: float = 1e-4, max_coords: int | None = None,
               seed: int = 0, order: int = 2,
               fallbacks: list[tuple[float, int]] | None = None) -> GradCheckReport:
    """Compare analytic gradients of scalar-valued f against central differences.

    `f` is called with no arguments and must close over the tensors in `wrt`.
    Relative error uses denominator max(|analytic|, |numeric|, 1e-8).  With
    `max_coords`, a deterministic random subset of coordinates is checked for
    each tensor (full coverage otherwise).  `order` selects the 2-point or
    4th-order 5-point central stencil.

    No single step suits every coordinate of a deep composition: wide steps
    cross activation kinks, narrow steps drown near-zero gradients in float64
    roundoff.  `fallbacks` lists extra (step, order) stencils tried only for
    coordinates that fail at the primary step; a coordinate's error is the
    minimum over stencils.  A wrong backward rule disagrees with every
    stencil, so this does not mask real gradient bugs.
    """
    tensors = [wrt] if isinstance(wrt, Tensor) else list(wrt)
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        out = f()
    if out.data.size != 1:
        raise ContractError("grad_check requires a scalar-valued function")
    backward(tape, out)

    rng = np.random.default_rng(seed)
    max_abs = 0.0
    max_rel = 0.0
    n_checked = 0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        size = t.data.size
        if max_coords is not None and size > max_coords:
            idx = rng.choice(size, size=max_coords, replace=False)
        else:
            idx = range(size)
        flat = t.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for o in (order, *(o for _, o in fallbacks or [])):
            if o not in (2, 4):
                raise ContractError("order must be 2 or 4")
        for i in idx:
            orig = flat[i]

            def at(offset):
                flat[i] = orig + offset
                return f().item()

            def quotient(h, o):
                if o == 2:
                    num = (at(h) - at(-h)) / (2.0 * h)
                else:
                    num = (-at(2 * h) + 8.0 * at(h)
                           - 8.0 * at(-h) + at(-2 * h)) / (12.0 * h)
                flat[i] = orig
                return num

            a = float(aflat[i])

            def errors(num):
                abs_err = abs(a - num)
                return abs_err, abs_err / max(abs(a), abs(num), 1e-8)

            abs_err, rel_err = errors(quotient(step, order))
            if rel_err > tolerance and fallbacks:
                for h, o in fallbacks:
                    fa, fr = errors(quotient(h, o))
                    if fr < rel_err:
                        abs_err, rel_err = fa, fr
                    if rel_err <= tolerance:
                        break
            max_abs = max(max_abs, abs_err)
            max_rel = max(max_rel, rel_err)
            n_checked += 1
    return GradCheckReport(max_abs, max_rel, max_rel <= tolerance, n_checked)
