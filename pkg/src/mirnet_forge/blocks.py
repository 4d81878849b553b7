"""Architecture blocks: SKFF fusion, dual attention, residual resizing,
multi-scale residual blocks, recursive residual groups, and the full network.

All blocks are plain containers of Tensors; forward methods compose the ops
in `tensor`.  Parameter names follow the block path, e.g.
"rrg0.mrb1.skff_final.upscale2.weight", which is also the checkpoint naming.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


@dataclass
class NetworkConfig:
    """Architecture hyperparameters.

    Stream s runs at spatial scale 2^-s with channel width base_channels*2^s.
    Reference-scale values: 3 RRGs of 2 MRBs, 3 streams, 2 columns, 64 base
    channels; desk-scale defaults live in the CLI.
    """
    n_rrg: int = 3
    mrb_per_rrg: int = 2
    n_streams: int = 3
    n_columns: int = 2
    base_channels: int = 64
    image_channels: int = 3

    def validate(self):
        if self.n_streams < 1 or self.n_columns < 1:
            raise T.ContractError("n_streams and n_columns must be >= 1")
        if min(self.n_rrg, self.mrb_per_rrg, self.base_channels) < 1:
            raise T.ContractError("n_rrg, mrb_per_rrg, base_channels must be >= 1")

    @property
    def divisor(self):
        return 1 << (self.n_streams - 1)


def bottleneck_width(channels: int) -> int:
    """Reduction width C/8, floored at 4 for tiny desk-scale widths."""
    return max(channels // 8, 4)


class Module:
    """Minimal parameter container; children are discovered by attribute walk."""

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, attr in vars(self).items():
            if name.startswith("_"):
                continue
            self._collect(out, f"{prefix}{name}", attr)
        return out

    @staticmethod
    def _collect(out, name, attr):
        if isinstance(attr, Tensor):
            if attr.requires_grad:
                out[name] = attr
        elif isinstance(attr, Module):
            out.update(attr.named_parameters(f"{name}."))
        elif isinstance(attr, (list, tuple)):
            for i, item in enumerate(attr):
                Module._collect(out, f"{name}{i}", item)

    def zero_grad(self):
        for p in self.named_parameters().values():
            p.grad = None


def count_parameters(module: Module) -> tuple[dict[str, int], int]:
    """Learnable scalar count per parameter path, plus the total."""
    counts = {name: int(p.data.size) for name, p in module.named_parameters().items()}
    return counts, sum(counts.values())


class Conv2d(Module):
    """Convolution layer with Kaiming-uniform fan-in init and zero biases."""

    def __init__(self, in_c, out_c, kernel, stride=1, padding=None,
                 bias=True, dtype=np.float32, rng=None):
        rng = rng or np.random.default_rng(0)
        # Kaiming-uniform fan-in with the standard leaky-slope correction
        # (gain^2 = 2/(1+5) = 1/3); keeps the deep unnormalized residual
        # stack bounded at initialization.
        fan_in = in_c * kernel * kernel
        bound = np.sqrt(1.0 / fan_in)
        self.weight = Tensor(
            rng.uniform(-bound, bound, (out_c, in_c, kernel, kernel)).astype(dtype),
            requires_grad=True)
        self.bias = Tensor(np.zeros(out_c, dtype=dtype), requires_grad=True) if bias else None
        self._stride = stride
        self._padding = kernel // 2 if padding is None else padding

    def __call__(self, x):
        return T.conv2d(x, self.weight, self.bias, self._stride, self._padding)


class PReLU(Module):
    """Parametric ReLU; n=1 gives one shared slope, otherwise per-channel."""

    def __init__(self, n, init=0.25, dtype=np.float32):
        self.slope = Tensor(np.full(n, init, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return T.prelu(x, self.slope)


def _binomial_kernel(dtype):
    k = np.array([1.0, 2.0, 1.0])
    k = np.outer(k, k)
    return (k / k.sum()).astype(dtype)


def make_blur_weight(channels: int, dtype=np.float32) -> Tensor:
    """Fixed depthwise 3x3 binomial filter embedded as a diagonal conv weight."""
    w = np.zeros((channels, channels, 3, 3), dtype=dtype)
    k = _binomial_kernel(dtype)
    for c in range(channels):
        w[c, c] = k
    return Tensor(w)


def blur_pool(x: Tensor, weight: Tensor | None = None) -> Tensor:
    """Anti-aliased downsampling: 3x3 binomial blur then stride-2 subsampling.

    Edge-replicate padding keeps the blur a weighted average at the borders,
    so constant planes stay constant after downsampling.
    """
    if weight is None:
        weight = make_blur_weight(x.data.shape[1], x.data.dtype)
    return T.conv2d(T.replicate_pad1(x), weight, None, stride=2, padding=0)


class SKFF(Module):
    """Selective feature fusion of k equally-shaped streams.

    Fuse: sum the branches, pool globally, compress to a compact descriptor.
    Select: per-branch descriptors, softmax across branches, convex
    recombination.  Convolutions are bias-free; the compact descriptor uses a
    single shared PReLU slope (total parameter count C*r + k*r*C + 1).
    """

    def __init__(self, channels, n_branches, dtype=np.float32, rng=None):
        rng = rng or np.random.default_rng(0)
        self._n_branches = n_branches
        if n_branches >= 2:
            r = bottleneck_width(channels)
            self.downscale = Conv2d(channels, r, 1, bias=False, dtype=dtype, rng=rng)
            self.act = PReLU(1, dtype=dtype)
            self.upscale = [
                Conv2d(r, channels, 1, bias=False, dtype=dtype, rng=rng)
                for _ in range(n_branches)]

    def __call__(self, branches: list[Tensor]) -> Tensor:
        if len(branches) != self._n_branches:
            raise T.ContractError(
                f"expected {self._n_branches} branches, got {len(branches)}")
        shape = branches[0].data.shape
        for b in branches[1:]:
            if b.data.shape != shape:
                raise ShapeError(
                    f"branch shape mismatch: {b.data.shape} != {shape}")
        if len(branches) == 1:
            return branches[0]
        total = branches[0]
        for b in branches[1:]:
            total = T.add(total, b)
        z = self.act(self.downscale(T.global_avg_pool(total)))
        logits = [up(z) for up in self.upscale]
        weights = T.branch_softmax(logits)
        out = T.mul(branches[0], weights[0])
        for b, w in zip(branches[1:], weights[1:]):
            out = T.add(out, T.mul(b, w))
        return out


class ChannelAttention(Module):
    """Squeeze-and-excitation recalibration over channels."""

    def __init__(self, channels, dtype=np.float32, rng=None):
        rng = rng or np.random.default_rng(0)
        mid = bottleneck_width(channels)
        self.conv1 = Conv2d(channels, mid, 1, dtype=dtype, rng=rng)
        self.act = PReLU(mid, dtype=dtype)
        self.conv2 = Conv2d(mid, channels, 1, dtype=dtype, rng=rng)

    def __call__(self, m):
        gate = T.sigmoid(self.conv2(self.act(self.conv1(T.global_avg_pool(m)))))
        return T.mul(m, gate)


class SpatialAttention(Module):
    """Recalibration by a sigmoid map from channel-pooled mean/max planes."""

    def __init__(self, kernel=5, dtype=np.float32, rng=None):
        rng = rng or np.random.default_rng(0)
        self.conv = Conv2d(2, 1, kernel, dtype=dtype, rng=rng)

    def __call__(self, m):
        gate = T.sigmoid(self.conv(T.channel_pool(m)))
        return T.mul(m, gate)


class DAU(Module):
    """Dual attention unit: channel and spatial attention in parallel on a
    convolutional feature map, merged and added back to the input."""

    def __init__(self, channels, sa_kernel=5, dtype=np.float32, rng=None):
        rng = rng or np.random.default_rng(0)
        self.conv1 = Conv2d(channels, channels, 3, dtype=dtype, rng=rng)
        self.act = PReLU(channels, dtype=dtype)
        self.conv2 = Conv2d(channels, channels, 3, dtype=dtype, rng=rng)
        self.ca = ChannelAttention(channels, dtype=dtype, rng=rng)
        self.sa = SpatialAttention(sa_kernel, dtype=dtype, rng=rng)
        self.merge = Conv2d(2 * channels, channels, 1, dtype=dtype, rng=rng)
        self._channels = channels

    def __call__(self, x):
        if x.data.shape[1] != self._channels:
            raise ShapeError(
                f"DAU built for {self._channels} channels, got {x.data.shape[1]}")
        m = self.conv2(self.act(self.conv1(x)))
        fused = self.merge(T.concat([self.ca(m), self.sa(m)], axis=1))
        return T.add(x, fused)


class ResizeDown(Module):
    """Residual 2x downsampling: halves H and W, doubles channels.

    Both the main conv path and the skip go through the fixed anti-aliasing
    blur before the stride-2 subsampling.
    """

    def __init__(self, channels, dtype=np.float32, rng=None):
        rng = rng or np.random.default_rng(0)
        self.conv1 = Conv2d(channels, channels, 1, dtype=dtype, rng=rng)
        self.act = PReLU(channels, dtype=dtype)
        self.conv2 = Conv2d(channels, channels, 3, dtype=dtype, rng=rng)
        self.conv3 = Conv2d(channels, 2 * channels, 1, dtype=dtype, rng=rng)
        self.skip = Conv2d(channels, 2 * channels, 1, dtype=dtype, rng=rng)
        self._blur = make_blur_weight(channels, dtype)

    def __call__(self, x):
        n, c, h, w = x.data.shape
        if h % 2 or w % 2:
            raise ShapeError(f"downsampling requires even extents, got {h}x{w}")
        main = self.conv3(blur_pool(self.conv2(self.act(self.conv1(x))), self._blur))
        return T.add(main, self.skip(blur_pool(x, self._blur)))


class ResizeUp(Module):
    """Residual 2x upsampling: doubles H and W, halves channels (bilinear)."""

    def __init__(self, channels, dtype=np.float32, rng=None):
        rng = rng or np.random.default_rng(0)
        if channels % 2:
            raise T.ContractError("upsampling requires an even channel count")
        self.conv1 = Conv2d(channels, channels, 1, dtype=dtype, rng=rng)
        self.act = PReLU(channels, dtype=dtype)
        self.conv2 = Conv2d(channels, channels, 3, dtype=dtype, rng=rng)
        self.conv3 = Conv2d(channels, channels // 2, 1, dtype=dtype, rng=rng)
        self.skip = Conv2d(channels, channels // 2, 1, dtype=dtype, rng=rng)

    def __call__(self, x):
        if x.data.shape[1] % 2:
            raise ShapeError("upsampling requires an even channel count")
        main = self.conv3(T.bilinear_upsample2x(self.conv2(self.act(self.conv1(x)))))
        return T.add(main, self.skip(T.bilinear_upsample2x(x)))


class ResizeChain(Module):
    """Sequence of resizing modules mapping stream i's scale to stream j's."""

    def __init__(self, src: int, dst: int, base_channels: int,
                 dtype=np.float32, rng=None):
        steps = []
        if src < dst:
            for s in range(src, dst):
                steps.append(ResizeDown(base_channels << s, dtype=dtype, rng=rng))
        else:
            for s in range(src, dst, -1):
                steps.append(ResizeUp(base_channels << s, dtype=dtype, rng=rng))
        self.step = steps

    def __call__(self, x):
        for m in self.step:
            x = m(x)
        return x


class _Fusion(Module):
    """Cross-stream exchange feeding one receiving stream: resize every
    stream to the receiver's scale, then fuse with SKFF."""

    def __init__(self, dst: int, n_streams: int, base_channels: int,
                 dtype=np.float32, rng=None):
        self.path = [
            ResizeChain(src, dst, base_channels, dtype=dtype, rng=rng)
            for src in range(n_streams)]
        self.skff = SKFF(base_channels << dst, n_streams, dtype=dtype, rng=rng)

    def __call__(self, streams: list[Tensor]) -> Tensor:
        return self.skff([p(s) for p, s in zip(self.path, streams)])


class _Column(Module):
    """One round of per-stream DAUs followed by all-stream fusion."""

    def __init__(self, n_streams, base_channels, dtype=np.float32, rng=None):
        self.dau = [
            DAU(base_channels << s, dtype=dtype, rng=rng)
            for s in range(n_streams)]
        self.fuse = [
            _Fusion(s, n_streams, base_channels, dtype=dtype, rng=rng)
            for s in range(n_streams)]

    def __call__(self, streams):
        feats = [d(s) for d, s in zip(self.dau, streams)]
        return [f(feats) for f in self.fuse]


class MRB(Module):
    """Multi-scale residual block: parallel resolution streams with
    cross-stream exchange, fused back at full resolution with a residual skip."""

    def __init__(self, config: NetworkConfig, dtype=np.float32, rng=None):
        rng = rng or np.random.default_rng(0)
        c = config.base_channels
        s_count = config.n_streams
        self.stream_down = [
            ResizeChain(0, s, c, dtype=dtype, rng=rng) for s in range(s_count)]
        self.col = [
            _Column(s_count, c, dtype=dtype, rng=rng)
            for _ in range(config.n_columns)]
        self.final_up = [
            ResizeChain(s, 0, c, dtype=dtype, rng=rng) for s in range(s_count)]
        self.skff_final = SKFF(c, s_count, dtype=dtype, rng=rng)
        self.conv_out = Conv2d(c, c, 3, dtype=dtype, rng=rng)
        self._divisor = config.divisor

    def __call__(self, x):
        n, c, h, w = x.data.shape
        if h % self._divisor or w % self._divisor:
            raise ShapeError(
                f"spatial extents {h}x{w} must be divisible by {self._divisor}")
        streams = [chain(x) for chain in self.stream_down]
        for col in self.col:
            streams = col(streams)
        full = [up(s) for up, s in zip(self.final_up, streams)]
        return T.add(x, self.conv_out(self.skff_final(full)))


class RRG(Module):
    """Recursive residual group: MRBs wrapped in convs with a long skip."""

    def __init__(self, config: NetworkConfig, dtype=np.float32, rng=None):
        rng = rng or np.random.default_rng(0)
        c = config.base_channels
        self.conv_in = Conv2d(c, c, 3, dtype=dtype, rng=rng)
        self.mrb = [
            MRB(config, dtype=dtype, rng=rng) for _ in range(config.mrb_per_rrg)]
        self.conv_out = Conv2d(c, c, 3, dtype=dtype, rng=rng)

    def __call__(self, x):
        y = self.conv_in(x)
        for m in self.mrb:
            y = m(y)
        return T.add(x, self.conv_out(y))


class MIRNet(Module):
    """Full restoration network: shallow features, RRG stack, residual output
    image_hat = image + residual."""

    def __init__(self, config: NetworkConfig, dtype=np.float32, seed: int = 0):
        config.validate()
        rng = np.random.default_rng(seed)
        c = config.base_channels
        self.head = Conv2d(config.image_channels, c, 3, dtype=dtype, rng=rng)
        self.rrg = [
            RRG(config, dtype=dtype, rng=rng) for _ in range(config.n_rrg)]
        self.tail = Conv2d(c, config.image_channels, 3, dtype=dtype, rng=rng)
        self.config = config

    def __call__(self, image):
        n, c, h, w = image.data.shape
        if c != self.config.image_channels:
            raise ShapeError(
                f"expected {self.config.image_channels}-channel input, got {c}")
        d = self.config.divisor
        if h % d or w % d:
            raise ShapeError(
                f"spatial extents {h}x{w} must be divisible by {d} "
                f"for {self.config.n_streams} streams")
        x = self.head(image)
        for g in self.rrg:
            x = g(x)
        return T.add(image, self.tail(x))


# ---------------------------------------------------------------------------
# fusion variants for the aggregation comparison


class SumFusion(Module):
    """Parameter-free aggregation: plain element-wise sum of the branches."""

    def __init__(self, channels, n_branches, dtype=np.float32, rng=None):
        self._n = n_branches

    def __call__(self, branches):
        out = branches[0]
        for b in branches[1:]:
            out = T.add(out, b)
        return out


class ConcatFusion(Module):
    """Aggregation by channel concatenation and a bias-free 1x1 projection."""

    def __init__(self, channels, n_branches, dtype=np.float32, rng=None):
        rng = rng or np.random.default_rng(0)
        self.proj = Conv2d(n_branches * channels, channels, 1, bias=False,
                           dtype=dtype, rng=rng)

    def __call__(self, branches):
        return self.proj(T.concat(branches, axis=1))
