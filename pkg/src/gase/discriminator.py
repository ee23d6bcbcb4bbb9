"""Dual-branch discriminator: a U-Net segmentation branch plus a confidence
branch that fuses the shared encoder's multi-scale features into a pixel-wise
realness map, with an optional Gaussian-noise cutout on the input path."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


@dataclass
class DiscriminatorConfig:
    levels: int = 4  # encoder downsampling steps
    base_channels: int = 16  # doubled at every level
    num_classes: int = 5
    dropout: float = 0.1
    convs_per_block: int = 2
    conf_channels: int = 8
    concat_reduce: bool = False  # 1x1-fuse skip concats before the 3x3 convs

    def __post_init__(self):
        if self.levels < 1 or self.base_channels < 1:
            raise ValueError("levels and base_channels must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


@dataclass
class CutoutConfig:
    fraction_range: tuple[float, float] = (0.05, 0.15)  # of image area
    noise_mean: float = 0.5
    noise_std: float = 0.25
    probability: float = 0.5

    def __post_init__(self):
        f_min, f_max = self.fraction_range
        if not 0.0 <= f_min <= f_max < 1.0:
            raise ValueError(f"need 0 <= f_min <= f_max < 1, got {self.fraction_range}")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("cutout probability must lie in [0, 1]")


def _gauss(rng, shape, fan_in):
    data = (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(T._dtype())
    return Tensor(data, requires_grad=True)


class _Conv:
    def __init__(self, rng, k, cin, cout):
        self.kernel = _gauss(rng, (k, k, cin, cout), fan_in=k * k * cin)
        self.bias = Tensor(np.zeros((1, 1, 1, cout), dtype=T._dtype()), requires_grad=True)

    def forward(self, x):
        return T.conv2d(x, self.kernel) + self.bias


class _Block:
    """convs_per_block x (3x3 conv + leaky relu)."""

    def __init__(self, rng, cin, cout, n_convs):
        self.convs = []
        ch = cin
        for _ in range(n_convs):
            self.convs.append(_Conv(rng, 3, ch, cout))
            ch = cout

    def forward(self, x):
        for conv in self.convs:
            x = T.leaky_relu(conv.forward(x), 0.2)
        return x


class SegmentationNet:
    """U-Net with softmax head; dropout in the bottleneck and decoder blocks."""

    def __init__(self, cfg: DiscriminatorConfig, rng: np.random.Generator):
        self.cfg = cfg
        n = cfg.convs_per_block
        chans = [cfg.base_channels * 2**i for i in range(cfg.levels)]
        self.enc = []
        cin = 1
        for c in chans:
            self.enc.append(_Block(rng, cin, c, n))
            cin = c
        self.bottleneck = _Block(rng, cin, cfg.base_channels * 2**cfg.levels, n)
        self.dec = []
        self.dec_reduce = []
        cin = cfg.base_channels * 2**cfg.levels
        for c in reversed(chans):
            if cfg.concat_reduce:
                self.dec_reduce.append(_Conv(rng, 1, cin + c, c))
                self.dec.append(_Block(rng, c, c, n))
            else:
                self.dec_reduce.append(None)
                self.dec.append(_Block(rng, cin + c, c, n))
            cin = c
        self.head = _Conv(rng, 1, cin, cfg.num_classes)

    def _check_divisible(self, x: Tensor):
        div = 2**self.cfg.levels
        _, h, w, _ = x.shape
        if h % div or w % div:
            raise ShapeError(
                f"spatial extents must be divisible by 2^levels = {div}, got {h}x{w}"
            )

    def encode(self, x: Tensor) -> tuple[list[Tensor], Tensor]:
        """Per-level feature maps (pre-pool) and the bottleneck output."""
        self._check_divisible(x)
        feats = []
        h = x
        for block in self.enc:
            h = block.forward(h)
            feats.append(h)
            h = T.downsample2x(h)
        return feats, h

    def decode(self, feats, bottom, train_mode: bool, rng) -> Tensor:
        h = self.bottleneck.forward(bottom)
        h = T.dropout(h, self.cfg.dropout, rng, train=train_mode)
        for block, reduce, skip in zip(self.dec, self.dec_reduce, reversed(feats)):
            h = T.concat_channels(T.upsample2x(h), skip)
            if reduce is not None:
                h = T.leaky_relu(reduce.forward(h), 0.2)
            h = block.forward(h)
            h = T.dropout(h, self.cfg.dropout, rng, train=train_mode)
        return T.softmax_channels(self.head.forward(h))

    def forward(self, x: Tensor, train_mode: bool = False, rng=None) -> Tensor:
        if train_mode and rng is None:
            raise ValueError("train_mode forward needs an rng for dropout")
        feats, bottom = self.encode(x)
        return self.decode(feats, bottom, train_mode, rng)

    def parameters(self) -> dict:
        params = {}
        for i, block in enumerate(self.enc):
            _collect_block(params, f"seg.enc.{i}", block)
        _collect_block(params, "seg.bottleneck", self.bottleneck)
        for i, (block, reduce) in enumerate(zip(self.dec, self.dec_reduce)):
            if reduce is not None:
                params[f"seg.dec.{i}.reduce.kernel"] = reduce.kernel
                params[f"seg.dec.{i}.reduce.bias"] = reduce.bias
            _collect_block(params, f"seg.dec.{i}", block)
        params["seg.head.kernel"] = self.head.kernel
        params["seg.head.bias"] = self.head.bias
        return params


def _collect_block(params: dict, prefix: str, block: _Block):
    for j, conv in enumerate(block.convs):
        params[f"{prefix}.{j}.kernel"] = conv.kernel
        params[f"{prefix}.{j}.bias"] = conv.bias


class ConfidenceNet:
    """Fuses the encoder's per-scale features into one realness channel:
    1x1 conv per scale, nearest upsampling to full resolution, concatenation,
    two 3x3 convolutions, sigmoid head."""

    def __init__(self, cfg: DiscriminatorConfig, rng: np.random.Generator):
        self.cfg = cfg
        f = cfg.conf_channels
        self.reducers = [
            _Conv(rng, 1, cfg.base_channels * 2**i, f) for i in range(cfg.levels)
        ]
        mid = 2 * f
        self.fuse1 = _Conv(rng, 3, f * cfg.levels, mid)
        self.fuse2 = _Conv(rng, 3, mid, mid)
        self.head = _Conv(rng, 1, mid, 1)

    def forward(self, feats: list[Tensor]) -> Tensor:
        if len(feats) != self.cfg.levels:
            raise ShapeError(
                f"expected {self.cfg.levels} encoder scales, got {len(feats)}"
            )
        upsampled = []
        for i, (feat, reducer) in enumerate(zip(feats, self.reducers)):
            h = T.leaky_relu(reducer.forward(feat), 0.2)
            for _ in range(i):
                h = T.upsample2x(h)
            upsampled.append(h)
        h = upsampled[0]
        for other in upsampled[1:]:
            h = T.concat_channels(h, other)
        h = T.leaky_relu(self.fuse1.forward(h), 0.2)
        h = T.leaky_relu(self.fuse2.forward(h), 0.2)
        return T.sigmoid(self.head.forward(h))

    def parameters(self) -> dict:
        params = {}
        for i, conv in enumerate(self.reducers):
            params[f"conf.reduce.{i}.kernel"] = conv.kernel
            params[f"conf.reduce.{i}.bias"] = conv.bias
        for name, conv in (("fuse1", self.fuse1), ("fuse2", self.fuse2), ("head", self.head)):
            params[f"conf.{name}.kernel"] = conv.kernel
            params[f"conf.{name}.bias"] = conv.bias
        return params


class DualDiscriminator:
    """Segmentation and confidence branches over one shared encoder pass."""

    def __init__(self, cfg: DiscriminatorConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.seg = SegmentationNet(cfg, rng)
        self.conf = ConfidenceNet(cfg, rng)

    def forward(self, x: Tensor, train_mode: bool = False, rng=None):
        """(label probabilities, confidence map) from a single encoder pass."""
        feats, bottom = self.seg.encode(x)
        label = self.seg.decode(feats, bottom, train_mode, rng)
        return label, self.conf.forward(feats)

    def parameters(self) -> dict:
        params = self.seg.parameters()
        params.update(self.conf.parameters())
        return params


def segment(x, net: SegmentationNet, train_mode: bool = False, rng=None) -> Tensor:
    """Softmax-normalised label map; dropout active only in train_mode."""
    return net.forward(T._wrap(x), train_mode=train_mode, rng=rng)


def confidence(x, seg_net: SegmentationNet, conf_net: ConfidenceNet) -> Tensor:
    """Pixel-wise realness map from the segmentation encoder's features."""
    feats, _ = seg_net.encode(T._wrap(x))
    return conf_net.forward(feats)


def random_cutout_gauss(x, cfg: CutoutConfig, rng: np.random.Generator) -> Tensor:
    """Replace one random rectangle per batch item with clamped Gaussian noise.

    Pixels outside the rectangle pass through untouched (gradient included).
    """
    x = T._wrap(x)
    b, h, w, c = x.shape
    keep = np.ones((b, h, w, 1), dtype=x.dtype)
    noise = np.zeros((b, h, w, c), dtype=x.dtype)
    f_min, f_max = cfg.fraction_range
    for i in range(b):
        if rng.random() >= cfg.probability:
            continue
        frac = rng.uniform(f_min, f_max)
        if frac <= 0.0:
            continue
        area = frac * h * w
        aspect = np.exp(rng.uniform(np.log(0.5), np.log(2.0)))
        rh = int(np.clip(round(np.sqrt(area * aspect)), 1, h))
        rw = int(np.clip(round(area / rh), 1, w))
        top = int(rng.integers(0, h - rh + 1))
        left = int(rng.integers(0, w - rw + 1))
        keep[i, top : top + rh, left : left + rw, 0] = 0.0
        block = rng.normal(cfg.noise_mean, cfg.noise_std, size=(rh, rw, c))
        noise[i, top : top + rh, left : left + rw, :] = np.clip(block, 0.0, 1.0)
    if (keep == 1.0).all():
        return x
    return x * Tensor(keep) + Tensor(noise)
