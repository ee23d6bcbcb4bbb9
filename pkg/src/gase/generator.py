"""Style-based synthesis: a spectrally-normalised dense stack maps Gaussian
noise onto a learnable style manifold, and a resampling-free convolution
stack renders one-hot label maps into images, with the style vector
modulating every kernel in its context-aggregation section.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


@dataclass
class GeneratorConfig:
    noise_dim: int = 64
    style_dim: int = 64
    mapping_layers: int = 4
    label_channels: int = 5
    lead_blocks: int = 3
    lead_channels: int = 32
    cam_kernels: tuple = (3, 5, 7, 9)
    cam_channels: tuple = (64, 48, 32, 16)
    cam_dilations: tuple = (1, 1, 1, 1)
    demod_eps: float = 1e-8
    modulated: bool = True  # False: plain convolutions in the CAM (ablation)

    def __post_init__(self):
        self.cam_kernels = tuple(self.cam_kernels)
        self.cam_channels = tuple(self.cam_channels)
        self.cam_dilations = tuple(self.cam_dilations)
        if not (len(self.cam_kernels) == len(self.cam_channels) == len(self.cam_dilations)):
            raise ValueError("cam_kernels/cam_channels/cam_dilations lengths differ")
        if any(b > a for a, b in zip(self.cam_kernels[1:], self.cam_kernels)):
            raise ValueError(f"cam kernel sizes must be non-decreasing: {self.cam_kernels}")
        if any(b > a for a, b in zip(self.cam_channels, self.cam_channels[1:])):
            raise ValueError(f"cam output channels must be non-increasing: {self.cam_channels}")
        if min(self.cam_dilations) < 1:
            raise ValueError("cam dilations must be >= 1")
        if self.demod_eps <= 0:
            raise ValueError("demod_eps must be positive")


def _gauss(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    scale = 1.0 / np.sqrt(fan_in)
    data = (rng.standard_normal(shape) * scale).astype(T._dtype())
    return Tensor(data, requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=T._dtype()), requires_grad=True)


def spectral_normalize(weight: Tensor, u: np.ndarray, iters: int = 1):
    """Divide a dense weight by its power-iteration top-singular-value estimate.

    Returns (normalised weight, updated u).  The iteration vectors enter the
    sigma estimate as constants, so gradients flow through the raw weight
    only.  A zero weight clamps sigma at 1e-8 and comes back unchanged (zero).
    """
    if iters < 1:
        raise ValueError("spectral_normalize needs iters >= 1")
    w = weight.data
    u = np.asarray(u, dtype=np.float64).reshape(1, w.shape[1])
    for _ in range(iters):
        v = u @ w.T
        v = v / (np.linalg.norm(v) + 1e-12)
        u = v @ w
        u = u / (np.linalg.norm(u) + 1e-12)
    v_c = Tensor(v.astype(w.dtype))
    u_c = Tensor(u.astype(w.dtype))
    sigma = T.clip((v_c @ weight @ T.reshape(u_c, (w.shape[1], 1))).reshape(()), 1e-8, np.inf)
    return weight / sigma, u


class SpectralDense:
    """Dense layer whose weight is spectrally normalised on every forward."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int):
        self.weight = _gauss(rng, (n_in, n_out), fan_in=n_in)
        self.bias = _zeros((1, n_out))
        u = rng.standard_normal((1, n_out))
        self.u = u / np.linalg.norm(u)

    def forward(self, x: Tensor, power_iters: int = 1, update_u: bool = True) -> Tensor:
        w_norm, u_new = spectral_normalize(self.weight, self.u, power_iters)
        if update_u:
            self.u = u_new
        return T.dense(x, w_norm, self.bias)


class ManifoldMapping:
    """Noise-to-style transform: consecutive spectrally-normalised dense layers."""

    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        self.cfg = cfg
        dims = [cfg.noise_dim] + [cfg.style_dim] * cfg.mapping_layers
        self.layers = [SpectralDense(rng, dims[i], dims[i + 1]) for i in range(cfg.mapping_layers)]

    def forward(self, z, update_u: bool = False) -> Tensor:
        z = T._wrap(z)
        if z.shape != (1, self.cfg.noise_dim):
            raise ShapeError(
                f"noise vector must be 1x{self.cfg.noise_dim}, got {z.shape}"
            )
        if not np.all(np.isfinite(z.data)):
            raise ValueError("noise vector must be finite")
        h = z
        for i, layer in enumerate(self.layers):
            h = layer.forward(h, update_u=update_u)
            if i < len(self.layers) - 1:
                h = T.leaky_relu(h, 0.2)
        return h

    def parameters(self) -> dict:
        params = {}
        for i, layer in enumerate(self.layers):
            params[f"mapping.{i}.weight"] = layer.weight
            params[f"mapping.{i}.bias"] = layer.bias
        return params

    def state_arrays(self) -> dict:
        return {f"mapping.{i}.u": layer.u for i, layer in enumerate(self.layers)}


def manifold_map(z, mapping: ManifoldMapping, update_u: bool = False) -> Tensor:
    return mapping.forward(z, update_u=update_u)


def modulate_demodulate(kernel, scale, eps: float = 1e-8) -> Tensor:
    """Scale a conv kernel elementwise, then renormalise each output-channel
    slice to (near) unit L2 norm."""
    kernel, scale = T._wrap(kernel), T._wrap(scale)
    if kernel.shape != scale.shape:
        raise ShapeError(
            f"modulation tensor shape {scale.shape} != kernel shape {kernel.shape}"
        )
    scaled = kernel * scale
    sumsq = (scaled * scaled).sum(axis=(0, 1, 2), keepdims=True)
    return scaled / T.sqrt(sumsq + eps)


class ModConvLayer:
    """Convolution whose kernel is modulated by a dense projection of the style.

    With modulated=False it degrades to a plain biased convolution (the
    mapping-free ablation).
    """

    def __init__(
        self,
        rng: np.random.Generator,
        style_dim: int,
        kernel_size: int,
        in_channels: int,
        out_channels: int,
        dilation: int = 1,
        eps: float = 1e-8,
        modulated: bool = True,
    ):
        k, i, o = kernel_size, in_channels, out_channels
        q = k * k * i * o
        self.kernel = _gauss(rng, (k, k, i, o), fan_in=k * k * i)
        self.proj_weight = _gauss(rng, (style_dim, q), fan_in=style_dim)
        self.proj_bias = Tensor(np.ones((1, q), dtype=T._dtype()), requires_grad=True)
        self.bias = _zeros((1, 1, 1, o))  # used only in unmodulated mode
        self.dilation = dilation
        self.eps = eps
        self.modulated = modulated

    def forward(self, x: Tensor, style: Tensor | None) -> Tensor:
        if not self.modulated:
            return T.conv2d(x, self.kernel, dilation=self.dilation) + self.bias
        kern = modulate_demodulate(self.kernel, self.style_kernel_scale(style), self.eps)
        return T.conv2d(x, kern, dilation=self.dilation)

    def style_kernel_scale(self, style: Tensor) -> Tensor:
        """Dense style projection reshaped onto the kernel axes."""
        if style.shape[1] != self.proj_weight.shape[0]:
            raise ShapeError(
                f"style vector axis 1 is {style.shape[1]}, layer expects "
                f"{self.proj_weight.shape[0]}"
            )
        v = T.dense(style, self.proj_weight, self.proj_bias)
        return T.reshape(v, self.kernel.shape)


def modconv_forward(x, style, layer: ModConvLayer) -> Tensor:
    return layer.forward(T._wrap(x), style)


class _ConvBlock:
    def __init__(self, rng, kernel_size, in_channels, out_channels):
        self.kernel = _gauss(
            rng, (kernel_size, kernel_size, in_channels, out_channels),
            fan_in=kernel_size * kernel_size * in_channels,
        )
        self.bias = _zeros((1, 1, 1, out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.kernel) + self.bias


class SynthesisGenerator:
    """Label-conditioned renderer: leading shape convolutions, a stack of
    style-modulated context-aggregation convolutions with growing receptive
    field, and a sigmoid projection to one channel.  No layer resamples the
    spatial grid."""

    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.lead = []
        ch = cfg.label_channels
        for _ in range(cfg.lead_blocks):
            self.lead.append(_ConvBlock(rng, 3, ch, cfg.lead_channels))
            ch = cfg.lead_channels
        self.cam = []
        for k, out_ch, dil in zip(cfg.cam_kernels, cfg.cam_channels, cfg.cam_dilations):
            self.cam.append(
                ModConvLayer(
                    rng, cfg.style_dim, k, ch, out_ch,
                    dilation=dil, eps=cfg.demod_eps, modulated=cfg.modulated,
                )
            )
            ch = out_ch
        self.out = _ConvBlock(rng, 1, ch, 1)

    def synthesize(self, label: Tensor, style: Tensor | None) -> Tensor:
        return self.synthesize_many(label, [style])[0]

    def synthesize_many(self, label: Tensor, styles) -> list[Tensor]:
        """One image per style; the style-independent lead trunk runs once."""
        label = T._wrap(label)
        _require_one_hot(label)
        spatial = label.shape[1:3]
        trunk = label
        for block in self.lead:
            trunk = T.leaky_relu(block.forward(trunk), 0.2)
            assert trunk.shape[1:3] == spatial
        outputs = []
        for style in styles:
            if self.cfg.modulated:
                if style is None:
                    raise ValueError("modulated synthesis needs a style vector")
                style = T._wrap(style)
            h = trunk
            for layer in self.cam:
                h = T.leaky_relu(layer.forward(h, style), 0.2)
                assert h.shape[1:3] == spatial
            outputs.append(T.sigmoid(self.out.forward(h)))
        return outputs

    def parameters(self) -> dict:
        params = {}
        for i, block in enumerate(self.lead):
            params[f"synthesis.lead.{i}.kernel"] = block.kernel
            params[f"synthesis.lead.{i}.bias"] = block.bias
        for i, layer in enumerate(self.cam):
            params[f"synthesis.cam.{i}.kernel"] = layer.kernel
            if layer.modulated:
                params[f"synthesis.cam.{i}.proj_weight"] = layer.proj_weight
                params[f"synthesis.cam.{i}.proj_bias"] = layer.proj_bias
            else:
                params[f"synthesis.cam.{i}.bias"] = layer.bias
        params["synthesis.out.kernel"] = self.out.kernel
        params["synthesis.out.bias"] = self.out.bias
        return params


def _require_one_hot(label: Tensor) -> None:
    data = label.data
    if label.ndim != 4:
        raise ShapeError(f"label map must be B,H,W,C, got {label.ndim} axes")
    values = np.unique(data)
    if not np.all(np.isin(values, (0.0, 1.0))) or not np.allclose(
        data.sum(axis=-1), 1.0
    ):
        raise ValueError("label map must be exactly one-hot")


class Generator:
    """Bundle of the manifold mapping and the synthesis stack."""

    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.mapping = ManifoldMapping(cfg, rng) if cfg.modulated else None
        self.synthesis = SynthesisGenerator(cfg, rng)

    def draw_noise(self, rng: np.random.Generator) -> Tensor:
        return Tensor(rng.standard_normal((1, self.cfg.noise_dim)).astype(T._dtype()))

    def map_noise(self, z, update_u: bool = False) -> Tensor:
        if self.mapping is None:
            raise ValueError("this generator variant has no manifold mapping")
        return self.mapping.forward(z, update_u=update_u)

    def synthesize(self, label, style) -> Tensor:
        return self.synthesis.synthesize(label, style)

    def parameters(self) -> dict:
        params = {}
        if self.mapping is not None:
            params.update(self.mapping.parameters())
        params.update(self.synthesis.parameters())
        return params

    def state_arrays(self) -> dict:
        return self.mapping.state_arrays() if self.mapping is not None else {}


def synthesize(label, style, generator) -> Tensor:
    syn = generator.synthesis if isinstance(generator, Generator) else generator
    return syn.synthesize(label, style)
