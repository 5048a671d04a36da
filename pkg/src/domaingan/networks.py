"""Generator, multi-scale patch discriminators, and the latent encoder.

The generator is a ResNet-style encoder-decoder: a 7x7 stem, two stride-2
downsampling convs, six residual blocks, two stride-2 transposed convs, and a
7x7 tanh head. Every normalization is CBIN except the upsampling stages,
which keep plain instance norm. Discriminators are condition-free patch
networks applied at two scales (full resolution and 2x average-pooled).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .conditional_norm import CBIN, InstanceNorm, broadcast_code
from .errors import ConfigError, ShapeError

WEIGHT_INIT_STD = 0.02


def _init_conv_weights(module: nn.Module, generator: torch.Generator) -> None:
    # DCGAN-style init: Gaussian(0, 0.02) conv weights, zero biases. Module
    # iteration order is deterministic, so a fixed seed gives identical nets.
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            with torch.no_grad():
                m.weight.normal_(0.0, WEIGHT_INIT_STD, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()


class ConvCBIN(nn.Module):
    """Reflection-padded conv followed by CBIN and an optional ReLU."""

    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int,
        stride: int,
        code_dim: int,
        relu: bool = True,
    ):
        super().__init__()
        self.pad = nn.ReflectionPad2d(kernel // 2)
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride=stride)
        self.norm = CBIN(out_ch, code_dim)
        self.relu = relu

    def forward(self, x: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
        y = self.norm(self.conv(self.pad(x)), code)
        return F.relu(y) if self.relu else y


class ResBlockCBIN(nn.Module):
    """Residual block: conv-CBIN-ReLU, conv-CBIN, additive skip."""

    def __init__(self, channels: int, code_dim: int):
        super().__init__()
        self.block1 = ConvCBIN(channels, channels, 3, 1, code_dim, relu=True)
        self.block2 = ConvCBIN(channels, channels, 3, 1, code_dim, relu=False)

    def forward(self, x: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
        return x + self.block2(self.block1(x, code), code)


@dataclass
class GeneratorConfig:
    in_channels: int = 3
    base_width: int = 64
    n_residual_blocks: int = 6
    n_down: int = 2
    n_up: int = 2
    code_dim: int = 2
    image_size: int = 128

    def validate(self) -> None:
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.base_width < 1:
            raise ConfigError(f"base_width must be >= 1, got {self.base_width}")
        if self.n_residual_blocks < 1:
            raise ConfigError(
                f"n_residual_blocks must be >= 1, got {self.n_residual_blocks}"
            )
        if self.n_down != self.n_up:
            raise ConfigError(
                f"n_down must equal n_up, got n_down={self.n_down} n_up={self.n_up}"
            )
        if self.n_down < 1:
            raise ConfigError(f"n_down must be >= 1, got {self.n_down}")
        if self.code_dim < 1:
            raise ConfigError(f"code_dim must be >= 1, got {self.code_dim}")
        if self.image_size < 1 or self.image_size % (2**self.n_down) != 0:
            raise ConfigError(
                f"image_size must be divisible by {2 ** self.n_down}, got {self.image_size}"
            )


class Generator(nn.Module):
    """Single shared generator; every forward consumes one condition code."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.code_dim = cfg.code_dim
        self.image_size = cfg.image_size
        w, cd = cfg.base_width, cfg.code_dim

        self.stem = ConvCBIN(cfg.in_channels, w, 7, 1, cd)
        downs = []
        ch = w
        for _ in range(cfg.n_down):
            downs.append(ConvCBIN(ch, ch * 2, 3, 2, cd))
            ch *= 2
        self.down = nn.ModuleList(downs)
        self.blocks = nn.ModuleList(
            ResBlockCBIN(ch, cd) for _ in range(cfg.n_residual_blocks)
        )
        ups = []
        for _ in range(cfg.n_up):
            ups.append(
                nn.ModuleDict(
                    {
                        "conv": nn.ConvTranspose2d(
                            ch, ch // 2, 3, stride=2, padding=1, output_padding=1
                        ),
                        "norm": InstanceNorm(ch // 2),
                    }
                )
            )
            ch //= 2
        self.up = nn.ModuleList(ups)
        self.head_pad = nn.ReflectionPad2d(3)
        self.head = nn.Conv2d(ch, cfg.in_channels, 7)

    def forward(self, x: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4:
            raise ShapeError(f"input must be 4-D [B,C,H,W], got {tuple(x.shape)}")
        if x.shape[2] != self.image_size or x.shape[3] != self.image_size:
            raise ShapeError(
                f"input spatial size {tuple(x.shape[2:])} does not match "
                f"configured image_size {self.image_size}"
            )
        code = broadcast_code(code, x.shape[0])
        if code.shape[1] != self.code_dim:
            raise ShapeError(
                f"code length {code.shape[1]} does not match generator "
                f"code_dim {self.code_dim}"
            )
        h = self.stem(x, code)
        for stage in self.down:
            h = stage(h, code)
        for block in self.blocks:
            h = block(h, code)
        for stage in self.up:
            h = F.relu(stage["norm"](stage["conv"](h)))
        return torch.tanh(self.head(self.head_pad(h)))


def build_generator(cfg: GeneratorConfig, rng_seed: int) -> Generator:
    """Construct a generator with deterministic seeded initialization."""
    g = Generator(cfg)
    gen = torch.Generator().manual_seed(int(rng_seed))
    _init_conv_weights(g, gen)  # CBIN affines stay zero
    return g


def generator_forward(g: Generator, x: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
    return g(x, code)


@dataclass
class DiscriminatorConfig:
    in_channels: int = 3
    base_width: int = 64
    image_size: int = 128
    min_input_size: int = 16

    def validate(self) -> None:
        if self.base_width < 1:
            raise ConfigError(f"base_width must be >= 1, got {self.base_width}")
        if self.image_size < self.min_input_size:
            raise ConfigError(
                f"image_size must be >= {self.min_input_size}, got {self.image_size}"
            )


class PatchDiscriminator(nn.Module):
    """4x4-conv patch network: stride-2 stages, then two stride-1 convs.

    Stride-2 stages (widths w, 2w, 4w) are applied only while the feature map
    stays at least 4 pixels wide, so small desk-scale inputs still leave a
    valid patch map. Instance norm from the second conv onward, leaky-ReLU
    slope 0.2, no output activation.
    """

    def __init__(self, in_channels: int, base_width: int, input_size: int):
        super().__init__()
        layers: list[nn.Module] = []
        widths = [base_width, base_width * 2, base_width * 4]
        ch, size = in_channels, input_size
        for i, width in enumerate(widths):
            if size // 2 < 4:
                break
            layers.append(nn.Conv2d(ch, width, 4, stride=2, padding=1))
            if i > 0:
                layers.append(InstanceNorm(width))
            layers.append(nn.LeakyReLU(0.2))
            ch, size = width, size // 2
        layers.append(nn.Conv2d(ch, base_width * 8, 4, stride=1, padding=1))
        layers.append(InstanceNorm(base_width * 8))
        layers.append(nn.LeakyReLU(0.2))
        layers.append(nn.Conv2d(base_width * 8, 1, 4, stride=1, padding=1))
        self.layers = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        size = min(x.shape[2], x.shape[3])
        for m in self.layers:
            if isinstance(m, nn.Conv2d):
                size = (size + 2 * m.padding[0] - m.kernel_size[0]) // m.stride[0] + 1
                if size < 1:
                    raise ShapeError(
                        f"input {tuple(x.shape[2:])} too small to survive the conv stack"
                    )
        return self.layers(x)


class MultiScaleDiscriminator(nn.Module):
    """Two patch discriminators; the second sees the input average-pooled by 2."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.scale_full = PatchDiscriminator(
            cfg.in_channels, cfg.base_width, cfg.image_size
        )
        self.scale_half = PatchDiscriminator(
            cfg.in_channels, cfg.base_width, cfg.image_size // 2
        )

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        if x.ndim != 4:
            raise ShapeError(f"input must be 4-D [B,C,H,W], got {tuple(x.shape)}")
        if min(x.shape[2], x.shape[3]) < self.cfg.min_input_size:
            raise ShapeError(
                f"input spatial size {tuple(x.shape[2:])} below minimum "
                f"{self.cfg.min_input_size}"
            )
        return [self.scale_full(x), self.scale_half(F.avg_pool2d(x, 2))]


def build_discriminator(cfg: DiscriminatorConfig, rng_seed: int) -> MultiScaleDiscriminator:
    d = MultiScaleDiscriminator(cfg)
    gen = torch.Generator().manual_seed(int(rng_seed))
    _init_conv_weights(d, gen)
    return d


def discriminator_forward(
    d: MultiScaleDiscriminator, x: torch.Tensor
) -> list[torch.Tensor]:
    return d(x)


@dataclass
class LatentDistribution:
    """Per-sample Gaussian posterior parameters: mu and logvar, [B, latent_dim]."""

    mu: torch.Tensor
    logvar: torch.Tensor


@dataclass
class EncoderConfig:
    in_channels: int = 3
    base_width: int = 64
    n_down: int = 4
    width_cap: int = 512
    latent_dim: int = 8
    code_dim: int = 2  # conditioned on the domain code only

    def validate(self) -> None:
        if self.base_width < 1 or self.width_cap < self.base_width:
            raise ConfigError(
                f"width_cap must be >= base_width, got cap={self.width_cap} "
                f"base={self.base_width}"
            )
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.n_down < 1:
            raise ConfigError(f"n_down must be >= 1, got {self.n_down}")
        if self.code_dim < 1:
            raise ConfigError(f"code_dim must be >= 1, got {self.code_dim}")


class LatentEncoder(nn.Module):
    """CBIN-conditioned conv encoder producing posterior mu and logvar heads.

    The heads are zero-initialized, so at init the posterior exactly matches
    the standard Gaussian prior (KL = 0).
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.latent_dim = cfg.latent_dim
        w, cd = cfg.base_width, cfg.code_dim
        self.stem = ConvCBIN(cfg.in_channels, w, 7, 1, cd)
        downs = []
        ch = w
        for _ in range(cfg.n_down):
            out_ch = min(ch * 2, cfg.width_cap)
            downs.append(ConvCBIN(ch, out_ch, 3, 2, cd))
            ch = out_ch
        self.down = nn.ModuleList(downs)
        self.mu_head = nn.Linear(ch, cfg.latent_dim)
        self.logvar_head = nn.Linear(ch, cfg.latent_dim)
        self.min_input_size = 2**cfg.n_down

    def forward(self, x: torch.Tensor, domain_code: torch.Tensor) -> LatentDistribution:
        if x.ndim != 4:
            raise ShapeError(f"input must be 4-D [B,C,H,W], got {tuple(x.shape)}")
        if min(x.shape[2], x.shape[3]) < self.min_input_size:
            raise ShapeError(
                f"input spatial size {tuple(x.shape[2:])} below minimum "
                f"{self.min_input_size} for {self.cfg.n_down} downsampling stages"
            )
        code = broadcast_code(domain_code, x.shape[0])
        h = self.stem(x, code)
        for stage in self.down:
            h = stage(h, code)
        pooled = h.mean(dim=(2, 3))
        return LatentDistribution(mu=self.mu_head(pooled), logvar=self.logvar_head(pooled))


def build_encoder(cfg: EncoderConfig, rng_seed: int) -> LatentEncoder:
    e = LatentEncoder(cfg)
    gen = torch.Generator().manual_seed(int(rng_seed))
    _init_conv_weights(e, gen)
    with torch.no_grad():  # heads start at the prior: mu = 0, logvar = 0
        for head in (e.mu_head, e.logvar_head):
            head.weight.zero_()
            head.bias.zero_()
    return e


def encoder_forward(
    e: LatentEncoder, x: torch.Tensor, domain_code: torch.Tensor
) -> LatentDistribution:
    return e(x, domain_code)


def reparameterize(dist: LatentDistribution, rng: np.random.Generator) -> torch.Tensor:
    """Sample mu + exp(0.5 * logvar) * n with n ~ N(0, I) drawn from rng.

    Differentiable with respect to mu and logvar; the noise carries no
    gradient.
    """
    np_dtype = np.float64 if dist.mu.dtype == torch.float64 else np.float32
    noise = torch.from_numpy(
        rng.standard_normal(size=tuple(dist.mu.shape), dtype=np_dtype)
    )
    return dist.mu + torch.exp(0.5 * dist.logvar) * noise
