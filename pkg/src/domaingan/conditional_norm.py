"""Condition codes and central-biasing instance normalization.

A condition code is a one-hot domain selector, optionally concatenated with a
continuous latent vector. CBIN standardizes each feature map per sample and
adds a per-channel bias, tanh of a learned affine map of the condition code,
so a single network can host several mappings. With zero-initialized affine
parameters CBIN reduces exactly to plain instance normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import NumericError, ShapeError

EPS_DEFAULT = 1e-5


def one_hot_encode(index: int, n_domains: int) -> torch.Tensor:
    """One-hot domain code of length ``n_domains`` with 1.0 at ``index``."""
    if n_domains <= 0:
        raise ValueError(f"n_domains must be positive, got {n_domains}")
    if not 0 <= index < n_domains:
        raise ValueError(
            f"domain index {index} out of range for {n_domains} domains"
        )
    code = torch.zeros(n_domains)
    code[index] = 1.0
    return code


def concat_condition(
    domain_code: torch.Tensor, latent_code: torch.Tensor | None = None
) -> torch.Tensor:
    """Concatenate domain and latent parts along the last axis.

    The latent part is optional; without it the condition code is the domain
    code itself.
    """
    if latent_code is None:
        return domain_code
    return torch.cat([domain_code, latent_code], dim=-1)


def broadcast_code(code: torch.Tensor, batch_size: int) -> torch.Tensor:
    """Expand a single code vector to a batch, or pass a batch through."""
    if code.ndim == 1:
        return code.unsqueeze(0).expand(batch_size, -1)
    if code.ndim == 2:
        if code.shape[0] != batch_size:
            raise ShapeError(
                f"code batch {code.shape[0]} does not match input batch {batch_size}"
            )
        return code
    raise ShapeError(f"condition code must be 1-D or 2-D, got shape {tuple(code.shape)}")


@dataclass
class CBINParams:
    """Affine map from condition code to per-channel biases.

    weight: [n_channels, code_dim], bias: [n_channels]. Zero initialization
    makes CBIN output equal plain instance normalization of its input.
    """

    weight: torch.Tensor
    bias: torch.Tensor

    @classmethod
    def zeros(cls, n_channels: int, code_dim: int, dtype=torch.float32) -> "CBINParams":
        return cls(
            weight=torch.zeros(n_channels, code_dim, dtype=dtype),
            bias=torch.zeros(n_channels, dtype=dtype),
        )


def _spatial_standardize(features: torch.Tensor, eps: float) -> torch.Tensor:
    # Population variance over H*W, per sample and channel.
    mean = features.mean(dim=(2, 3), keepdim=True)
    var = features.var(dim=(2, 3), unbiased=False, keepdim=True)
    return (features - mean) / torch.sqrt(var + eps)


def cbin_forward(
    features: torch.Tensor,
    code: torch.Tensor,
    params: CBINParams,
    eps: float = EPS_DEFAULT,
) -> torch.Tensor:
    """Standardize each feature map and add tanh(weight @ code + bias) per channel.

    features: [B, C, H, W]; code: [B, code_dim]. Differentiable in features,
    code, and params.
    """
    if features.ndim != 4:
        raise ShapeError(f"features must be 4-D [B,C,H,W], got {tuple(features.shape)}")
    if code.ndim != 2:
        raise ShapeError(f"code must be 2-D [B,code_dim], got {tuple(code.shape)}")
    b, c = features.shape[0], features.shape[1]
    if code.shape[0] != b:
        raise ShapeError(f"code batch {code.shape[0]} != feature batch {b}")
    if params.weight.ndim != 2 or params.weight.shape[0] != c:
        raise ShapeError(
            f"params.weight must be [{c}, code_dim], got {tuple(params.weight.shape)}"
        )
    if params.weight.shape[1] != code.shape[1]:
        raise ShapeError(
            f"code_dim mismatch: weight has {params.weight.shape[1]}, code has {code.shape[1]}"
        )
    if params.bias.shape != (c,):
        raise ShapeError(f"params.bias must be [{c}], got {tuple(params.bias.shape)}")
    if not torch.isfinite(features).all():
        raise NumericError("non-finite values in features")
    if not torch.isfinite(code).all():
        raise NumericError("non-finite values in condition code")

    normalized = _spatial_standardize(features, eps)
    shift = torch.tanh(code @ params.weight.t() + params.bias)  # [B, C]
    return normalized + shift.unsqueeze(-1).unsqueeze(-1)


def instance_norm_forward(
    features: torch.Tensor,
    gamma: torch.Tensor,
    beta: torch.Tensor,
    eps: float = EPS_DEFAULT,
) -> torch.Tensor:
    """Per-sample, per-channel spatial standardization with affine gamma/beta."""
    if features.ndim != 4:
        raise ShapeError(f"features must be 4-D [B,C,H,W], got {tuple(features.shape)}")
    c = features.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"gamma/beta must be [{c}], got {tuple(gamma.shape)} / {tuple(beta.shape)}"
        )
    normalized = _spatial_standardize(features, eps)
    return normalized * gamma.view(1, c, 1, 1) + beta.view(1, c, 1, 1)


class CBIN(nn.Module):
    """CBIN layer with learnable code-to-bias affine, zero-initialized."""

    def __init__(self, n_channels: int, code_dim: int, eps: float = EPS_DEFAULT):
        super().__init__()
        self.n_channels = n_channels
        self.code_dim = code_dim
        self.eps = eps
        self.weight = nn.Parameter(torch.zeros(n_channels, code_dim))
        self.bias = nn.Parameter(torch.zeros(n_channels))

    def forward(self, x: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
        return cbin_forward(x, code, CBINParams(self.weight, self.bias), self.eps)


class InstanceNorm(nn.Module):
    """Plain instance norm with learnable gamma (init 1) and beta (init 0)."""

    def __init__(self, n_channels: int, eps: float = EPS_DEFAULT):
        super().__init__()
        self.n_channels = n_channels
        self.eps = eps
        self.gamma = nn.Parameter(torch.ones(n_channels))
        self.beta = nn.Parameter(torch.zeros(n_channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return instance_norm_forward(x, self.gamma, self.beta, self.eps)
