"""Loss functions: least-squares adversarial, cycle, latent regression, KL, paired L1.

Conventions: mean reduction over batch and spatial positions everywhere,
averaged across discriminator scales; least-squares targets are real=1 /
fake=0 for the discriminator and fake=1 for the generator, with no 0.5
prefactor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import ConfigError, NumericError, ShapeError, TrainingError


@dataclass
class LossWeights:
    lambda_cyc: float = 10.0
    lambda_kl: float = 0.1
    lambda_reg: float = 0.5

    def validate(self) -> None:
        for name in ("lambda_cyc", "lambda_kl", "lambda_reg"):
            if getattr(self, name) < 0:
                raise ConfigError(f"weights.{name} must be >= 0, got {getattr(self, name)}")


def lsgan_d_loss(
    real_maps: list[torch.Tensor], fake_maps: list[torch.Tensor]
) -> torch.Tensor:
    """Discriminator objective: mean over scales of mean((real-1)^2) + mean(fake^2).

    Fake maps are expected to be detached from the generator by the caller.
    """
    if not real_maps or not fake_maps:
        raise ValueError("lsgan_d_loss requires non-empty map lists")
    if len(real_maps) != len(fake_maps):
        raise ValueError(
            f"scale count mismatch: {len(real_maps)} real vs {len(fake_maps)} fake"
        )
    per_scale = [
        ((r - 1.0) ** 2).mean() + (f**2).mean() for r, f in zip(real_maps, fake_maps)
    ]
    return torch.stack(per_scale).mean()


def lsgan_g_loss(fake_maps: list[torch.Tensor]) -> torch.Tensor:
    """Generator objective: mean over scales of mean((fake-1)^2)."""
    if not fake_maps:
        raise ValueError("lsgan_g_loss requires a non-empty map list")
    per_scale = [((f - 1.0) ** 2).mean() for f in fake_maps]
    return torch.stack(per_scale).mean()


def cycle_loss(x: torch.Tensor, x_cycled: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference between an image batch and its reconstruction."""
    if x.shape != x_cycled.shape:
        raise ShapeError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_cycled.shape)}")
    return (x - x_cycled).abs().mean()


def latent_regression_loss(c: torch.Tensor, c_hat: torch.Tensor) -> torch.Tensor:
    """Mean L1 distance between injected latent codes and recovered ones."""
    if c.shape != c_hat.shape:
        raise ShapeError(f"shape mismatch: {tuple(c.shape)} vs {tuple(c_hat.shape)}")
    return (c - c_hat).abs().mean()


def kl_loss(dist_or_mu, logvar: torch.Tensor | None = None) -> torch.Tensor:
    """KL divergence of N(mu, exp(logvar)) from N(0, I), averaged over the batch.

    Per sample: 0.5 * sum_dims(mu^2 + exp(logvar) - logvar - 1). Accepts a
    latent distribution object (with .mu/.logvar) or the two tensors.
    """
    if logvar is None:
        mu, logvar = dist_or_mu.mu, dist_or_mu.logvar
    else:
        mu = dist_or_mu
    if mu.shape != logvar.shape:
        raise ShapeError(f"shape mismatch: {tuple(mu.shape)} vs {tuple(logvar.shape)}")
    if not (torch.isfinite(mu).all() and torch.isfinite(logvar).all()):
        raise NumericError("non-finite values in latent distribution")
    per_sample = 0.5 * (mu**2 + logvar.exp() - logvar - 1.0).sum(dim=-1)
    return per_sample.mean()


def paired_recon_loss(
    pairs: list[tuple[torch.Tensor, torch.Tensor]]
) -> torch.Tensor:
    """Sum over (target, generated) pairs of mean L1 distances."""
    if not pairs:
        return torch.tensor(0.0)
    terms = []
    for target, generated in pairs:
        if target.shape != generated.shape:
            raise ShapeError(
                f"pair shape mismatch: {tuple(target.shape)} vs {tuple(generated.shape)}"
            )
        terms.append((target - generated).abs().mean())
    return torch.stack(terms).sum()


# Canonical ordering of loss-report keys for log lines: per-domain
# discriminator terms, per-domain generator terms, then scalar components.
_SCALAR_KEY_ORDER = ("cyc", "rec", "reg", "kl", "total_d", "total_g")


def report_key_order(report: dict[str, float]) -> list[str]:
    d_keys = sorted(k for k in report if k.startswith("d_adv_"))
    g_keys = sorted(k for k in report if k.startswith("g_adv_"))
    tail = [k for k in _SCALAR_KEY_ORDER if k in report]
    return d_keys + g_keys + tail


def format_loss_line(step: int, regime: str, report: dict[str, float]) -> str:
    """One structured text line per training step, fixed key order."""
    parts = [f"step={step}", f"regime={regime}"]
    parts += [f"{k}={report[k]:.6f}" for k in report_key_order(report)]
    return " ".join(parts)


def check_report_finite(report: dict[str, float], step: int) -> None:
    for name, value in report.items():
        if not math.isfinite(value):
            raise TrainingError(step, name)
