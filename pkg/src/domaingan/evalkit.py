"""Quantitative metrics: feature-space domain consistency and classification.

Domain consistency samples (real, generated) pairs from one domain, computes
the cosine similarity of flattened features at five extractor stages, sums
over stages and averages over pairs; a value of 5 means the pairs look
identical to the extractor at every stage. The default extractor is a
fixed-seed random conv stack, which keeps the metric a valid relative measure
without pretrained weights; a VGG-16-shaped adapter accepts external weights
for absolute comparisons.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError

N_METRIC_STAGES = 5
ZERO_NORM_EPS = 1e-12


class RandomConvFeatureExtractor(nn.Module):
    """Five stride-2 conv stages with fixed-seed random weights.

    Deterministic given the seed; stage widths double up to a cap. Weights use
    fan-in scaling so activations keep a usable magnitude through the stack.
    """

    def __init__(self, seed: int = 0, base_width: int = 16, in_channels: int = 3):
        super().__init__()
        self.seed = seed
        gen = torch.Generator().manual_seed(int(seed))
        widths = [base_width * m for m in (1, 2, 4, 8, 8)]
        convs = []
        ch = in_channels
        for w in widths:
            conv = nn.Conv2d(ch, w, 3, stride=2, padding=1)
            with torch.no_grad():
                std = (2.0 / (ch * 9)) ** 0.5
                conv.weight.normal_(0.0, std, generator=gen)
                conv.bias.zero_()
            convs.append(conv)
            ch = w
        self.convs = nn.ModuleList(convs)
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def extractor_id(self) -> str:
        return f"random-conv-seed{self.seed}"

    def extract(self, images: torch.Tensor) -> list[torch.Tensor]:
        stages = []
        h = images
        with torch.no_grad():
            for conv in self.convs:
                h = F.relu(conv(h))
                stages.append(h)
        return stages


class Vgg16FeatureExtractor(nn.Module):
    """VGG-16 conv topology; stages are the five convs preceding each pool.

    Weights are not bundled: pass a state dict in torchvision's
    ``features.N.{weight,bias}`` naming via ``load_torchvision_weights`` to
    reproduce ImageNet-feature evaluation. Inputs in [-1, 1] are mapped to
    ImageNet normalization internally.
    """

    # (out_channels, convs per block); a pool follows each block
    BLOCKS = ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3))

    def __init__(self):
        super().__init__()
        blocks = []
        ch = 3
        for width, n_convs in self.BLOCKS:
            convs = []
            for _ in range(n_convs):
                convs.append(nn.Conv2d(ch, width, 3, padding=1))
                ch = width
            blocks.append(nn.ModuleList(convs))
        self.blocks = nn.ModuleList(blocks)
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))
        self._weights_tag = "random-init"
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def extractor_id(self) -> str:
        return f"vgg16-{self._weights_tag}"

    def load_torchvision_weights(self, state_dict_path: str) -> None:
        raw = torch.load(state_dict_path, map_location="cpu", weights_only=True)
        convs = [c for block in self.blocks for c in block]
        conv_keys = sorted(
            {k.rsplit(".", 1)[0] for k in raw if k.startswith("features.")},
            key=lambda k: int(k.split(".")[1]),
        )
        if len(conv_keys) != len(convs):
            raise ConfigError(
                f"expected {len(convs)} conv layers in state dict, found {len(conv_keys)}"
            )
        with torch.no_grad():
            for conv, key in zip(convs, conv_keys):
                conv.weight.copy_(raw[f"{key}.weight"])
                conv.bias.copy_(raw[f"{key}.bias"])
        self._weights_tag = "pretrained"

    def extract(self, images: torch.Tensor) -> list[torch.Tensor]:
        h = (images + 1.0) / 2.0
        h = (h - self.mean) / self.std
        stages = []
        with torch.no_grad():
            for block in self.blocks:
                for conv in block:
                    h = F.relu(conv(h))
                stages.append(h)  # pre-pool features
                h = F.max_pool2d(h, 2)
        return stages


@dataclass
class ConsistencyReport:
    total: float
    n_pairs: int
    per_layer: list[float]
    extractor_id: str = ""
    seed: int | None = None

    def format(self) -> str:
        layers = " ".join(
            f"layer{i}={v:.6f}" for i, v in enumerate(self.per_layer)
        )
        seed = "none" if self.seed is None else str(self.seed)
        return (
            f"metric=consistency total={self.total:.6f} n_pairs={self.n_pairs} "
            f"{layers} seed={seed} extractor={self.extractor_id}"
        )


def _as_tensor_set(images) -> torch.Tensor:
    if isinstance(images, np.ndarray):
        images = torch.from_numpy(images)
    if not isinstance(images, torch.Tensor):
        images = torch.stack([torch.as_tensor(im) for im in images])
    if images.ndim != 4:
        raise ValueError(f"image set must be [N,3,H,W], got {tuple(images.shape)}")
    return images.float()


def _stage_features(extractor, images: torch.Tensor, chunk: int = 32) -> list[torch.Tensor]:
    parts: list[list[torch.Tensor]] = []
    for start in range(0, len(images), chunk):
        stages = extractor.extract(images[start : start + chunk])
        if len(stages) != N_METRIC_STAGES:
            raise ValueError(
                f"extractor must produce {N_METRIC_STAGES} stages, got {len(stages)}"
            )
        parts.append([s.reshape(s.shape[0], -1) for s in stages])
    return [torch.cat([p[i] for p in parts]) for i in range(N_METRIC_STAGES)]


def _cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    na = a.norm(dim=1)
    nb = b.norm(dim=1)
    degenerate = (na < ZERO_NORM_EPS) | (nb < ZERO_NORM_EPS)
    if degenerate.any():
        warnings.warn("zero-norm feature vector in cosine similarity; scored as 0")
    denom = torch.where(degenerate, torch.ones_like(na), na * nb)
    cos = (a * b).sum(dim=1) / denom
    return torch.where(degenerate, torch.zeros_like(cos), cos)


def domain_consistency(
    real_set,
    gen_set,
    extractor,
    n_pairs: int = 2000,
    rng: np.random.Generator | None = None,
    identical_pairs: bool = False,
) -> ConsistencyReport:
    """Mean summed per-stage cosine similarity over sampled (real, gen) pairs.

    Pairs are sampled uniformly with replacement. ``identical_pairs`` forces
    index-matched pairing (self-similarity check; requires equal set sizes).
    """
    real = _as_tensor_set(real_set)
    gen = _as_tensor_set(gen_set)
    if len(real) == 0 or len(gen) == 0:
        raise ValueError("image sets must be non-empty")
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    if identical_pairs:
        if len(real) != len(gen):
            raise ValueError("identical_pairs requires equal set sizes")
        if rng is None:
            idx_r = np.arange(min(n_pairs, len(real))) % len(real)
        else:
            idx_r = rng.integers(0, len(real), size=n_pairs)
        idx_g = idx_r
    else:
        if rng is None:
            raise ValueError("rng is required unless identical_pairs=True")
        idx_r = rng.integers(0, len(real), size=n_pairs)
        idx_g = rng.integers(0, len(gen), size=n_pairs)

    real_feats = _stage_features(extractor, real)
    gen_feats = _stage_features(extractor, gen)
    ridx = torch.from_numpy(np.asarray(idx_r))
    gidx = torch.from_numpy(np.asarray(idx_g))
    per_layer = [
        _cosine(rf[ridx], gf[gidx]).mean().item()
        for rf, gf in zip(real_feats, gen_feats)
    ]
    return ConsistencyReport(
        total=float(sum(per_layer)),
        n_pairs=len(idx_r),
        per_layer=per_layer,
        extractor_id=getattr(extractor, "extractor_id", type(extractor).__name__),
    )


@dataclass
class ClassifierConfig:
    steps: int = 500
    batch_size: int = 16
    lr: float = 1e-3
    base_width: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.steps < 1:
            raise ConfigError(f"classifier steps must be >= 1, got {self.steps}")
        if self.batch_size < 2:
            raise ConfigError(
                f"classifier batch_size must be >= 2, got {self.batch_size}"
            )
        if self.lr <= 0:
            raise ConfigError(f"classifier lr must be > 0, got {self.lr}")


class DomainClassifier(nn.Module):
    """Small binary CNN: four stride-2 conv blocks, global pool, linear head.

    Labels follow configured domain order: 0 -> domain A, 1 -> domain B.
    """

    def __init__(self, base_width: int = 16, in_channels: int = 3):
        super().__init__()
        w = base_width
        widths = [w, 2 * w, 4 * w, 4 * w]
        convs = []
        ch = in_channels
        for width in widths:
            convs.append(nn.Conv2d(ch, width, 3, stride=2, padding=1))
            ch = width
        self.convs = nn.ModuleList(convs)
        self.head = nn.Linear(ch, 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = x
        for conv in self.convs:
            h = F.relu(conv(h))
        return self.head(h.mean(dim=(2, 3)))


def train_domain_classifier(
    real_A,
    real_B,
    train_cfg: ClassifierConfig,
    rng: np.random.Generator,
) -> DomainClassifier:
    """Train the binary domain classifier with cross-entropy and Adam."""
    train_cfg.validate()
    set_a = _as_tensor_set(real_A)
    set_b = _as_tensor_set(real_B)
    if len(set_a) == 0 or len(set_b) == 0:
        raise ConfigError("degenerate training data: both domains need images")
    clf = DomainClassifier(base_width=train_cfg.base_width)
    gen = torch.Generator().manual_seed(int(train_cfg.seed))
    for m in clf.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            with torch.no_grad():
                m.weight.normal_(0.0, 0.05, generator=gen)
                m.bias.zero_()
    opt = torch.optim.Adam(clf.parameters(), lr=train_cfg.lr)
    half = train_cfg.batch_size // 2
    labels = torch.cat([torch.zeros(half, dtype=torch.long), torch.ones(half, dtype=torch.long)])
    for _ in range(train_cfg.steps):
        ia = rng.integers(0, len(set_a), size=half)
        ib = rng.integers(0, len(set_b), size=half)
        batch = torch.cat([set_a[ia], set_b[ib]])
        opt.zero_grad(set_to_none=True)
        loss = F.cross_entropy(clf(batch), labels)
        loss.backward()
        opt.step()
    clf.eval()
    return clf


def classification_accuracy(classifier, image_set, expected_label: int) -> float:
    """Fraction of images whose argmax logit equals the expected label."""
    images = _as_tensor_set(image_set)
    if len(images) == 0:
        raise ValueError("image set must be non-empty")
    hits = 0
    with torch.no_grad():
        for start in range(0, len(images), 64):
            logits = classifier(images[start : start + 64])
            hits += int((logits.argmax(dim=1) == expected_label).sum())
    return hits / len(images)
