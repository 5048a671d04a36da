"""Training regimes: base, one-to-many, many-to-many, multimodal, paired.

Every regime alternates one discriminator phase (fakes detached, one Adam
step per adversarially supervised domain) with one generator phase (fresh
forwards, a single Adam step over the generator and, for the multimodal
regime, the encoder). All stochasticity flows through the numpy generator
held in the train state, so seeded runs and checkpoint resumes are exact.

Reported scalars: per-domain adversarial terms, plus cyc / rec / reg / kl as
the mean over that regime's constituent terms of the kind. Objectives use
the plain sums, so weight values keep their conventional meaning.
"""

from __future__ import annotations

import io
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .conditional_norm import concat_condition, one_hot_encode
from .data import DomainDataset, array_to_image, sample_batch, take_batch
from .errors import CheckpointError, ConfigError, ShapeError
from .networks import (
    DiscriminatorConfig,
    EncoderConfig,
    Generator,
    GeneratorConfig,
    LatentEncoder,
    MultiScaleDiscriminator,
    build_discriminator,
    build_encoder,
    build_generator,
    reparameterize,
)
from .objectives import (
    LossWeights,
    check_report_finite,
    cycle_loss,
    format_loss_line,
    kl_loss,
    latent_regression_loss,
    lsgan_d_loss,
    lsgan_g_loss,
    paired_recon_loss,
)

REGIME_KINDS = ("base", "one_to_many", "many_to_many", "multimodal", "paired")


@dataclass
class OptimizerConfig:
    lr: float = 0.001
    beta1: float = 0.5
    beta2: float = 0.999

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"optimizer.lr must be > 0, got {self.lr}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ConfigError(f"optimizer.beta1 must be in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ConfigError(f"optimizer.beta2 must be in [0, 1), got {self.beta2}")


@dataclass
class RegimeConfig:
    kind: str
    domains: list[str]
    source_domain: str | None = None
    latent_dim: int = 8
    weights: LossWeights = field(default_factory=LossWeights)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    batch_size: int = 1
    total_steps: int = 2000
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in REGIME_KINDS:
            raise ConfigError(
                f"regime.kind must be one of {REGIME_KINDS}, got '{self.kind}'"
            )
        if len(set(self.domains)) != len(self.domains):
            raise ConfigError(f"regime.domains contains duplicates: {self.domains}")
        n = len(self.domains)
        if self.kind in ("base", "multimodal") and n != 2:
            raise ConfigError(
                f"regime.domains: {self.kind} regime needs exactly 2 domains, got {n}"
            )
        if self.kind in ("one_to_many", "many_to_many") and n != 4:
            raise ConfigError(
                f"regime.domains: {self.kind} regime needs exactly 4 domains, got {n}"
            )
        if self.kind == "paired" and n < 2:
            raise ConfigError(f"regime.domains: paired regime needs >= 2 domains, got {n}")
        if self.kind in ("one_to_many", "paired"):
            if self.source_domain not in self.domains:
                raise ConfigError(
                    f"regime.source_domain must be one of {self.domains}, "
                    f"got {self.source_domain!r}"
                )
        if self.kind == "multimodal" and self.latent_dim < 1:
            raise ConfigError(f"regime.latent_dim must be >= 1, got {self.latent_dim}")
        if self.batch_size < 1:
            raise ConfigError(f"regime.batch_size must be >= 1, got {self.batch_size}")
        if self.total_steps < 0:
            raise ConfigError(f"regime.total_steps must be >= 0, got {self.total_steps}")
        self.weights.validate()
        self.optimizer.validate()

    @property
    def code_dim(self) -> int:
        extra = self.latent_dim if self.kind == "multimodal" else 0
        return len(self.domains) + extra

    def adversarial_domains(self) -> list[str]:
        if self.kind in ("one_to_many", "paired"):
            return [d for d in self.domains if d != self.source_domain]
        return list(self.domains)


@dataclass
class ModelConfig:
    image_size: int = 128
    in_channels: int = 3
    gen_base_width: int = 64
    n_residual_blocks: int = 6
    disc_base_width: int = 64
    enc_base_width: int = 64

    def validate(self) -> None:
        for name in ("image_size", "in_channels", "gen_base_width",
                     "n_residual_blocks", "disc_base_width", "enc_base_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1, got {getattr(self, name)}")


@dataclass
class TrainState:
    regime: RegimeConfig
    model: ModelConfig
    generator: Generator
    discriminators: dict[str, MultiScaleDiscriminator]
    encoder: LatentEncoder | None
    opt_g: torch.optim.Adam
    opt_d: dict[str, torch.optim.Adam]
    rng: np.random.Generator
    step: int = 0

    def domain_index(self, name: str) -> int:
        try:
            return self.regime.domains.index(name)
        except ValueError:
            raise ConfigError(
                f"unknown domain '{name}'; configured domains: {self.regime.domains}"
            ) from None

    def domain_code(self, name: str, batch_size: int) -> torch.Tensor:
        code = one_hot_encode(self.domain_index(name), len(self.regime.domains))
        return code.unsqueeze(0).expand(batch_size, -1)


def _g_named_params(state: TrainState) -> list[tuple[str, torch.nn.Parameter]]:
    named = [(f"G.{n}", p) for n, p in state.generator.named_parameters()]
    if state.encoder is not None:
        named += [(f"E.{n}", p) for n, p in state.encoder.named_parameters()]
    return named


def init_train_state(regime: RegimeConfig, model: ModelConfig) -> TrainState:
    """Build networks and optimizers with seeds derived from regime.seed."""
    regime.validate()
    model.validate()
    adv_domains = regime.adversarial_domains()
    seeds = np.random.SeedSequence(regime.seed).generate_state(4 + len(adv_domains))

    gen_cfg = GeneratorConfig(
        in_channels=model.in_channels,
        base_width=model.gen_base_width,
        n_residual_blocks=model.n_residual_blocks,
        code_dim=regime.code_dim,
        image_size=model.image_size,
    )
    generator = build_generator(gen_cfg, int(seeds[0]))

    discriminators = {}
    for i, dom in enumerate(adv_domains):
        d_cfg = DiscriminatorConfig(
            in_channels=model.in_channels,
            base_width=model.disc_base_width,
            image_size=model.image_size,
        )
        discriminators[dom] = build_discriminator(d_cfg, int(seeds[3 + i]))

    encoder = None
    if regime.kind == "multimodal":
        e_cfg = EncoderConfig(
            in_channels=model.in_channels,
            base_width=model.enc_base_width,
            width_cap=model.enc_base_width * 8,
            latent_dim=regime.latent_dim,
            code_dim=len(regime.domains),
        )
        encoder = build_encoder(e_cfg, int(seeds[1]))

    state = TrainState(
        regime=regime,
        model=model,
        generator=generator,
        discriminators=discriminators,
        encoder=encoder,
        opt_g=None,  # type: ignore[arg-type]
        opt_d={},
        rng=np.random.default_rng(int(seeds[2])),
    )
    opt = regime.optimizer
    state.opt_g = torch.optim.Adam(
        [p for _, p in _g_named_params(state)], lr=opt.lr, betas=(opt.beta1, opt.beta2)
    )
    state.opt_d = {
        dom: torch.optim.Adam(
            d.parameters(), lr=opt.lr, betas=(opt.beta1, opt.beta2)
        )
        for dom, d in discriminators.items()
    }
    return state


def sample_ordered_pair(n_domains: int, rng: np.random.Generator) -> tuple[int, int]:
    """Uniform ordered (source, target) pair with source != target."""
    if n_domains < 2:
        raise ValueError(f"need >= 2 domains, got {n_domains}")
    k = int(rng.integers(0, n_domains * (n_domains - 1)))
    src = k // (n_domains - 1)
    off = k % (n_domains - 1)
    tgt = off if off < src else off + 1
    return src, tgt


def _update_discriminator(
    state: TrainState, domain: str, real: torch.Tensor, fake: torch.Tensor
) -> float:
    disc = state.discriminators[domain]
    opt = state.opt_d[domain]
    opt.zero_grad(set_to_none=True)
    loss = lsgan_d_loss(disc(real), disc(fake.detach()))
    loss.backward()
    opt.step()
    return float(loss.item())


def _finish_g_step(state: TrainState, total_g: torch.Tensor) -> None:
    state.opt_g.zero_grad(set_to_none=True)
    total_g.backward()
    state.opt_g.step()


def _finalize(state: TrainState, report: dict[str, float]) -> dict[str, float]:
    check_report_finite(report, state.step)
    state.step += 1
    return report


def train_step_base(
    state: TrainState, batch_A: torch.Tensor, batch_B: torch.Tensor
) -> dict[str, float]:
    """One bidirectional step: both discriminators, then the generator."""
    if state.regime.kind != "base":
        raise ConfigError(f"train_step_base requires kind='base', got {state.regime.kind}")
    gen, w = state.generator, state.regime.weights
    dom_a, dom_b = state.regime.domains
    za = state.domain_code(dom_a, batch_A.shape[0])
    zb = state.domain_code(dom_b, batch_B.shape[0])

    with torch.no_grad():
        fake_b = gen(batch_A, zb)
        fake_a = gen(batch_B, za)
    d_adv_a = _update_discriminator(state, dom_a, batch_A, fake_a)
    d_adv_b = _update_discriminator(state, dom_b, batch_B, fake_b)

    fake_b = gen(batch_A, zb)
    fake_a = gen(batch_B, za)
    g_adv_b = lsgan_g_loss(state.discriminators[dom_b](fake_b))
    g_adv_a = lsgan_g_loss(state.discriminators[dom_a](fake_a))
    cyc_a = cycle_loss(batch_A, gen(fake_b, za))
    cyc_b = cycle_loss(batch_B, gen(fake_a, zb))
    total_g = g_adv_a + g_adv_b + w.lambda_cyc * (cyc_a + cyc_b)
    _finish_g_step(state, total_g)

    report = {
        f"d_adv_{dom_a}": d_adv_a,
        f"d_adv_{dom_b}": d_adv_b,
        f"g_adv_{dom_a}": float(g_adv_a.item()),
        f"g_adv_{dom_b}": float(g_adv_b.item()),
        "cyc": float(((cyc_a + cyc_b) / 2).item()),
        "total_d": d_adv_a + d_adv_b,
        "total_g": float(total_g.item()),
    }
    return _finalize(state, report)


def train_step_one_to_many(
    state: TrainState, batches: dict[str, torch.Tensor]
) -> dict[str, float]:
    """Source-to-targets step: adversaries on targets only, two-way cycles."""
    if state.regime.kind != "one_to_many":
        raise ConfigError(
            f"train_step_one_to_many requires kind='one_to_many', got {state.regime.kind}"
        )
    gen, w = state.generator, state.regime.weights
    source = state.regime.source_domain
    targets = state.regime.adversarial_domains()
    x_s = batches[source]
    z_s = state.domain_code(source, x_s.shape[0])

    d_adv = {}
    with torch.no_grad():
        fakes = {t: gen(x_s, state.domain_code(t, x_s.shape[0])) for t in targets}
    for t in targets:
        d_adv[t] = _update_discriminator(state, t, batches[t], fakes[t])

    g_adv: dict[str, torch.Tensor] = {}
    cyc_terms: list[torch.Tensor] = []
    for t in targets:
        z_t = state.domain_code(t, x_s.shape[0])
        fake_t = gen(x_s, z_t)
        g_adv[t] = lsgan_g_loss(state.discriminators[t](fake_t))
        cyc_terms.append(cycle_loss(x_s, gen(fake_t, z_s)))
        fake_s = gen(batches[t], z_s)
        cyc_terms.append(cycle_loss(batches[t], gen(fake_s, z_t)))
    cyc_sum = torch.stack(cyc_terms).sum()
    total_g = torch.stack(list(g_adv.values())).sum() + w.lambda_cyc * cyc_sum
    _finish_g_step(state, total_g)

    report = {f"d_adv_{t}": d_adv[t] for t in targets}
    report.update({f"g_adv_{t}": float(g_adv[t].item()) for t in targets})
    report["cyc"] = float((cyc_sum / len(cyc_terms)).item())
    report["total_d"] = float(sum(d_adv.values()))
    report["total_g"] = float(total_g.item())
    return _finalize(state, report)


def train_step_many_to_many(
    state: TrainState, batches: dict[str, torch.Tensor]
) -> dict[str, float]:
    """One uniformly sampled ordered pair (source j -> target i) per step."""
    if state.regime.kind != "many_to_many":
        raise ConfigError(
            f"train_step_many_to_many requires kind='many_to_many', got {state.regime.kind}"
        )
    gen, w = state.generator, state.regime.weights
    domains = state.regime.domains
    src_idx, tgt_idx = sample_ordered_pair(len(domains), state.rng)
    src, tgt = domains[src_idx], domains[tgt_idx]
    x_j, x_i = batches[src], batches[tgt]
    z_j = state.domain_code(src, x_j.shape[0])
    z_i = state.domain_code(tgt, x_i.shape[0])

    with torch.no_grad():
        fake_i = gen(x_j, z_i)
    d_adv_i = _update_discriminator(state, tgt, x_i, fake_i)

    fake_i = gen(x_j, z_i)
    g_adv_i = lsgan_g_loss(state.discriminators[tgt](fake_i))
    cyc_j = cycle_loss(x_j, gen(fake_i, z_j))
    fake_j = gen(x_i, z_j)
    cyc_i = cycle_loss(x_i, gen(fake_j, z_i))
    total_g = g_adv_i + w.lambda_cyc * (cyc_j + cyc_i)
    _finish_g_step(state, total_g)

    report = {
        f"d_adv_{tgt}": d_adv_i,
        f"g_adv_{tgt}": float(g_adv_i.item()),
        "cyc": float(((cyc_j + cyc_i) / 2).item()),
        "total_d": d_adv_i,
        "total_g": float(total_g.item()),
    }
    return _finalize(state, report)


def train_step_multimodal(
    state: TrainState,
    batch_A: torch.Tensor,
    batch_B: torch.Tensor,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """Bidirectional step with prior-sampled latents, latent regression, and
    the encoder-reconstruction path (L1 + KL)."""
    if state.regime.kind != "multimodal":
        raise ConfigError(
            f"train_step_multimodal requires kind='multimodal', got {state.regime.kind}"
        )
    if state.encoder is None:
        raise ConfigError("multimodal regime requires an encoder")
    rng = state.rng if rng is None else rng
    gen, enc, w = state.generator, state.encoder, state.regime.weights
    dom_a, dom_b = state.regime.domains
    bsz = batch_A.shape[0]
    latent_dim = state.regime.latent_dim
    z_a = state.domain_code(dom_a, bsz)
    z_b = state.domain_code(dom_b, bsz)
    c_b = torch.from_numpy(rng.standard_normal((bsz, latent_dim), dtype=np.float32))
    c_a = torch.from_numpy(rng.standard_normal((bsz, latent_dim), dtype=np.float32))
    cond_b = concat_condition(z_b, c_b)
    cond_a = concat_condition(z_a, c_a)

    with torch.no_grad():
        fake_b = gen(batch_A, cond_b)
        fake_a = gen(batch_B, cond_a)
    d_adv_a = _update_discriminator(state, dom_a, batch_A, fake_a)
    d_adv_b = _update_discriminator(state, dom_b, batch_B, fake_b)

    fake_b = gen(batch_A, cond_b)
    fake_a = gen(batch_B, cond_a)
    g_adv_b = lsgan_g_loss(state.discriminators[dom_b](fake_b))
    g_adv_a = lsgan_g_loss(state.discriminators[dom_a](fake_a))
    reg_b = latent_regression_loss(c_b, enc(fake_b, z_b).mu)
    reg_a = latent_regression_loss(c_a, enc(fake_a, z_a).mu)

    dist_a = enc(batch_A, z_a)
    rec_a = cycle_loss(batch_A, gen(fake_b, concat_condition(z_a, reparameterize(dist_a, rng))))
    kl_a = kl_loss(dist_a)
    dist_b = enc(batch_B, z_b)
    rec_b = cycle_loss(batch_B, gen(fake_a, concat_condition(z_b, reparameterize(dist_b, rng))))
    kl_b = kl_loss(dist_b)

    total_g = (
        g_adv_a + g_adv_b
        + w.lambda_cyc * (rec_a + rec_b)
        + w.lambda_reg * (reg_a + reg_b)
        + w.lambda_kl * (kl_a + kl_b)
    )
    _finish_g_step(state, total_g)

    report = {
        f"d_adv_{dom_a}": d_adv_a,
        f"d_adv_{dom_b}": d_adv_b,
        f"g_adv_{dom_a}": float(g_adv_a.item()),
        f"g_adv_{dom_b}": float(g_adv_b.item()),
        "cyc": float(((rec_a + rec_b) / 2).item()),
        "reg": float(((reg_a + reg_b) / 2).item()),
        "kl": float(((kl_a + kl_b) / 2).item()),
        "total_d": d_adv_a + d_adv_b,
        "total_g": float(total_g.item()),
    }
    return _finalize(state, report)


def train_step_paired(
    state: TrainState, batch_A: torch.Tensor, targets: dict[str, torch.Tensor]
) -> dict[str, float]:
    """Supervised step: index-aligned L1 reconstruction replaces cycles."""
    if state.regime.kind != "paired":
        raise ConfigError(
            f"train_step_paired requires kind='paired', got {state.regime.kind}"
        )
    gen, w = state.generator, state.regime.weights
    source = state.regime.source_domain
    target_names = state.regime.adversarial_domains()
    for t in target_names:
        if targets[t].shape[0] != batch_A.shape[0]:
            raise ShapeError(
                f"target batch '{t}' has {targets[t].shape[0]} samples, "
                f"source has {batch_A.shape[0]}"
            )

    d_adv = {}
    with torch.no_grad():
        fakes = {
            t: gen(batch_A, state.domain_code(t, batch_A.shape[0]))
            for t in target_names
        }
    for t in target_names:
        d_adv[t] = _update_discriminator(state, t, targets[t], fakes[t])

    g_adv: dict[str, torch.Tensor] = {}
    pairs = []
    for t in target_names:
        fake_t = gen(batch_A, state.domain_code(t, batch_A.shape[0]))
        g_adv[t] = lsgan_g_loss(state.discriminators[t](fake_t))
        pairs.append((targets[t], fake_t))
    rec_sum = paired_recon_loss(pairs)
    total_g = torch.stack(list(g_adv.values())).sum() + w.lambda_cyc * rec_sum
    _finish_g_step(state, total_g)

    report = {f"d_adv_{t}": d_adv[t] for t in target_names}
    report.update({f"g_adv_{t}": float(g_adv[t].item()) for t in target_names})
    report["rec"] = float((rec_sum / len(pairs)).item())
    report["total_d"] = float(sum(d_adv.values()))
    report["total_g"] = float(total_g.item())
    return _finalize(state, report)


def training_step(state: TrainState, datasets: dict[str, DomainDataset]) -> dict[str, float]:
    """Sample batches from the datasets and run one step of the regime."""
    cfg = state.regime
    bsz = cfg.batch_size
    if cfg.kind == "base":
        a, b = cfg.domains
        return train_step_base(
            state,
            sample_batch(datasets[a], bsz, state.rng),
            sample_batch(datasets[b], bsz, state.rng),
        )
    if cfg.kind == "multimodal":
        a, b = cfg.domains
        return train_step_multimodal(
            state,
            sample_batch(datasets[a], bsz, state.rng),
            sample_batch(datasets[b], bsz, state.rng),
        )
    if cfg.kind in ("one_to_many", "many_to_many"):
        batches = {d: sample_batch(datasets[d], bsz, state.rng) for d in cfg.domains}
        if cfg.kind == "one_to_many":
            return train_step_one_to_many(state, batches)
        return train_step_many_to_many(state, batches)
    if cfg.kind == "paired":
        source = cfg.source_domain
        n = len(datasets[source])
        indices = state.rng.integers(0, n, size=bsz)
        batch_a = take_batch(datasets[source], indices, state.rng)
        targets = {
            t: take_batch(datasets[t], indices, state.rng)
            for t in cfg.adversarial_domains()
        }
        return train_step_paired(state, batch_a, targets)
    raise ConfigError(f"unknown regime kind '{cfg.kind}'")


def _validate_datasets(state: TrainState, datasets: dict[str, DomainDataset]) -> None:
    cfg = state.regime
    missing = [d for d in cfg.domains if d not in datasets]
    if missing:
        raise ConfigError(
            f"datasets missing for domains {missing}; configured {cfg.domains}"
        )
    for name in cfg.domains:
        ds = datasets[name]
        if len(ds) == 0:
            raise ConfigError(f"dataset '{name}' is empty")
        if ds.image_size != state.model.image_size:
            raise ConfigError(
                f"dataset '{name}' image_size {ds.image_size} does not match "
                f"model.image_size {state.model.image_size}"
            )
    if cfg.kind == "paired":
        lengths = {d: len(datasets[d]) for d in cfg.domains}
        if len(set(lengths.values())) != 1:
            raise ConfigError(
                f"paired regime needs index-aligned datasets of equal size, got {lengths}"
            )


def run_training(
    state: TrainState,
    datasets: dict[str, DomainDataset],
    out_dir: str | Path | None = None,
    checkpoint_every: int = 500,
    sample_every: int = 0,
    log_stream: io.TextIOBase | None = None,
) -> list[dict[str, float]]:
    """Drive the regime's step function to total_steps; returns loss history.

    Writes one log line per step, periodic checkpoints, sample grids, and a
    final checkpoint when ``out_dir`` is given. Resuming from a checkpoint
    and finishing yields bitwise-identical parameters to a straight run.
    """
    _validate_datasets(state, datasets)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        if sample_every > 0:
            (out / "samples").mkdir(parents=True, exist_ok=True)
    history = []
    while state.step < state.regime.total_steps:
        report = training_step(state, datasets)
        history.append(report)
        if log_stream is not None:
            log_stream.write(format_loss_line(state.step, state.regime.kind, report) + "\n")
        if out is not None:
            if checkpoint_every > 0 and state.step % checkpoint_every == 0:
                save_train_state(out / "checkpoints" / f"step_{state.step:06d}.ckpt", state)
            if sample_every > 0 and state.step % sample_every == 0:
                save_sample_grid(state, datasets, out / "samples" / f"step_{state.step:06d}.png")
    if log_stream is not None:
        log_stream.flush()
    if out is not None:
        save_train_state(out / "checkpoints" / "final.ckpt", state)
    return history


# --- Checkpoint marshalling -------------------------------------------------


def _all_named_params(state: TrainState) -> dict[str, torch.nn.Parameter]:
    named = dict(_g_named_params(state))
    for dom, disc in state.discriminators.items():
        for n, p in disc.named_parameters():
            named[f"D.{dom}.{n}"] = p
    return named


def _optimizer_tensors(tag: str, opt: torch.optim.Adam, named) -> dict[str, np.ndarray]:
    out = {}
    for name, param in named:
        st = opt.state.get(param)
        if not st:
            continue
        step_val = st["step"]
        step_val = float(step_val.item()) if isinstance(step_val, torch.Tensor) else float(step_val)
        out[f"opt.{tag}.{name}.step"] = np.asarray(step_val, dtype=np.float64)
        out[f"opt.{tag}.{name}.exp_avg"] = st["exp_avg"].detach().numpy()
        out[f"opt.{tag}.{name}.exp_avg_sq"] = st["exp_avg_sq"].detach().numpy()
    return out


def _load_optimizer(tag: str, opt: torch.optim.Adam, named, tensors) -> None:
    groups = opt.state_dict()["param_groups"]
    loaded_state = {}
    for idx, (name, _) in enumerate(named):
        key = f"opt.{tag}.{name}"
        if f"{key}.exp_avg" not in tensors:
            continue
        loaded_state[idx] = {
            "step": torch.tensor(float(tensors[f"{key}.step"])),
            "exp_avg": torch.from_numpy(tensors[f"{key}.exp_avg"].copy()),
            "exp_avg_sq": torch.from_numpy(tensors[f"{key}.exp_avg_sq"].copy()),
        }
    opt.load_state_dict({"state": loaded_state, "param_groups": groups})


def save_train_state(path: str | Path, state: TrainState) -> None:
    tensors: dict[str, np.ndarray] = {
        name: p.detach().numpy() for name, p in _all_named_params(state).items()
    }
    tensors.update(_optimizer_tensors("g", state.opt_g, _g_named_params(state)))
    for dom, opt in state.opt_d.items():
        named = [(n, p) for n, p in state.discriminators[dom].named_parameters()]
        tensors.update(_optimizer_tensors(f"d.{dom}", opt, named))
    config = {"regime": asdict(state.regime), "model": asdict(state.model)}
    ckpt.save_checkpoint(
        path,
        step=state.step,
        config=config,
        tensors=tensors,
        rng_state=state.rng.bit_generator.state,
        meta={"kind": state.regime.kind, "domains": list(state.regime.domains)},
    )


def regime_config_from_dict(data: dict) -> RegimeConfig:
    data = dict(data)
    weights = LossWeights(**data.pop("weights", {}))
    optimizer = OptimizerConfig(**data.pop("optimizer", {}))
    cfg = RegimeConfig(weights=weights, optimizer=optimizer, **data)
    cfg.validate()
    return cfg


def load_train_state(path: str | Path) -> TrainState:
    """Rebuild a full train state (networks, optimizers, rng) from a checkpoint."""
    loaded = ckpt.load_checkpoint(path)
    try:
        regime = regime_config_from_dict(loaded.config["regime"])
        model = ModelConfig(**loaded.config["model"])
    except (KeyError, TypeError, ConfigError) as exc:
        raise CheckpointError(f"{path}: invalid config snapshot: {exc}") from exc
    state = init_train_state(regime, model)
    named = _all_named_params(state)
    for name, param in named.items():
        if name not in loaded.tensors:
            raise CheckpointError(f"{path}: missing tensor '{name}'")
        arr = loaded.tensors[name]
        if tuple(arr.shape) != tuple(param.shape):
            raise CheckpointError(
                f"{path}: tensor '{name}' has shape {arr.shape}, expected {tuple(param.shape)}"
            )
        with torch.no_grad():
            param.copy_(torch.from_numpy(arr.copy()))
    _load_optimizer("g", state.opt_g, _g_named_params(state), loaded.tensors)
    for dom, opt in state.opt_d.items():
        named_d = [(n, p) for n, p in state.discriminators[dom].named_parameters()]
        _load_optimizer(f"d.{dom}", opt, named_d, loaded.tensors)
    if loaded.rng_state is not None:
        state.rng.bit_generator.state = loaded.rng_state
    state.step = loaded.step
    return state


def save_sample_grid(
    state: TrainState, datasets: dict[str, DomainDataset], path: str | Path
) -> None:
    """Grid PNG: one row per domain's first image, columns = input then one
    translation per domain code (zero latent for multimodal)."""
    gen = state.generator
    rows = []
    latent = (
        torch.zeros(1, state.regime.latent_dim)
        if state.regime.kind == "multimodal"
        else None
    )
    with torch.no_grad():
        for dom in state.regime.domains:
            x = take_batch(datasets[dom], [0])
            cells = [x[0].numpy()]
            for target in state.regime.domains:
                code = concat_condition(state.domain_code(target, 1), latent)
                cells.append(gen(x, code)[0].numpy())
            rows.append(np.concatenate(cells, axis=2))
    grid = np.concatenate(rows, axis=1)
    array_to_image(grid).save(path, format="PNG")
