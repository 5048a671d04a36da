"""Command-line surface: train, translate, evaluate, synth.

Exit codes: 0 success, 2 usage/config error, 3 runtime training error.
Every command takes --seed where randomness is involved; --deterministic
forces single-threaded torch so repeated runs are bitwise identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .config import load_run_config, load_synthetic_spec
from .data import (
    load_domain_dataset,
    make_synthetic_domains,
    preprocess,
    save_image,
    write_synthetic_domains,
)
from .errors import CheckpointError, ConfigError, DataError, TrainingError
from .evalkit import (
    ClassifierConfig,
    RandomConvFeatureExtractor,
    classification_accuracy,
    domain_consistency,
    train_domain_classifier,
)
from .regimes import init_train_state, load_train_state, run_training

USAGE_ERROR = 2
TRAINING_ERROR = 3


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return USAGE_ERROR


def _build_datasets(run_config):
    data = run_config.data
    size = run_config.model.image_size
    if data.synthetic is not None:
        rng = np.random.default_rng(data.synthetic_seed)
        datasets = make_synthetic_domains(data.synthetic, rng)
        if data.augment:
            for ds in datasets.values():
                ds.augment = True
        return datasets
    root = Path(data.root)
    datasets = {}
    for domain in run_config.regime.domains:
        datasets[domain] = load_domain_dataset(
            root / domain, size, augment=data.augment
        )
    return datasets


def cmd_train(args) -> int:
    try:
        run_config = load_run_config(args.config)
        datasets = _build_datasets(run_config)
        if args.resume:
            state = load_train_state(args.resume)
            if state.regime.kind != run_config.regime.kind or list(
                state.regime.domains
            ) != list(run_config.regime.domains):
                raise ConfigError(
                    "resume checkpoint regime does not match the config "
                    f"(checkpoint: {state.regime.kind}/{state.regime.domains}, "
                    f"config: {run_config.regime.kind}/{run_config.regime.domains})"
                )
            state.regime.total_steps = run_config.regime.total_steps
        else:
            state = init_train_state(run_config.regime, run_config.model)
    except (ConfigError, DataError, CheckpointError) as exc:
        return _fail(str(exc))

    if args.deterministic:
        torch.set_num_threads(1)

    out_dir = Path(run_config.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.txt"
    try:
        with open(log_path, "a") as log_stream:
            run_training(
                state,
                datasets,
                out_dir=out_dir,
                checkpoint_every=run_config.output.checkpoint_every,
                sample_every=run_config.output.sample_every,
                log_stream=log_stream,
            )
    except TrainingError as exc:
        dump_path = out_dir / f"diagnostic_step_{exc.step:06d}.json"
        dump = {
            "step": exc.step,
            "loss": exc.loss_name,
            "regime": asdict(state.regime),
            "model": asdict(state.model),
        }
        dump_path.write_text(json.dumps(dump, indent=2))
        print(f"error: {exc}; diagnostics written to {dump_path}", file=sys.stderr)
        return TRAINING_ERROR
    print(f"training complete at step {state.step}; outputs in {out_dir}")
    return 0


def _parse_latent(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"--latent: expected comma-separated floats: {exc}") from exc


def _input_images(input_path: Path, image_size: int):
    """Yield (name, [3,S,S] array) for a single file or a directory of images."""
    if input_path.is_dir():
        files = sorted(
            p for p in input_path.iterdir()
            if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        )
        if not files:
            raise DataError(f"{input_path}: no image files")
    else:
        if not input_path.exists():
            raise DataError(f"{input_path}: no such file")
        files = [input_path]
    for p in files:
        yield p.name, preprocess(p.read_bytes(), image_size)


def cmd_translate(args) -> int:
    try:
        state = load_train_state(args.checkpoint)
    except CheckpointError as exc:
        return _fail(str(exc))
    regime = state.regime
    if args.domain not in regime.domains:
        return _fail(
            f"unknown domain '{args.domain}'; valid domains: {', '.join(regime.domains)}"
        )
    latent = None
    if regime.kind == "multimodal":
        if args.latent is not None:
            try:
                values = _parse_latent(args.latent)
            except ConfigError as exc:
                return _fail(str(exc))
            if len(values) != regime.latent_dim:
                return _fail(
                    f"--latent must have {regime.latent_dim} values, got {len(values)}"
                )
            latent = torch.tensor(values, dtype=torch.float32)
        else:
            rng = np.random.default_rng(args.seed)
            latent = torch.from_numpy(
                rng.standard_normal(regime.latent_dim).astype(np.float32)
            )
    elif args.latent is not None:
        return _fail(f"--latent is only valid for multimodal checkpoints, regime is '{regime.kind}'")

    if args.deterministic:
        torch.set_num_threads(1)
    gen = state.generator.eval()
    code = state.domain_code(args.domain, 1)
    if latent is not None:
        code = torch.cat([code, latent.unsqueeze(0)], dim=1)

    input_path = Path(args.input)
    out_path = Path(args.out)
    try:
        items = list(_input_images(input_path, state.model.image_size))
    except DataError as exc:
        return _fail(str(exc))
    multi = input_path.is_dir()
    if multi:
        out_path.mkdir(parents=True, exist_ok=True)
    with torch.no_grad():
        for name, arr in items:
            x = torch.from_numpy(arr).unsqueeze(0)
            y = gen(x, code)[0]
            target = out_path / name if multi else out_path
            target.parent.mkdir(parents=True, exist_ok=True)
            save_image(y, target)
    print(f"wrote {len(items)} translated image(s) to {out_path}")
    return 0


def _load_eval_sets(state, data_root: Path) -> dict[str, torch.Tensor]:
    sets = {}
    for domain in state.regime.domains:
        ds = load_domain_dataset(data_root / domain, state.model.image_size)
        sets[domain] = torch.stack(
            [torch.from_numpy(ds.get(i)) for i in range(len(ds))]
        )
    return sets


def _translate_set(state, images: torch.Tensor, target: str) -> torch.Tensor:
    latent = (
        torch.zeros(1, state.regime.latent_dim)
        if state.regime.kind == "multimodal"
        else None
    )
    code = state.domain_code(target, 1)
    if latent is not None:
        code = torch.cat([code, latent], dim=1)
    outs = []
    with torch.no_grad():
        for start in range(0, len(images), 16):
            chunk = images[start : start + 16]
            outs.append(state.generator(chunk, code.expand(len(chunk), -1)))
    return torch.cat(outs)


def cmd_evaluate(args) -> int:
    try:
        state = load_train_state(args.checkpoint)
        sets = _load_eval_sets(state, Path(args.data))
    except (CheckpointError, DataError) as exc:
        return _fail(str(exc))
    state.generator.eval()
    domains = state.regime.domains
    rng = np.random.default_rng(args.seed)

    if args.metric == "consistency":
        extractor = RandomConvFeatureExtractor(seed=args.extractor_seed)
        total = 0.0
        for target in domains:
            real = sets[target]
            if args.self_check:
                report = domain_consistency(
                    real, real, extractor, n_pairs=min(args.n_pairs, len(real)),
                    identical_pairs=True,
                )
            else:
                sources = [d for d in domains if d != target]
                gen_images = torch.cat(
                    [_translate_set(state, sets[s], target) for s in sources]
                )
                report = domain_consistency(
                    real, gen_images, extractor, n_pairs=args.n_pairs, rng=rng
                )
            report.seed = args.seed
            print(f"domain={target} {report.format()}")
            total += report.total
        print(f"mean_total={total / len(domains):.6f}")
        return 0

    # accuracy metric: binary classifier over the two configured domains
    if len(domains) != 2:
        return _fail(
            f"accuracy metric needs a 2-domain checkpoint, got {len(domains)} domains"
        )
    dom_a, dom_b = domains
    clf = train_domain_classifier(
        sets[dom_a], sets[dom_b], ClassifierConfig(seed=args.seed), rng
    )
    for source, target, label in ((dom_a, dom_b, 1), (dom_b, dom_a, 0)):
        gen_images = _translate_set(state, sets[source], target)
        acc = classification_accuracy(clf, gen_images, label)
        print(
            f"metric=accuracy translation={source}->{target} value={acc:.4f} "
            f"n={len(gen_images)} seed={args.seed}"
        )
    return 0


def cmd_synth(args) -> int:
    try:
        spec = load_synthetic_spec(args.spec)
    except ConfigError as exc:
        return _fail(str(exc))
    rng = np.random.default_rng(args.seed)
    try:
        written = write_synthetic_domains(spec, rng, args.out)
    except OSError as exc:
        return _fail(f"cannot write to {args.out}: {exc}")
    for name, path in sorted(written.items()):
        print(f"domain={name} images={spec.n_images} dir={path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="domaingan",
        description="Multi-domain image translation: train, translate, evaluate, synth.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training regime from a config file")
    p_train.add_argument("--config", required=True, help="YAML run config")
    p_train.add_argument("--resume", default=None, help="checkpoint to resume from")
    p_train.add_argument("--deterministic", action="store_true",
                         help="single-threaded torch for exact repeatability")
    p_train.set_defaults(func=cmd_train)

    p_tr = sub.add_parser("translate", help="translate images with a trained checkpoint")
    p_tr.add_argument("--checkpoint", required=True)
    p_tr.add_argument("--input", required=True, help="image file or directory")
    p_tr.add_argument("--domain", required=True, help="target domain name")
    p_tr.add_argument("--latent", default=None,
                      help="comma-separated latent code (multimodal only)")
    p_tr.add_argument("--seed", type=int, default=0,
                      help="seed for sampled latents when --latent is omitted")
    p_tr.add_argument("--out", required=True, help="output file or directory")
    p_tr.add_argument("--deterministic", action="store_true")
    p_tr.set_defaults(func=cmd_translate)

    p_ev = sub.add_parser("evaluate", help="run a metric against a data root")
    p_ev.add_argument("--checkpoint", required=True)
    p_ev.add_argument("--data", required=True, help="root with one folder per domain")
    p_ev.add_argument("--metric", choices=("consistency", "accuracy"), required=True)
    p_ev.add_argument("--n-pairs", type=int, default=2000, dest="n_pairs")
    p_ev.add_argument("--seed", type=int, default=0)
    p_ev.add_argument("--extractor-seed", type=int, default=0, dest="extractor_seed")
    p_ev.add_argument("--self-check", action="store_true", dest="self_check",
                      help="score real images against themselves (expects total 5)")
    p_ev.set_defaults(func=cmd_evaluate)

    p_sy = sub.add_parser("synth", help="write synthetic domain folders from a spec")
    p_sy.add_argument("--spec", required=True, help="YAML synthetic spec")
    p_sy.add_argument("--out", required=True, help="output root directory")
    p_sy.add_argument("--seed", type=int, default=0)
    p_sy.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
