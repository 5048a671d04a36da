"""Datasets: folder ingestion, preprocessing, sampling, and synthetic domains.

On-disk layout is one folder per domain, ``<root>/<domain>/*.png|jpg``; the
paired layout uses matching file names (zero-padded indices) across domains.
Synthetic domains render colored geometric shapes so that training success is
measurable from channel statistics alone.
"""

from __future__ import annotations

import colorsys
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DataError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")

SHAPE_KINDS = ("square", "circle", "triangle")


def horizontal_flip(image: np.ndarray) -> np.ndarray:
    """Mirror a [C,H,W] array along the width axis."""
    return np.ascontiguousarray(image[:, :, ::-1])


def preprocess(
    raw: bytes,
    image_size: int,
    augment: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Decode image bytes to a [3, S, S] float32 array in [-1, 1].

    Bilinear resize to the square target size; optional seeded horizontal
    flip with probability 0.5.
    """
    try:
        img = Image.open(io.BytesIO(raw))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DataError(f"undecodable image data: {exc}") from exc
    img = img.convert("RGB")
    if img.size != (image_size, image_size):
        img = img.resize((image_size, image_size), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 127.5 - 1.0
    arr = np.ascontiguousarray(arr.transpose(2, 0, 1))
    if augment:
        if rng is None:
            raise ValueError("augment=True requires an rng")
        if rng.random() < 0.5:
            arr = horizontal_flip(arr)
    return arr


def array_to_image(arr: np.ndarray) -> Image.Image:
    """Map a [3,H,W] array in [-1,1] to an 8-bit RGB image: round((v+1)*127.5)."""
    pixels = np.clip(np.round((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)
    return Image.fromarray(pixels.transpose(1, 2, 0), mode="RGB")


def save_image(arr, path: str | Path) -> None:
    if isinstance(arr, torch.Tensor):
        arr = arr.detach().cpu().numpy()
    array_to_image(np.asarray(arr)).save(path, format="PNG")


@dataclass
class DomainDataset:
    """Images of one domain, lazily decoded from disk or held in memory."""

    name: str
    image_size: int
    augment: bool = False
    paths: list[Path] = field(default_factory=list)
    arrays: np.ndarray | None = None  # [N, 3, S, S] float32, synthetic domains

    def __len__(self) -> int:
        if self.arrays is not None:
            return len(self.arrays)
        return len(self.paths)

    def get(self, index: int, rng: np.random.Generator | None = None) -> np.ndarray:
        if self.arrays is not None:
            arr = self.arrays[index]
            if self.augment and rng is not None and rng.random() < 0.5:
                arr = horizontal_flip(arr)
            return arr
        path = self.paths[index]
        try:
            raw = path.read_bytes()
            return preprocess(raw, self.image_size, augment=self.augment, rng=rng)
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from exc


def load_domain_dataset(
    path: str | Path, image_size: int, augment: bool = False
) -> DomainDataset:
    """Load a domain folder; lexicographic file order, lazy pixel decoding.

    Files whose headers fail to parse are skipped with a warning; an empty or
    fully unreadable folder is an error.
    """
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    candidates = sorted(
        p for p in root.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
    )
    readable = []
    for p in candidates:
        try:
            with Image.open(p):
                pass  # header parse only; pixels decode lazily at access
        except (UnidentifiedImageError, OSError) as exc:
            warnings.warn(f"skipping unreadable image {p}: {exc}")
            continue
        readable.append(p)
    if not readable:
        raise DataError(f"{root}: no readable image files")
    return DomainDataset(
        name=root.name, image_size=image_size, augment=augment, paths=readable
    )


def sample_batch(
    ds: DomainDataset, batch_size: int, rng: np.random.Generator
) -> torch.Tensor:
    """Uniform with-replacement sample, stacked to a [B, 3, S, S] tensor."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    indices = rng.integers(0, len(ds), size=batch_size)
    return take_batch(ds, indices, rng)


def take_batch(
    ds: DomainDataset, indices, rng: np.random.Generator | None = None
) -> torch.Tensor:
    """Fetch specific indices (used for index-aligned paired sampling)."""
    images = [ds.get(int(i), rng) for i in indices]
    return torch.from_numpy(np.stack(images).astype(np.float32, copy=False))


@dataclass
class DomainRecipe:
    """How one synthetic domain renders: background, foreground shape + color.

    ``hue_jitter`` > 0 rotates the foreground hue per image by up to that
    fraction of the hue wheel, so one geometry admits many appearances.
    ``dominant_channel`` records which RGB channel the recipe is expected to
    maximize (None when no single channel dominates).
    """

    name: str
    background: tuple[float, float, float] = (-0.9, -0.9, -0.9)
    shape: str = "square"  # square | circle | triangle | mixed
    color: tuple[float, float, float] = (1.0, -1.0, -1.0)
    hue_jitter: float = 0.0
    outline: bool = False
    dominant_channel: int | None = None

    def validate(self) -> None:
        if self.shape not in SHAPE_KINDS + ("mixed",):
            raise ConfigError(f"recipe {self.name}: unknown shape '{self.shape}'")
        if not 0.0 <= self.hue_jitter <= 0.5:
            raise ConfigError(
                f"recipe {self.name}: hue_jitter must be in [0, 0.5], got {self.hue_jitter}"
            )
        for v in (*self.background, *self.color):
            if not -1.0 <= v <= 1.0:
                raise ConfigError(f"recipe {self.name}: colors must be in [-1, 1]")


@dataclass
class SyntheticSpec:
    recipes: list[DomainRecipe]
    n_images: int = 64
    image_size: int = 32
    aligned: bool = False

    def validate(self) -> None:
        if self.image_size < 16:
            raise ConfigError(f"image_size must be >= 16, got {self.image_size}")
        if len(self.recipes) < 2:
            raise ConfigError(f"need >= 2 domain recipes, got {len(self.recipes)}")
        if self.n_images < 1:
            raise ConfigError(f"n_images must be >= 1, got {self.n_images}")
        names = [r.name for r in self.recipes]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate domain names in recipes: {names}")
        for r in self.recipes:
            r.validate()


def _shape_mask(kind: str, size: int, cx: float, cy: float, half: float) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
    if kind == "square":
        return np.maximum(np.abs(xs - cx), np.abs(ys - cy)) <= half
    if kind == "circle":
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= half**2
    if kind == "triangle":
        # upright isoceles triangle: apex at cy - half, base at cy + half
        t = (ys - (cy - half)) / (2.0 * half)
        inside_y = (t >= 0.0) & (t <= 1.0)
        return inside_y & (np.abs(xs - cx) <= t * half)
    raise ConfigError(f"unknown shape kind '{kind}'")


def _jitter_color(
    color: tuple[float, float, float], jitter: float, rng: np.random.Generator
) -> tuple[float, float, float]:
    if jitter <= 0.0:
        return color
    r, g, b = ((v + 1.0) / 2.0 for v in color)
    h, s, v = colorsys.rgb_to_hsv(r, g, b)
    h = (h + rng.uniform(-jitter, jitter)) % 1.0
    r, g, b = colorsys.hsv_to_rgb(h, s, v)
    return (r * 2.0 - 1.0, g * 2.0 - 1.0, b * 2.0 - 1.0)


def _render(
    recipe: DomainRecipe,
    size: int,
    geometry: tuple[str, float, float, float],
    rng: np.random.Generator,
) -> np.ndarray:
    kind, cx, cy, half = geometry
    img = np.empty((3, size, size), dtype=np.float32)
    for ch, v in enumerate(recipe.background):
        img[ch].fill(v)
    mask = _shape_mask(kind, size, cx, cy, half)
    if recipe.outline:
        inner = _shape_mask(kind, size, cx, cy, max(half - 2.0, 1.0))
        mask = mask & ~inner
    color = _jitter_color(recipe.color, recipe.hue_jitter, rng)
    for ch, v in enumerate(color):
        img[ch][mask] = v
    return img


def _draw_geometry(
    shape: str, size: int, rng: np.random.Generator
) -> tuple[str, float, float, float]:
    kind = shape if shape != "mixed" else SHAPE_KINDS[int(rng.integers(0, len(SHAPE_KINDS)))]
    half = rng.uniform(0.19, 0.3) * size
    margin = half + 1.0
    cx = rng.uniform(margin, size - 1 - margin)
    cy = rng.uniform(margin, size - 1 - margin)
    return kind, cx, cy, half


def make_synthetic_domains(
    spec: SyntheticSpec, rng: np.random.Generator
) -> dict[str, DomainDataset]:
    """Render every domain of the spec; deterministic under the rng's seed.

    With ``aligned=True`` all domains share per-index geometry (paired
    layout); otherwise each domain draws its own.
    """
    spec.validate()
    size = spec.image_size
    stacks: dict[str, list[np.ndarray]] = {r.name: [] for r in spec.recipes}
    for _ in range(spec.n_images):
        shared = _draw_geometry(spec.recipes[0].shape, size, rng) if spec.aligned else None
        for recipe in spec.recipes:
            geometry = shared if shared is not None else _draw_geometry(
                recipe.shape, size, rng
            )
            stacks[recipe.name].append(_render(recipe, size, geometry, rng))
    return {
        name: DomainDataset(
            name=name, image_size=size, arrays=np.stack(images).astype(np.float32)
        )
        for name, images in stacks.items()
    }


def write_synthetic_domains(
    spec: SyntheticSpec, rng: np.random.Generator, out_root: str | Path
) -> dict[str, Path]:
    """Render the spec and write PNG folders in the on-disk domain layout."""
    datasets = make_synthetic_domains(spec, rng)
    out_root = Path(out_root)
    written = {}
    for name, ds in datasets.items():
        domain_dir = out_root / name
        domain_dir.mkdir(parents=True, exist_ok=True)
        for i in range(len(ds)):
            save_image(ds.arrays[i], domain_dir / f"{i:05d}.png")
        written[name] = domain_dir
    return written


# --- Preset recipes for the desk-scale verification tasks -------------------

BG_DARK = (-0.9, -0.9, -0.9)


def color_swap_recipes() -> list[DomainRecipe]:
    """Two domains: red filled squares vs. green filled circles."""
    return [
        DomainRecipe(
            name="A", background=BG_DARK, shape="square",
            color=(1.0, -1.0, -1.0), dominant_channel=0,
        ),
        DomainRecipe(
            name="B", background=BG_DARK, shape="circle",
            color=(-1.0, 1.0, -1.0), dominant_channel=1,
        ),
    ]


def multi_style_recipes() -> list[DomainRecipe]:
    """Four domains sharing geometry statistics, differing in foreground color."""
    return [
        DomainRecipe(
            name="A", background=BG_DARK, shape="mixed",
            color=(0.8, 0.8, 0.8), dominant_channel=None,
        ),
        DomainRecipe(
            name="B", background=BG_DARK, shape="mixed",
            color=(1.0, -1.0, -1.0), dominant_channel=0,
        ),
        DomainRecipe(
            name="C", background=BG_DARK, shape="mixed",
            color=(-1.0, 1.0, -1.0), dominant_channel=1,
        ),
        DomainRecipe(
            name="D", background=BG_DARK, shape="mixed",
            color=(-1.0, -1.0, 1.0), dominant_channel=2,
        ),
    ]


def hue_jitter_recipes() -> list[DomainRecipe]:
    """Two domains: fixed light-gray shapes vs. full-hue-jittered shapes."""
    return [
        DomainRecipe(
            name="A", background=BG_DARK, shape="mixed",
            color=(0.8, 0.8, 0.8), dominant_channel=None,
        ),
        DomainRecipe(
            name="B", background=BG_DARK, shape="mixed",
            color=(1.0, -1.0, -1.0), hue_jitter=0.5, dominant_channel=None,
        ),
    ]


def silhouette_recipes() -> list[DomainRecipe]:
    """Aligned pair task: shape outlines mapped to filled silhouettes."""
    return [
        DomainRecipe(
            name="A", background=BG_DARK, shape="mixed",
            color=(0.8, 0.8, 0.8), outline=True, dominant_channel=None,
        ),
        DomainRecipe(
            name="B", background=BG_DARK, shape="mixed",
            color=(0.8, 0.8, 0.8), dominant_channel=None,
        ),
    ]


RECIPE_PRESETS = {
    "color_swap": color_swap_recipes,
    "multi_style": multi_style_recipes,
    "hue_jitter": hue_jitter_recipes,
    "silhouette": silhouette_recipes,
}
