"""Synthetic labeled target dataset.

Each class is a deterministic template of 8-20 scatterers with a
class-distinctive spatial layout plus a depressed-return shadow region.
Samples render the template through image formation with bounded
position/amplitude/orientation jitter, a multiplicative shadow, unit-mean
exponential speckle, and maximum normalization; the target-plus-shadow mask
seeds attack initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import binary_dilation

from . import fileio
from .imaging import form_image
from .scattering import (
    IDX_A,
    IDX_GAMMA,
    IDX_L,
    IDX_PHIBAR,
    IDX_X,
    IDX_Y,
    ImagingConfig,
    ScatteringType,
    scattering_type_template,
)

ALL_TYPES = tuple(ScatteringType)


@dataclass(frozen=True)
class ShadowSpec:
    """Depressed-return region: rows offset down-range from the image center."""

    row_offset: int
    height: int
    width: int

    def region(self, size: int) -> tuple[slice, slice]:
        r0 = size // 2 + self.row_offset
        c0 = size // 2 - self.width // 2
        return (
            slice(max(r0, 0), min(r0 + self.height, size)),
            slice(max(c0, 0), min(c0 + self.width, size)),
        )


@dataclass
class TargetTemplate:
    class_id: int
    thetas: np.ndarray  # (K, 7) normalized parameters, centered pixel coords
    kinds: tuple[ScatteringType, ...]
    shadow: ShadowSpec


@dataclass
class Sample:
    image: np.ndarray  # (h, w) float32 in [0, 1], max exactly 1
    label: int
    mask: np.ndarray  # (h, w) bool, target + shadow region


@dataclass(frozen=True)
class DatasetConfig:
    num_classes: int = 10
    train_per_class: int = 150
    test_per_class: int = 80
    image_size: int = 88
    position_jitter: float = 1.0
    amplitude_jitter: float = 0.15
    orientation_jitter: float = 0.1
    speckle: float = 0.35
    background: float = 0.04
    shadow_attenuation: float = 0.4
    mask_threshold: float = 0.2
    mask_dilation: int = 2
    clutter_count: int = 12  # max isolated clutter discretes per scene
    clutter_clusters: int = 3  # max clutter clusters (2-6 scatterers each)
    clutter_amplitude: float = 1.0  # exponential amplitude scale, template units
    clutter_max: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if min(self.train_per_class, self.test_per_class) < 1:
            raise ValueError("need at least one sample per class per split")


def _template_distinct(a: TargetTemplate, b: TargetTemplate, min_count: int = 3, min_dist: float = 2.0) -> bool:
    """At least ``min_count`` scatterers of each template sit more than
    ``min_dist`` pixels from every scatterer of the other."""
    pa = a.thetas[:, [IDX_X, IDX_Y]]
    pb = b.thetas[:, [IDX_X, IDX_Y]]
    d = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=-1)
    return int((d.min(axis=1) > min_dist).sum()) >= min_count and int((d.min(axis=0) > min_dist).sum()) >= min_count


def _draw_template(class_id: int, rng: np.random.Generator, extent: float) -> TargetTemplate:
    k = int(rng.integers(8, 21))
    thetas = np.zeros((k, 7))
    kinds = tuple(ALL_TYPES[i] for i in rng.integers(0, len(ALL_TYPES), k))
    thetas[:, IDX_X] = rng.uniform(-extent, extent, k)
    thetas[:, IDX_Y] = rng.uniform(-extent, extent, k)
    thetas[:, IDX_A] = rng.uniform(0.8, 2.5, k)
    for i, kind in enumerate(kinds):
        alpha, _, forced = scattering_type_template(kind)
        thetas[i, 3] = alpha
        if kind.is_localized:
            thetas[i, IDX_GAMMA] = rng.uniform(0.0, 0.5)
            thetas[i, IDX_L] = 0.0
            thetas[i, IDX_PHIBAR] = 0.0
        else:
            thetas[i, IDX_GAMMA] = 0.0
            thetas[i, IDX_L] = rng.uniform(1.0, 4.0)
            thetas[i, IDX_PHIBAR] = rng.uniform(-0.5, 0.5)
    shadow = ShadowSpec(
        row_offset=int(rng.integers(16, 24)),
        height=int(rng.integers(10, 16)),
        width=int(rng.integers(20, 30)),
    )
    return TargetTemplate(class_id, thetas, kinds, shadow)


def build_templates(num_classes: int, seed: int, image_size: int = 88, max_retries: int = 60) -> list[TargetTemplate]:
    """Deterministic pairwise-distinct class templates."""
    if num_classes < 2:
        raise ValueError("need at least two classes")
    extent = image_size * 0.2
    templates: list[TargetTemplate] = []
    for class_id in range(num_classes):
        for attempt in range(max_retries):
            rng = np.random.default_rng(np.random.SeedSequence([seed, class_id, attempt]))
            cand = _draw_template(class_id, rng, extent)
            if all(_template_distinct(cand, other) for other in templates):
                templates.append(cand)
                break
        else:
            raise RuntimeError(f"could not draw a distinct template for class {class_id}")
    return templates


def _draw_clutter(rng: np.random.Generator, dcfg: DatasetConfig, size: int) -> np.ndarray:
    """Uninformative scene clutter, coherently summed with the target:
    isolated discretes plus small target-like clusters, mixing localized and
    extended returns with heavy-tailed amplitudes.  Teaches classifiers that
    bright structure off the target carries no class evidence."""
    if dcfg.clutter_count <= 0:
        return np.zeros((0, 7))
    n_single = int(rng.integers(0, dcfg.clutter_count + 1))
    n_clusters = int(rng.integers(0, dcfg.clutter_clusters + 1))
    rows = []
    span = size / 2.0 - 2.0
    for _ in range(n_single):
        rows.append(_clutter_row(rng, dcfg, rng.uniform(-span, span), rng.uniform(-span, span)))
    for _ in range(n_clusters):
        cx, cy = rng.uniform(-span + 4, span - 4, 2)
        for _ in range(int(rng.integers(2, 7))):
            dx, dy = rng.uniform(-4.0, 4.0, 2)
            rows.append(_clutter_row(rng, dcfg, cx + dx, cy + dy))
    return np.array(rows) if rows else np.zeros((0, 7))


def _clutter_row(rng: np.random.Generator, dcfg: DatasetConfig, x: float, y: float) -> list:
    amp = min(rng.exponential(dcfg.clutter_amplitude), dcfg.clutter_max)
    if rng.uniform() < 0.3:  # extended return
        return [amp, x, y, float(rng.choice([-0.5, 0.0, 0.5, 1.0])), 0.0,
                rng.uniform(0.5, 4.0), rng.uniform(-1.0, 1.0)]
    return [amp, x, y, float(rng.choice([-1.0, 0.0, 0.5, 1.0])), rng.uniform(0.0, 1.0), 0.0, 0.0]


def render_sample(
    template: TargetTemplate,
    jitter_seed,
    dcfg: DatasetConfig,
    icfg: ImagingConfig,
) -> Sample:
    """One jittered, shadowed, speckled, maximum-normalized sample."""
    rng = np.random.default_rng(jitter_seed)
    th = template.thetas.copy()
    k = th.shape[0]
    th[:, IDX_X] += rng.uniform(-dcfg.position_jitter, dcfg.position_jitter, k)
    th[:, IDX_Y] += rng.uniform(-dcfg.position_jitter, dcfg.position_jitter, k)
    th[:, IDX_A] *= 1.0 + rng.uniform(-dcfg.amplitude_jitter, dcfg.amplitude_jitter, k)
    distributed = np.array([kind.is_distributed for kind in template.kinds])
    wobble = rng.uniform(-dcfg.orientation_jitter, dcfg.orientation_jitter, k)
    th[distributed, IDX_PHIBAR] = np.clip(th[distributed, IDX_PHIBAR] + wobble[distributed], -1, 1)

    size = dcfg.image_size
    clutter = _draw_clutter(rng, dcfg, size)
    if len(clutter):
        th = np.vstack([th, clutter])
    img = form_image(th, icfg, crop_to=(size, size))
    img = img + dcfg.background * img.max()
    region = template.shadow.region(size)
    img[region] *= 1.0 - dcfg.shadow_attenuation
    if dcfg.speckle > 0:
        img = img * ((1.0 - dcfg.speckle) + dcfg.speckle * rng.exponential(1.0, img.shape))

    img32 = img.astype(np.float32)
    img32 /= img32.max()
    target = img32 > dcfg.mask_threshold
    mask = binary_dilation(target, iterations=dcfg.mask_dilation) if dcfg.mask_dilation else target
    mask = mask.copy()
    mask[region] = True
    return Sample(image=img32, label=template.class_id, mask=mask)


def _jitter_key(seed: int, split: str, class_id: int, index: int) -> list[int]:
    split_code = {"train": 0, "test": 1}[split]
    return [seed, split_code, class_id, index]


def generate_samples(
    dcfg: DatasetConfig, icfg: ImagingConfig, templates: list[TargetTemplate] | None = None
) -> tuple[list[Sample], list[Sample]]:
    """Render both splits in memory with disjoint train/test jitter seeds."""
    if templates is None:
        templates = build_templates(dcfg.num_classes, dcfg.seed, dcfg.image_size)
    keys_seen: set[tuple[int, ...]] = set()
    splits: dict[str, list[Sample]] = {"train": [], "test": []}
    for split, count in (("train", dcfg.train_per_class), ("test", dcfg.test_per_class)):
        for template in templates:
            for index in range(count):
                key = _jitter_key(dcfg.seed, split, template.class_id, index)
                assert tuple(key) not in keys_seen, "jitter seed reuse across splits"
                keys_seen.add(tuple(key))
                splits[split].append(
                    render_sample(template, np.random.SeedSequence(key), dcfg, icfg)
                )
    return splits["train"], splits["test"]


def _config_text(dcfg: DatasetConfig, icfg: ImagingConfig) -> list[str]:
    lines = [f"dataset.{k} = {v}" for k, v in vars(dcfg).items()]
    lines += [
        f"zeta.fc_hz = {icfg.fc_hz!r}",
        f"zeta.bandwidth_hz = {icfg.bandwidth_hz!r}",
        f"zeta.aperture_rad = {icfg.aperture_rad!r}",
        f"zeta.m = {icfg.m}",
        f"zeta.n = {icfg.n}",
        f"zeta.m_pad = {icfg.m_pad}",
        f"zeta.n_pad = {icfg.n_pad}",
        f"zeta.window = {icfg.window.family} {icfg.window.sidelobe_db!r} {icfg.window.nbar}",
        f"zeta.c = {icfg.c!r}",
    ]
    return lines


def imaging_config_from_manifest(manifest: dict) -> ImagingConfig:
    from .scattering import WindowSpec

    family, sll, nbar = manifest["zeta.window"].split()
    return ImagingConfig(
        fc_hz=float(manifest["zeta.fc_hz"]),
        bandwidth_hz=float(manifest["zeta.bandwidth_hz"]),
        aperture_rad=float(manifest["zeta.aperture_rad"]),
        m=int(manifest["zeta.m"]),
        n=int(manifest["zeta.n"]),
        m_pad=int(manifest["zeta.m_pad"]),
        n_pad=int(manifest["zeta.n_pad"]),
        window=WindowSpec(family, float(sll), int(nbar)),
        c=float(manifest["zeta.c"]),
    )


def generate_dataset(dcfg: DatasetConfig, icfg: ImagingConfig, out_dir) -> tuple[list[Sample], list[Sample]]:
    """Render and persist both splits; returns the in-memory samples.

    Layout: ``manifest.txt`` (key = value), ``labels.txt`` (name label split),
    ``images/<name>.f32`` + sidecar, ``masks/<name>.u8`` + sidecar, in stable
    class-major order.
    """
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
        train, test = generate_samples(dcfg, icfg)
        label_lines = []
        for split, samples in (("train", train), ("test", test)):
            for i, sample in enumerate(samples):
                name = f"{split}_{i:05d}"
                fileio.save_image(out / "images" / f"{name}.f32", sample.image, meta={"label": sample.label, "split": split})
                fileio.save_mask(out / "masks" / f"{name}.u8", sample.mask)
                label_lines.append(f"{name} {sample.label} {split}")
        (out / "labels.txt").write_text("\n".join(label_lines) + "\n")
        manifest = _config_text(dcfg, icfg) + [
            f"counts.train = {len(train)}",
            f"counts.test = {len(test)}",
        ]
        (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
    except OSError as err:
        raise OSError(f"failed writing dataset under {out}: {err}") from err
    return train, test


def load_dataset(data_dir) -> tuple[list[Sample], list[Sample], dict]:
    data_dir = Path(data_dir)
    manifest_path = data_dir / "manifest.txt"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no dataset manifest at {manifest_path}")
    manifest = {}
    for line in manifest_path.read_text().splitlines():
        key, _, value = line.partition("=")
        manifest[key.strip()] = value.strip()
    splits: dict[str, list[Sample]] = {"train": [], "test": []}
    for line in (data_dir / "labels.txt").read_text().splitlines():
        name, label, split = line.split()
        image, _ = fileio.load_image(data_dir / "images" / f"{name}.f32")
        mask, _ = fileio.load_mask(data_dir / "masks" / f"{name}.u8")
        splits[split].append(Sample(image=image, label=int(label), mask=mask))
    return splits["train"], splits["test"], manifest


def stack_split(samples: list[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """(images, labels) arrays for training/evaluation."""
    images = np.stack([s.image for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return images, labels
