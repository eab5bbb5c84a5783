"""Scatterer-robust training and defense comparison.

Adversarial training uses the scatterer search as a worst-case generator: a
cheap surrogate attack (population 1, short budget) perturbs each selected
training image against the current model, fresh every epoch.  A PGD-trained
baseline and side-by-side robustness reporting support the comparison."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import classifier as cl
from .attack import AttackConfig, run_attack
from .dataset import Sample
from .evaluation import fooling_rate, pgd_batch
from .scattering import ImagingConfig

log = logging.getLogger(__name__)


def surrogate_config(seed: int = 0) -> AttackConfig:
    """Default worst-case generator: 3 scatterers, single member, 20 iterations."""
    return AttackConfig(n_scatterers=3, population=1, max_iter=20, seed=seed)


@dataclass(frozen=True)
class DefenseConfig:
    surrogate: AttackConfig = field(default_factory=surrogate_config)
    fraction: float = 1.0  # share of each batch replaced by perturbed images
    train: cl.TrainConfig = field(default_factory=cl.TrainConfig)

    def __post_init__(self):
        if not (0.0 <= self.fraction <= 1.0):
            raise ValueError("fraction must lie in [0, 1]")
        if self.surrogate.n_scatterers < 1:
            raise ValueError("surrogate needs a positive scatterer budget")


def _surrogate_seed(base: int, epoch: int, index: int) -> int:
    return int(np.random.SeedSequence([base, epoch, index]).generate_state(1)[0])


def adversarial_train(
    net: cl.TorchVictim,
    train_samples: list[Sample],
    cfg: DefenseConfig,
    icfg: ImagingConfig,
) -> dict:
    """Train with per-epoch scatterer perturbations on the selected fraction
    of every batch.  A surrogate failure falls back to the clean image and is
    logged.  Deterministic under the training seed."""
    images = np.stack([s.image for s in train_samples])
    labels = np.array([s.label for s in train_samples], dtype=np.int64)
    select_rng = np.random.default_rng(np.random.SeedSequence([cfg.train.seed, 0xDEF]))

    def hook(epoch: int, idx: np.ndarray, batch: np.ndarray, batch_labels: np.ndarray) -> np.ndarray:
        if cfg.fraction == 0.0:
            return batch
        k = len(idx) if cfg.fraction >= 1.0 else int(round(cfg.fraction * len(idx)))
        chosen = np.arange(len(idx)) if k >= len(idx) else select_rng.choice(len(idx), size=k, replace=False)
        out = batch.copy()
        for j in chosen:
            sample = train_samples[idx[j]]
            seed = _surrogate_seed(cfg.train.seed, epoch, int(idx[j]))
            try:
                result = run_attack(net, sample, replace(cfg.surrogate, seed=seed), icfg)
                out[j] = result.adversarial
            except Exception as err:  # pragma: no cover - defensive fallback
                log.warning("surrogate attack failed on sample %d: %s", idx[j], err)
        return out

    return cl.train(net, images, labels, cfg.train, batch_hook=hook)


def pgd_adversarial_train(
    net: cl.TorchVictim,
    train_samples: list[Sample],
    train_cfg: cl.TrainConfig,
    eps: float = 4 / 255,
    steps: int = 20,
) -> dict:
    """Pixel-ball adversarial training baseline."""
    images = np.stack([s.image for s in train_samples])
    labels = np.array([s.label for s in train_samples], dtype=np.int64)

    def hook(epoch: int, idx: np.ndarray, batch: np.ndarray, batch_labels: np.ndarray) -> np.ndarray:
        return pgd_batch(net, batch, batch_labels, eps, steps=steps, seed=_surrogate_seed(train_cfg.seed, epoch, 0))

    return cl.train(net, images, labels, train_cfg, batch_hook=hook)


def evaluate_defense(nets: dict, attacks: list[tuple], test_samples: list[Sample]) -> dict:
    """Side-by-side robustness comparison.

    ``nets`` maps display name to victim (normal first); ``attacks`` is a
    list of (name, fn) where fn(net, sample) returns an adversarial image.
    Reports per net: clean accuracy, accuracy under each attack, and mean
    confidence on the induced class over successful attacks."""
    images = np.stack([s.image for s in test_samples])
    labels = np.array([s.label for s in test_samples], dtype=np.int64)
    report: dict = {}
    for net_name, net in nets.items():
        report[f"{net_name}.clean_accuracy"] = cl.evaluate_accuracy(net, images, labels)
        for attack_name, attack_fn in attacks:
            advs = np.stack([attack_fn(net, s) for s in test_samples])
            _, conf = net.predict_batch(advs.astype(np.float32))
            preds = conf.argmax(axis=1)
            correct = preds == labels
            report[f"{net_name}.{attack_name}.robust_accuracy"] = float(np.mean(correct))
            fooled = ~correct
            report[f"{net_name}.{attack_name}.mean_adv_confidence"] = (
                float(conf[fooled, preds[fooled]].mean()) if fooled.any() else 0.0
            )
    return report
