import numpy as np
import pytest
import torch

from sarscatter import classifier as cl
from sarscatter import defense as df
from sarscatter.attack import AttackConfig
from sarscatter.dataset import Sample
from sarscatter.imaging import xband_config

ICFG = xband_config(24)


def tiny_samples(n=12, size=24, classes=2, seed=0):
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        image = rng.uniform(0, 0.3, (size, size)).astype(np.float32)
        image[8:16, 8:16] += (0.5 if i % classes == 0 else 0.0)
        image[4:8, 14:20] += (0.5 if i % classes == 1 else 0.0)
        image /= image.max()
        mask = np.zeros((size, size), dtype=bool)
        mask[4:18, 6:20] = True
        samples.append(Sample(image=image, label=i % classes, mask=mask))
    return samples


def tiny_net(seed=0, size=24, classes=2):
    cfg = cl.NetworkConfig(
        name="tiny",
        blocks=(cl.ConvBlock(4, 5, stride=2), cl.ConvBlock(8, 5, stride=2)),
        head="dense",
        input_size=size,
        num_classes=classes,
    )
    return cl.build_victim(cfg, seed=seed)


def fast_defense_cfg(fraction=1.0, epochs=2):
    return df.DefenseConfig(
        surrogate=AttackConfig(
            n_scatterers=1,
            population=1,
            max_iter=3,
            theta_min=(0.0, -11.5, -11.5, -1.0, 0.0, 0.0, -1.0),
            theta_max=(4.0, 11.5, 11.5, 1.0, 2.0, 5.0, 1.0),
        ),
        fraction=fraction,
        train=cl.TrainConfig(epochs=epochs, seed=9, batch_size=4),
    )


class TestAdversarialTrain:
    def test_zero_fraction_matches_normal_training(self):
        samples = tiny_samples()
        images = np.stack([s.image for s in samples])
        labels = np.array([s.label for s in samples])

        normal = tiny_net(seed=5)
        cl.train(normal, images, labels, cl.TrainConfig(epochs=2, seed=9, batch_size=4))

        defended = tiny_net(seed=5)
        df.adversarial_train(defended, samples, fast_defense_cfg(fraction=0.0), ICFG)

        for p1, p2 in zip(normal.module.parameters(), defended.module.parameters()):
            assert torch.equal(p1, p2)

    def test_full_fraction_changes_trajectory(self):
        samples = tiny_samples()
        images = np.stack([s.image for s in samples])
        labels = np.array([s.label for s in samples])

        normal = tiny_net(seed=5)
        cl.train(normal, images, labels, cl.TrainConfig(epochs=2, seed=9, batch_size=4))
        defended = tiny_net(seed=5)
        df.adversarial_train(defended, samples, fast_defense_cfg(fraction=1.0), ICFG)
        different = any(
            not torch.equal(p1, p2)
            for p1, p2 in zip(normal.module.parameters(), defended.module.parameters())
        )
        assert different

    def test_deterministic_under_seed(self):
        samples = tiny_samples()
        nets = []
        for _ in range(2):
            net = tiny_net(seed=5)
            df.adversarial_train(net, samples, fast_defense_cfg(), ICFG)
            nets.append(net)
        for p1, p2 in zip(nets[0].module.parameters(), nets[1].module.parameters()):
            assert torch.equal(p1, p2)

    def test_fraction_validated(self):
        with pytest.raises(ValueError):
            df.DefenseConfig(fraction=1.5)


class TestPgdTrain:
    def test_runs_and_returns_history(self):
        samples = tiny_samples()
        net = tiny_net(seed=2)
        history = df.pgd_adversarial_train(net, samples, cl.TrainConfig(epochs=1, seed=3, batch_size=4), eps=4 / 255, steps=2)
        assert len(history["loss"]) == 1


class TestEvaluateDefense:
    def test_identical_nets_identical_rows(self):
        samples = tiny_samples(n=6)
        net = tiny_net(seed=7)

        def blur_attack(victim, sample):
            return np.clip(sample.image + 0.05, 0, 1)

        report = df.evaluate_defense({"a": net, "b": net}, [("blur", blur_attack)], samples)
        assert report["a.clean_accuracy"] == report["b.clean_accuracy"]
        assert report["a.blur.robust_accuracy"] == report["b.blur.robust_accuracy"]
        assert report["a.blur.mean_adv_confidence"] == report["b.blur.mean_adv_confidence"]

    def test_all_values_in_unit_interval(self):
        samples = tiny_samples(n=6)
        report = df.evaluate_defense(
            {"n": tiny_net(seed=1)}, [("noop", lambda v, s: s.image)], samples
        )
        for key, value in report.items():
            assert 0.0 <= value <= 1.0, key
