import math

import numpy as np
import pytest
import torch

from sarscatter import classifier as cl


@pytest.fixture(scope="module")
def tiny_net():
    cfg = cl.NetworkConfig(
        name="tiny",
        blocks=(cl.ConvBlock(4, 5, stride=2), cl.ConvBlock(8, 5, stride=2)),
        head="dense",
        input_size=32,
        num_classes=10,
    )
    return cl.build_victim(cfg, seed=7)


def rand_images(rng, n, size=32):
    return rng.uniform(0, 1, (n, size, size)).astype(np.float32)


class TestForward:
    def test_confidences_sum_to_one(self, tiny_net, rng):
        _, conf = cl.forward(tiny_net, rand_images(rng, 1)[0])
        assert conf.shape == (10,)
        assert np.all(conf >= 0)
        assert abs(conf.sum() - 1.0) <= 1e-6

    def test_deterministic(self, tiny_net, rng):
        img = rand_images(rng, 1)[0]
        l1, c1 = cl.forward(tiny_net, img)
        l2, c2 = cl.forward(tiny_net, img)
        assert np.array_equal(l1, l2) and np.array_equal(c1, c2)

    def test_permuting_head_rows_permutes_confidences(self, tiny_net, rng):
        import copy

        img = rand_images(rng, 1)[0]
        _, base = cl.forward(tiny_net, img)
        swapped = cl.TorchVictim(tiny_net.config, copy.deepcopy(tiny_net.module))
        head = swapped.module.body[-1]
        with torch.no_grad():
            head.weight[[0, 1]] = head.weight[[1, 0]]
            head.bias[[0, 1]] = head.bias[[1, 0]]
        _, perm = cl.forward(swapped, img)
        assert perm[0] == pytest.approx(base[1], rel=1e-6)
        assert perm[1] == pytest.approx(base[0], rel=1e-6)
        assert np.allclose(perm[2:], base[2:], rtol=1e-6)

    def test_shape_mismatch_rejected(self, tiny_net):
        with pytest.raises(ValueError):
            tiny_net.predict_batch(np.zeros((1, 48, 48), dtype=np.float32))

    def test_softmax_shift_invariance(self, tiny_net, rng):
        # adding a constant to all logits leaves confidences unchanged
        img = rand_images(rng, 1)[0]
        logits, conf = cl.forward(tiny_net, img)
        shifted = np.exp(logits + 5.0)
        assert np.allclose(shifted / shifted.sum(), conf, atol=1e-9)


class TestLoss:
    def test_uniform_confidence_gives_log_j(self):
        cfg = cl.NetworkConfig(
            name="zero", blocks=(cl.ConvBlock(2, 5, stride=4),), head="dense", input_size=16, num_classes=10
        )
        net = cl.build_victim(cfg, seed=0)
        with torch.no_grad():
            head = net.module.body[-1]
            head.weight.zero_()
            head.bias.zero_()
        img = np.full((16, 16), 0.5, dtype=np.float32)
        assert cl.loss(net, img, 3) == pytest.approx(math.log(10), rel=1e-6)

    def test_nonnegative(self, tiny_net, rng):
        for img in rand_images(rng, 5):
            assert cl.loss(tiny_net, img, 0) >= 0

    def test_floor_prevents_infinity(self, tiny_net, rng):
        loss = tiny_net.loss_batch(rand_images(rng, 3), 2)
        assert np.all(np.isfinite(loss))
        assert np.all(loss <= -math.log(cl.CONF_FLOOR) + 1e-6)

    def test_training_decreases_loss(self, rng):
        cfg = cl.NetworkConfig(
            name="fit", blocks=(cl.ConvBlock(4, 5, stride=2),), head="dense", input_size=16, num_classes=4
        )
        net = cl.build_victim(cfg, seed=3)
        images = rng.uniform(0, 1, (100, 16, 16)).astype(np.float32)
        labels = rng.integers(0, 4, 100)
        history = cl.train(net, images, labels, cl.TrainConfig(epochs=8, seed=5, learning_rate=0.05))
        assert history["loss"][-1] < history["loss"][0]


class TestInputGradient:
    def test_matches_finite_differences_wide_precision(self, tiny_net, rng):
        # central differences on 20 random pixels in float64 mode, 1e-3 relative
        net64 = tiny_net.as_double()
        img = rand_images(rng, 1)[0].astype(np.float64)
        label = 4
        grad = cl.input_gradient(net64, img, label)
        h = 1e-6
        coords = [(rng.integers(0, 32), rng.integers(0, 32)) for _ in range(20)]
        for r, c in coords:
            up = img.copy()
            up[r, c] += h
            dn = img.copy()
            dn[r, c] -= h
            fd = (cl.loss(net64, up, label) - cl.loss(net64, dn, label)) / (2 * h)
            if abs(fd) < 1e-8 and abs(grad[r, c]) < 1e-8:
                continue
            assert grad[r, c] == pytest.approx(fd, rel=1e-3, abs=1e-10)

    def test_zero_weight_head_has_zero_gradient(self):
        cfg = cl.NetworkConfig(
            name="zero", blocks=(cl.ConvBlock(2, 5, stride=4),), head="dense", input_size=16, num_classes=5
        )
        net = cl.build_victim(cfg, seed=0)
        with torch.no_grad():
            net.module.body[-1].weight.zero_()
            net.module.body[-1].bias.zero_()
        grad = cl.input_gradient(net, np.full((16, 16), 0.3, dtype=np.float32), 1)
        assert np.all(grad == 0)

    def test_gradient_linear_in_loss_scale(self, tiny_net, rng):
        # doubling the loss (two identical samples) doubles the summed gradient
        img = rand_images(rng, 1)[0]
        g1 = cl.input_gradient(tiny_net, img, 2)
        g2 = tiny_net.input_gradient_batch(np.stack([img, img]), 2).sum(axis=0)
        assert np.allclose(g2, 2 * g1, rtol=1e-4, atol=1e-7)


class TestTraining:
    def test_single_sample_memorized(self, rng):
        cfg = cl.NetworkConfig(
            name="memo", blocks=(cl.ConvBlock(4, 5, stride=2),), head="dense", input_size=16, num_classes=3
        )
        net = cl.build_victim(cfg, seed=1)
        images = rng.uniform(0, 1, (1, 16, 16)).astype(np.float32)
        labels = np.array([2])
        cl.train(net, images, labels, cl.TrainConfig(epochs=30, seed=2, learning_rate=0.05, batch_size=1))
        assert cl.evaluate_accuracy(net, images, labels) == 1.0

    def test_same_seed_bitwise_identical(self, rng):
        cfg = cl.NetworkConfig(
            name="det", blocks=(cl.ConvBlock(4, 5, stride=2),), head="dense", input_size=16, num_classes=4
        )
        images = rng.uniform(0, 1, (40, 16, 16)).astype(np.float32)
        labels = rng.integers(0, 4, 40)
        nets = []
        for _ in range(2):
            net = cl.build_victim(cfg, seed=11)
            cl.train(net, images, labels, cl.TrainConfig(epochs=3, seed=13))
            nets.append(net)
        for p1, p2 in zip(nets[0].module.parameters(), nets[1].module.parameters()):
            assert torch.equal(p1, p2)

    def test_label_range_validated(self, tiny_net, rng):
        images = rand_images(rng, 4)
        with pytest.raises(ValueError):
            cl.train(tiny_net, images, np.array([0, 1, 2, 99]), cl.TrainConfig(epochs=1))

    def test_empty_set_rejected(self, tiny_net):
        with pytest.raises(ValueError):
            cl.train(tiny_net, np.zeros((0, 32, 32)), np.zeros(0, dtype=int), cl.TrainConfig(epochs=1))

    def test_random_crop_augmentation_path(self, rng):
        cfg = cl.NetworkConfig(
            name="crop", blocks=(cl.ConvBlock(4, 5, stride=2),), head="dense", input_size=16, num_classes=2
        )
        net = cl.build_victim(cfg, seed=1)
        images = rng.uniform(0, 1, (10, 24, 24)).astype(np.float32)
        labels = rng.integers(0, 2, 10)
        cl.train(net, images, labels, cl.TrainConfig(epochs=1, seed=2, crop=24))
        assert cl.evaluate_accuracy(net, images, labels) >= 0.0  # smoke: crop paths run


class TestPresets:
    def test_aconvnet_parameter_count(self):
        net = cl.build_victim(cl.aconvnet_config(), seed=0)
        assert net.num_parameters == 303_498

    def test_slimnet_is_distinct_and_smaller(self):
        net = cl.build_victim(cl.slimnet_config(), seed=0)
        assert net.num_parameters < 150_000
        assert net.config.head != cl.aconvnet_config().head

    def test_presets_forward_on_88(self, rng):
        for preset in cl.PRESETS.values():
            net = cl.build_victim(preset(), seed=0)
            _, conf = net.predict_batch(rng.uniform(0, 1, (2, 88, 88)).astype(np.float32))
            assert conf.shape == (2, 10)
            assert np.allclose(conf.sum(1), 1.0, atol=1e-6)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, tiny_net, rng):
        img = rand_images(rng, 3)
        path = tmp_path / "net.ckpt"
        cl.save_checkpoint(path, tiny_net)
        loaded = cl.load_checkpoint(path)
        l1, c1 = tiny_net.predict_batch(img)
        l2, c2 = loaded.predict_batch(img)
        assert np.array_equal(l1, l2)
        assert loaded.config == tiny_net.config

    def test_magic_validated(self, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError, match="not a checkpoint"):
            cl.load_checkpoint(bad)
