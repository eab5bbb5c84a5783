import numpy as np
import pytest

from sarscatter import evaluation as ev
from sarscatter.attack import AttackConfig, AttackResult, run_attack
from sarscatter.dataset import Sample
from sarscatter.imaging import xband_config
from tests.test_attack import BrightnessVictim, LinearVictim, toy_cfg, toy_sample

ICFG = xband_config(32)


class FixedVictim:
    """Always predicts a constant class with fixed confidence."""

    def __init__(self, cls=0, num_classes=4):
        self.cls = cls
        self.num_classes = num_classes

    def predict_batch(self, images):
        logits = np.zeros((len(images), self.num_classes))
        logits[:, self.cls] = 5.0
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        return logits, z / z.sum(axis=1, keepdims=True)

    def loss_batch(self, images, labels):
        _, conf = self.predict_batch(images)
        lab = np.broadcast_to(np.asarray(labels), (len(conf),))
        return -np.log(conf[np.arange(len(conf)), lab])

    def input_gradient_batch(self, images, labels):
        return np.zeros_like(np.asarray(images, dtype=float))


class TestBaselines:
    def setup_method(self):
        self.net = LinearVictim(3, (32, 32), seed=0)
        rng = np.random.default_rng(5)
        self.x = rng.uniform(0.1, 0.9, (32, 32)).astype(np.float32)
        self.y = 1

    def test_zero_epsilon_identity(self):
        for fn in (ev.fgsm, ev.bim, ev.pgd):
            adv = fn(self.net, self.x, self.y, 0.0)
            assert np.array_equal(adv, self.x)

    @pytest.mark.parametrize("fn_name", ["fgsm", "bim", "pgd"])
    def test_ball_and_box_constraints_exact(self, fn_name):
        fn = getattr(ev, fn_name)
        eps = 8 / 255
        adv = fn(self.net, self.x, self.y, eps)
        assert np.abs(adv - self.x).max() <= eps + 1e-7
        assert adv.min() >= 0.0 and adv.max() <= 1.0

    def test_fgsm_is_single_step_bim(self):
        eps = 4 / 255
        assert np.array_equal(
            ev.fgsm(self.net, self.x, self.y, eps),
            ev.bim(self.net, self.x, self.y, eps, steps=1, alpha=eps),
        )

    def test_pgd_random_start_seeded(self):
        eps = 4 / 255
        a = ev.pgd(self.net, self.x, self.y, eps, seed=3)
        b = ev.pgd(self.net, self.x, self.y, eps, seed=3)
        c = ev.pgd(self.net, self.x, self.y, eps, seed=4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_iterative_attacks_raise_loss(self):
        eps = 12 / 255
        adv = ev.pgd(self.net, self.x, self.y, eps, steps=20)
        assert self.net.loss_batch(adv[None], self.y)[0] >= self.net.loss_batch(self.x[None], self.y)[0]


class TestFoolingRate:
    def test_all_correct(self):
        net = FixedVictim(cls=2)
        images = np.zeros((5, 8, 8), dtype=np.float32)
        assert ev.fooling_rate(net, images, np.full(5, 2)) == 0.0

    def test_all_wrong(self):
        net = FixedVictim(cls=2)
        images = np.zeros((5, 8, 8), dtype=np.float32)
        assert ev.fooling_rate(net, images, np.full(5, 1)) == 1.0

    def test_half(self):
        net = FixedVictim(cls=0)
        labels = np.array([0, 0, 1, 1])
        assert ev.fooling_rate(net, np.zeros((4, 8, 8), dtype=np.float32), labels) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ev.fooling_rate(FixedVictim(), np.zeros((0, 8, 8)), np.zeros(0))


class TestSummaries:
    def _result(self, label, predicted, conf=0.9, skipped=False):
        return AttackResult(
            thetas=np.zeros((1, 7)),
            kinds=(),
            perturbation=np.zeros((4, 4), dtype=np.float32),
            adversarial=np.zeros((4, 4), dtype=np.float32),
            label=label,
            predicted=predicted,
            gt_confidence=0.05,
            adv_confidence=conf,
            trace=[0.5],
            iterations=3,
            success=predicted != label,
            early_stopped=True,
            skipped=skipped,
        )

    def test_matrix_counts_only_successes(self):
        results = [self._result(0, 1), self._result(0, 0), self._result(1, 0), self._result(2, 2)]
        report = ev.summarize_results(None, results, num_classes=3)
        assert report.adversarial_matrix.sum() == 2
        assert report.adversarial_matrix[0, 1] == 1
        assert report.adversarial_matrix[1, 0] == 1
        assert report.fooling_rate == 0.5

    def test_row_sums_match_per_class_success_counts(self):
        results = [self._result(0, 1), self._result(0, 2), self._result(0, 0), self._result(1, 2)]
        report = ev.summarize_results(None, results, num_classes=3)
        assert report.adversarial_matrix[0].sum() == 2
        assert report.adversarial_matrix[1].sum() == 1

    def test_skipped_results_excluded(self):
        results = [self._result(0, 1), self._result(0, 1, skipped=True)]
        report = ev.summarize_results(None, results, num_classes=2)
        assert report.fooling_rate == 1.0
        assert report.adversarial_matrix.sum() == 1

    def test_report_lines_stable(self):
        results = [self._result(0, 1)]
        report = ev.summarize_results(None, results, num_classes=2)
        lines = report.to_lines()
        assert lines[0].startswith("fooling_rate = ")
        assert any(line.startswith("adversarial_matrix.0") for line in lines)


class TestInterference:
    def test_zero_noise_identity(self, rng):
        img = rng.uniform(0, 1, (32, 32))
        spec = ev.InterferenceSpec("noise", sigma=0.0)
        assert np.array_equal(ev.apply_interference(img, spec), img)

    def test_noise_deterministic_under_seed(self, rng):
        img = rng.uniform(0, 1, (32, 32))
        a = ev.apply_interference(img, ev.InterferenceSpec("noise", sigma=0.01, seed=5))
        b = ev.apply_interference(img, ev.InterferenceSpec("noise", sigma=0.01, seed=5))
        assert np.array_equal(a, b)

    def test_median_preserves_constant(self):
        img = np.full((16, 16), 0.37)
        out = ev.apply_interference(img, ev.InterferenceSpec("median", kernel=3))
        assert np.allclose(out, 0.37)

    def test_gaussian_unit_kernel_preserves_constant(self):
        img = np.full((16, 16), 0.42)
        out = ev.apply_interference(img, ev.InterferenceSpec("gaussian", sigma=1.0, kernel=3))
        assert np.abs(out - 0.42).max() <= 1e-6

    def test_resize_factor_one_identity(self, rng):
        img = rng.uniform(0, 1, (24, 24))
        out = ev.apply_interference(img, ev.InterferenceSpec("resize", factor=1.0))
        assert np.array_equal(out, img)

    def test_resize_down_up_changes_detail(self, rng):
        img = rng.uniform(0, 1, (24, 24))
        out = ev.apply_interference(img, ev.InterferenceSpec("resize", factor=0.5))
        assert out.shape == img.shape
        assert not np.allclose(out, img)

    def test_outputs_clipped(self, rng):
        img = rng.uniform(0, 1, (16, 16))
        out = ev.apply_interference(img, ev.InterferenceSpec("noise", sigma=0.5, seed=1))
        assert out.min() >= 0 and out.max() <= 1

    def test_validation(self):
        with pytest.raises(ValueError):
            ev.InterferenceSpec("median", kernel=4)
        with pytest.raises(ValueError):
            ev.InterferenceSpec("warp")
        with pytest.raises(ValueError):
            ev.InterferenceSpec("resize", factor=0.0)

    def test_suite_rates(self):
        net = FixedVictim(cls=0)
        images = np.random.default_rng(0).uniform(0, 1, (4, 16, 16))
        rates = ev.interference_fooling_rates(net, images, np.ones(4, dtype=int))
        assert set(rates) == {"none", "noise_0.01", "gaussian_1_3", "median_3", "resize_0.75"}
        assert all(v == 1.0 for v in rates.values())


class TestSweep:
    def _fooled_result(self):
        sample = toy_sample()
        sample.image *= 0.1
        net = BrightnessVictim(threshold=0.02)
        cfg = toy_cfg(population=6, max_iter=25, stop_confidence=0.2, amplitude_cap_db=40.0)
        result = run_attack(net, sample, cfg, ICFG)
        assert result.success
        return net, sample, cfg, result

    def test_zero_delta_retains_success(self):
        net, sample, cfg, result = self._fooled_result()
        records = ev.sensitivity_sweep(net, sample, result, "A", [0.0], cfg, ICFG)
        assert records[0]["outcome"] == "success"

    def test_amplitude_to_zero_destroys_attack(self):
        net, sample, cfg, result = self._fooled_result()
        records = ev.sensitivity_sweep(net, sample, result, "A", [-result.thetas[0, 0]], cfg, ICFG)
        assert records[0]["outcome"] == "failure"

    def test_out_of_bounds_reported(self):
        net, sample, cfg, result = self._fooled_result()
        records = ev.sensitivity_sweep(net, sample, result, "A", [1e6], cfg, ICFG)
        assert records[0]["outcome"] == "out_of_bounds"

    def test_requires_success(self):
        net, sample, cfg, result = self._fooled_result()
        result.success = False
        with pytest.raises(ValueError):
            ev.sensitivity_sweep(net, sample, result, "A", [0.0], cfg, ICFG)

    def test_retention(self):
        records = [
            {"delta": 0, "outcome": "success"},
            {"delta": 1, "outcome": "failure"},
            {"delta": 2, "outcome": "out_of_bounds"},
        ]
        assert ev.retention(records) == 0.5


class TestTransfer:
    def test_matrix_shape_and_range(self):
        sample = toy_sample()
        sample.image *= 0.1
        nets = [BrightnessVictim(threshold=0.02), BrightnessVictim(threshold=0.05)]
        cfg = toy_cfg(population=4, max_iter=12, stop_confidence=0.3, amplitude_cap_db=40.0)
        matrix = ev.transfer_matrix(nets, nets, [sample, sample], cfg, ICFG)
        assert matrix.shape == (2, 2)
        assert np.all(matrix >= 0) and np.all(matrix <= 1)
        # the brightness victims share the fooling mechanism: crafted attacks transfer
        assert matrix[0, 1] > 0 or matrix[1, 0] > 0

    def test_needs_nets(self):
        with pytest.raises(ValueError):
            ev.transfer_matrix([], [], [], toy_cfg(), ICFG)


class TestHeatmap:
    def test_zero_repeats_zero_map(self):
        sample = toy_sample()
        counts = ev.vulnerability_heatmap(
            BrightnessVictim(), sample, repeats=0, v_th=0.2, cfg=toy_cfg(), icfg=ICFG
        )
        assert counts.shape == sample.image.shape
        assert counts.sum() == 0

    def test_mass_equals_success_count(self):
        sample = toy_sample()
        sample.image *= 0.1
        cfg = toy_cfg(population=4, max_iter=15, amplitude_cap_db=40.0)
        counts = ev.vulnerability_heatmap(BrightnessVictim(threshold=0.02), sample, 3, 0.3, cfg, ICFG)
        assert counts.sum() == 3  # this victim is always fooled


class TestReports:
    def test_write_read_round_trip(self, tmp_path):
        values = {"fooling_rate": 0.625, "count": 16, "note": "baseline"}
        path = ev.write_report(tmp_path / "report.txt", values)
        back = ev.read_report(path)
        assert back["fooling_rate"] == "0.625"
        assert back["count"] == "16"

    def test_reports_byte_stable(self, tmp_path):
        values = {"a": 1 / 3, "b": 2}
        p1 = ev.write_report(tmp_path / "r1.txt", values)
        p2 = ev.write_report(tmp_path / "r2.txt", values)
        assert p1.read_bytes() == p2.read_bytes()
