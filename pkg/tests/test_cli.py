import numpy as np
import pytest

from sarscatter import cli, fileio
from sarscatter.evaluation import read_report


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """A tiny gen-data + train pipeline shared across CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    ckpt = root / "models" / "victim.ckpt"
    config = root / "tiny.cfg"
    config.write_text(
        "[dataset]\nclasses = 2\ntrain_per_class = 6\ntest_per_class = 3\n"
        "[train]\narch = slimnet\nepochs = 2\nbatch_size = 4\n"
        "[attack]\nn_scatterers = 1\npopulation = 3\nmax_iter = 3\n"
    )
    assert cli.dispatch(["--config", str(config), "gen-data", "--out", str(data)]) == 0
    assert cli.dispatch(["--config", str(config), "train", "--data", str(data), "--out", str(ckpt)]) == 0
    return root, config, data, ckpt


class TestErrors:
    def test_missing_checkpoint_names_path(self, pipeline, capsys):
        root, config, data, _ = pipeline
        status = cli.dispatch(
            ["--config", str(config), "attack", "--data", str(data),
             "--checkpoint", str(root / "nope.ckpt"), "--out", str(root / "x")]
        )
        assert status == 1
        assert "nope.ckpt" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path, capsys):
        status = cli.dispatch(["--config", str(tmp_path / "missing.cfg"), "render",
                               "--theta", "x", "--out", "y"])
        assert status == 1
        assert "config" in capsys.readouterr().err

    def test_unknown_flag_exits_nonzero(self, capsys):
        with pytest.raises(SystemExit) as err:
            cli.dispatch(["gen-data", "--no-such-flag"])
        assert err.value.code == 2

    def test_missing_dataset(self, pipeline, tmp_path, capsys):
        root, config, _, ckpt = pipeline
        status = cli.dispatch(
            ["--config", str(config), "attack", "--data", str(tmp_path / "void"),
             "--checkpoint", str(ckpt), "--out", str(root / "y")]
        )
        assert status == 1
        assert "dataset" in capsys.readouterr().err


class TestRender:
    def test_empty_theta_gives_black_image(self, tmp_path):
        theta = tmp_path / "theta.txt"
        theta.write_text("\n")
        out = tmp_path / "img.f32"
        assert cli.dispatch(["render", "--theta", str(theta), "--out", str(out)]) == 0
        image, _ = fileio.load_image(out)
        assert np.all(image == 0)

    def test_kind_prefixed_rows(self, tmp_path):
        theta = tmp_path / "theta.txt"
        theta.write_text("Trihedral 1.0 4.0 -3.0 1.0 0.0 0.0 0.0\n")
        out = tmp_path / "img.f32"
        assert cli.dispatch(["render", "--theta", str(theta), "--out", str(out), "--png"]) == 0
        image, _ = fileio.load_image(out)
        assert image.max() > 0.5
        assert out.with_suffix(".png").exists()

    def test_malformed_row_rejected(self, tmp_path, capsys):
        theta = tmp_path / "theta.txt"
        theta.write_text("1 2 3\n")
        assert cli.dispatch(["render", "--theta", str(theta), "--out", str(tmp_path / "o.f32")]) == 1


class TestPipeline:
    def test_attack_and_eval_produce_reports(self, pipeline):
        root, config, data, ckpt = pipeline
        adv = root / "adv"
        assert cli.dispatch(
            ["--config", str(config), "attack", "--data", str(data),
             "--checkpoint", str(ckpt), "--out", str(adv), "--count", "2"]
        ) == 0
        report = read_report(adv / "report.txt")
        assert "fooling_rate" in report
        assert (adv / "config_used.cfg").exists()
        assert list(adv.glob("result_*"))

        out = root / "eval"
        assert cli.dispatch(
            ["--config", str(config), "eval", "--data", str(data), "--checkpoint", str(ckpt),
             "--out", str(out), "--baselines", "fgsm", "--adv", str(adv), "--count", "4"]
        ) == 0
        report = read_report(out / "eval_report.txt")
        assert "clean_accuracy" in report and "fgsm.fooling_rate" in report
        assert "interference.median_3" in report

    def test_reports_byte_identical_across_runs(self, pipeline, tmp_path):
        root, config, data, ckpt = pipeline
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert cli.dispatch(
                ["--config", str(config), "attack", "--data", str(data),
                 "--checkpoint", str(ckpt), "--out", str(out), "--count", "2"]
            ) == 0
            outs.append((out / "report.txt").read_bytes())
        assert outs[0] == outs[1]

    def test_output_root_env(self, pipeline, tmp_path, monkeypatch):
        root, config, data, ckpt = pipeline
        monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
        theta = tmp_path / "t.txt"
        theta.write_text("")
        assert cli.dispatch(["render", "--theta", str(theta), "--out", "sub/i.f32"]) == 0
        assert (tmp_path / "sub" / "i.f32").exists()

    def test_config_round_trip(self, pipeline):
        root, config, data, _ = pipeline
        import configparser

        parsed = configparser.ConfigParser()
        parsed.read(data / "config_used.cfg")
        assert parsed.get("dataset", "classes") == "2"
        assert parsed.get("train", "arch") == "slimnet"
