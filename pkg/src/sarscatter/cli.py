"""Command-line pipeline driver.

Subcommands: gen-data, train, attack, eval, defend, sweep, render.  Settings
come from an INI config file plus flag overrides; every output directory
receives the resolved config and a provenance record so runs reproduce
byte-for-byte under identical seeds.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import classifier as cl
from . import dataset as ds
from . import defense as df
from . import evaluation as ev
from . import fileio
from .attack import AttackConfig, run_attack, save_result
from .imaging import form_image, xband_config
from .scattering import N_PARAMS, PARAM_NAMES, ScatteringType

OUTPUT_ROOT_ENV = "SARSCATTER_OUTPUT_ROOT"

DEFAULT_CONFIG = {
    "run": {"seed": "0", "workers": "0"},
    "imaging": {"preset": "xband88"},
    "dataset": {
        "classes": "10",
        "train_per_class": "150",
        "test_per_class": "80",
        "speckle": "0.35",
        "clutter_count": "8",
        "clutter_amplitude": "0.35",
    },
    "train": {
        "arch": "aconvnet",
        "epochs": "14",
        "learning_rate": "0.02",
        "momentum": "0.9",
        "batch_size": "32",
    },
    "attack": {
        "n_scatterers": "3",
        "population": "100",
        "max_iter": "90",
        "stop_confidence": "0.1",
        "amplitude_cap_db": "0.0",
        "init_region": "mask",
    },
    "defense": {
        "fraction": "1.0",
        "epochs": "8",
        "surrogate_max_iter": "20",
        "pgd_epsilon": "0.0157",
    },
    "eval": {"epsilon": "0.0157"},
}


class CliError(Exception):
    pass


def _load_config(path: str | None) -> configparser.ConfigParser:
    config = configparser.ConfigParser()
    config.read_dict(DEFAULT_CONFIG)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise CliError(f"cannot read config: {p}")
        try:
            with open(p) as fh:
                config.read_file(fh)
        except (OSError, configparser.Error) as err:
            raise CliError(f"cannot read config: {p} ({err})") from err
    return config


def _resolve_out(path: str) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    p = Path(path)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _write_provenance(out_dir: Path, config: configparser.ConfigParser, seed: int):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config_used.cfg", "w") as fh:
        config.write(fh)
    lines = [
        f"tool = sarscatter {__version__}",
        f"seed = {seed}",
        f"numpy = {np.__version__}",
    ]
    (out_dir / "provenance.txt").write_text("\n".join(lines) + "\n")


def _imaging_from_config(config) -> "ImagingConfig":
    preset = config.get("imaging", "preset")
    if preset == "xband88":
        return xband_config(88)
    if preset == "xband128":
        return xband_config(padded=True)
    raise CliError(f"unknown imaging preset: {preset}")


def _require_checkpoint(path: str) -> cl.TorchVictim:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"checkpoint not found: {p}")
    return cl.load_checkpoint(p)


def _require_dataset(path: str):
    p = Path(path)
    if not (p / "manifest.txt").is_file():
        raise CliError(f"dataset not found: {p}")
    return ds.load_dataset(p)


def _attack_config(config, args, seed: int) -> AttackConfig:
    sec = config["attack"]
    return AttackConfig(
        n_scatterers=getattr(args, "n", None) or sec.getint("n_scatterers"),
        population=getattr(args, "population", None) or sec.getint("population"),
        max_iter=getattr(args, "max_iter", None) or sec.getint("max_iter"),
        stop_confidence=sec.getfloat("stop_confidence"),
        amplitude_cap_db=sec.getfloat("amplitude_cap_db"),
        init_region=getattr(args, "init_region", None) or sec.get("init_region"),
        seed=seed,
    )


def cmd_gen_data(args, config) -> int:
    seed = args.seed if args.seed is not None else config.getint("run", "seed")
    sec = config["dataset"]
    dcfg = ds.DatasetConfig(
        num_classes=args.classes or sec.getint("classes"),
        train_per_class=args.train_per_class or sec.getint("train_per_class"),
        test_per_class=args.test_per_class or sec.getint("test_per_class"),
        speckle=sec.getfloat("speckle"),
        clutter_count=sec.getint("clutter_count"),
        clutter_amplitude=sec.getfloat("clutter_amplitude"),
        seed=seed,
    )
    icfg = _imaging_from_config(config)
    out = _resolve_out(args.out)
    train, test = ds.generate_dataset(dcfg, icfg, out)
    _write_provenance(out, config, seed)
    print(f"wrote {len(train)} train / {len(test)} test samples to {out}")
    return 0


def cmd_train(args, config) -> int:
    seed = args.seed if args.seed is not None else config.getint("run", "seed")
    train, test, manifest = _require_dataset(args.data)
    icfg = ds.imaging_config_from_manifest(manifest)
    del icfg  # dataset geometry only matters at generation time here
    sec = config["train"]
    arch = args.arch or sec.get("arch")
    if arch not in cl.PRESETS:
        raise CliError(f"unknown architecture: {arch}")
    num_classes = int(manifest["dataset.num_classes"])
    net = cl.build_victim(cl.PRESETS[arch](num_classes=num_classes), seed=seed)
    tcfg = cl.TrainConfig(
        learning_rate=sec.getfloat("learning_rate"),
        momentum=sec.getfloat("momentum"),
        batch_size=sec.getint("batch_size"),
        epochs=args.epochs or sec.getint("epochs"),
        seed=seed,
    )
    images, labels = ds.stack_split(train)
    history = cl.train(net, images, labels, tcfg)
    test_images, test_labels = ds.stack_split(test)
    accuracy = cl.evaluate_accuracy(net, test_images, test_labels)
    out = _resolve_out(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cl.save_checkpoint(out, net)
    report_dir = out.parent
    _write_provenance(report_dir, config, seed)
    ev.write_report(
        report_dir / f"{out.stem}_train_report.txt",
        {
            "arch": arch,
            "epochs": tcfg.epochs,
            "final_train_loss": history["loss"][-1],
            "final_train_accuracy": history["accuracy"][-1],
            "test_accuracy": accuracy,
        },
    )
    print(f"checkpoint {out}; held-out accuracy {accuracy:.4f}")
    return 0


def cmd_attack(args, config) -> int:
    seed = args.seed if args.seed is not None else config.getint("run", "seed")
    _, test, manifest = _require_dataset(args.data)
    icfg = ds.imaging_config_from_manifest(manifest)
    net = _require_checkpoint(args.checkpoint)
    cfg = _attack_config(config, args, seed)
    out = _resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)

    count = args.count or len(test)
    results = []
    attacked = 0
    for k, sample in enumerate(test):
        if attacked >= count:
            break
        result = run_attack(net, sample, replace(cfg, seed=seed + k), icfg)
        if result.skipped:
            continue
        attacked += 1
        results.append(result)
        # directory name carries the test-set index for later sweeps
        save_result(out / f"result_{k:04d}", result)
    if not results:
        raise CliError("no correctly-classified samples to attack")
    report = ev.summarize_results(net, results, net.config.num_classes)
    lines = dict(
        attacked=attacked,
        n_scatterers=cfg.n_scatterers,
        population=cfg.population,
        max_iter=cfg.max_iter,
    )
    report_path = out / "report.txt"
    ev.write_report(report_path, {**lines, "fooling_rate": report.fooling_rate,
                                  "mean_adv_confidence": report.mean_adv_confidence})
    with open(report_path, "a") as fh:
        for i, row in enumerate(report.adversarial_matrix):
            fh.write(f"adversarial_matrix.{i} = " + " ".join(str(int(v)) for v in row) + "\n")
    _write_provenance(out, config, seed)
    print(f"attacked {attacked} samples; fooling rate {report.fooling_rate:.4f}; results in {out}")
    return 0


def cmd_eval(args, config) -> int:
    seed = args.seed if args.seed is not None else config.getint("run", "seed")
    _, test, manifest = _require_dataset(args.data)
    net = _require_checkpoint(args.checkpoint)
    out = _resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images, labels = ds.stack_split(test)
    values = {"clean_accuracy": cl.evaluate_accuracy(net, images, labels)}

    eps = args.eps or config.getfloat("eval", "epsilon")
    count = args.count or min(len(test), 200)
    xb, yb = images[:count], labels[:count]
    if args.baselines:
        for name in args.baselines.split(","):
            name = name.strip()
            if name == "fgsm":
                adv = ev.fgsm_batch(net, xb, yb, eps)
            elif name == "bim":
                adv = ev.bim_batch(net, xb, yb, eps)
            elif name == "pgd":
                adv = ev.pgd_batch(net, xb, yb, eps, seed=seed)
            else:
                raise CliError(f"unknown baseline attack: {name}")
            values[f"{name}.fooling_rate"] = ev.fooling_rate(net, adv, yb)

    if args.adv:
        adv_dir = Path(args.adv)
        if not adv_dir.is_dir():
            raise CliError(f"attack results not found: {adv_dir}")
        from .attack import load_result

        loaded = [load_result(p) for p in sorted(adv_dir.glob("result_*"))]
        if loaded:
            adv_images = np.stack([r.adversarial for r in loaded])
            adv_labels = np.array([r.label for r in loaded])
            rates = ev.interference_fooling_rates(net, adv_images, adv_labels)
            for key, value in rates.items():
                values[f"interference.{key}"] = value
    ev.write_report(out / "eval_report.txt", values)
    _write_provenance(out, config, seed)
    print(f"eval report at {out / 'eval_report.txt'}")
    return 0


def cmd_defend(args, config) -> int:
    seed = args.seed if args.seed is not None else config.getint("run", "seed")
    train, test, manifest = _require_dataset(args.data)
    icfg = ds.imaging_config_from_manifest(manifest)
    sec = config["defense"]
    out = _resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    num_classes = int(manifest["dataset.num_classes"])
    epochs = args.epochs or sec.getint("epochs")
    tcfg = cl.TrainConfig(
        learning_rate=config.getfloat("train", "learning_rate"),
        momentum=config.getfloat("train", "momentum"),
        batch_size=config.getint("train", "batch_size"),
        epochs=epochs,
        seed=seed,
    )
    arch = cl.PRESETS[args.arch or config.get("train", "arch")]

    images, labels = ds.stack_split(train)
    normal = cl.build_victim(arch(num_classes=num_classes), seed=seed)
    cl.train(normal, images, labels, tcfg)
    cl.save_checkpoint(out / "normal.ckpt", normal)

    defended = cl.build_victim(arch(num_classes=num_classes), seed=seed)
    dcfg = df.DefenseConfig(
        surrogate=replace(df.surrogate_config(seed), max_iter=sec.getint("surrogate_max_iter")),
        fraction=args.fraction if args.fraction is not None else sec.getfloat("fraction"),
        train=tcfg,
    )
    df.adversarial_train(defended, train, dcfg, icfg)
    cl.save_checkpoint(out / "defended.ckpt", defended)

    nets = {"normal": normal, "defended": defended}
    if args.pgd_baseline:
        pgd_net = cl.build_victim(arch(num_classes=num_classes), seed=seed)
        df.pgd_adversarial_train(pgd_net, train, tcfg, eps=sec.getfloat("pgd_epsilon"))
        cl.save_checkpoint(out / "pgd_defended.ckpt", pgd_net)
        nets["pgd_defended"] = pgd_net

    eval_cfg = _attack_config(config, args, seed)
    eval_count = args.count or 50
    subset = test[:eval_count]
    eps = sec.getfloat("pgd_epsilon")

    def scatter_attack(net, sample):
        return run_attack(net, sample, eval_cfg, icfg).adversarial

    def pgd_attack(net, sample):
        return ev.pgd(net, sample.image, sample.label, eps, seed=seed)

    report = df.evaluate_defense(nets, [("scatter", scatter_attack), ("pgd", pgd_attack)], subset)
    ev.write_report(out / "defense_report.txt", report)
    _write_provenance(out, config, seed)
    print(f"defense report at {out / 'defense_report.txt'}")
    return 0


def cmd_sweep(args, config) -> int:
    seed = args.seed if args.seed is not None else config.getint("run", "seed")
    _, test, manifest = _require_dataset(args.data)
    icfg = ds.imaging_config_from_manifest(manifest)
    net = _require_checkpoint(args.checkpoint)
    adv_dir = Path(args.adv)
    if not adv_dir.is_dir():
        raise CliError(f"attack results not found: {adv_dir}")
    from .attack import load_result

    cfg = _attack_config(config, args, seed)
    deltas = [float(v) for v in args.deltas.split(",")]
    if args.param not in PARAM_NAMES:
        raise CliError(f"unknown parameter: {args.param} (choose from {', '.join(PARAM_NAMES)})")

    out = _resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    per_delta = {d: [0, 0] for d in deltas}  # delta -> [retained, evaluated]
    examined = 0
    for path in sorted(adv_dir.glob("result_*")):
        result = load_result(path)
        if not result.success or result.skipped or len(result.kinds) == 0:
            continue
        index = int(path.name.rsplit("_", 1)[1])
        if index >= len(test):
            continue
        sample = test[index]
        examined += 1
        for rec in ev.sensitivity_sweep(net, sample, result, args.param, deltas, cfg, icfg):
            if rec["outcome"] == "out_of_bounds":
                continue
            per_delta[rec["delta"]][1] += 1
            per_delta[rec["delta"]][0] += rec["outcome"] == "success"
    values = {"param": args.param, "results_examined": examined}
    for d in deltas:
        retained, evaluated = per_delta[d]
        values[f"retention.{d:g}"] = retained / evaluated if evaluated else 0.0
    ev.write_report(out / "sweep_report.txt", values)
    _write_provenance(out, config, seed)
    print(f"sweep report at {out / 'sweep_report.txt'}")
    return 0


def _parse_theta_file(path: Path):
    if not path.is_file():
        raise CliError(f"theta file not found: {path}")
    thetas = []
    kinds = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) == N_PARAMS + 1:
            kinds.append(ScatteringType(parts[0]))
            values = parts[1:]
        elif len(parts) == N_PARAMS:
            values = parts
        else:
            raise CliError(f"theta line needs {N_PARAMS} values (+ optional kind): {line}")
        thetas.append([float(v) for v in values])
    return np.array(thetas).reshape(-1, N_PARAMS)


def cmd_render(args, config) -> int:
    icfg = _imaging_from_config(config)
    thetas = _parse_theta_file(Path(args.theta))
    image = form_image(thetas, icfg)
    out = _resolve_out(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fileio.save_image(out, image, meta={"source": f"render {Path(args.theta).name}"})
    if args.png:
        fileio.save_png16(out.with_suffix(".png"), image)
    print(f"rendered {len(thetas)} scatterers to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sarscatter", description=__doc__)
    parser.add_argument("--config", "-c", help="INI config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--train-per-class", dest="train_per_class", type=int)
    p.add_argument("--test-per-class", dest="test_per_class", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a victim classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--arch", choices=sorted(cl.PRESETS))
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("attack", help="run the scatterer attack over test samples")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, help="scatterer budget")
    p.add_argument("--population", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--count", type=int, help="number of samples to attack")
    p.add_argument("--init-region", dest="init_region", choices=["mask", "background", "anywhere"])
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("eval", help="clean accuracy, baselines, interference robustness")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--adv", help="directory of attack results for interference rows")
    p.add_argument("--baselines", help="comma list: fgsm,bim,pgd")
    p.add_argument("--eps", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("defend", help="adversarial training and comparison")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--arch", choices=sorted(cl.PRESETS))
    p.add_argument("--epochs", type=int)
    p.add_argument("--fraction", type=float)
    p.add_argument("--count", type=int, help="robust-eval sample count")
    p.add_argument("--pgd-baseline", dest="pgd_baseline", action="store_true")
    p.add_argument("--n", type=int)
    p.add_argument("--population", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_defend)

    p = sub.add_parser("sweep", help="parameter sensitivity of saved attack results")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--adv", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--deltas", required=True, help="comma-separated offsets")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--population", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("render", help="form an image from a scatterer parameter file")
    p.add_argument("--theta", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--png", action="store_true")
    p.set_defaults(fn=cmd_render)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        workers = config.getint("run", "workers")
        if workers > 0:
            import torch

            torch.set_num_threads(workers)
        return args.fn(args, config)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(dispatch())
