"""Attack evaluation: l-infinity baselines, fooling metrics, processing-chain
interference robustness, parameter sensitivity sweeps, cross-model transfer,
and vulnerable-region heatmaps."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates, median_filter

from .attack import AttackConfig, AttackResult, run_attack
from .dataset import Sample
from .imaging import _crop_slices, _ifft_centered, cartesian_grid, window_2d
from .scattering import N_PARAMS, PARAM_NAMES, ImagingConfig


# ----------------------------------------------------------------- baselines


def bim_batch(net, images: np.ndarray, labels, eps: float, steps: int = 10, alpha: float | None = None) -> np.ndarray:
    """Iterative gradient-sign ascent inside the eps ball and [0, 1] box."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if alpha is None:
        alpha = eps / 10.0
    x0 = np.asarray(images, dtype=np.float32)
    adv = x0.copy()
    for _ in range(steps):
        grad = net.input_gradient_batch(adv, labels)
        adv = adv + alpha * np.sign(grad)
        adv = np.clip(np.clip(adv, x0 - eps, x0 + eps), 0.0, 1.0).astype(np.float32)
    return adv


def fgsm_batch(net, images, labels, eps: float) -> np.ndarray:
    """Single-step variant: one full-size sign step."""
    return bim_batch(net, images, labels, eps, steps=1, alpha=eps)


def pgd_batch(
    net, images, labels, eps: float, steps: int = 20, alpha: float | None = None,
    random_start: bool = True, seed: int = 0,
) -> np.ndarray:
    """Projected gradient descent with optional uniform random start."""
    if alpha is None:
        alpha = eps / 10.0
    x0 = np.asarray(images, dtype=np.float32)
    adv = x0.copy()
    if random_start:
        rng = np.random.default_rng(seed)
        adv = np.clip(x0 + rng.uniform(-eps, eps, x0.shape).astype(np.float32), 0.0, 1.0)
    for _ in range(steps):
        grad = net.input_gradient_batch(adv, labels)
        adv = adv + alpha * np.sign(grad)
        adv = np.clip(np.clip(adv, x0 - eps, x0 + eps), 0.0, 1.0).astype(np.float32)
    return adv


def fgsm(net, x, y: int, eps: float) -> np.ndarray:
    return fgsm_batch(net, x[None], y, eps)[0]


def bim(net, x, y: int, eps: float, steps: int = 10, alpha: float | None = None) -> np.ndarray:
    return bim_batch(net, x[None], y, eps, steps, alpha)[0]


def pgd(net, x, y: int, eps: float, steps: int = 20, alpha: float | None = None,
        random_start: bool = True, seed: int = 0) -> np.ndarray:
    return pgd_batch(net, x[None], y, eps, steps, alpha, random_start, seed)[0]


# ------------------------------------------------------------------- metrics


def fooling_rate(net, adv_images: np.ndarray, labels) -> float:
    """Fraction of attacked inputs the net misclassifies."""
    adv_images = np.asarray(adv_images)
    if adv_images.size == 0:
        raise ValueError("empty adversarial set")
    labels = np.broadcast_to(np.asarray(labels), (adv_images.shape[0],))
    _, conf = net.predict_batch(adv_images.astype(np.float32))
    return float(np.mean(conf.argmax(axis=1) != labels))


@dataclass
class EvalReport:
    fooling_rate: float
    adversarial_matrix: np.ndarray  # (J, J) successful-attack counts, row = true class
    mean_adv_confidence: float
    interference: dict = None

    def to_lines(self) -> list[str]:
        lines = [
            f"fooling_rate = {self.fooling_rate!r}",
            f"mean_adv_confidence = {self.mean_adv_confidence!r}",
        ]
        for i, row in enumerate(self.adversarial_matrix):
            lines.append(f"adversarial_matrix.{i} = " + " ".join(str(int(v)) for v in row))
        for key, value in (self.interference or {}).items():
            lines.append(f"interference.{key} = {value!r}")
        return lines


def summarize_results(net, results: list[AttackResult], num_classes: int) -> EvalReport:
    """Fooling rate over attacked (non-skipped) results, adversarial-category
    counts over successful attacks, and mean confidence on the induced class."""
    attacked = [r for r in results if not r.skipped]
    if not attacked:
        raise ValueError("no attacked results to summarize")
    matrix = np.zeros((num_classes, num_classes), dtype=int)
    confs = []
    fooled = 0
    for r in attacked:
        if r.success:
            fooled += 1
            matrix[r.label, r.predicted] += 1
            confs.append(r.adv_confidence)
    return EvalReport(
        fooling_rate=fooled / len(attacked),
        adversarial_matrix=matrix,
        mean_adv_confidence=float(np.mean(confs)) if confs else 0.0,
    )


# -------------------------------------------------------------- interference


@dataclass(frozen=True)
class InterferenceSpec:
    """One processing-chain perturbation.

    kinds: 'noise' (additive white gaussian, sigma), 'gaussian' (filter,
    sigma + odd kernel), 'median' (odd kernel), 'resize' (down/up through
    ``factor`` with bilinear interpolation).
    """

    kind: str
    sigma: float = 1e-2
    kernel: int = 3
    factor: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("noise", "gaussian", "median", "resize"):
            raise ValueError(f"unknown interference kind: {self.kind}")
        if self.kind in ("gaussian", "median"):
            if self.kernel < 1 or self.kernel % 2 == 0:
                raise ValueError("filter kernel must be odd and positive")
        if self.kind in ("noise", "gaussian") and self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.kind == "resize" and not (0 < self.factor <= 1):
            raise ValueError("resize factor must lie in (0, 1]")

    @property
    def name(self) -> str:
        if self.kind == "noise":
            return f"noise_{self.sigma:g}"
        if self.kind == "gaussian":
            return f"gaussian_{self.sigma:g}_{self.kernel}"
        if self.kind == "median":
            return f"median_{self.kernel}"
        return f"resize_{self.factor:g}"


def default_interference_suite() -> list[InterferenceSpec]:
    return [
        InterferenceSpec("noise", sigma=1e-2),
        InterferenceSpec("gaussian", sigma=1.0, kernel=3),
        InterferenceSpec("median", kernel=3),
        InterferenceSpec("resize", factor=0.75),
    ]


def _bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = image.shape
    rows = np.linspace(0, h - 1, out_h)
    cols = np.linspace(0, w - 1, out_w)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return map_coordinates(image, [rr, cc], order=1, mode="nearest")


def apply_interference(image: np.ndarray, spec: InterferenceSpec) -> np.ndarray:
    """Deterministic (seeded) transformed image, re-clipped to [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if spec.kind == "noise":
        if spec.sigma > 0:
            rng = np.random.default_rng(spec.seed)
            img = img + rng.normal(0.0, spec.sigma, img.shape)
    elif spec.kind == "gaussian":
        img = gaussian_filter(img, spec.sigma, radius=spec.kernel // 2, mode="reflect")
    elif spec.kind == "median":
        img = median_filter(img, size=spec.kernel, mode="reflect")
    elif spec.kind == "resize":
        h, w = img.shape
        down_h, down_w = max(2, round(h * spec.factor)), max(2, round(w * spec.factor))
        if (down_h, down_w) != (h, w):
            img = _bilinear_resize(_bilinear_resize(img, down_h, down_w), h, w)
    return np.clip(img, 0.0, 1.0)


def interference_fooling_rates(
    net, adv_images: np.ndarray, labels, suite: list[InterferenceSpec] | None = None
) -> dict[str, float]:
    """Remaining fooling rate after each interference in the suite."""
    if suite is None:
        suite = default_interference_suite()
    out = {"none": fooling_rate(net, adv_images, labels)}
    for spec in suite:
        transformed = np.stack([apply_interference(img, spec) for img in adv_images])
        out[spec.name] = fooling_rate(net, transformed, labels)
    return out


# ------------------------------------------------------------------- sweeps


def _reform_fused(thetas: np.ndarray, x: np.ndarray, cfg: AttackConfig, icfg: ImagingConfig) -> np.ndarray:
    # mirrors the attack's own formation path (per-scatterer images summed in
    # the configured precision) so a zero offset reproduces its evaluation
    grid = cartesian_grid(icfg)
    win = window_2d(icfg)
    fields = grid.fields(thetas, dtype=cfg.complex_dtype)
    fields *= win.astype(fields.real.dtype)
    imgs = _ifft_centered(fields, icfg)
    rs, cs = _crop_slices(icfg, x.shape)
    total = imgs[:, rs, cs].sum(axis=0)
    return np.clip(x + np.abs(total), 0.0, 1.0).astype(np.float32)


def sensitivity_sweep(
    net,
    sample: Sample,
    result: AttackResult,
    param: str | int,
    deltas,
    cfg: AttackConfig,
    icfg: ImagingConfig,
) -> list[dict]:
    """Re-test a winning parameter set with one parameter offset per delta.

    The offset applies to every scatterer in the set.  Offsets that leave the
    configured bounds are reported as skipped.  Returns one record per delta:
    {delta, outcome: 'success' | 'failure' | 'out_of_bounds'}.
    """
    if not result.success or result.skipped:
        raise ValueError("sensitivity sweep needs a successful attack result")
    idx = PARAM_NAMES.index(param) if isinstance(param, str) else int(param)
    lo, hi = cfg.bounds
    records = []
    for delta in deltas:
        thetas = result.thetas.copy()
        thetas[:, idx] = thetas[:, idx] + delta
        if np.any(thetas[:, idx] < lo[idx]) or np.any(thetas[:, idx] > hi[idx]):
            records.append({"delta": float(delta), "outcome": "out_of_bounds"})
            continue
        fused = _reform_fused(thetas, sample.image, cfg, icfg)
        _, conf = net.predict_batch(fused[None])
        outcome = "success" if int(conf[0].argmax()) != sample.label else "failure"
        records.append({"delta": float(delta), "outcome": outcome})
    return records


def retention(records: list[dict]) -> float:
    """Fraction of evaluated offsets that kept fooling the net."""
    evaluated = [r for r in records if r["outcome"] != "out_of_bounds"]
    if not evaluated:
        return 0.0
    return sum(r["outcome"] == "success" for r in evaluated) / len(evaluated)


# ------------------------------------------------------------------ transfer


def transfer_matrix(
    surrogates: list,
    targets: list,
    samples: list[Sample],
    cfg: AttackConfig,
    icfg: ImagingConfig,
) -> np.ndarray:
    """Entry (i, j): fooling rate on target net j of adversarial images
    crafted against surrogate net i.  Samples the surrogate already
    misclassifies are excluded from its crafted set."""
    if len(surrogates) < 1 or len(targets) < 1:
        raise ValueError("need at least one surrogate and one target")
    matrix = np.zeros((len(surrogates), len(targets)))
    for i, surrogate in enumerate(surrogates):
        advs, labels = [], []
        for k, sample in enumerate(samples):
            result = run_attack(surrogate, sample, replace(cfg, seed=cfg.seed + k), icfg)
            if result.skipped:
                continue
            advs.append(result.adversarial)
            labels.append(result.label)
        if not advs:
            raise ValueError("surrogate misclassified every sample; nothing to craft")
        advs = np.stack(advs)
        labels = np.array(labels)
        for j, target in enumerate(targets):
            matrix[i, j] = fooling_rate(target, advs, labels)
    return matrix


# ------------------------------------------------------------------ heatmap


def vulnerability_heatmap(
    net, sample: Sample, repeats: int, v_th: float, cfg: AttackConfig, icfg: ImagingConfig
) -> np.ndarray:
    """Accumulated winning single-scatterer locations over repeated attacks
    with distinct seeds; each successful run deposits one count."""
    h, w = sample.image.shape
    counts = np.zeros((h, w), dtype=int)
    base = replace(cfg, n_scatterers=1, stop_confidence=v_th)
    for rep in range(repeats):
        result = run_attack(net, sample, replace(base, seed=cfg.seed + 7919 * rep), icfg)
        if result.skipped or not result.success:
            continue
        r = int(round(result.thetas[0, 1] + (h - 1) / 2))
        c = int(round(result.thetas[0, 2] + (w - 1) / 2))
        counts[np.clip(r, 0, h - 1), np.clip(c, 0, w - 1)] += 1
    return counts


# ------------------------------------------------------------------- reports


def write_report(path, values: dict) -> Path:
    """Machine-readable tabular text: one ``key = value`` line per metric, in
    insertion order."""
    path = Path(path)
    lines = []
    for key, value in values.items():
        if isinstance(value, float):
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out
