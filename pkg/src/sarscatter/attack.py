"""Adversarial scatterer search.

Optimizes a population of candidate scatterer parameter sets against a
classifier: hybrid gradient-sign estimation (exact classifier input gradient
chained with finite-difference image sensitivities), Gaussian stepsizes with
adaptive means, softened greedy acceptance that keeps failed updates with
probability 0.5, per-scatterer amplitude projection, [0, 1] clipping, and
confidence-threshold early stopping.  Members never exchange information;
the best member by ground-truth confidence wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fileio
from .dataset import Sample
from .imaging import DEFAULT_FD_STEPS, _crop_slices, _ifft_centered, cartesian_grid, window_2d
from .scattering import (
    IDX_A,
    IDX_X,
    IDX_Y,
    N_PARAMS,
    ImagingConfig,
    ScatteringType,
    scattering_type_template,
)

TYPE_ORDER = tuple(ScatteringType)

DEFAULT_THETA_MIN = (0.0, -43.5, -43.5, -1.0, 0.0, 0.0, -1.0)
DEFAULT_THETA_MAX = (10.0, 43.5, 43.5, 1.0, 2.0, 5.0, 1.0)
DEFAULT_STEP_MEAN = (0.05, 0.5, 0.5, 0.0, 0.01, 0.025, 0.01)

CONF_FLOOR = 1e-12


@dataclass(frozen=True)
class AttackConfig:
    """Search knobs; the defaults follow the reference parameterization."""

    n_scatterers: int = 3
    max_iter: int = 90
    population: int = 100
    theta_min: tuple = DEFAULT_THETA_MIN
    theta_max: tuple = DEFAULT_THETA_MAX
    step_mean0: tuple = DEFAULT_STEP_MEAN
    step_std: tuple | None = None  # None: (theta_max - theta_min)/200
    adaption: float = 0.5  # mean-update balance; 1 freezes the stepsize means
    stop_confidence: float = 0.1
    accept_probability: float = 0.5  # chance of keeping a non-improving update
    amplitude_cap_db: float = 0.0  # per-scatterer response cap relative to target peak
    projection_retries: int = 10
    seed: int = 0
    sync_loss: bool = False  # True: stored loss tracks only accepted candidates
    init_region: str = "mask"  # 'mask' | 'background' | 'anywhere'
    type_pool: tuple[ScatteringType, ...] | None = None
    fd_steps: tuple = tuple(DEFAULT_FD_STEPS)
    precision: str = "single"  # imaging dtype inside the search
    check_contracts: bool = False

    def __post_init__(self):
        lo, hi = np.asarray(self.theta_min), np.asarray(self.theta_max)
        if lo.shape != (N_PARAMS,) or hi.shape != (N_PARAMS,):
            raise ValueError("theta bounds must be 7-vectors")
        if np.any(lo > hi):
            raise ValueError("theta_min must not exceed theta_max")
        if not (0 < self.stop_confidence <= 1):
            # 1.0 means "stop at the first confidence check"
            raise ValueError("stop confidence must lie in (0, 1]")
        if self.n_scatterers < 1 or self.population < 1:
            raise ValueError("need at least one scatterer and one member")
        if not (0 <= self.adaption <= 1):
            raise ValueError("adaption balance must lie in [0, 1]")

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.theta_min, dtype=float), np.asarray(self.theta_max, dtype=float)

    @property
    def sigma(self) -> np.ndarray:
        if self.step_std is not None:
            return np.asarray(self.step_std, dtype=float)
        lo, hi = self.bounds
        return (hi - lo) / 200.0

    @property
    def amplitude_cap(self) -> float:
        return float(10.0 ** (self.amplitude_cap_db / 20.0))

    @property
    def complex_dtype(self):
        return np.complex64 if self.precision == "single" else np.complex128


@dataclass
class PopulationMember:
    """One candidate parameter set with its frozen-parameter mask and
    adaptive stepsize state."""

    thetas: np.ndarray  # (N, 7)
    kinds: tuple[ScatteringType, ...]
    adjustable: np.ndarray  # (N, 7) bool; False entries never move
    step_mean: np.ndarray  # (N, 7)
    loss: float
    confidence: float


@dataclass
class AttackResult:
    thetas: np.ndarray
    kinds: tuple[ScatteringType, ...]
    perturbation: np.ndarray
    adversarial: np.ndarray
    label: int
    predicted: int
    gt_confidence: float
    adv_confidence: float
    trace: list[float]
    iterations: int
    success: bool
    early_stopped: bool
    skipped: bool = False
    projection_exhausted: bool = False


class Population:
    """Vectorized state for all members; per-member RNG streams keep serial
    and fanned-out evaluation identical."""

    def __init__(self, thetas, kinds, adjustable, step_mean, rngs):
        self.thetas = thetas  # (B, N, 7)
        self.kinds = kinds  # (B, N) int indices into TYPE_ORDER
        self.adjustable = adjustable  # (B, N, 7) bool
        self.step_mean = step_mean  # (B, N, 7)
        self.rngs = rngs
        b = thetas.shape[0]
        self.loss = np.zeros(b)
        self.conf = np.ones(b)
        self.per_images = None  # (B, N, h, w) complex, per-scatterer images
        self.total = None  # (B, h, w) complex sums
        self.projection_exhausted = np.zeros(b, dtype=bool)

    @property
    def size(self) -> int:
        return self.thetas.shape[0]

    def member(self, b: int) -> PopulationMember:
        return PopulationMember(
            thetas=self.thetas[b].copy(),
            kinds=tuple(TYPE_ORDER[i] for i in self.kinds[b]),
            adjustable=self.adjustable[b].copy(),
            step_mean=self.step_mean[b].copy(),
            loss=float(self.loss[b]),
            confidence=float(self.conf[b]),
        )


def _region_coordinates(sample: Sample, region: str) -> np.ndarray:
    mask = np.asarray(sample.mask, dtype=bool)
    if region == "mask":
        sel = mask
    elif region == "background":
        sel = ~mask
    elif region == "anywhere":
        sel = np.ones_like(mask)
    else:
        raise ValueError(f"unknown init region: {region}")
    coords = np.argwhere(sel)
    if coords.size == 0:
        raise ValueError(f"empty initialization region: {region}")
    return coords


def initialize_population(sample: Sample, cfg: AttackConfig) -> Population:
    """Random types, in-region locations, uniform free parameters, stepsize
    means at their initial values."""
    coords = _region_coordinates(sample, cfg.init_region)
    h, w = sample.image.shape
    offset_r, offset_c = (h - 1) / 2.0, (w - 1) / 2.0
    lo, hi = cfg.bounds
    pool = cfg.type_pool or TYPE_ORDER
    pool_idx = np.array([TYPE_ORDER.index(k) for k in pool])

    b, n = cfg.population, cfg.n_scatterers
    thetas = np.zeros((b, n, N_PARAMS))
    kinds = np.zeros((b, n), dtype=np.int64)
    adjustable = np.zeros((b, n, N_PARAMS), dtype=bool)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(b)]

    for j in range(b):
        rng = rngs[j]
        for i in range(n):
            kind = TYPE_ORDER[pool_idx[rng.integers(0, len(pool_idx))]]
            kinds[j, i] = TYPE_ORDER.index(kind)
            _, frozen, forced = scattering_type_template(kind)
            adjustable[j, i] = ~frozen
            r, c = coords[rng.integers(0, len(coords))]
            row = np.empty(N_PARAMS)
            row[IDX_X] = np.clip(r - offset_r, lo[IDX_X], hi[IDX_X])
            row[IDX_Y] = np.clip(c - offset_c, lo[IDX_Y], hi[IDX_Y])
            for k in range(N_PARAMS):
                if frozen[k]:
                    row[k] = forced[k]
                elif k not in (IDX_X, IDX_Y):
                    row[k] = rng.uniform(lo[k], hi[k])
            thetas[j, i] = row

    step_mean = np.broadcast_to(np.asarray(cfg.step_mean0, dtype=float), (b, n, N_PARAMS)).copy()
    return Population(thetas, kinds, adjustable, step_mean, rngs)


def _per_scatterer_images(thetas: np.ndarray, cfg: AttackConfig, icfg: ImagingConfig, shape) -> np.ndarray:
    """(B, N, h, w) complex images, one per scatterer."""
    b, n, _ = thetas.shape
    grid = cartesian_grid(icfg)
    win = window_2d(icfg)
    fields = grid.fields(thetas.reshape(b * n, N_PARAMS), dtype=cfg.complex_dtype)
    fields *= win.astype(fields.real.dtype)
    imgs = _ifft_centered(fields, icfg)
    rs, cs = _crop_slices(icfg, shape)
    return imgs[:, rs, cs].reshape(b, n, *shape)


def _project_amplitudes(pop_thetas, per_images, cap: float, retries: int, rngs) -> np.ndarray:
    """Contract amplitudes until each scatterer's image peak is at or below
    the cap; the image scales exactly linearly with amplitude, so peaks and
    cached images rescale without re-forming.  Returns per-member exhaustion
    flags."""
    b, n = pop_thetas.shape[:2]
    peaks = np.abs(per_images).max(axis=(2, 3))
    exhausted = np.zeros(b, dtype=bool)
    for j in range(b):
        for i in range(n):
            if peaks[j, i] <= cap:
                continue
            amp = pop_thetas[j, i, IDX_A]
            ratio_total = 1.0
            ok = False
            for _ in range(retries):
                u = rngs[j].uniform()
                new_amp = amp / (amp + u)
                ratio = new_amp / amp if amp > 0 else 0.0
                ratio_total *= ratio
                peaks[j, i] *= ratio
                amp = new_amp
                if peaks[j, i] <= cap:
                    ok = True
                    break
            pop_thetas[j, i, IDX_A] = amp
            per_images[j, i] *= ratio_total
            if not ok:
                exhausted[j] = True
    return exhausted


def amplitude_projection(member: PopulationMember, peak: float, cap: float, rng, retries: int = 10):
    """Single-scatterer projection rule on a member (N = 1 view): divide the
    amplitude by (A + u) with u ~ U(0, 1) until the response peak falls under
    the cap.  Returns (member, new_peak, exhausted)."""
    thetas = member.thetas.copy()
    amp = thetas[0, IDX_A]
    exhausted = False
    if peak > cap:
        exhausted = True
        for _ in range(retries):
            u = rng.uniform()
            new_amp = amp / (amp + u)
            peak *= new_amp / amp if amp > 0 else 0.0
            amp = new_amp
            if peak <= cap:
                exhausted = False
                break
        thetas[0, IDX_A] = amp
    return replace(member, thetas=thetas), peak, exhausted


def _evaluate(net, fused: np.ndarray, label: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(gt confidence, loss, predicted class) for a batch of fused images."""
    _, conf = net.predict_batch(fused)
    gt = conf[:, label]
    losses = -np.log(np.maximum(gt, CONF_FLOOR))
    return gt, losses, conf.argmax(axis=1)


def _free_entries(pop: Population):
    """(member, scatterer, parameter) indices of every adjustable entry."""
    return np.argwhere(pop.adjustable)


def _gradient_signs(net, x, label, pop: Population, cfg: AttackConfig, icfg: ImagingConfig, chunk: int = 512) -> np.ndarray:
    """sign(<dL/dimage, dimage/dtheta>) for every adjustable entry.

    The classifier gradient is taken at the unclipped fused image; the image
    on each side of the central difference reuses the cached complex images
    of the unperturbed scatterers (the inverse DFT is linear)."""
    b = pop.size
    shape = x.shape
    pert = np.abs(pop.total)
    grads = net.input_gradient_batch((x[None] + pert).astype(np.float32), label)

    entries = _free_entries(pop)
    signs = np.zeros((b, pop.thetas.shape[1], N_PARAMS))
    if entries.size == 0:
        return signs
    lo, hi = cfg.bounds
    steps = np.asarray(cfg.fd_steps, dtype=float)
    grid = cartesian_grid(icfg)
    win = None
    rs, cs = _crop_slices(icfg, shape)

    for start in range(0, len(entries), chunk):
        part = entries[start : start + chunk]
        mem, scat, par = part.T
        base_theta = pop.thetas[mem, scat]
        val = base_theta[np.arange(len(part)), par]
        d_plus = np.minimum(steps[par], hi[par] - val)
        d_minus = np.minimum(steps[par], val - lo[par])
        np.maximum(d_plus, 0.0, out=d_plus)
        np.maximum(d_minus, 0.0, out=d_minus)
        span = d_plus + d_minus
        if np.any(span == 0.0):
            raise ValueError("finite-difference step collapsed to zero at a bound")
        pert_thetas = np.concatenate([base_theta, base_theta])
        k = len(part)
        pert_thetas[np.arange(k), par] = val + d_plus
        pert_thetas[k + np.arange(k), par] = val - d_minus

        if win is None:
            win = window_2d(icfg)
        fields = grid.fields(pert_thetas, dtype=cfg.complex_dtype)
        fields *= win.astype(fields.real.dtype)
        imgs = _ifft_centered(fields, icfg)[:, rs, cs]
        base = pop.total[mem] - pop.per_images[mem, scat]
        delta = (np.abs(base + imgs[:k]) - np.abs(base + imgs[k:])) / span[:, None, None].astype(
            imgs.real.dtype
        )
        dots = np.einsum("ehw,ehw->e", delta, grads[mem].astype(delta.dtype))
        signs[mem, scat, par] = np.sign(dots)
    return signs


def param_gradient_sign(net, sample: Sample, member: PopulationMember, cfg: AttackConfig, icfg: ImagingConfig) -> np.ndarray:
    """Public single-member view of the hybrid gradient-sign estimate;
    frozen entries report 0."""
    pop = Population(
        thetas=member.thetas[None].copy(),
        kinds=np.array([[TYPE_ORDER.index(k) for k in member.kinds]]),
        adjustable=member.adjustable[None].copy(),
        step_mean=member.step_mean[None].copy(),
        rngs=[np.random.default_rng(cfg.seed)],
    )
    shape = sample.image.shape
    pop.per_images = _per_scatterer_images(pop.thetas, cfg, icfg, shape)
    pop.total = pop.per_images.sum(axis=1)
    return _gradient_signs(net, sample.image, sample.label, pop, cfg, icfg)[0]


def _refresh_images(pop: Population, cfg: AttackConfig, icfg: ImagingConfig, shape):
    pop.per_images = _per_scatterer_images(pop.thetas, cfg, icfg, shape)
    pop.total = pop.per_images.sum(axis=1)


def attack_step(
    net, sample: Sample, pop: Population, cfg: AttackConfig, icfg: ImagingConfig, stats: dict | None = None
) -> Population:
    """One softened-greedy update of every member.

    Per member: draw stepsizes from Normal(step_mean, sigma), move free
    parameters along the gradient sign, clip to bounds, project amplitudes
    whose single-scatterer response exceeds the cap, evaluate the clipped
    fused candidate, accept on strict loss increase or with the configured
    probability otherwise, and adapt stepsize means on genuine improvements.

    ``stats``, when given, collects per-member 'improved' and 'accepted'
    boolean arrays for acceptance-rule auditing.
    """
    x = sample.image
    label = sample.label
    lo, hi = cfg.bounds
    sigma = cfg.sigma

    signs = _gradient_signs(net, x, label, pop, cfg, icfg)

    deltas = np.empty_like(pop.thetas)
    for j in range(pop.size):
        s = pop.rngs[j].normal(pop.step_mean[j], sigma)
        deltas[j] = pop.adjustable[j] * s * signs[j]
    cand = np.clip(pop.thetas + deltas, lo, hi)

    shape = x.shape
    cand_images = _per_scatterer_images(cand, cfg, icfg, shape)
    cap = cfg.amplitude_cap * float(x.max())
    exhausted = _project_amplitudes(cand, cand_images, cap, cfg.projection_retries, pop.rngs)

    cand_total = cand_images.sum(axis=1)
    fused = np.clip(x[None] + np.abs(cand_total), 0.0, 1.0).astype(np.float32)
    cand_conf, cand_loss, _ = _evaluate(net, fused, label)

    improved_arr = np.zeros(pop.size, dtype=bool)
    accepted_arr = np.zeros(pop.size, dtype=bool)
    for j in range(pop.size):
        improved = cand_loss[j] > pop.loss[j]
        accept = improved or (pop.rngs[j].uniform() > 1.0 - cfg.accept_probability)
        improved_arr[j] = improved
        accepted_arr[j] = accept
        if accept:
            pop.thetas[j] = cand[j]
            pop.per_images[j] = cand_images[j]
            pop.total[j] = cand_total[j]
            pop.conf[j] = cand_conf[j]
            pop.projection_exhausted[j] |= exhausted[j]
            if improved:
                pop.step_mean[j] = cfg.adaption * pop.step_mean[j] + (1.0 - cfg.adaption) * np.abs(deltas[j])
        if accept or not cfg.sync_loss:
            # the literal update carries the candidate loss even when the
            # candidate itself was rejected
            pop.loss[j] = cand_loss[j]

    if stats is not None:
        stats.setdefault("improved", []).append(improved_arr)
        stats.setdefault("accepted", []).append(accepted_arr)
    if cfg.check_contracts:
        _assert_contracts(pop, cfg, fused)
    return pop


def _assert_contracts(pop: Population, cfg: AttackConfig, fused: np.ndarray):
    lo, hi = cfg.bounds
    assert np.all(pop.thetas >= lo - 1e-12) and np.all(pop.thetas <= hi + 1e-12), "bound safety violated"
    for j in range(pop.size):
        for i in range(pop.thetas.shape[1]):
            kind = TYPE_ORDER[pop.kinds[j, i]]
            _, frozen, forced = scattering_type_template(kind)
            assert np.allclose(pop.thetas[j, i][frozen], forced[frozen]), "frozen parameter moved"
    assert fused.min() >= 0.0 and fused.max() <= 1.0, "fused image left [0, 1]"


def run_attack(net, sample: Sample, cfg: AttackConfig, icfg: ImagingConfig) -> AttackResult:
    """Full search on one sample.

    Inputs already misclassified by the net are flagged and returned without
    running.  Iterates until the iteration budget is reached or any member's
    ground-truth confidence falls below the stop threshold; returns the
    member with minimal ground-truth confidence.
    """
    x = np.asarray(sample.image, dtype=np.float32)
    label = int(sample.label)
    h, w = x.shape

    _, conf0 = net.predict_batch(x[None])
    if int(conf0[0].argmax()) != label:
        return AttackResult(
            thetas=np.zeros((cfg.n_scatterers, N_PARAMS)),
            kinds=tuple(),
            perturbation=np.zeros((h, w), dtype=np.float32),
            adversarial=x.copy(),
            label=label,
            predicted=int(conf0[0].argmax()),
            gt_confidence=float(conf0[0, label]),
            adv_confidence=float(conf0[0].max()),
            trace=[float(conf0[0, label])],
            iterations=0,
            success=True,
            early_stopped=False,
            skipped=True,
        )

    pop = initialize_population(sample, cfg)
    pop.per_images = _per_scatterer_images(pop.thetas, cfg, icfg, x.shape)
    # the response cap applies from the first evaluation onward, not just to
    # update candidates: initial draws span the full amplitude range
    cap = cfg.amplitude_cap * float(x.max())
    pop.projection_exhausted |= _project_amplitudes(
        pop.thetas, pop.per_images, cap, cfg.projection_retries, pop.rngs
    )
    pop.total = pop.per_images.sum(axis=1)
    fused = np.clip(x[None] + np.abs(pop.total), 0.0, 1.0).astype(np.float32)
    pop.conf, pop.loss, _ = _evaluate(net, fused, label)

    trace = [float(pop.conf.min())]
    n = 1
    while n < cfg.max_iter and pop.conf.min() >= cfg.stop_confidence:
        attack_step(net, sample, pop, cfg, icfg)
        trace.append(float(pop.conf.min()))
        n += 1

    idx = int(pop.conf.argmin())
    if cfg.check_contracts:
        assert pop.conf[idx] == pop.conf.min(), "argmin selection violated"
    perturbation = np.abs(pop.total[idx]).astype(np.float32)
    adversarial = np.clip(x + perturbation, 0.0, 1.0)
    _, conf_final = net.predict_batch(adversarial[None])
    predicted = int(conf_final[0].argmax())
    early = bool(pop.conf.min() < cfg.stop_confidence)
    if cfg.check_contracts and early:
        assert pop.conf[idx] < cfg.stop_confidence, "early stop without threshold crossing"
    return AttackResult(
        thetas=pop.thetas[idx].copy(),
        kinds=tuple(TYPE_ORDER[i] for i in pop.kinds[idx]),
        perturbation=perturbation,
        adversarial=adversarial,
        label=label,
        predicted=predicted,
        gt_confidence=float(pop.conf[idx]),
        adv_confidence=float(conf_final[0].max()),
        trace=trace,
        iterations=n - 1,
        success=predicted != label,
        early_stopped=early,
        projection_exhausted=bool(pop.projection_exhausted[idx]),
    )


def save_result(out_dir, result: AttackResult) -> Path:
    """Plain-text parameter/trace record plus float-binary images."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        f"label = {result.label}",
        f"predicted = {result.predicted}",
        f"success = {result.success}",
        f"skipped = {result.skipped}",
        f"early_stopped = {result.early_stopped}",
        f"projection_exhausted = {result.projection_exhausted}",
        f"iterations = {result.iterations}",
        f"gt_confidence = {result.gt_confidence!r}",
        f"adv_confidence = {result.adv_confidence!r}",
        f"kinds = {' '.join(k.value for k in result.kinds)}",
    ]
    for i, row in enumerate(result.thetas):
        lines.append(f"theta_{i} = " + " ".join(repr(float(v)) for v in row))
    lines.append("trace = " + " ".join(repr(float(v)) for v in result.trace))
    (out / "result.txt").write_text("\n".join(lines) + "\n")
    fileio.save_image(out / "perturbation.f32", result.perturbation)
    fileio.save_image(out / "adversarial.f32", result.adversarial)
    return out


def load_result(result_dir) -> AttackResult:
    result_dir = Path(result_dir)
    fields = {}
    thetas = {}
    for line in (result_dir / "result.txt").read_text().splitlines():
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key.startswith("theta_"):
            thetas[int(key[6:])] = [float(v) for v in value.split()]
        else:
            fields[key] = value
    kind_names = fields["kinds"].split()
    perturbation, _ = fileio.load_image(result_dir / "perturbation.f32")
    adversarial, _ = fileio.load_image(result_dir / "adversarial.f32")
    theta_arr = (
        np.array([thetas[i] for i in sorted(thetas)])
        if thetas
        else np.zeros((0, N_PARAMS))
    )
    return AttackResult(
        thetas=theta_arr,
        kinds=tuple(ScatteringType(name) for name in kind_names),
        perturbation=perturbation,
        adversarial=adversarial,
        label=int(fields["label"]),
        predicted=int(fields["predicted"]),
        gt_confidence=float(fields["gt_confidence"]),
        adv_confidence=float(fields["adv_confidence"]),
        trace=[float(v) for v in fields["trace"].split()],
        iterations=int(fields["iterations"]),
        success=fields["success"] == "True",
        early_stopped=fields["early_stopped"] == "True",
        skipped=fields["skipped"] == "True",
        projection_exhausted=fields["projection_exhausted"] == "True",
    )
