"""Image formation for scatterer sets.

Pipeline: evaluate the normalized scatterer responses on a Cartesian
frequency grid, apply a separable Taylor taper, zero-pad, inverse-DFT with
quadrant reordering so centered scatterer coordinates land at the image
center, and take the pixel magnitude.  Also provides image fusion onto
[0, 1] targets and finite-difference sensitivity images for the attack.
"""

from __future__ import annotations

import functools
import math

import numpy as np
import scipy.fft
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import windows

from .scattering import (
    IDX_A,
    IDX_ALPHA,
    IDX_GAMMA,
    IDX_L,
    IDX_PHIBAR,
    IDX_X,
    IDX_Y,
    N_PARAMS,
    ImagingConfig,
    WindowSpec,
    denormalize_array,
)

# Per-parameter central-difference steps in normalized units
# [A, x, y, alpha, gamma, L, phibar].
DEFAULT_FD_STEPS = np.array([1e-3, 1e-2, 1e-2, 1e-2, 1e-3, 1e-3, 1e-3])


def xband_config(image_size: int = 88, padded: bool = False) -> ImagingConfig:
    """X-band spotlight geometry presets.

    The default forms ``image_size``-square images with the same
    zero-padding ratio as the 85-sample/128-pixel reference collection; with
    ``padded=True`` the reference 85 -> 128 geometry itself is returned and
    formed images must be center-cropped onto smaller targets.
    """
    if padded:
        m = n = 85
        out = 128
    else:
        out = image_size
        m = n = max(2, round(85 / 128 * image_size))
    return ImagingConfig(
        fc_hz=9.6e9,
        bandwidth_hz=0.59e9,
        aperture_rad=0.051,
        m=m,
        n=n,
        m_pad=out,
        n_pad=out,
        window=WindowSpec("taylor", -35.0, 4),
    )


def pixel_spacing(cfg: ImagingConfig) -> tuple[float, float]:
    """(range, cross-range) meters per pixel of the formed image."""
    return cfg.pixel_spacing_m


def taylor_window(length: int, sidelobe_db: float, nbar: int) -> np.ndarray:
    """Symmetric Taylor taper, peak-normalized to 1.

    ``sidelobe_db`` is the target sidelobe level (negative dB).  Rejects
    ``nbar`` values too large for the requested level, which would make the
    taper non-monotonic from edge to center.
    """
    if length < 2:
        raise ValueError("window length must be >= 2")
    if sidelobe_db >= 0:
        raise ValueError("sidelobe level must be negative dB")
    if nbar < 1:
        raise ValueError("nbar must be >= 1")
    w = windows.taylor(length, nbar=nbar, sll=-sidelobe_db, norm=False, sym=True)
    w = w / w.max()
    half = w[: (length + 1) // 2]
    if np.any(np.diff(half) < -1e-12):
        raise ValueError(f"nbar={nbar} too large for {sidelobe_db} dB: non-monotonic taper")
    return w


class FrequencyGrid:
    """Uniform Cartesian frequency samples and cached per-grid factors.

    fx spans [fc - B/2, fc + B/2] with m samples; fy spans
    [-fc sin(ap/2), +fc sin(ap/2)] with n samples.
    """

    def __init__(self, cfg: ImagingConfig):
        self.cfg = cfg
        half_ap = cfg.aperture_rad / 2.0
        self.fx = np.linspace(cfg.fc_hz - cfg.bandwidth_hz / 2.0, cfg.fc_hz + cfg.bandwidth_hz / 2.0, cfg.m)
        self.fy = np.linspace(-cfg.fc_hz * math.sin(half_ap), cfg.fc_hz * math.sin(half_ap), cfg.n)
        FX, FY = np.meshgrid(self.fx, self.fy, indexing="ij")
        rho = np.sqrt(FX**2 + FY**2)
        px, py = cfg.pixel_spacing_m
        self._consts = {}
        for dt in (np.float64, np.float32):
            self._consts[dt] = dict(
                FY_over_fc=(FY / cfg.fc_hz).astype(dt),
                log_rho=np.log(rho / cfg.fc_hz).astype(dt),
                aspect=np.arctan(FY / FX).astype(dt),
                sinc_coef=(np.pi * rho / (2.0 * math.sin(half_ap) * cfg.fc_hz) * cfg.eta_y).astype(dt),
                phase_x=(4.0 * np.pi / cfg.c * px * FX).astype(dt),
                phase_y=(4.0 * np.pi / cfg.c * py * FY).astype(dt),
            )
        self.samples = np.stack([FX, FY], axis=-1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.cfg.m, self.cfg.n)

    def fields(self, thetas: np.ndarray, dtype=np.complex128) -> np.ndarray:
        """Responses of (..., 7) normalized parameter rows on the full grid,
        returned with shape (..., m, n)."""
        real_dt = np.float32 if dtype == np.complex64 else np.float64
        c = self._consts[real_dt]
        thetas = np.asarray(thetas, dtype=real_dt)
        lead = thetas.shape[:-1]
        te = thetas.reshape(lead + (1, 1, N_PARAMS))
        half_ap = real_dt(self.cfg.aperture_rad / 2.0)
        minus_j = np.array(-1j, dtype=dtype)

        alpha = te[..., IDX_ALPHA]
        # (j rho/fc)^alpha on the principal branch: magnitude exp(alpha log rho),
        # constant phase rotation alpha*pi/2.
        out = np.exp(alpha * c["log_rho"]).astype(dtype)
        out *= np.exp(-minus_j * (np.pi / 2) * alpha)
        out *= np.exp(-c["FY_over_fc"] * te[..., IDX_GAMMA])
        s_arg = c["sinc_coef"] * te[..., IDX_L] * np.sin(c["aspect"] - te[..., IDX_PHIBAR] * half_ap)
        out *= np.sinc(s_arg / np.pi)
        phase = c["phase_x"] * te[..., IDX_X] + c["phase_y"] * te[..., IDX_Y]
        out *= np.exp(minus_j * phase)
        out *= te[..., IDX_A]
        return out


@functools.lru_cache(maxsize=8)
def cartesian_grid(cfg: ImagingConfig) -> FrequencyGrid:
    """Cached uniform Cartesian frequency grid for an imaging geometry."""
    return FrequencyGrid(cfg)


@functools.lru_cache(maxsize=8)
def window_2d(cfg: ImagingConfig) -> np.ndarray:
    """Separable 2D taper over the (m, n) grid."""
    spec = cfg.window
    if spec.family != "taylor":
        raise ValueError(f"unsupported window family: {spec.family}")
    wx = taylor_window(cfg.m, spec.sidelobe_db, spec.nbar)
    wy = taylor_window(cfg.n, spec.sidelobe_db, spec.nbar)
    return np.outer(wx, wy)


@functools.lru_cache(maxsize=8)
def _image_scale(cfg: ImagingConfig) -> float:
    # Normalizes the formed image so a centered unit-amplitude scatterer with
    # flat frequency response peaks at ~1, putting amplitudes in image units.
    return float(cfg.m_pad * cfg.n_pad / window_2d(cfg).sum())


def _as_theta_array(thetas) -> np.ndarray:
    """Accept ScattererParams sequences or (N, 7) arrays; return (N, 7) float."""
    if hasattr(thetas, "to_array"):
        return thetas.to_array()[None, :]
    if isinstance(thetas, (list, tuple)):
        if len(thetas) == 0:
            return np.zeros((0, N_PARAMS))
        rows = [t.to_array() if hasattr(t, "to_array") else np.asarray(t, dtype=float) for t in thetas]
        return np.stack(rows)
    arr = np.asarray(thetas, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def synthesize_frequency_data(thetas, grid: FrequencyGrid | None = None, cfg: ImagingConfig | None = None) -> np.ndarray:
    """Sum of scatterer responses over the Cartesian grid, shape (m, n)."""
    if grid is None:
        grid = cartesian_grid(cfg)
    arr = _as_theta_array(thetas)
    if arr.shape[0] == 0:
        return np.zeros(grid.shape, dtype=np.complex128)
    return grid.fields(arr).sum(axis=0)


def _crop_slices(cfg: ImagingConfig, crop_to):
    if crop_to is None:
        return slice(None), slice(None)
    h, w = crop_to
    if h > cfg.m_pad or w > cfg.n_pad:
        raise ValueError(f"cannot crop {cfg.m_pad}x{cfg.n_pad} image to {h}x{w}")
    r0 = (cfg.m_pad - h) // 2
    c0 = (cfg.n_pad - w) // 2
    return slice(r0, r0 + h), slice(c0, c0 + w)


def _ifft_centered(data: np.ndarray, cfg: ImagingConfig) -> np.ndarray:
    """Zero-pad windowed (..., m, n) frequency data to (m_pad, n_pad), apply
    the centered inverse DFT, and scale to image units."""
    lead = data.shape[:-2]
    padded = np.zeros(lead + (cfg.m_pad, cfg.n_pad), dtype=data.dtype)
    padded[..., : cfg.m, : cfg.n] = data
    img = scipy.fft.ifft2(padded, axes=(-2, -1), workers=-1)
    img = np.fft.fftshift(img, axes=(-2, -1))
    img *= _image_scale(cfg)
    return img


def complex_image(thetas, cfg: ImagingConfig, crop_to=None) -> np.ndarray:
    """Complex (pre-magnitude) formed image of a scatterer set."""
    grid = cartesian_grid(cfg)
    data = synthesize_frequency_data(thetas, grid) * window_2d(cfg)
    img = _ifft_centered(data, cfg)
    rs, cs = _crop_slices(cfg, crop_to)
    return img[rs, cs]


def form_image(thetas, cfg: ImagingConfig, crop_to=None, polar: bool = False) -> np.ndarray:
    """Magnitude image of a scatterer set.

    A scatterer at centered location (0, 0) peaks at pixel
    (m_pad // 2, n_pad // 2).  With ``crop_to=(h, w)`` the image is
    center-cropped.  ``polar=True`` routes through the polar sampling +
    bilinear resampling fidelity path instead of direct Cartesian evaluation.
    """
    if polar:
        data = _polar_resampled_data(thetas, cfg) * window_2d(cfg)
        img = _ifft_centered(data, cfg)
        rs, cs = _crop_slices(cfg, crop_to)
        return np.abs(img[rs, cs])
    return np.abs(complex_image(thetas, cfg, crop_to))


def _polar_resampled_data(thetas, cfg: ImagingConfig) -> np.ndarray:
    """Raw-model responses sampled on the polar (f, phi) grid and bilinearly
    resampled onto the Cartesian grid; points outside polar coverage are 0.

    Bilinear interpolation of the rapidly rotating phase degrades for
    scatterers far from the scene center; this path exists for fidelity
    comparison, not production formation.
    """
    from .scattering import eval_raw_response, RawScattererParams

    arr = _as_theta_array(thetas)
    grid = cartesian_grid(cfg)
    if arr.shape[0] == 0:
        return np.zeros(grid.shape, dtype=np.complex128)
    half_ap = cfg.aperture_rad / 2.0
    f = np.linspace(cfg.fc_hz - cfg.bandwidth_hz / 2.0, cfg.fc_hz + cfg.bandwidth_hz / 2.0, cfg.m)
    phi = np.linspace(-half_ap, half_ap, cfg.n)
    F, PHI = np.meshgrid(f, phi, indexing="ij")
    raw_rows = denormalize_array(arr, cfg)
    polar = np.zeros((cfg.m, cfg.n), dtype=np.complex128)
    for row in raw_rows:
        polar += eval_raw_response(F, PHI, RawScattererParams.from_array(row), cfg)
    FX = grid.samples[..., 0]
    FY = grid.samples[..., 1]
    pts = np.stack([np.sqrt(FX**2 + FY**2).ravel(), np.arctan2(FY, FX).ravel()], axis=-1)
    interp = RegularGridInterpolator((f, phi), polar, method="linear", bounds_error=False, fill_value=0.0)
    return interp(pts).reshape(grid.shape)


def fuse(x: np.ndarray, thetas, cfg: ImagingConfig, image: np.ndarray | None = None) -> np.ndarray:
    """Overlay a scatterer set onto a [0, 1] target image: clip(x + I, 0, 1).

    The formed image is center-cropped to x's shape when the formation grid
    is larger.  ``image`` short-circuits formation with a precomputed
    perturbation image of x's shape.
    """
    x = np.asarray(x)
    if image is None:
        image = form_image(thetas, cfg, crop_to=x.shape)
    if image.shape != x.shape:
        raise ValueError(f"perturbation shape {image.shape} != target shape {x.shape}")
    return np.clip(x + image, 0.0, 1.0)


def image_jacobian_fd(
    thetas,
    cfg: ImagingConfig,
    steps: np.ndarray | None = None,
    free_mask: np.ndarray | None = None,
    bounds: tuple[np.ndarray, np.ndarray] | None = None,
    crop_to=None,
) -> np.ndarray:
    """Central finite-difference sensitivities of the magnitude image.

    Returns (N, 7, h, w): the response of every image pixel to each free
    parameter of each scatterer.  Frozen parameters (``free_mask`` False)
    yield zero images.  When ``bounds=(lo, hi)`` is given, steps that would
    leave the box are shortened one-sidedly; a step that collapses to zero
    entirely raises ValueError.

    Only the perturbed scatterer's response is re-evaluated per difference;
    the inverse DFT is linear, so this matches reforming the whole set
    exactly (up to float roundoff).
    """
    arr = _as_theta_array(thetas)
    n_scat = arr.shape[0]
    if steps is None:
        steps = DEFAULT_FD_STEPS
    steps = np.broadcast_to(np.asarray(steps, dtype=float), (n_scat, N_PARAMS))
    if np.any(steps <= 0):
        raise ValueError("finite-difference steps must be positive")
    if free_mask is None:
        free_mask = np.ones((n_scat, N_PARAMS), dtype=bool)
    free_mask = np.broadcast_to(np.asarray(free_mask, dtype=bool), (n_scat, N_PARAMS))

    grid = cartesian_grid(cfg)
    win = window_2d(cfg)
    per = _ifft_centered(grid.fields(arr) * win, cfg)
    rs, cs = _crop_slices(cfg, crop_to)
    per = per[:, rs, cs]
    total = per.sum(axis=0)
    shape = total.shape

    jac = np.zeros((n_scat, N_PARAMS) + shape)
    idx = np.argwhere(free_mask)
    if idx.size == 0:
        return jac

    plus = []
    minus = []
    spans = []
    for i, k in idx:
        d_plus = d_minus = steps[i, k]
        if bounds is not None:
            lo, hi = bounds
            d_plus = min(d_plus, hi[k] - arr[i, k])
            d_minus = min(d_minus, arr[i, k] - lo[k])
            d_plus = max(d_plus, 0.0)
            d_minus = max(d_minus, 0.0)
        if d_plus + d_minus == 0.0:
            raise ValueError(f"step collapsed to zero for parameter {k} of scatterer {i}")
        tp = arr[i].copy()
        tp[k] += d_plus
        tm = arr[i].copy()
        tm[k] -= d_minus
        plus.append(tp)
        minus.append(tm)
        spans.append(d_plus + d_minus)

    pert = np.stack(plus + minus)
    pert_imgs = _ifft_centered(grid.fields(pert) * win, cfg)[:, rs, cs]
    n_free = len(plus)
    for j, (i, k) in enumerate(idx):
        base = total - per[i]
        hi_img = np.abs(base + pert_imgs[j])
        lo_img = np.abs(base + pert_imgs[n_free + j])
        jac[i, k] = (hi_img - lo_img) / spans[j]
    return jac
