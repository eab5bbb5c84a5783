"""Attributed scattering center (ASC) model.

A scatterer is a 7-parameter description ``[A, x, y, alpha, gamma, L, phibar]``
of one geometric structure's backscatter: amplitude, range/cross-range
location, frequency dependence, aspect dependence, length, and orientation.
This module provides the geometric type taxonomy, the raw (physical units)
and normalized (pixel units) parameterizations with exact conversions, and
the complex frequency-domain response evaluators used by image formation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

SPEED_OF_LIGHT = 299792458.0

PARAM_NAMES = ("A", "x", "y", "alpha", "gamma", "L", "phibar")
N_PARAMS = 7

# Column indices of the 7-parameter vector.
IDX_A, IDX_X, IDX_Y, IDX_ALPHA, IDX_GAMMA, IDX_L, IDX_PHIBAR = range(N_PARAMS)


class ScatteringType(enum.Enum):
    """Canonical geometric scattering structures.

    Localized kinds return energy from a point (length/orientation pinned to
    zero, aspect dependence gamma allowed); distributed kinds extend over
    several pixels (gamma pinned to zero, length/orientation allowed).
    """

    TRIHEDRAL = "Trihedral"
    TOP_HAT = "TopHat"
    SPHERE = "Sphere"
    CORNER_DIFFRACTION = "CornerDiffraction"
    DIHEDRAL = "Dihedral"
    CYLINDER = "Cylinder"
    EDGE_BROADSIDE = "EdgeBroadside"
    EDGE_DIFFRACTION = "EdgeDiffraction"

    @property
    def alpha(self) -> float:
        return _TYPE_ALPHA[self]

    @property
    def is_distributed(self) -> bool:
        return self in _DISTRIBUTED

    @property
    def is_localized(self) -> bool:
        return self not in _DISTRIBUTED


_TYPE_ALPHA = {
    ScatteringType.TRIHEDRAL: 1.0,
    ScatteringType.TOP_HAT: 0.5,
    ScatteringType.SPHERE: 0.0,
    ScatteringType.CORNER_DIFFRACTION: -1.0,
    ScatteringType.DIHEDRAL: 1.0,
    ScatteringType.CYLINDER: 0.5,
    ScatteringType.EDGE_BROADSIDE: 0.0,
    ScatteringType.EDGE_DIFFRACTION: -0.5,
}

_DISTRIBUTED = frozenset(
    {
        ScatteringType.DIHEDRAL,
        ScatteringType.CYLINDER,
        ScatteringType.EDGE_BROADSIDE,
        ScatteringType.EDGE_DIFFRACTION,
    }
)

LOCALIZED_TYPES = tuple(t for t in ScatteringType if t.is_localized)
DISTRIBUTED_TYPES = tuple(t for t in ScatteringType if t.is_distributed)


def scattering_type_template(kind: ScatteringType):
    """Return ``(alpha, frozen_mask, forced_values)`` for a scattering type.

    ``frozen_mask`` is a boolean 7-vector marking parameters that must not be
    optimized: alpha always, (L, phibar) for localized kinds, gamma for
    distributed kinds.  ``forced_values`` is a 7-vector holding the pinned
    values at frozen slots and NaN elsewhere.
    """
    frozen = np.zeros(N_PARAMS, dtype=bool)
    forced = np.full(N_PARAMS, np.nan)
    frozen[IDX_ALPHA] = True
    forced[IDX_ALPHA] = kind.alpha
    if kind.is_localized:
        frozen[IDX_L] = True
        frozen[IDX_PHIBAR] = True
        forced[IDX_L] = 0.0
        forced[IDX_PHIBAR] = 0.0
    else:
        frozen[IDX_GAMMA] = True
        forced[IDX_GAMMA] = 0.0
    return kind.alpha, frozen, forced


def classify_kind(alpha: float, gamma: float, length: float, phibar: float) -> ScatteringType:
    """Infer the scattering type of a consistent parameter combination.

    Degenerate combinations (gamma = L = phibar = 0) default to the localized
    kind for that alpha.
    """
    distributed = (length != 0.0 or phibar != 0.0) and gamma == 0.0
    pool = DISTRIBUTED_TYPES if distributed else LOCALIZED_TYPES
    for kind in pool:
        if kind.alpha == alpha:
            return kind
    raise ValueError(
        f"no {'distributed' if distributed else 'localized'} scattering type has alpha={alpha}"
    )


@dataclass(frozen=True)
class WindowSpec:
    """Frequency-domain taper: family, sidelobe level (dB, negative), nbar."""

    family: str = "taylor"
    sidelobe_db: float = -35.0
    nbar: int = 4


@dataclass(frozen=True)
class ImagingConfig:
    """SAR collection and formation geometry.

    ``m`` x ``n`` frequency/aspect samples are formed into an
    ``m_pad`` x ``n_pad`` image after windowing and zero-padding.
    """

    fc_hz: float
    bandwidth_hz: float
    aperture_rad: float
    m: int
    n: int
    m_pad: int
    n_pad: int
    window: WindowSpec = WindowSpec()
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not (self.m >= 2 and self.n >= 2):
            raise ValueError("sample counts m, n must be >= 2")
        if not (self.m <= self.m_pad and self.n <= self.n_pad):
            raise ValueError("padded sizes must satisfy m <= m_pad, n <= n_pad")
        if not (self.bandwidth_hz > 0 and self.fc_hz > self.bandwidth_hz / 2):
            raise ValueError("need fc > B/2 > 0")
        if not (0 < self.aperture_rad < math.pi):
            raise ValueError("aperture angle must lie in (0, pi)")

    @property
    def eta_x(self) -> float:
        return (self.m - 1) / (self.m_pad - 1)

    @property
    def eta_y(self) -> float:
        return (self.n - 1) / (self.n_pad - 1)

    @property
    def pixel_spacing_m(self) -> tuple[float, float]:
        """Range / cross-range meter-per-pixel spacings of the formed image."""
        px = self.c / (2.0 * self.bandwidth_hz) * self.eta_x
        py = (1.0 / self.fc_hz) * self.c / (4.0 * math.sin(self.aperture_rad / 2.0)) * self.eta_y
        return px, py


@dataclass(frozen=True)
class RawScattererParams:
    """One scatterer in physical units (meters, radians, seconds-per-radian gamma)."""

    A: float
    x: float
    y: float
    alpha: float
    gamma: float
    L: float
    phibar: float

    def to_array(self) -> np.ndarray:
        return np.array([self.A, self.x, self.y, self.alpha, self.gamma, self.L, self.phibar])

    @classmethod
    def from_array(cls, arr) -> "RawScattererParams":
        return cls(*(float(v) for v in np.asarray(arr)))


@dataclass(frozen=True)
class ScattererParams:
    """One scatterer in normalized units: pixel locations/length, unit-scaled
    gamma and orientation, plus its geometric type.

    Locations are centered pixel offsets (0 maps to the image center).
    """

    A: float
    x: float
    y: float
    alpha: float
    gamma: float
    L: float
    phibar: float
    kind: ScatteringType

    def __post_init__(self):
        vals = self.to_array()
        if not np.all(np.isfinite(vals)):
            raise ValueError("scatterer parameters must be finite")
        _, frozen, forced = scattering_type_template(self.kind)
        mismatches = frozen & ~np.isclose(vals, np.where(frozen, forced, 0.0), atol=1e-9)
        if np.any(mismatches):
            bad = [PARAM_NAMES[i] for i in np.nonzero(mismatches)[0]]
            raise ValueError(f"{self.kind.value} pins {bad} to fixed values")

    def to_array(self) -> np.ndarray:
        return np.array([self.A, self.x, self.y, self.alpha, self.gamma, self.L, self.phibar])

    @classmethod
    def from_array(cls, arr, kind: ScatteringType) -> "ScattererParams":
        return cls(*(float(v) for v in np.asarray(arr)), kind=kind)


def normalize_params(
    raw: RawScattererParams, cfg: ImagingConfig, kind: ScatteringType | None = None
) -> ScattererParams:
    """Convert physical-unit parameters to normalized pixel-scaled ones.

    x, y, L divide by the pixel spacings, gamma scales by 2*pi*fc, and the
    orientation divides by the aperture half-angle (so it spans [-1, 1]).
    """
    vals = raw.to_array()
    if not np.all(np.isfinite(vals)):
        raise ValueError("raw parameters must be finite")
    px, py = cfg.pixel_spacing_m
    if kind is None:
        kind = classify_kind(raw.alpha, raw.gamma, raw.L, raw.phibar)
    return ScattererParams(
        A=raw.A,
        x=raw.x / px,
        y=raw.y / py,
        alpha=raw.alpha,
        gamma=raw.gamma * 2.0 * math.pi * cfg.fc_hz,
        L=raw.L / py,
        phibar=raw.phibar / (cfg.aperture_rad / 2.0),
        kind=kind,
    )


def denormalize_params(p: ScattererParams, cfg: ImagingConfig) -> RawScattererParams:
    """Exact inverse of :func:`normalize_params`."""
    px, py = cfg.pixel_spacing_m
    return RawScattererParams(
        A=p.A,
        x=p.x * px,
        y=p.y * py,
        alpha=p.alpha,
        gamma=p.gamma / (2.0 * math.pi * cfg.fc_hz),
        L=p.L * py,
        phibar=p.phibar * (cfg.aperture_rad / 2.0),
    )


def normalize_array(raw: np.ndarray, cfg: ImagingConfig) -> np.ndarray:
    """Vectorized normalize for (..., 7) raw parameter arrays."""
    raw = np.asarray(raw, dtype=float)
    px, py = cfg.pixel_spacing_m
    out = raw.copy()
    out[..., IDX_X] = raw[..., IDX_X] / px
    out[..., IDX_Y] = raw[..., IDX_Y] / py
    out[..., IDX_GAMMA] = raw[..., IDX_GAMMA] * 2.0 * math.pi * cfg.fc_hz
    out[..., IDX_L] = raw[..., IDX_L] / py
    out[..., IDX_PHIBAR] = raw[..., IDX_PHIBAR] / (cfg.aperture_rad / 2.0)
    return out


def denormalize_array(norm: np.ndarray, cfg: ImagingConfig) -> np.ndarray:
    """Vectorized inverse of :func:`normalize_array`."""
    norm = np.asarray(norm, dtype=float)
    px, py = cfg.pixel_spacing_m
    out = norm.copy()
    out[..., IDX_X] = norm[..., IDX_X] * px
    out[..., IDX_Y] = norm[..., IDX_Y] * py
    out[..., IDX_GAMMA] = norm[..., IDX_GAMMA] / (2.0 * math.pi * cfg.fc_hz)
    out[..., IDX_L] = norm[..., IDX_L] * py
    out[..., IDX_PHIBAR] = norm[..., IDX_PHIBAR] * (cfg.aperture_rad / 2.0)
    return out


def sinc(u):
    """Unnormalized sinc: sin(u)/u with sinc(0) = 1."""
    return np.sinc(np.asarray(u) / np.pi)


def eval_raw_response(f, phi, raw: RawScattererParams, cfg: ImagingConfig):
    """Complex response of one scatterer at frequency ``f`` (Hz) and aspect
    angle ``phi`` (rad), in the polar-coordinate raw parameterization.

    Broadcasts over array-valued ``f`` / ``phi``; requires f > 0.
    """
    f = np.asarray(f, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    freq_pow = np.power(1j * f / cfg.fc_hz, raw.alpha)
    phase = np.exp(-1j * 4.0 * np.pi * f / cfg.c * (raw.x * np.cos(phi) + raw.y * np.sin(phi)))
    length_term = sinc(2.0 * np.pi * f / cfg.c * raw.L * np.sin(phi - raw.phibar))
    aspect_term = np.exp(-2.0 * np.pi * f * raw.gamma * np.sin(phi))
    return raw.A * freq_pow * phase * length_term * aspect_term


def eval_normalized_response(fx, fy, p: ScattererParams, cfg: ImagingConfig):
    """Complex response at Cartesian frequency coordinates ``(fx, fy)`` in Hz
    for a normalized scatterer.

    Requires fx > 0 (the sampled band keeps the aspect arctangent on its
    principal branch).  Broadcasts over arrays.
    """
    theta = p.to_array()
    return normalized_field(theta, fx, fy, cfg)


def normalized_field(theta: np.ndarray, fx, fy, cfg: ImagingConfig):
    """Vectorized normalized-response evaluation.

    ``theta`` has shape (..., 7); ``fx``/``fy`` broadcast against each other
    with shape S.  Returns the complex response with shape (..., S).
    """
    theta = np.asarray(theta, dtype=float)
    fx = np.asarray(fx, dtype=float)
    fy = np.asarray(fy, dtype=float)
    if np.any(fx <= 0):
        raise ValueError("fx must be positive")
    fx, fy = np.broadcast_arrays(fx, fy)
    grid_shape = fx.shape
    lead = theta.shape[:-1]
    te = theta.reshape(lead + (1,) * len(grid_shape) + (N_PARAMS,))

    rho = np.sqrt(fx**2 + fy**2)
    aspect = np.arctan(fy / fx)
    px, py = cfg.pixel_spacing_m
    half_ap = cfg.aperture_rad / 2.0

    freq_pow = np.power(1j * rho / cfg.fc_hz, te[..., IDX_ALPHA])
    gamma_term = np.exp(-(fy / cfg.fc_hz) * te[..., IDX_GAMMA])
    sinc_arg = (
        np.pi
        * rho
        / (2.0 * math.sin(half_ap) * cfg.fc_hz)
        * te[..., IDX_L]
        * cfg.eta_y
        * np.sin(aspect - te[..., IDX_PHIBAR] * half_ap)
    )
    phase = np.exp(
        -1j * 4.0 * np.pi / cfg.c * (px * te[..., IDX_X] * fx + py * te[..., IDX_Y] * fy)
    )
    return te[..., IDX_A] * freq_pow * gamma_term * sinc(sinc_arg) * phase
