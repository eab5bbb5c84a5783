"""Flat-file persistence: float32 image binaries with plain-text metadata
sidecars, byte masks, and 16-bit grayscale PNG export."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

SIDECAR_SUFFIX = ".meta"


def _write_sidecar(path: Path, shape, dtype: str, meta: dict | None):
    lines = [f"shape = {' '.join(str(s) for s in shape)}", f"dtype = {dtype}"]
    for key, value in (meta or {}).items():
        if key in ("shape", "dtype"):
            continue
        lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n")


def _read_sidecar(path: Path) -> dict:
    meta = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or "=" not in line:
            continue
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    return meta


def save_image(path, image: np.ndarray, meta: dict | None = None) -> Path:
    """Write a 2D image as row-major little-endian float32 plus a sidecar."""
    path = Path(path)
    arr = np.ascontiguousarray(np.asarray(image), dtype="<f4")
    path.write_bytes(arr.tobytes())
    _write_sidecar(path.with_name(path.name + SIDECAR_SUFFIX), arr.shape, "float32", meta)
    return path


def load_image(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = _read_sidecar(path.with_name(path.name + SIDECAR_SUFFIX))
    shape = tuple(int(s) for s in meta["shape"].split())
    arr = np.frombuffer(path.read_bytes(), dtype="<f4").reshape(shape).copy()
    return arr, meta


def save_mask(path, mask: np.ndarray, meta: dict | None = None) -> Path:
    """Write a boolean mask as packed uint8 (0/1) plus a sidecar."""
    path = Path(path)
    arr = np.ascontiguousarray(np.asarray(mask, dtype=bool).astype(np.uint8))
    path.write_bytes(arr.tobytes())
    _write_sidecar(path.with_name(path.name + SIDECAR_SUFFIX), arr.shape, "uint8", meta)
    return path


def load_mask(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = _read_sidecar(path.with_name(path.name + SIDECAR_SUFFIX))
    shape = tuple(int(s) for s in meta["shape"].split())
    arr = np.frombuffer(path.read_bytes(), dtype=np.uint8).reshape(shape).astype(bool)
    return arr, meta


def save_png16(path, image: np.ndarray, vmax: float | None = None) -> Path:
    """Lossless 16-bit grayscale export; values scale from [0, vmax] to the
    full uint16 range (vmax defaults to the image max)."""
    path = Path(path)
    arr = np.asarray(image, dtype=np.float64)
    if vmax is None:
        vmax = float(arr.max()) if arr.size and arr.max() > 0 else 1.0
    scaled = np.clip(arr / vmax, 0.0, 1.0)
    u16 = np.round(scaled * 65535.0).astype(np.uint16)
    Image.fromarray(u16).save(path)
    return path


def load_png16(path) -> np.ndarray:
    """Read a 16-bit grayscale PNG back to floats in [0, 1]."""
    u16 = np.asarray(Image.open(path), dtype=np.uint16)
    return u16.astype(np.float64) / 65535.0
