"""Raster containers and the intrinsic residual image model.

An image I decomposes as I = A x S + R: albedo times diffuse shading plus a
residual layer that absorbs every non-diffuse effect. The diffuse image
D = A x S is the optimization target used throughout the fitting pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Role(Enum):
    """What a raster means. Determines value-range validation."""

    INPUT = "input"        # photograph I
    ALBEDO = "albedo"      # A, in [0, 1]
    SHADING = "shading"    # S, >= 0, HDR
    RESIDUAL = "residual"  # R, unbounded (estimator noise may be negative)
    DIFFUSE = "diffuse"    # D = A x S, >= 0
    RENDER = "render"      # D~ = pbr(M, psi), >= 0
    OUTPUT = "output"      # neural-renderer output I~
    MASK = "mask"          # 0/1 raster


_NONNEGATIVE_ROLES = {Role.SHADING, Role.DIFFUSE, Role.RENDER}


@dataclass(frozen=True)
class ImageBuffer:
    """Immutable linear-RGB raster with a semantic role.

    data is (height, width, channels) float64 with channels 1 or 3. Values
    are relative radiance in linear space; no NaN/Inf anywhere. Treat as
    read-only after construction (safe to share across threads).
    """

    data: np.ndarray
    role: Role

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"image data must be (H, W, 1|3), got shape {np.shape(self.data)}")
        if not np.isfinite(arr).all():
            raise ValueError("image contains NaN or Inf")
        if self.role is Role.ALBEDO and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("albedo values must lie in [0, 1]")
        if self.role in _NONNEGATIVE_ROLES and arr.min() < 0.0:
            raise ValueError(f"{self.role.value} values must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def same_shape(self, other: "ImageBuffer") -> bool:
        return self.data.shape == other.data.shape


@dataclass(frozen=True)
class ValidMask:
    """Per-pixel validity bits (True = valid, the paper's pixel set V).

    The complement (invalid pixels) is always derived, never stored.
    """

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.bits, dtype=bool))
        if arr.ndim != 2:
            raise ValueError("mask must be 2-D")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def complement(self) -> np.ndarray:
        """Invalid pixels as {0,1} float64 (1 = invalid)."""
        return (~self.bits).astype(np.float64)

    def matches(self, image: ImageBuffer) -> bool:
        return self.bits.shape == (image.height, image.width)


def _require_same_shape(*buffers: ImageBuffer) -> None:
    shapes = {b.data.shape for b in buffers}
    if len(shapes) > 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")


def diffuse_image(albedo: ImageBuffer, shading: ImageBuffer) -> ImageBuffer:
    """D = A x S, the image with all non-diffuse effects removed."""
    if albedo.role is not Role.ALBEDO:
        raise ValueError(f"expected albedo buffer, got role {albedo.role.value}")
    if shading.role is not Role.SHADING:
        raise ValueError(f"expected shading buffer, got role {shading.role.value}")
    _require_same_shape(albedo, shading)
    return ImageBuffer(albedo.data * shading.data, Role.DIFFUSE)


def residual(image: ImageBuffer, albedo: ImageBuffer, shading: ImageBuffer) -> ImageBuffer:
    """R = I - A x S. Negative values are preserved, not clamped."""
    _require_same_shape(image, albedo, shading)
    return ImageBuffer(image.data - albedo.data * shading.data, Role.RESIDUAL)


def _box_weights(n_in: int, n_out: int) -> np.ndarray:
    """Exact box-filter resampling weights, (n_out, n_in), rows sum to 1."""
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        for j in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / w.sum(axis=1, keepdims=True)


def resize_area(data: np.ndarray, height: int, width: int) -> np.ndarray:
    """Box-filter (area-average) resample of an (H, W[, C]) array."""
    if height < 1 or width < 1:
        raise ValueError("target size must be positive")
    arr = np.asarray(data, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    out = np.tensordot(_box_weights(arr.shape[0], height), arr, axes=(1, 0))
    out = np.tensordot(_box_weights(arr.shape[1], width), out, axes=(1, 1)).transpose(1, 0, 2)
    return np.ascontiguousarray(out[:, :, 0] if squeeze else out)


def resize_image(image: ImageBuffer, height: int, width: int) -> ImageBuffer:
    return ImageBuffer(resize_area(image.data, height, width), image.role)


def resize_to_long_side(image: ImageBuffer, long_side: int) -> ImageBuffer:
    """Resize so the longer dimension equals long_side, keeping aspect."""
    h, w = image.height, image.width
    if max(h, w) == long_side:
        return image
    if w >= h:
        return resize_image(image, max(1, round(h * long_side / w)), long_side)
    return resize_image(image, long_side, max(1, round(w * long_side / h)))
