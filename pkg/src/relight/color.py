"""sRGB transfer functions and luminance.

All rendering and optimization math in this package runs in linear RGB;
gamma encoding exists only at file-format boundaries (PNG in/out).
"""

from __future__ import annotations

import numpy as np

# Rec. 709 / sRGB luminance weights.
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722], dtype=np.float64)


def srgb_decode(encoded: np.ndarray) -> np.ndarray:
    """Apply the sRGB electro-optical transfer function (gamma -> linear).

    `encoded` must already be scaled to [0, 1]; integer rasters are the
    caller's job to normalize (see png_io).
    """
    e = np.asarray(encoded, dtype=np.float64)
    if e.size and (e.min() < -1e-6 or e.max() > 1 + 1e-6):
        raise ValueError("sRGB-encoded values must lie in [0, 1]")
    e = np.clip(e, 0.0, 1.0)
    return np.where(e <= 0.04045, e / 12.92, ((e + 0.055) / 1.055) ** 2.4)


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Inverse of srgb_decode (linear -> gamma). Input is clamped to [0, 1]."""
    lin = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    return np.where(lin <= 0.0031308, lin * 12.92, 1.055 * lin ** (1.0 / 2.4) - 0.055)


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec. 709 luminance of an (..., 3) linear-RGB array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ValueError("luminance expects a trailing RGB axis")
    return rgb @ LUMA_WEIGHTS
