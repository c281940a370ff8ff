"""PNG input/output: 8/16-bit sRGB rasters and binary masks.

PNG-family files are gamma-encoded and get decoded to linear on read;
float formats (PFM) are assumed already linear and never pass through here.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .color import srgb_decode, srgb_encode


def read_png(path: str | Path) -> np.ndarray:
    """Read an 8/16-bit sRGB PNG into linear float64 (H, W) or (H, W, 3)."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValueError(f"{path}: unreadable raster")
    if raw.dtype == np.uint8:
        maxval = 255.0
    elif raw.dtype == np.uint16:
        maxval = 65535.0
    else:
        raise ValueError(f"{path}: unsupported PNG sample type {raw.dtype}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]
        raw = raw[:, :, ::-1]  # OpenCV loads BGR
    return srgb_decode(raw.astype(np.float64) / maxval)


def write_png(path: str | Path, linear: np.ndarray, bitdepth: int = 8) -> None:
    """Write linear data as an sRGB PNG, clamping to [0, 1]."""
    encoded = srgb_encode(linear)
    if bitdepth == 8:
        quant = np.round(encoded * 255.0).astype(np.uint8)
    elif bitdepth == 16:
        quant = np.round(encoded * 65535.0).astype(np.uint16)
    else:
        raise ValueError("bitdepth must be 8 or 16")
    if quant.ndim == 3:
        quant = quant[:, :, ::-1]
    if not cv2.imwrite(str(path), quant):
        raise ValueError(f"{path}: failed to write PNG")


def read_mask_png(path: str | Path) -> np.ndarray:
    """Read a 0/255 mask PNG into a boolean array (True = 255)."""
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise ValueError(f"{path}: unreadable mask")
    return raw >= 128


def write_mask_png(path: str | Path, bits: np.ndarray) -> None:
    """Write a boolean array as an 8-bit 0/255 mask PNG."""
    arr = np.where(np.asarray(bits, dtype=bool), 255, 0).astype(np.uint8)
    if not cv2.imwrite(str(path), arr):
        raise ValueError(f"{path}: failed to write PNG")
