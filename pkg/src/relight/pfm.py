"""Portable Float Map reader/writer.

Header is "PF" (3-channel) or "Pf" (1-channel), then width/height, then a
scale line whose sign encodes endianness (negative = little-endian). Pixel
rows are stored bottom-to-top per the de-facto standard; arrays in memory
are top-down.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a PFM file into a top-down float32 array (H, W) or (H, W, 3)."""
    return decode_pfm(Path(path).read_bytes(), name=str(path))


def decode_pfm(raw: bytes, name: str = "<bytes>") -> np.ndarray:
    path = name
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PFM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after the scale line
    magic = tokens[0]
    if magic not in (b"PF", b"Pf"):
        raise ValueError(f"{path}: not a PFM file (magic {magic!r})")
    channels = 3 if magic == b"PF" else 1
    try:
        width, height = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed PFM header") from exc
    if width <= 0 or height <= 0 or scale == 0.0:
        raise ValueError(f"{path}: malformed PFM header")
    count = width * height * channels
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    if len(raw) - pos < count * 4:
        raise ValueError(f"{path}: PFM payload truncated")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    img = data.reshape(height, width, channels).astype(np.float32)
    img = img[::-1]  # stored bottom-to-top
    if abs(scale) != 1.0:
        img = img * abs(scale)
    return np.ascontiguousarray(img[:, :, 0] if channels == 1 else img)


def encode_pfm(image: np.ndarray) -> bytes:
    """Encode a (H, W) or (H, W, 1|3) float array as little-endian PFM."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        magic = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError(f"cannot write PFM with shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("refusing to write non-finite PFM data")
    height, width = arr.shape[:2]
    header = b"%s\n%d %d\n-1.0\n" % (magic, width, height)
    return header + np.ascontiguousarray(arr[::-1]).astype("<f4").tobytes()


def write_pfm(path: str | Path, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_pfm(image))
