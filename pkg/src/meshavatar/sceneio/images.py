"""8-bit binary PNM image I/O (P6 color, P5 grayscale)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import DataError


def _read_token(f) -> bytes:
    tok = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise DataError("truncated PNM header")
        if ch in b" \t\r\n":
            if tok:
                return tok
            continue
        if ch == b"#":
            while f.read(1) not in (b"\n", b""):
                pass
            continue
        tok += ch


def read_image(path: str | Path) -> np.ndarray:
    """Read a P5/P6 file into float64 in [0,1]; (H,W) gray or (H,W,3) RGB."""
    path = Path(path)
    try:
        f = open(path, "rb")
    except OSError as e:
        raise DataError(f"cannot open image {path}: {e}") from e
    with f:
        magic = f.read(2)
        if magic not in (b"P5", b"P6"):
            raise DataError(f"{path}: unsupported image format {magic!r} (want P5/P6)")
        w = int(_read_token(f))
        h = int(_read_token(f))
        maxval = int(_read_token(f))
        if maxval != 255:
            raise DataError(f"{path}: unsupported bit depth (maxval {maxval}, want 255)")
        channels = 3 if magic == b"P6" else 1
        raw = f.read(w * h * channels)
        if len(raw) != w * h * channels:
            raise DataError(f"{path}: truncated pixel data")
    data = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, channels).astype(np.float64) / 255.0
    return data[:, :, 0] if channels == 1 else data


def write_image(path: str | Path, img: np.ndarray):
    """Write (H,W) as P5 or (H,W,3) as P6; values clipped to [0,1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        magic, channels = b"P5", 1
    elif img.ndim == 3 and img.shape[2] == 3:
        magic, channels = b"P6", 3
    else:
        raise DataError(f"cannot write image of shape {img.shape}")
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = img.shape[:2]
    try:
        with open(path, "wb") as f:
            f.write(magic + b"\n%d %d\n255\n" % (w, h))
            f.write(data.tobytes())
    except OSError as e:
        raise DataError(f"cannot write image {path}: {e}") from e
