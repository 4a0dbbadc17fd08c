"""Image file I/O with a float [0, 1] in-memory convention.

Grayscale images load as (H, W) fields and RGB images as (H, W, 3).
Supported formats: binary PGM (P5) and 8-bit PNG (grayscale or RGB).
Saving quantizes to 8 bits, so a save/load round trip moves each value
by at most 1/510 (half a quantization step).
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .fields import as_field

__all__ = ["load_image", "save_image"]


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Load a PGM or PNG image as a float64 field scaled to [0, 1]."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext not in (".pgm", ".png"):
        raise ValueError(f"unsupported image format: {path!r} (use .pgm or .png)")
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            # palettes, alpha and 16-bit variants land here
            img = img.convert("RGB" if ("A" in img.mode or img.mode in ("P", "CMYK")) else "L")
        arr = np.asarray(img, dtype=np.float64) / 255.0
    return as_field(arr, "image")


def save_image(x, path: str | os.PathLike) -> None:
    """Save a field to PGM (grayscale only) or PNG, clamping to [0, 1].

    2-D fields save as grayscale; (H, W, 3) fields as RGB. Values are
    clamped then rounded to the nearest of 256 levels.
    """
    arr = as_field(x, "image")
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if arr.ndim == 2:
        mode = "L"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        mode = "RGB"
    else:
        raise ValueError(f"image must be (H, W) or (H, W, 3), got shape {arr.shape}")
    if ext == ".pgm":
        if mode != "L":
            raise ValueError("PGM supports grayscale only; save RGB fields as .png")
    elif ext != ".png":
        raise ValueError(f"unsupported image format: {path!r} (use .pgm or .png)")
    quant = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    if ext == ".pgm":
        h, w = quant.shape
        with open(path, "wb") as f:
            f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            f.write(quant.tobytes())
    else:
        Image.fromarray(quant, mode=mode).save(path, format="PNG")
