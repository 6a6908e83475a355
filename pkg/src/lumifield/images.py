"""8-bit RGB PNG input and output."""
from __future__ import annotations

import struct

import numpy as np
from PIL import Image


class ImageFormatError(ValueError):
    """File is not an 8-bit RGB PNG this pipeline can use."""


def float_to_byte(image: np.ndarray) -> np.ndarray:
    """Quantize floats in [0, 1] to bytes, rounding halves up (0.5 -> 128)."""
    clipped = np.clip(image, 0.0, 1.0)
    return np.floor(clipped * 255.0 + 0.5).astype(np.uint8)


def byte_to_float(image: np.ndarray) -> np.ndarray:
    return image.astype(np.float32) / 255.0


def _png_bit_depth(path: str) -> int:
    with open(path, "rb") as fh:
        header = fh.read(26)
    if len(header) < 26 or header[:8] != b"\x89PNG\r\n\x1a\n":
        raise ImageFormatError(f"{path} is not a PNG file")
    if header[12:16] != b"IHDR":
        raise ImageFormatError(f"{path} has a malformed PNG header")
    (bit_depth,) = struct.unpack("B", header[24:25])
    return bit_depth


def read_png(path: str) -> np.ndarray:
    """Read an 8-bit RGB PNG into a (H, W, 3) uint8 array."""
    depth = _png_bit_depth(path)
    if depth != 8:
        raise ImageFormatError(f"{path}: unsupported bit depth {depth}, need 8")
    with Image.open(path) as img:
        if img.mode != "RGB":
            raise ImageFormatError(f"{path}: unsupported mode {img.mode}, need RGB")
        return np.asarray(img, dtype=np.uint8)


def write_png(path: str, image: np.ndarray) -> None:
    """Write a (H, W, 3) array as 8-bit RGB PNG; floats are quantized."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = float_to_byte(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageFormatError(f"expected (H, W, 3) image, got {arr.shape}")
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")
