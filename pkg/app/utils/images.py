import io
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from app.errors import ContractError
from app.utils.storage import atomic_write_bytes

PathLike = Union[str, Path]


def encode_pgm(gray: np.ndarray) -> bytes:
    """Binary PGM (P5, maxval 255) bytes of a uint8 grid"""
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise ContractError(f"expected a 2-D uint8 grid, got {gray.dtype} with shape {gray.shape}")
    buffer = io.BytesIO()
    Image.fromarray(gray).save(buffer, format="PPM")
    return buffer.getvalue()


def save_binary_pgm(path: PathLike, pixels: np.ndarray) -> Path:
    """Background 0, foreground 255"""
    pixels = np.asarray(pixels)
    if not np.isin(pixels, (0, 1)).all():
        raise ContractError(f"{path}: pixels must be 0/1")
    return atomic_write_bytes(path, encode_pgm((pixels * 255).astype(np.uint8)))


def save_grayscale_pgm(path: PathLike, values: np.ndarray) -> Path:
    """Min-max rescale real values to 0..255 (constant grids map to 0)"""
    values = np.asarray(values, dtype=np.float64)
    span = values.max() - values.min() if values.size else 0.0
    if span > 0:
        scaled = np.round(255.0 * (values - values.min()) / span)
    else:
        scaled = np.zeros_like(values)
    return atomic_write_bytes(path, encode_pgm(scaled.astype(np.uint8)))


def load_binary_pgm(path: PathLike) -> np.ndarray:
    with Image.open(path) as img:
        gray = np.asarray(img.convert("L"))
    return (gray >= 128).astype(np.uint8)


def image_grid(images: list[np.ndarray], columns: int, pad: int = 1) -> np.ndarray:
    """Tile equally sized binary images into one grid with background padding"""
    if not images:
        return np.zeros((1, 1), dtype=np.uint8)
    h, w = images[0].shape
    rows = (len(images) + columns - 1) // columns
    grid = np.zeros((rows * (h + pad) + pad, columns * (w + pad) + pad), dtype=np.uint8)
    for i, img in enumerate(images):
        r, c = divmod(i, columns)
        top, left = pad + r * (h + pad), pad + c * (w + pad)
        grid[top:top + h, left:left + w] = img
    return grid


def load_pgm_dir(directory: PathLike) -> np.ndarray:
    """All *.pgm files directly inside a directory, in name order, as an (n, H, W) stack"""
    paths = sorted(Path(directory).glob("*.pgm"))
    if not paths:
        return np.zeros((0, 0, 0), dtype=np.uint8)
    return np.stack([load_binary_pgm(p) for p in paths])
