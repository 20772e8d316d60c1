"""
Scale-adaptive Gaussian blur and unit-cell consensus reconstruction.
"""
import logging
import math
from fractions import Fraction

import numpy as np
from scipy import ndimage

from app.errors import ContractError
from app.schemas import BlurConfig, BoundaryMode, ConsensusMode

logger = logging.getLogger(__name__)


# =====================================================
# 1. ADAPTIVE BLUR
# =====================================================
def blur_kernel_size(height: int, width: int, p_h: int, p_w: int) -> int:
    """
    Kernel size ceil(min(H/p_h, W/p_w) / 10), bumped to the next odd integer

    Args:
        height, width: Image size in pixels
        p_h, p_w: Repetition counts along each axis

    Returns:
        int: Odd kernel size >= 1
    """
    if min(height, width, p_h, p_w) < 1:
        raise ContractError(f"blur_kernel_size needs positive sizes, got {(height, width, p_h, p_w)}")
    cell = min(Fraction(height, p_h), Fraction(width, p_w))
    k = max(1, math.ceil(cell / 10))
    return k + 1 if k % 2 == 0 else k


def gaussian_kernel_1d(cfg: BlurConfig) -> np.ndarray:
    """Normalized 1-D Gaussian taps; the 2-D isotropic kernel is their outer product"""
    half = cfg.kernel_size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    taps = np.exp(-(x * x) / (2.0 * cfg.sigma * cfg.sigma))
    return taps / taps.sum()


def gaussian_kernel_2d(cfg: BlurConfig) -> np.ndarray:
    taps = gaussian_kernel_1d(cfg)
    return np.outer(taps, taps)


def clamp_blur(cfg: BlurConfig, height: int, width: int) -> BlurConfig:
    """Shrink the kernel to the largest odd size that fits the image"""
    limit = min(height, width)
    if cfg.kernel_size <= limit:
        return cfg
    k = limit if limit % 2 == 1 else limit - 1
    logger.warning(f"[BLUR] kernel size {cfg.kernel_size} exceeds image side {limit}, clamped to {k}")
    return cfg.model_copy(update={"kernel_size": k})


def gaussian_blur(img: np.ndarray, cfg: BlurConfig, mode: BoundaryMode = "reflect") -> np.ndarray:
    """Separable blur; 'reflect' mirrors about the edge, 'wrap' is periodic"""
    x = np.asarray(img, dtype=np.float64)
    cfg = clamp_blur(cfg, *x.shape)
    if cfg.kernel_size == 1:
        return x.copy()
    taps = gaussian_kernel_1d(cfg)
    out = ndimage.correlate1d(x, taps, axis=0, mode=mode)
    return ndimage.correlate1d(out, taps, axis=1, mode=mode)


def blur_operator(n: int, cfg: BlurConfig, mode: BoundaryMode = "reflect") -> np.ndarray:
    """
    n x n matrix applying the 1-D blur to a column vector

    An image X is blurred as A_h @ X @ A_w.T with A_h = blur_operator(H, ...)
    and A_w = blur_operator(W, ...).
    """
    cfg = clamp_blur(cfg, n, n)
    if cfg.kernel_size == 1:
        return np.eye(n)
    return ndimage.correlate1d(np.eye(n), gaussian_kernel_1d(cfg), axis=0, mode=mode)


# =====================================================
# 2. UNIT-CELL RECONSTRUCTION
# =====================================================
def divisible_crop(height: int, width: int, p_h: int, p_w: int) -> tuple[int, int]:
    """Rows and columns dropped from the bottom/right so the tiles divide evenly"""
    if p_h * p_w == 0:
        raise ContractError("repetition counts must be non-zero")
    if p_h > height or p_w > width:
        raise ContractError(f"repetition counts {(p_h, p_w)} exceed image size {(height, width)}")
    return height % p_h, width % p_w


def split_tiles(img: np.ndarray, p_h: int, p_w: int) -> np.ndarray:
    """(p_h * p_w, H // p_h, W // p_w) stack of tiles in row-major tile order"""
    height, width = img.shape
    drop_h, drop_w = divisible_crop(height, width, p_h, p_w)
    if drop_h or drop_w:
        logger.debug(f"[RECON] cropping {drop_h} rows / {drop_w} cols to fit a {p_h}x{p_w} tiling")
    ch, cw = height // p_h, width // p_w
    region = np.asarray(img)[:ch * p_h, :cw * p_w]
    return region.reshape(p_h, ch, p_w, cw).transpose(0, 2, 1, 3).reshape(p_h * p_w, ch, cw)


def consensus_unit_cell(img: np.ndarray, p_h: int, p_w: int, mode: ConsensusMode = "majority") -> np.ndarray:
    """
    Pixel-wise aggregate over every tile of a p_h x p_w grid

    Args:
        img: H x W image (binary for majority mode)
        p_h, p_w: Repetition counts
        mode: 'majority' (ties go to foreground) or 'median' (lower median)

    Returns:
        np.ndarray: (H // p_h) x (W // p_w) cell
    """
    tiles = split_tiles(img, p_h, p_w)
    n = tiles.shape[0]
    if mode == "majority":
        if not np.isin(tiles, (0, 1)).all():
            raise ContractError("majority consensus needs a binary image")
        ones = tiles.sum(axis=0)
        return (2 * ones >= n).astype(np.asarray(img).dtype)
    return np.sort(tiles, axis=0)[(n - 1) // 2]


def retile_reconstruction(cell: np.ndarray, height: int, width: int) -> np.ndarray:
    """Periodic tiling of the cell, cut to height x width"""
    ch, cw = cell.shape
    reps = (-(-height // ch), -(-width // cw))
    return np.tile(cell, reps)[:height, :width]


def reconstruct(img: np.ndarray, p_h: int, p_w: int, mode: ConsensusMode = "majority") -> np.ndarray:
    """Consensus cell tiled back to the input size; a projection onto periodic images"""
    height, width = np.asarray(img).shape
    return retile_reconstruction(consensus_unit_cell(img, p_h, p_w, mode), height, width)
