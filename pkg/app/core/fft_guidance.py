"""
Repetition-count estimation from the centred magnitude spectrum.

A p-fold tiling of an N-pixel side only has energy at frequency bins that are
multiples of p, so the spacing between regular spectral peaks along an axis is
the number of unit cells along that axis.
"""
import logging
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from app.errors import ContractError
from app.models import UnitCellEstimate
from app.schemas import PeakDetectConfig

logger = logging.getLogger(__name__)


def magnitude_spectrum(img: np.ndarray) -> np.ndarray:
    """
    |DFT| of the image with the zero-frequency bin moved to the grid centre

    Args:
        img: H x W grid, binary or continuous

    Returns:
        np.ndarray: H x W non-negative magnitudes
    """
    x = np.asarray(img, dtype=np.float64)
    if x.ndim != 2 or min(x.shape) < 2:
        raise ContractError(f"spectrum needs an image of at least 2x2, got shape {x.shape}")
    x = x - x.mean()
    peak = np.max(np.abs(x))
    if peak == 0:
        return np.zeros_like(x)
    return np.abs(np.fft.fftshift(np.fft.fft2(x / peak)))


def log_magnitude(spectrum: np.ndarray) -> np.ndarray:
    return np.log1p(spectrum)


def project(spectrum: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(horizontal, vertical) profiles: column sums and row sums"""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    return spectrum.sum(axis=0), spectrum.sum(axis=1)


def fft_threshold(values: np.ndarray, alpha_fft: float) -> float:
    lo, hi = float(np.min(values)), float(np.max(values))
    return lo + alpha_fft * (hi - lo)


def modal_value(values: Sequence[int]) -> int:
    """Most frequent value; ties go to the smaller one"""
    uniques, counts = np.unique(np.asarray(values, dtype=np.int64), return_counts=True)
    return int(uniques[np.argmax(counts)])


def _regular_subset(candidates: list[int], center: int, tolerance: float) -> list[int]:
    # Keep peaks lying near the lattice center + k * modal_gap; the modal gap is
    # recomputed after every pruning round until nothing else is dropped.
    kept = sorted(candidates)
    while len(kept) >= 2:
        anchors = sorted(set(kept) | {center})
        gap = modal_value(np.diff(anchors))
        survivors = []
        for b in kept:
            offset = abs(b - center)
            nearest = max(1, int(round(offset / gap))) * gap
            if abs(offset - nearest) <= tolerance * gap:
                survivors.append(b)
        if survivors == kept:
            break
        kept = survivors
    return kept


def _refine_spacing(profile: np.ndarray, is_peak: np.ndarray, kept: list[int], center: int,
                    floor: float) -> list[int]:
    # A weak fundamental can sit below tau while its harmonics pass; take the
    # finest divisor d of the gap whose in-between bins are all relaxed peaks.
    if not kept:
        return kept
    gap = modal_value(np.diff(sorted(set(kept) | {center})))
    for d in range(1, gap):
        if gap % d:
            continue
        fill = []
        for offset in range(d, gap, d):
            bins = [b for b in (center - offset, center + offset) if 0 <= b < profile.size]
            if not bins or not all(is_peak[b] and profile[b] > floor for b in bins):
                break
            fill.extend(bins)
        else:
            return sorted(set(kept) | set(fill))
    return kept


def detect_peaks(profile: np.ndarray, cfg: PeakDetectConfig,
                 center: Optional[int] = None) -> tuple[list[int], float]:
    """
    Threshold, local-maximum and spacing-regularity peak selection

    Args:
        profile: Projected frequency magnitudes along one axis
        cfg: Sensitivity, neighbourhood radius and regularity tolerance
        center: Index of the zero-frequency bin (defaults to len // 2)

    Returns:
        tuple: (sorted peak bin indices, threshold tau)
    """
    profile = np.asarray(profile, dtype=np.float64)
    if profile.ndim != 1 or profile.size < 3:
        raise ContractError(f"profile needs at least 3 bins, got shape {profile.shape}")
    center = profile.size // 2 if center is None else center
    off_center = np.delete(profile, center)
    tau = fft_threshold(off_center, cfg.alpha_fft)
    if np.max(off_center) == np.min(off_center):
        return [], tau

    local_max = ndimage.maximum_filter1d(profile, size=2 * cfg.radius + 1, mode="constant", cval=-np.inf)
    is_peak = profile >= local_max
    candidates = [int(b) for b in np.flatnonzero((profile > tau) & is_peak) if b != center]
    kept = _regular_subset(candidates, center, cfg.regularity_tolerance)
    floor = float(np.min(off_center)) + cfg.harmonic_fraction * (tau - float(np.min(off_center)))
    return _refine_spacing(profile, is_peak, kept, center, floor), tau


def _axis_count(peaks: list[int], center: int, side: int) -> Optional[int]:
    if len(peaks) < 2:
        return None
    anchors = sorted(set(peaks) | {center})
    return int(np.clip(modal_value(np.diff(anchors)), 1, side))


def estimate_unit_count(img: np.ndarray, cfg: Optional[PeakDetectConfig] = None,
                        binarize: bool = True) -> UnitCellEstimate:
    """
    Estimate (p_h, p_w) for one image; falls back to (1, 1) when either axis has no regular peaks

    Args:
        img: H x W image; continuous values are thresholded at 0 when binarize is set
        cfg: Peak detection settings

    Returns:
        UnitCellEstimate: Counts, validity flags, peaks and thresholds per axis
    """
    cfg = cfg or PeakDetectConfig()
    x = np.asarray(img, dtype=np.float64)
    if binarize:
        x = (x > 0).astype(np.float64)
    height, width = x.shape
    horizontal, vertical = project(magnitude_spectrum(x))
    peaks_w, tau_w = detect_peaks(horizontal, cfg)
    peaks_h, tau_h = detect_peaks(vertical, cfg)
    p_w = _axis_count(peaks_w, width // 2, width)
    p_h = _axis_count(peaks_h, height // 2, height)
    valid = p_h is not None and p_w is not None
    return UnitCellEstimate(
        p_h=p_h if valid else 1,
        p_w=p_w if valid else 1,
        valid=valid,
        valid_h=p_h is not None,
        valid_w=p_w is not None,
        peaks_h=peaks_h,
        peaks_w=peaks_w,
        tau_h=tau_h,
        tau_w=tau_w,
    )


def estimate_batch(images: np.ndarray, cfg: Optional[PeakDetectConfig] = None,
                   binarize: bool = True) -> UnitCellEstimate:
    """Batch mode of the valid per-image estimates, ties toward the smaller pair"""
    estimates = [estimate_unit_count(img, cfg, binarize) for img in images]
    valid = [e for e in estimates if e.valid]
    if not valid:
        return UnitCellEstimate()
    pairs, counts = np.unique(np.array([e.period for e in valid]), axis=0, return_counts=True)
    p_h, p_w = (int(v) for v in pairs[np.argmax(counts)])
    return UnitCellEstimate(p_h=p_h, p_w=p_w, valid=True, valid_h=True, valid_w=True)


def agreement(images: np.ndarray, period: tuple[int, int],
              cfg: Optional[PeakDetectConfig] = None) -> float:
    """Fraction of images whose estimate equals the given (p_h, p_w)"""
    if len(images) == 0:
        return 0.0
    hits = [estimate_unit_count(img, cfg).period == tuple(period) for img in images]
    return float(np.mean(hits))


def _axis_period(ac: np.ndarray) -> Optional[int]:
    lags = ac[1:]
    top = float(np.max(lags))
    if np.allclose(ac, 0.0):
        return None
    return int(np.flatnonzero(lags >= top - 0.05 * abs(top))[0]) + 1


def autocorrelation_period(img: np.ndarray) -> tuple[int, int]:
    """
    Independent repetition-count estimate from circular autocorrelation

    Returns:
        tuple: (p_h, p_w); a flat image gives (1, 1)
    """
    x = np.asarray(img, dtype=np.float64)
    x = x - x.mean()
    power = np.abs(np.fft.fft2(x)) ** 2
    ac = np.real(np.fft.ifft2(power))
    height, width = x.shape
    lag_h, lag_w = _axis_period(ac[:, 0]), _axis_period(ac[0, :])
    if lag_h is None or lag_w is None:
        return 1, 1
    return max(1, int(round(height / lag_h))), max(1, int(round(width / lag_w)))
