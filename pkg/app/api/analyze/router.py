import logging

from app.api.analyze.schemas import AnalysisReport, AnalyzeRequest, AnalyzeResponse
from app.api.routing import CommandRouter
from app.core.fft_guidance import autocorrelation_period, estimate_unit_count, log_magnitude, magnitude_spectrum, project
from app.core.structure import blur_kernel_size, consensus_unit_cell, divisible_crop, retile_reconstruction
from app.schemas import PeakDetectConfig
from app.utils.images import load_binary_pgm, save_binary_pgm, save_grayscale_pgm
from app.utils.storage import write_json

logger = logging.getLogger(__name__)

router = CommandRouter(
    name="analyze",
    help="Estimate the unit-cell repetition of one image from its spectrum",
)


@router.command(AnalyzeRequest)
def analyze(request: AnalyzeRequest) -> AnalyzeResponse:
    """
    Write report.json plus spectrum.pgm, cell.pgm and reconstruction.pgm under --out
    """
    cfg = PeakDetectConfig(alpha_fft=request.alpha_fft, radius=request.radius,
                           regularity_tolerance=request.regularity_tolerance)
    img = load_binary_pgm(request.image)
    height, width = img.shape
    spectrum = magnitude_spectrum(img)
    profile_w, profile_h = project(spectrum)
    estimate = estimate_unit_count(img, cfg)
    crop = divisible_crop(height, width, estimate.p_h, estimate.p_w)
    if any(crop):
        logger.warning(f"[FFT] {crop[0]} rows / {crop[1]} cols cropped for a "
                       f"{estimate.p_h}x{estimate.p_w} consensus")
    if not estimate.valid:
        logger.warning("[FFT] no regular spectral peaks; falling back to (1, 1)")

    out_dir = request.output_dir()
    report = AnalysisReport(
        image=request.image,
        height=height,
        width=width,
        profile_h=profile_h.tolist(),
        profile_w=profile_w.tolist(),
        tau_h=estimate.tau_h,
        tau_w=estimate.tau_w,
        peaks_h=estimate.peaks_h,
        peaks_w=estimate.peaks_w,
        p_h=estimate.p_h,
        p_w=estimate.p_w,
        valid=estimate.valid,
        kernel_size=blur_kernel_size(height, width, estimate.p_h, estimate.p_w),
        crop=crop,
        autocorrelation_period=autocorrelation_period(img),
    )
    report_path = write_json(out_dir / "report.json", report)
    if request.write_images:
        save_grayscale_pgm(out_dir / "spectrum.pgm", log_magnitude(spectrum))
        cell = consensus_unit_cell(img, estimate.p_h, estimate.p_w, request.consensus_mode)
        save_binary_pgm(out_dir / "cell.pgm", cell)
        save_binary_pgm(out_dir / "reconstruction.pgm", retile_reconstruction(cell, height, width))
    logger.info(f"[FFT] {request.image}: p=({estimate.p_h},{estimate.p_w}) valid={estimate.valid}")
    return AnalyzeResponse(report=str(report_path), p_h=estimate.p_h, p_w=estimate.p_w,
                           valid=estimate.valid, kernel_size=report.kernel_size)
