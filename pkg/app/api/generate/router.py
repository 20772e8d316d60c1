import logging

import numpy as np

from app.api.generate.schemas import GenerateRequest, GenerateResponse
from app.api.routing import CommandRouter
from app.core.fft_guidance import agreement, estimate_batch
from app.core.gan import class_seed, generate, load_gan
from app.utils.images import image_grid, save_binary_pgm

logger = logging.getLogger(__name__)

router = CommandRouter(
    name="generate",
    help="Sample binary designs from a trained generator",
)


@router.command(GenerateRequest)
def generate_images(request: GenerateRequest) -> GenerateResponse:
    """
    Write c{label}_{index}.pgm per image; the seed for each class is derived from --seed and the label
    """
    cfg, state = load_gan(request.checkpoint)
    out_dir = request.output_dir()
    labels = [request.label] if request.label is not None else list(range(cfg.num_classes))

    batches = []
    counts = {}
    for label in labels:
        images = generate(cfg, state, label, request.n, class_seed(request.seed, label))
        for i, img in enumerate(images):
            save_binary_pgm(out_dir / f"c{label}_{i:06d}.pgm", img)
        if request.grid and len(images):
            save_binary_pgm(out_dir / "grids" / f"c{label}.pgm", image_grid(list(images), columns=10))
        counts[label] = len(images)
        batches.append(images)
        logger.info(f"[GENERATE] {len(images)} images of class {label}")

    all_images = np.concatenate(batches) if batches else np.zeros((0, cfg.image_side, cfg.image_side))
    estimate = estimate_batch(all_images, request.peaks)
    fraction = None
    if cfg.ground_truth_period is not None and len(all_images):
        fraction = agreement(all_images, cfg.ground_truth_period, request.peaks)
    return GenerateResponse(
        out=str(out_dir),
        counts=counts,
        estimated_period=estimate.period,
        period_valid=estimate.valid,
        agreement_with_config_period=fraction,
    )
