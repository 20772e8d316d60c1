import logging

from app.api.augment.schemas import AugmentRequest, AugmentResponse
from app.api.routing import CommandRouter
from app.core.augmentation import AugmentConfig, augment_dataset, evaluate_augmentation, write_augmentation_csv
from app.core.evaluation import SurrogateModel, classification_metrics, train_surrogate
from app.core.gan import load_gan
from app.utils.manifest import DatasetManifest
from app.utils.storage import write_json

logger = logging.getLogger(__name__)

router = CommandRouter(
    name="augment",
    help="Balance a dataset with confidence-filtered generated samples",
)


@router.command(AugmentRequest)
def augment(request: AugmentRequest) -> AugmentResponse:
    """
    Write manifest.jsonl, acceptance.json and synthetic/ under --out; with evaluate,
    also comparison.json and augmentation.csv
    """
    out_dir = request.output_dir()
    gan_cfg, gan_state = load_gan(request.generator)
    manifest = DatasetManifest.load(request.data, gan_cfg.num_classes)
    test_images, test_labels = manifest.load_images("test")
    digest = manifest.digest("test")

    baseline = None
    if request.surrogate:
        surrogate = SurrogateModel.load(request.surrogate)
    else:
        images, labels = manifest.load_images("train")
        surrogate, baseline = train_surrogate(images, labels, test_images, test_labels,
                                              request.surrogate_config, manifest.num_classes, digest)
        surrogate.save(out_dir / "surrogate_baseline.json", seed=request.surrogate_config.seed)

    cfg = AugmentConfig.model_validate(request.model_dump(include=set(AugmentConfig.model_fields)))
    augmented, acceptance = augment_dataset(manifest, surrogate, gan_cfg, gan_state, cfg, out_dir)
    manifest_path = augmented.save(out_dir / "manifest.jsonl")
    write_json(out_dir / "acceptance.json", acceptance)
    logger.info(f"[AUGMENT] train counts {acceptance.train_counts_before} -> {acceptance.train_counts_after}")

    comparison = None
    if request.evaluate:
        if baseline is None:
            baseline = classification_metrics(test_labels, surrogate.predict(test_images),
                                              manifest.num_classes, digest)
        images, labels = augmented.load_images("train")
        _, after = train_surrogate(images, labels, test_images, test_labels,
                                   request.surrogate_config, manifest.num_classes, augmented.digest("test"))
        comparison = evaluate_augmentation(baseline, after, request.dataset_name)
        write_json(out_dir / "comparison.json", comparison)
        write_augmentation_csv(out_dir / "augmentation.csv", [comparison])
    return AugmentResponse(manifest=str(manifest_path), acceptance=acceptance, comparison=comparison)
