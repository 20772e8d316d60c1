import logging

from app.api.routing import CommandRouter
from app.api.train.schemas import TrainRequest, TrainResponse
from app.core.gan import GanTrainer, TrainConfig
from app.core.patterns import load_dataset_metadata
from app.errors import ConfigurationError
from app.utils.manifest import DatasetManifest

logger = logging.getLogger(__name__)

router = CommandRouter(
    name="train",
    help="Train the class-conditional generator and critic",
)


def resolve_period(cfg: TrainConfig, data: str) -> TrainConfig:
    """Fill ground_truth_period from the dataset metadata when it is needed and missing"""
    metadata = load_dataset_metadata(data)
    if metadata is not None and metadata.config.image_side != cfg.image_side:
        raise ConfigurationError(f"image_side {cfg.image_side} does not match the dataset "
                                 f"({metadata.config.image_side})")
    if cfg.ground_truth_period is None and metadata is not None:
        cfg = cfg.model_copy(update={"ground_truth_period": (metadata.period, metadata.period)})
    if cfg.disable_fft and cfg.needs_period and cfg.ground_truth_period is None:
        raise ConfigurationError("ground_truth_period is required when disable_fft is set "
                                 "and the dataset has no dataset.json")
    return cfg


@router.command(TrainRequest, aliases={"--manifest": "data"})
def train(request: TrainRequest) -> TrainResponse:
    """
    Train on the train split of --data and write checkpoint.json, metrics.csv and samples/
    """
    cfg = resolve_period(request.train_config(), request.data)
    manifest = DatasetManifest.load(request.data, cfg.num_classes)
    images, labels = manifest.load_images("train")
    out_dir = request.output_dir()

    trainer = GanTrainer(cfg)
    trainer.fit(images, labels, out_dir)
    last = trainer.metrics[-1] if trainer.metrics else None
    return TrainResponse(
        checkpoint=str(out_dir / "checkpoint.json"),
        metrics=str(out_dir / "metrics.csv"),
        epochs=trainer.state.epoch,
        generator_steps=trainer.state.iteration,
        last_period=(last[7], last[8]) if last else None,
        last_kernel_size=last[9] if last else None,
    )
