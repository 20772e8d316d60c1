import logging

from app.api.routing import CommandRouter
from app.api.synth.schemas import SynthRequest, SynthResponse
from app.core.patterns import DatasetConfig, synth_dataset

logger = logging.getLogger(__name__)

router = CommandRouter(
    name="synth",
    help="Generate a labelled dataset of tiled unit-cell images",
)


@router.command(SynthRequest)
def synth(request: SynthRequest) -> SynthResponse:
    """
    Write images, manifest.jsonl and dataset.json under --out
    """
    config = DatasetConfig.model_validate(request.model_dump(exclude={"out"}))
    out_dir = request.output_dir()
    manifest = synth_dataset(config, out_dir)
    return SynthResponse(
        manifest=str(out_dir / "manifest.jsonl"),
        period=config.period,
        num_classes=config.num_classes,
        train_counts=manifest.class_counts("train"),
        test_counts=manifest.class_counts("test"),
    )
