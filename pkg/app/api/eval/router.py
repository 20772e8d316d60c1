import logging
from pathlib import Path

from app.api.eval.schemas import EvalRequest, EvalResponse
from app.api.routing import CommandRouter
from app.core.evaluation import SurrogateModel, topofid_report, train_surrogate, write_topofid_csv
from app.core.patterns import load_dataset_metadata
from app.errors import ConfigurationError
from app.utils.images import load_pgm_dir
from app.utils.manifest import DatasetManifest

logger = logging.getLogger(__name__)

router = CommandRouter(
    name="eval",
    help="Surrogate-feature Frechet distance and inception score of generated images",
)


def fit_or_load_surrogate(request: EvalRequest, manifest: DatasetManifest, out_dir: Path):
    if request.surrogate:
        return SurrogateModel.load(request.surrogate), None, request.surrogate
    images, labels = manifest.load_images("train")
    test_images, test_labels = manifest.load_images("test")
    model, metrics = train_surrogate(images, labels, test_images, test_labels, request.surrogate_config,
                                     manifest.num_classes, manifest.digest("test"))
    path = model.save(out_dir / "surrogate.json", seed=request.surrogate_config.seed,
                      epoch=request.surrogate_config.epochs)
    return model, metrics, str(path)


@router.command(EvalRequest)
def evaluate(request: EvalRequest) -> EvalResponse:
    """
    Write --out as a one-row CSV: variant, TopoFID, IS_mean, IS_std, n_real, n_gen, seed
    """
    metadata = load_dataset_metadata(request.real)
    manifest = DatasetManifest.load(request.real, metadata.num_classes if metadata else 3)
    out_dir = request.output_dir()
    model, metrics, surrogate_path = fit_or_load_surrogate(request, manifest, out_dir)
    real_images, _ = manifest.load_images(request.real_split)
    generated = load_pgm_dir(request.generated)
    if len(generated) == 0:
        raise ConfigurationError(f"no .pgm images found in {request.generated}")
    report = topofid_report(model, real_images, generated, request.variant, request.seed, request.splits)
    csv_path = write_topofid_csv(request.out, [report])
    return EvalResponse(csv=str(csv_path), report=report, surrogate=surrogate_path,
                        surrogate_metrics=metrics)
