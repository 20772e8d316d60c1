"""
bench: trains every requested variant for every seed on one synthetic dataset,
scores them with a shared surrogate, then runs the augmentation comparison on
an imbalanced dataset.

Layout under --out:
    data/ablation/            benchmark dataset
    surrogate.json            surrogate shared by all ablation rows
    runs/<variant>/seed<k>/   training artifacts of each run
    ablation.csv, ablation_summary.csv, augmentation.csv
    augment/seed<k>/          imbalanced dataset, generator and augmented manifest
"""
import logging
from pathlib import Path

import numpy as np

from app.api.bench.schemas import BenchRequest, BenchResponse, VariantSummary
from app.api.routing import CommandRouter
from app.core.augmentation import (AugmentationComparison, augment_dataset, evaluate_augmentation,
                                   write_augmentation_csv)
from app.core.evaluation import SurrogateModel, topofid_report, train_surrogate, write_topofid_csv
from app.core.gan import GanTrainer, TrainConfig, generate_per_class
from app.core.patterns import DatasetConfig, synth_dataset
from app.models import TopoFidReport
from app.utils.manifest import DatasetManifest
from app.utils.storage import write_csv, write_json

logger = logging.getLogger(__name__)

router = CommandRouter(
    name="bench",
    help="Run the variant ablation matrix and the augmentation comparison",
)

SUMMARY_HEADER = ["variant", "TopoFID_median", "IS_mean_median", "seeds"]


def run_config(base: TrainConfig, dataset: DatasetConfig, variant: str, seed: int) -> TrainConfig:
    cfg = base.model_copy(update={
        "image_side": dataset.image_side,
        "num_classes": dataset.num_classes,
        "ground_truth_period": (dataset.period, dataset.period),
        "seed": base.seed + seed,
    })
    return cfg.with_variant(variant)


def fit_surrogate(request: BenchRequest, manifest: DatasetManifest, path: Path) -> SurrogateModel:
    images, labels = manifest.load_images("train")
    test_images, test_labels = manifest.load_images("test")
    model, _ = train_surrogate(images, labels, test_images, test_labels, request.surrogate,
                               manifest.num_classes, manifest.digest("test"))
    model.save(path, seed=request.surrogate.seed, epoch=request.surrogate.epochs)
    return model


def summarize(reports: list[TopoFidReport], variants: list[str]) -> list[VariantSummary]:
    summary = []
    for variant in variants:
        rows = [r for r in reports if r.variant == variant]
        summary.append(VariantSummary(
            variant=variant,
            topofid_median=float(np.median([r.topofid for r in rows])),
            is_mean_median=float(np.median([r.is_mean for r in rows])),
            seeds=len(rows),
        ))
    return summary


def run_ablation(request: BenchRequest, out_dir: Path) -> list[TopoFidReport]:
    manifest = synth_dataset(request.dataset, out_dir / "data" / "ablation")
    images, labels = manifest.load_images("train")
    surrogate = fit_surrogate(request, manifest, out_dir / "surrogate.json")

    reports = []
    for variant in request.variants:
        for seed in range(request.seeds):
            cfg = run_config(request.train, request.dataset, variant, seed)
            logger.info(f"[BENCH] variant {variant} seed {seed}: training")
            trainer = GanTrainer(cfg)
            trainer.fit(images, labels, out_dir / "runs" / variant / f"seed{seed}")
            generated, _ = generate_per_class(cfg, trainer.state, request.n_generated, cfg.seed)
            reports.append(topofid_report(surrogate, images, generated, variant, seed, request.splits))
    return reports


def run_augmentation(request: BenchRequest, out_dir: Path) -> list[AugmentationComparison]:
    comparisons = []
    for seed in range(request.seeds):
        seed_dir = out_dir / "augment" / f"seed{seed}"
        dataset = request.dataset.model_copy(update={
            "profile": request.augmentation_profile,
            "profile_scale": request.augmentation_scale,
            "seed": request.dataset.seed + seed,
        })
        manifest = synth_dataset(dataset, seed_dir / "data")
        images, labels = manifest.load_images("train")
        test_images, test_labels = manifest.load_images("test")
        surrogate_cfg = request.surrogate.model_copy(update={"seed": request.surrogate.seed + seed})

        cfg = run_config(request.train, dataset, "full", seed)
        logger.info(f"[BENCH] augmentation seed {seed}: training on counts {manifest.class_counts('train')}")
        trainer = GanTrainer(cfg)
        trainer.fit(images, labels, seed_dir / "generator")
        surrogate, baseline = train_surrogate(images, labels, test_images, test_labels, surrogate_cfg,
                                              manifest.num_classes, manifest.digest("test"))

        augment_cfg = request.augment.model_copy(update={"seed": request.augment.seed + seed})
        augmented, acceptance = augment_dataset(manifest, surrogate, cfg, trainer.state, augment_cfg,
                                                seed_dir / "augmented")
        augmented.save(seed_dir / "augmented" / "manifest.jsonl")
        write_json(seed_dir / "augmented" / "acceptance.json", acceptance)
        aug_images, aug_labels = augmented.load_images("train")
        _, after = train_surrogate(aug_images, aug_labels, test_images, test_labels, surrogate_cfg,
                                   manifest.num_classes, augmented.digest("test"))
        comparisons.append(evaluate_augmentation(
            baseline, after, f"{request.augmentation_profile} (seed {seed})"))
        logger.info(f"[BENCH] augmentation seed {seed}: macro-F1 {baseline.macro_f1:.3f} -> {after.macro_f1:.3f}")
    return comparisons


@router.command(BenchRequest)
def bench(request: BenchRequest) -> BenchResponse:
    """
    Write ablation.csv, ablation_summary.csv and (unless skipped) augmentation.csv under --out
    """
    out_dir = request.output_dir()
    reports = run_ablation(request, out_dir)
    ablation_path = write_topofid_csv(out_dir / "ablation.csv", reports)
    summary = summarize(reports, list(request.variants))
    summary_path = write_csv(out_dir / "ablation_summary.csv", SUMMARY_HEADER,
                             [[s.variant, s.topofid_median, s.is_mean_median, s.seeds] for s in summary])
    for s in summary:
        logger.info(f"[BENCH] {s.variant}: median TopoFID={s.topofid_median:.4f} "
                    f"median IS={s.is_mean_median:.4f} over {s.seeds} seeds")

    response = BenchResponse(ablation=str(ablation_path), ablation_summary=str(summary_path),
                             summary=summary, reports=reports)
    if request.skip_augmentation:
        return response
    comparisons = run_augmentation(request, out_dir)
    response.augmentation = str(write_augmentation_csv(out_dir / "augmentation.csv", comparisons))
    response.comparisons = comparisons
    return response
