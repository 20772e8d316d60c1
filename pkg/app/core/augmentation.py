"""
One-round synthetic augmentation: per-class Gaussian confidence model fitted
by EM, tail filtering of generated samples, and top-up of minority classes.
"""
import logging
import math
import os
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from app.core.evaluation import SurrogateModel
from app.core.gan import GanState, TrainConfig, generate
from app.core.patterns import compute_descriptors
from app.errors import ConfigurationError, ContractError, InsufficientSamplesError
from app.models import ClassificationMetrics, ConfidenceModel, ManifestEntry, ScoredSample
from app.schemas import ThresholdMode
from app.utils.images import save_binary_pgm
from app.utils.manifest import DatasetManifest
from app.utils.storage import write_csv

logger = logging.getLogger(__name__)

AUGMENTATION_HEADER = ["Dataset", "Augmentation", "Accuracy (%)", "Macro-F1", "Test Samples"]


# =====================================================
# 1. CONFIDENCE MODEL
# =====================================================
def em_single_gaussian(scores: Sequence[float], max_iter: int = 5, tol: float = 1e-10,
                       sigma_floor: float = 1e-4) -> tuple[float, float]:
    """
    EM for a one-component Gaussian mixture over scalar scores

    With a single component every responsibility is 1, so the M-step lands on
    the sample mean and population variance; iteration stops once both move
    by less than tol.

    Returns:
        tuple: (mu, sigma) with sigma floored at sigma_floor
    """
    x = np.asarray(scores, dtype=np.float64)
    mu, var = float(x[0]), 1.0
    for _ in range(max_iter):
        # E-step: component densities normalized over the (single) component axis
        weighted = stats.norm.pdf(x[np.newaxis, :], loc=mu, scale=max(math.sqrt(var), sigma_floor))
        total = weighted.sum(axis=0, keepdims=True)
        resp = np.divide(weighted, total, out=np.ones_like(weighted), where=total > 0)[0]
        # M-step
        weight = resp.sum()
        new_mu = float(np.sum(resp * x) / weight)
        new_var = float(np.sum(resp * (x - new_mu) ** 2) / weight)
        converged = abs(new_mu - mu) <= tol and abs(new_var - var) <= tol
        mu, var = new_mu, new_var
        if converged:
            break
    return mu, max(math.sqrt(var), sigma_floor)


def fit_confidence_model(scores_per_class: dict[int, Sequence[float]], alpha_conf: float = 0.90,
                         threshold_mode: ThresholdMode = "quantile",
                         sigma_floor: float = 1e-4) -> ConfidenceModel:
    """Per-class (mu, sigma) of target-class confidences"""
    means, stds = {}, {}
    for label, scores in sorted(scores_per_class.items()):
        if len(scores) < 2:
            raise ConfigurationError(f"class {label} has {len(scores)} confidence scores, need at least 2")
        means[label], stds[label] = em_single_gaussian(scores, sigma_floor=sigma_floor)
    return ConfidenceModel(means=means, stds=stds, alpha_conf=alpha_conf,
                           threshold_mode=threshold_mode, sigma_floor=sigma_floor)


def acceptance_threshold(model: ConfidenceModel, label: int) -> float:
    if model.threshold_mode == "absolute":
        return model.alpha_conf
    if label not in model.means:
        raise ConfigurationError(f"confidence model has no entry for class {label}")
    return model.means[label] + float(stats.norm.ppf(model.alpha_conf)) * model.stds[label]


def filter_samples(samples: Sequence[ScoredSample], model: ConfidenceModel, label: int) -> list[ScoredSample]:
    """Samples of `label` at or above the acceptance cut, by (confidence desc, id asc)"""
    cut = acceptance_threshold(model, label)
    accepted = [s for s in samples if s.label == label and s.confidence >= cut]
    return sorted(accepted, key=lambda s: (-s.confidence, s.sample_id))


# =====================================================
# 2. BALANCING
# =====================================================
def class_deficits(manifest: DatasetManifest) -> dict[int, int]:
    counts = manifest.class_counts("train")
    target = max(counts)
    return {c: target - n for c, n in enumerate(counts)}


def balance_dataset(manifest: DatasetManifest, accepted: dict[int, Sequence[ScoredSample]]) -> DatasetManifest:
    """
    Top every class up to the majority count with accepted synthetic samples

    Args:
        manifest: Real dataset; none of its entries is removed
        accepted: Filtered samples per class, best first

    Returns:
        DatasetManifest: Real entries followed by the added synthetic entries
    """
    deficits = class_deficits(manifest)
    shortfall = {c: need - len(accepted.get(c, ())) for c, need in deficits.items()
                 if need > len(accepted.get(c, ()))}
    if shortfall:
        raise InsufficientSamplesError(shortfall)
    added: list[ManifestEntry] = []
    for c, need in deficits.items():
        ranked = sorted(accepted.get(c, ()), key=lambda s: (-s.confidence, s.sample_id))
        added.extend(s.to_entry() for s in ranked[:need])
    return manifest.with_entries(manifest.entries + added)


# =====================================================
# 3. GENERATE, FILTER, BALANCE
# =====================================================
class AugmentConfig(BaseModel):
    """Schema for the augmentation round"""
    alpha_conf: float = Field(0.90, gt=0.0, lt=1.0)
    threshold_mode: ThresholdMode = "quantile"
    sigma_floor: float = Field(1e-4, gt=0.0)
    pool_factor: float = Field(1.5, ge=1.0, description="Oversampling on top of deficit / (1 - alpha_conf)")
    max_rounds: int = Field(5, ge=1, description="Generation rounds per class before giving up")
    seed: int = 0

    model_config = ConfigDict(extra="forbid")


class ClassAcceptance(BaseModel):
    generated: int = 0
    accepted: int = 0
    added: int = 0
    threshold: Optional[float] = None


class AcceptanceReport(BaseModel):
    """Per-class counts of the augmentation round"""
    classes: dict[int, ClassAcceptance]
    confidence_model: Optional[ConfidenceModel] = None
    train_counts_before: list[int]
    train_counts_after: list[int]


def pool_size(deficit: int, cfg: AugmentConfig) -> int:
    if deficit <= 0:
        return 0
    keep = 1.0 - cfg.alpha_conf if cfg.threshold_mode == "quantile" else 0.5
    return max(2, math.ceil(deficit / keep * cfg.pool_factor))


def score_samples(surrogate: SurrogateModel, images: np.ndarray, label: int, first_id: int,
                  seed: int) -> list[ScoredSample]:
    confidences = surrogate.predict_proba(images)[:, label] if len(images) else np.zeros(0)
    return [ScoredSample(sample_id=first_id + i, label=label,
                         confidence=float(np.clip(conf, 0.0, 1.0)),
                         descriptors=compute_descriptors(img), seed=seed)
            for i, (img, conf) in enumerate(zip(images, confidences))]


def _relocate(entry: ManifestEntry, source: DatasetManifest, out_dir: Path) -> ManifestEntry:
    path = Path(entry.path)
    if path.is_absolute():
        return entry
    rel = os.path.relpath(source.root / path, out_dir)
    return entry.model_copy(update={"path": Path(rel).as_posix()})


def augment_dataset(manifest: DatasetManifest, surrogate: SurrogateModel, gan_cfg: TrainConfig,
                    gan_state: GanState, cfg: AugmentConfig,
                    out_dir: Union[str, Path]) -> tuple[DatasetManifest, AcceptanceReport]:
    """
    Generate, score, filter and add synthetic samples until every class matches the majority

    Args:
        manifest: Real dataset (train and test splits)
        surrogate: Classifier that scores generated samples
        gan_cfg, gan_state: Trained generator
        cfg: Threshold and pool settings
        out_dir: Receives synthetic/*.pgm and the augmented manifest paths are relative to it

    Returns:
        tuple: (augmented manifest rooted at out_dir, acceptance report)
    """
    out_dir = Path(out_dir)
    if surrogate.image_side != gan_cfg.image_side:
        raise ConfigurationError(f"surrogate image side {surrogate.image_side} != generator {gan_cfg.image_side}")
    deficits = class_deficits(manifest)
    report = {c: ClassAcceptance() for c in range(manifest.num_classes)}
    accepted: dict[int, list[ScoredSample]] = {}
    scores: dict[int, list[float]] = {}
    model: Optional[ConfidenceModel] = None
    pending: list[tuple[str, np.ndarray]] = []
    next_id = 0

    for c, deficit in deficits.items():
        if deficit <= 0:
            continue
        pool: list[ScoredSample] = []
        images_by_id: dict[int, np.ndarray] = {}
        for round_index in range(cfg.max_rounds):
            n = pool_size(deficit - len(accepted.get(c, [])), cfg)
            seed = int(np.random.SeedSequence([cfg.seed, c, round_index]).generate_state(1)[0])
            images = generate(gan_cfg, gan_state, c, n, seed)
            batch = score_samples(surrogate, images, c, next_id, seed)
            for sample, img in zip(batch, images):
                sample.path = f"synthetic/{sample.sample_id:06d}_c{c}.pgm"
                images_by_id[sample.sample_id] = img
            next_id += len(batch)
            pool.extend(batch)
            report[c].generated += len(batch)
            if c not in scores:
                # model is fitted once, on the first pool of the class
                scores[c] = [s.confidence for s in batch]
                model = fit_confidence_model(scores, cfg.alpha_conf, cfg.threshold_mode, cfg.sigma_floor)
            accepted[c] = filter_samples(pool, model, c)
            logger.info(f"[AUGMENT] class {c} round {round_index + 1}: {len(accepted[c])} of "
                        f"{len(pool)} accepted, need {deficit}")
            if len(accepted[c]) >= deficit:
                break
        report[c].accepted = len(accepted[c])
        report[c].threshold = acceptance_threshold(model, c)
        added = accepted[c][:deficit]
        report[c].added = min(deficit, len(added))
        pending.extend((sample.path, images_by_id[sample.sample_id]) for sample in added)

    # nothing lands on disk unless every class could be topped up
    balanced = balance_dataset(manifest, accepted)
    for path, img in pending:
        save_binary_pgm(out_dir / path, img)
    relocated = [_relocate(e, manifest, out_dir) if not e.synthetic else e for e in balanced.entries]
    augmented = DatasetManifest(relocated, out_dir, manifest.num_classes)
    summary = AcceptanceReport(
        classes=report,
        confidence_model=model,
        train_counts_before=manifest.class_counts("train"),
        train_counts_after=augmented.class_counts("train"),
    )
    return augmented, summary


# =====================================================
# 4. COMPARISON
# =====================================================
class AugmentationComparison(BaseModel):
    """Baseline vs augmented surrogate metrics on one test split"""
    dataset: str
    baseline: ClassificationMetrics
    augmented: ClassificationMetrics
    accuracy_delta: float
    macro_f1_delta: float
    per_class_f1_delta: list[float]

    def rows(self, augmented_label: str = "Structure-aware GAN") -> list[list]:
        return [
            [self.dataset, "Baseline", f"{100.0 * self.baseline.accuracy:.1f}",
             f"{self.baseline.macro_f1:.2f}", self.baseline.n_test],
            [self.dataset, augmented_label, f"{100.0 * self.augmented.accuracy:.1f}",
             f"{self.augmented.macro_f1:.2f}", self.augmented.n_test],
        ]


def evaluate_augmentation(baseline: ClassificationMetrics, augmented: ClassificationMetrics,
                          dataset: str = "synthetic") -> AugmentationComparison:
    if baseline.test_digest != augmented.test_digest or baseline.n_test != augmented.n_test:
        raise ContractError("baseline and augmented metrics were computed on different test splits")
    return AugmentationComparison(
        dataset=dataset,
        baseline=baseline,
        augmented=augmented,
        accuracy_delta=augmented.accuracy - baseline.accuracy,
        macro_f1_delta=augmented.macro_f1 - baseline.macro_f1,
        per_class_f1_delta=[a - b for a, b in zip(augmented.per_class_f1, baseline.per_class_f1)],
    )


def write_augmentation_csv(path: Union[str, Path], comparisons: Sequence[AugmentationComparison]) -> Path:
    rows = [row for comparison in comparisons for row in comparison.rows()]
    return write_csv(path, AUGMENTATION_HEADER, rows)
