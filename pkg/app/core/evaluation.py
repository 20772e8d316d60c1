"""
Surrogate classifier plus Frechet-distance and inception-score machinery.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg, special
from sklearn.metrics import accuracy_score, f1_score

from app.config import settings
from app.core import autodiff as ad
from app.core.autodiff import AdamState, ParameterSet, Tape
from app.errors import ConfigurationError, ContractError, NumericalError, ShapeError
from app.models import ClassificationMetrics, GaussianStats, TopoFidReport
from app.schemas import AdamHyper, MlpSpec
from app.utils.checkpoint import load_checkpoint, save_checkpoint
from app.utils.storage import write_csv

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-8
TOPOFID_HEADER = ["variant", "TopoFID", "IS_mean", "IS_std", "n_real", "n_gen", "seed"]


# =====================================================
# 1. SURROGATE CLASSIFIER
# =====================================================
class SurrogateConfig(BaseModel):
    """Schema for surrogate classifier training"""
    hidden: list[int] = Field(default_factory=lambda: [256, 64], min_length=1)
    epochs: int = Field(30, ge=0)
    batch_size: int = Field(32, ge=1)
    optimizer: AdamHyper = Field(default_factory=lambda: AdamHyper(step_size=1e-3, beta1=0.9, beta2=0.999))
    feature_depth: Optional[int] = Field(None, ge=1, description="Layers kept for features; default is the penultimate layer")
    seed: int = 0

    model_config = ConfigDict(extra="forbid")


class SurrogateCheckpoint(BaseModel):
    format_version: int = settings.CHECKPOINT_FORMAT_VERSION
    mlp_spec: MlpSpec
    params: dict[str, list[list[float]]]
    optimizer: Optional[dict] = None
    image_side: int
    num_classes: int
    feature_depth: int
    seed: int
    epoch: int


@dataclass
class SurrogateModel:
    spec: MlpSpec
    params: ParameterSet
    image_side: int
    feature_depth: int

    @property
    def num_classes(self) -> int:
        return self.spec.widths[-1]

    @property
    def feature_dim(self) -> int:
        return self.spec.widths[self.feature_depth]

    def _rows(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if images.ndim != 3 or images.shape[1:] != (self.image_side, self.image_side):
            raise ShapeError(f"surrogate expects (n, {self.image_side}, {self.image_side}) images, "
                             f"got {images.shape}")
        return 2.0 * images.reshape(images.shape[0], -1) - 1.0

    def logits(self, images: np.ndarray) -> np.ndarray:
        if len(images) == 0:
            return np.zeros((0, self.num_classes))
        out, _ = ad.mlp_forward(self.spec, self.params, self._rows(images), trainable=False)
        return out.value

    def predict_proba(self, images: np.ndarray) -> np.ndarray:
        return special.softmax(self.logits(images), axis=1)

    def predict(self, images: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(images), axis=1)

    def extract_features(self, images: np.ndarray) -> np.ndarray:
        """Activations after `feature_depth` layers, one row per image"""
        if len(images) == 0:
            return np.zeros((0, self.feature_dim))
        out, _ = ad.mlp_forward(self.spec, self.params, self._rows(images),
                                depth=self.feature_depth, trainable=False)
        return out.value

    def to_checkpoint(self, seed: int = 0, epoch: int = 0, optimizer: Optional[AdamState] = None) -> SurrogateCheckpoint:
        return SurrogateCheckpoint(
            mlp_spec=self.spec,
            params=self.params.to_dict(),
            optimizer=optimizer.to_dict() if optimizer is not None else None,
            image_side=self.image_side,
            num_classes=self.num_classes,
            feature_depth=self.feature_depth,
            seed=seed,
            epoch=epoch,
        )

    def save(self, path: Union[str, Path], seed: int = 0, epoch: int = 0) -> Path:
        return save_checkpoint(path, self.to_checkpoint(seed, epoch))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SurrogateModel":
        checkpoint = load_checkpoint(path, SurrogateCheckpoint)
        return cls(checkpoint.mlp_spec, ParameterSet.from_dict(checkpoint.params),
                   checkpoint.image_side, checkpoint.feature_depth)


def init_surrogate(cfg: SurrogateConfig, image_side: int, num_classes: int,
                   rng: np.random.Generator) -> SurrogateModel:
    spec = MlpSpec(widths=[image_side * image_side, *cfg.hidden, num_classes],
                   hidden_activation="relu", output_activation="identity")
    depth = spec.num_layers - 1 if cfg.feature_depth is None else cfg.feature_depth
    if not 1 <= depth <= spec.num_layers:
        raise ConfigurationError(f"feature_depth must be in [1, {spec.num_layers}], got {depth}")
    return SurrogateModel(spec, ad.init_mlp(spec, rng), image_side, depth)


def classification_metrics(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int,
                           test_digest: str = "") -> ClassificationMetrics:
    labels = list(range(num_classes))
    per_class = f1_score(y_true, y_pred, labels=labels, average=None, zero_division=0)
    return ClassificationMetrics(
        accuracy=float(accuracy_score(y_true, y_pred)),
        macro_f1=float(np.mean(per_class)),
        per_class_f1=[float(v) for v in per_class],
        n_test=int(len(y_true)),
        test_digest=test_digest,
    )


def train_surrogate(images: np.ndarray, labels: np.ndarray, test_images: np.ndarray, test_labels: np.ndarray,
                    cfg: SurrogateConfig, num_classes: int,
                    test_digest: str = "") -> tuple[SurrogateModel, ClassificationMetrics]:
    """
    Fit the surrogate with cross-entropy and Adam, then score the test split

    Args:
        images, labels: Training split
        test_images, test_labels: Held-out split
        cfg: Surrogate architecture and schedule
        num_classes: Size of the label set
        test_digest: Fingerprint of the test split, carried into the metrics

    Returns:
        tuple: (trained model, test metrics)
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise ConfigurationError("surrogate training data contains a single class")
    images = np.asarray(images)
    rng = np.random.default_rng(cfg.seed)
    model = init_surrogate(cfg, images.shape[1], num_classes, rng)
    state = AdamState.zeros(model.params)
    rows = model._rows(images)
    batch = min(cfg.batch_size, len(rows))

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(rows))
        losses = []
        for start in range(0, len(rows), batch):
            idx = order[start:start + batch]
            tape = Tape()
            with tape:
                logits, _ = ad.mlp_forward(model.spec, model.params, rows[idx], tape=tape)
                loss = ad.cross_entropy(logits, labels[idx])
            losses.append(float(loss.value[0, 0]))
            params, state = ad.adam_step(model.params, ad.grad_params(tape, root=loss), state, cfg.optimizer)
            model.params = params
        logger.debug(f"[EVAL] surrogate epoch {epoch + 1}/{cfg.epochs}: CE={np.mean(losses):.4f}")

    metrics = classification_metrics(test_labels, model.predict(test_images), num_classes, test_digest)
    logger.info(f"[EVAL] surrogate accuracy={metrics.accuracy:.4f} macro_f1={metrics.macro_f1:.4f} "
                f"on {metrics.n_test} test images")
    return model, metrics


# =====================================================
# 2. FRECHET DISTANCE
# =====================================================
def gaussian_stats(features: np.ndarray) -> GaussianStats:
    """Sample mean and unbiased, symmetrized covariance"""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ContractError(f"gaussian_stats needs at least 2 feature rows, got shape {features.shape}")
    sigma = np.atleast_2d(np.cov(features, rowvar=False, ddof=1))
    return GaussianStats(mu=features.mean(axis=0), sigma=0.5 * (sigma + sigma.T))


def _psd_sqrt(matrix: np.ndarray, what: str) -> np.ndarray:
    eigvals, eigvecs = linalg.eigh(0.5 * (matrix + matrix.T))
    if eigvals.size and eigvals.min() < -PSD_TOLERANCE:
        raise NumericalError(f"{what} is not positive semi-definite (eigenvalue {eigvals.min():.3e})")
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """
    ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))

    The trace of the cross term is taken from the symmetric form
    S_a^(1/2) S_b S_a^(1/2), which has the same eigenvalues as S_a S_b.
    """
    if a.dim != b.dim:
        raise ShapeError(f"feature dimensions differ: {a.dim} vs {b.dim}")
    sqrt_a = _psd_sqrt(a.sigma, "first covariance")
    _psd_sqrt(b.sigma, "second covariance")
    cross = sqrt_a @ b.sigma @ sqrt_a
    eigvals = linalg.eigvalsh(0.5 * (cross + cross.T))
    if eigvals.size and eigvals.min() < -PSD_TOLERANCE:
        raise NumericalError(f"covariance product is not positive semi-definite (eigenvalue {eigvals.min():.3e})")
    trace_sqrt = float(np.sum(np.sqrt(np.clip(eigvals, 0.0, None))))
    diff = a.mu - b.mu
    distance = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * trace_sqrt)
    return max(distance, 0.0)


# =====================================================
# 3. INCEPTION SCORE
# =====================================================
def inception_score(probabilities: np.ndarray, splits: int = 10) -> tuple[float, float]:
    """
    exp(mean KL(p(y|x) || p(y))) per split

    Returns:
        tuple: (mean, std) over splits
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ContractError(f"expected an (n, C) probability matrix, got shape {probs.shape}")
    if splits < 1 or probs.shape[0] < splits:
        raise ContractError(f"{probs.shape[0]} rows cannot form {splits} splits")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
        raise ContractError("probability rows must be non-negative and sum to 1")
    scores = []
    for part in np.array_split(probs, splits):
        marginal = part.mean(axis=0, keepdims=True)
        kl = special.rel_entr(part, marginal).sum(axis=1)
        scores.append(float(np.exp(kl.mean())))
    return float(np.mean(scores)), float(np.std(scores))


# =====================================================
# 4. REPORTS
# =====================================================
def topofid_report(model: SurrogateModel, real_images: np.ndarray, generated_images: np.ndarray,
                   variant: str = "full", seed: int = 0, splits: int = 10) -> TopoFidReport:
    """Surrogate-feature Frechet distance plus surrogate inception score"""
    if len(real_images) == 0 or len(generated_images) == 0:
        raise ContractError("TopoFID needs non-empty real and generated sets")
    for name, n in (("real", len(real_images)), ("generated", len(generated_images))):
        if n < model.feature_dim:
            logger.warning(f"[EVAL] {n} {name} samples is fewer than the feature dimension "
                           f"{model.feature_dim}; covariance is rank deficient")
    real_stats = gaussian_stats(model.extract_features(real_images))
    gen_stats = gaussian_stats(model.extract_features(generated_images))
    topofid = frechet_distance(real_stats, gen_stats)
    is_mean, is_std = inception_score(model.predict_proba(generated_images),
                                      splits=min(splits, len(generated_images)))
    logger.info(f"[EVAL] {variant}: TopoFID={topofid:.4f} IS={is_mean:.4f}+-{is_std:.4f}")
    return TopoFidReport(variant=variant, topofid=topofid, is_mean=is_mean, is_std=is_std,
                         n_real=len(real_images), n_gen=len(generated_images), seed=seed)


def write_topofid_csv(path: Union[str, Path], reports: Sequence[TopoFidReport]) -> Path:
    rows = [[r.variant, r.topofid, r.is_mean, r.is_std, r.n_real, r.n_gen, r.seed] for r in reports]
    return write_csv(path, TOPOFID_HEADER, rows)
