from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


# =====================================================
# 1. DATASET RECORDS
# =====================================================
class DescriptorRecord(BaseModel):
    """Labeling descriptors of one binary image"""
    feature_coverage: float = Field(..., ge=0.0, le=1.0)
    mean_feature_area: float = Field(..., ge=0.0)
    feature_count: int = Field(..., ge=0)


class ManifestEntry(BaseModel):
    """One line of a dataset manifest (paths are relative to the manifest file)"""
    path: str
    label: int = Field(..., ge=0)
    coverage: float
    mean_feature_area: float
    feature_count: int
    seed: int
    split: Literal["train", "test"] = "train"
    synthetic: bool = False
    confidence: Optional[float] = None

    model_config = ConfigDict(extra="forbid")


# =====================================================
# 2. FFT GUIDANCE
# =====================================================
class UnitCellEstimate(BaseModel):
    """Estimated repetition counts along each axis plus peak diagnostics"""
    p_h: int = Field(1, ge=1)
    p_w: int = Field(1, ge=1)
    valid: bool = False
    valid_h: bool = False
    valid_w: bool = False
    peaks_h: list[int] = Field(default_factory=list)
    peaks_w: list[int] = Field(default_factory=list)
    tau_h: float = 0.0
    tau_w: float = 0.0

    @property
    def period(self) -> tuple[int, int]:
        return self.p_h, self.p_w


# =====================================================
# 3. EVALUATION
# =====================================================
class GaussianStats(BaseModel):
    """Mean vector and covariance matrix of a feature set"""
    mu: np.ndarray
    sigma: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @property
    def dim(self) -> int:
        return int(self.mu.shape[0])


class ClassificationMetrics(BaseModel):
    """Test-split metrics of a surrogate classifier"""
    accuracy: float
    macro_f1: float
    per_class_f1: list[float]
    n_test: int
    test_digest: str = Field(..., description="Fingerprint of the test split the metrics were computed on")


class TopoFidReport(BaseModel):
    """One row of the ablation table"""
    variant: str
    topofid: float
    is_mean: float
    is_std: float
    n_real: int
    n_gen: int
    seed: int


# =====================================================
# 4. AUGMENTATION
# =====================================================
class ConfidenceModel(BaseModel):
    """Per-class Gaussian over surrogate confidences plus the acceptance level"""
    means: dict[int, float]
    stds: dict[int, float]
    alpha_conf: float = Field(0.90, gt=0.0, lt=1.0)
    threshold_mode: Literal["quantile", "absolute"] = "quantile"
    sigma_floor: float = Field(1e-4, gt=0.0)


class ScoredSample(BaseModel):
    """A generated sample with its surrogate confidence for the target class"""
    sample_id: int
    label: int
    confidence: float = Field(..., ge=0.0, le=1.0)
    path: Optional[str] = None
    descriptors: Optional[DescriptorRecord] = None
    seed: int = 0

    def to_entry(self) -> ManifestEntry:
        d = self.descriptors or DescriptorRecord(feature_coverage=0.0, mean_feature_area=0.0, feature_count=0)
        return ManifestEntry(
            path=self.path or f"synthetic/{self.sample_id:06d}_c{self.label}.pgm",
            label=self.label,
            coverage=d.feature_coverage,
            mean_feature_area=d.mean_feature_area,
            feature_count=d.feature_count,
            seed=self.seed,
            split="train",
            synthetic=True,
            confidence=self.confidence,
        )
