from typing import Literal, Optional

from pydantic import BaseModel, Field

from app.api.routing import RunRequest
from app.core.augmentation import AugmentationComparison, AugmentConfig
from app.core.evaluation import SurrogateConfig
from app.core.gan import TrainConfig, Variant
from app.core.patterns import DatasetConfig
from app.models import TopoFidReport


class BenchRequest(RunRequest):
    """Schema for the ablation matrix plus the augmentation comparison"""
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    surrogate: SurrogateConfig = Field(default_factory=SurrogateConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    variants: list[Variant] = Field(default_factory=lambda: ["full", "no-fft", "no-blur", "no-recon"],
                                    min_length=1)
    seeds: int = Field(3, ge=1, description="Number of training seeds per variant")
    n_generated: int = Field(30, ge=2, description="Generated images per class for TopoFID")
    splits: int = Field(10, ge=1, description="Inception score splits")
    augmentation_profile: Literal["aeruginosa", "aureus", "macrophage"] = "macrophage"
    augmentation_scale: float = Field(0.1, gt=0.0, description="profile_scale of the imbalanced dataset")
    skip_augmentation: bool = False


class VariantSummary(BaseModel):
    variant: str
    topofid_median: float
    is_mean_median: float
    seeds: int


class BenchResponse(BaseModel):
    """Schema for the bench command summary"""
    ablation: str
    ablation_summary: str
    augmentation: Optional[str] = None
    summary: list[VariantSummary]
    reports: list[TopoFidReport]
    comparisons: list[AugmentationComparison] = Field(default_factory=list)
