from typing import Optional

from pydantic import BaseModel, Field

from app.api.routing import RunRequest
from app.core.augmentation import AcceptanceReport, AugmentationComparison, AugmentConfig
from app.core.evaluation import SurrogateConfig


class AugmentRequest(AugmentConfig, RunRequest):
    """Schema for the augment command"""
    data: str = Field(..., description="Manifest of the imbalanced real dataset")
    generator: str = Field(..., description="Generator checkpoint written by train")
    surrogate: Optional[str] = Field(None, description="Surrogate checkpoint; trained on --data when omitted")
    surrogate_config: SurrogateConfig = Field(default_factory=SurrogateConfig)
    evaluate: bool = Field(True, description="Retrain the surrogate on the augmented set and compare")
    dataset_name: str = "synthetic"


class AugmentResponse(BaseModel):
    """Schema for the augment command summary"""
    manifest: str
    acceptance: AcceptanceReport
    comparison: Optional[AugmentationComparison] = None
