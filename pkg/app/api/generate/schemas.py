from typing import Optional

from pydantic import BaseModel, Field

from app.api.routing import RunRequest
from app.schemas import PeakDetectConfig


class GenerateRequest(RunRequest):
    """Schema for the generate command"""
    checkpoint: str = Field(..., description="Generator checkpoint written by train")
    label: Optional[int] = Field(None, ge=0, description="Class to sample; every class when omitted")
    n: int = Field(30, ge=0, description="Images per class")
    seed: int = 0
    grid: bool = Field(True, description="Also write one PGM grid per class")
    peaks: PeakDetectConfig = Field(default_factory=PeakDetectConfig)


class GenerateResponse(BaseModel):
    """Schema for the generate command summary"""
    out: str
    counts: dict[int, int]
    estimated_period: tuple[int, int]
    period_valid: bool
    agreement_with_config_period: Optional[float] = Field(
        None, description="Fraction of images whose estimate equals the training ground-truth period")
