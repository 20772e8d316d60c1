from pydantic import BaseModel, Field

from app.api.routing import RunRequest
from app.core.patterns import DatasetConfig


class SynthRequest(DatasetConfig, RunRequest):
    """Schema for the synth command: dataset settings plus the output directory"""
    pass


class SynthResponse(BaseModel):
    """Schema for the synth command summary"""
    manifest: str
    period: int = Field(..., description="Repetition count of every image along each axis")
    num_classes: int
    train_counts: list[int]
    test_counts: list[int]
