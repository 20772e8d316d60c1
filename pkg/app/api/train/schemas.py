from typing import Optional

from pydantic import BaseModel, Field

from app.api.routing import RunRequest
from app.core.gan import TrainConfig, Variant


class TrainRequest(TrainConfig, RunRequest):
    """Schema for the train command"""
    data: str = Field(..., description="Dataset manifest (manifest.jsonl)")
    variant: Optional[Variant] = Field(None, description="Preset ablation flags: full, no-fft, no-blur, no-recon, vanilla")

    def train_config(self) -> TrainConfig:
        cfg = TrainConfig.model_validate(self.model_dump(exclude={"out", "data", "variant"}))
        return cfg.with_variant(self.variant) if self.variant else cfg


class TrainResponse(BaseModel):
    """Schema for the train command summary"""
    checkpoint: str
    metrics: str
    epochs: int
    generator_steps: int
    last_period: Optional[tuple[int, int]] = None
    last_kernel_size: Optional[int] = None
