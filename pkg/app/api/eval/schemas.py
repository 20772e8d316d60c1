from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, Field

from app.api.routing import RunRequest
from app.core.evaluation import SurrogateConfig
from app.models import ClassificationMetrics, TopoFidReport


class EvalRequest(RunRequest):
    """Schema for the eval command; --out names the CSV file"""
    out: str = Field(..., description="CSV file receiving the TopoFID row")
    real: str = Field(..., description="Manifest of the real dataset")
    generated: str = Field(..., description="Directory of generated PGM images")
    surrogate: Optional[str] = Field(None, description="Surrogate checkpoint; trained on --real when omitted")
    surrogate_config: SurrogateConfig = Field(default_factory=SurrogateConfig)
    real_split: Literal["train", "test"] = "train"
    variant: str = "full"
    splits: int = Field(10, ge=1, description="Inception score splits")
    seed: int = 0

    def output_dir(self) -> Path:
        return Path(self.out).parent


class EvalResponse(BaseModel):
    """Schema for the eval command summary"""
    csv: str
    report: TopoFidReport
    surrogate: str
    surrogate_metrics: Optional[ClassificationMetrics] = None
