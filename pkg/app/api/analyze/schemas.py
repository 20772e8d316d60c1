from pydantic import BaseModel, Field

from app.api.routing import RunRequest
from app.schemas import ConsensusMode


class AnalyzeRequest(RunRequest):
    """Schema for the analyze command"""
    image: str = Field(..., description="PGM image to analyze")
    alpha_fft: float = Field(0.5, gt=0.0, lt=1.0)
    radius: int = Field(1, ge=1)
    regularity_tolerance: float = Field(0.25, gt=0.0)
    consensus_mode: ConsensusMode = "majority"
    write_images: bool = Field(True, description="Write spectrum, consensus cell and reconstruction PGMs")


class AnalysisReport(BaseModel):
    """Schema for report.json written by analyze"""
    image: str
    height: int
    width: int
    profile_h: list[float] = Field(..., description="Vertical profile (row sums of the spectrum)")
    profile_w: list[float] = Field(..., description="Horizontal profile (column sums of the spectrum)")
    tau_h: float
    tau_w: float
    peaks_h: list[int]
    peaks_w: list[int]
    p_h: int
    p_w: int
    valid: bool
    kernel_size: int
    crop: tuple[int, int]
    autocorrelation_period: tuple[int, int]


class AnalyzeResponse(BaseModel):
    """Schema for the analyze command summary"""
    report: str
    p_h: int
    p_w: int
    valid: bool
    kernel_size: int
