from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


HiddenActivation = Literal["relu", "leaky_relu", "tanh", "sigmoid", "softplus"]
OutputActivation = Literal["tanh", "identity"]
ConsensusMode = Literal["majority", "median"]
BoundaryMode = Literal["reflect", "wrap"]
ThresholdMode = Literal["quantile", "absolute"]


class MlpSpec(BaseModel):
    """Schema for a dense network: layer widths plus activations"""
    widths: list[int] = Field(..., min_length=2, description="Input width, hidden widths, output width")
    hidden_activation: HiddenActivation = "leaky_relu"
    output_activation: OutputActivation = "identity"
    leaky_slope: float = Field(0.2, ge=0.0, lt=1.0)

    model_config = ConfigDict(extra="forbid", frozen=True)

    @field_validator("widths")
    @classmethod
    def _positive_widths(cls, widths: list[int]) -> list[int]:
        if any(w < 1 for w in widths):
            raise ValueError("every layer width must be >= 1")
        return widths

    @property
    def num_layers(self) -> int:
        return len(self.widths) - 1


class AdamHyper(BaseModel):
    """Schema for Adam optimizer hyperparameters"""
    step_size: float = Field(1e-4, gt=0.0)
    beta1: float = Field(0.5, ge=0.0, lt=1.0)
    beta2: float = Field(0.9, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)

    model_config = ConfigDict(extra="forbid")


class PeakDetectConfig(BaseModel):
    """Schema for frequency-profile peak detection"""
    alpha_fft: float = Field(0.5, gt=0.0, lt=1.0, description="Threshold sensitivity between min and max")
    radius: int = Field(1, ge=1, description="Neighbourhood radius (bins) for the local-max test")
    regularity_tolerance: float = Field(0.25, gt=0.0, description="Allowed relative deviation from the modal gap")
    harmonic_fraction: float = Field(0.5, gt=0.0, le=1.0,
                                     description="Relaxed cut between min and tau for bins on a finer lattice")

    model_config = ConfigDict(extra="forbid")


class BlurConfig(BaseModel):
    """Schema for an isotropic Gaussian blur"""
    kernel_size: int = Field(..., ge=1)
    sigma: float = Field(..., gt=0.0)

    model_config = ConfigDict(extra="forbid")

    @field_validator("kernel_size")
    @classmethod
    def _odd_kernel(cls, k: int) -> int:
        if k % 2 == 0:
            raise ValueError("kernel_size must be odd")
        return k

    @classmethod
    def for_kernel(cls, kernel_size: int) -> "BlurConfig":
        # +-3 sigma inside the kernel, never narrower than 0.8 px
        return cls(kernel_size=kernel_size, sigma=max(kernel_size / 6.0, 0.8))


class LossWeights(BaseModel):
    """Schema for generator/critic loss weights and schedule"""
    lambda_w: float = Field(1.0, ge=0.0)
    lambda_cls: float = Field(1.0, ge=0.0)
    lambda_blur: float = Field(0.5, ge=0.0)
    lambda_recon: float = Field(0.5, ge=0.0)
    lambda_gp: float = Field(10.0, ge=0.0)
    recon_start_epoch: int = Field(10, ge=0)
    n_critic: int = Field(5, ge=1)

    model_config = ConfigDict(extra="forbid")


class ImbalanceProfile(BaseModel):
    """Schema for per-class train counts plus the balanced test size"""
    train_counts: list[int] = Field(..., min_length=2)
    test_per_class: int = Field(..., ge=0)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _non_negative(self) -> "ImbalanceProfile":
        if any(n < 0 for n in self.train_counts):
            raise ValueError("train_counts must be non-negative")
        return self
