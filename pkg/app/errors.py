from typing import Optional


class PipelineError(Exception):
    """Base error carrying a human-readable detail and the CLI exit code"""
    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class ConfigurationError(PipelineError):
    exit_code = 2


class ContractError(PipelineError):
    exit_code = 2


class ShapeError(ContractError):
    def __init__(self, detail: str, layer: Optional[int] = None):
        if layer is not None:
            detail = f"layer {layer}: {detail}"
        super().__init__(detail)
        self.layer = layer


class LabelError(ContractError):
    pass


class PatternSpecError(ContractError):
    pass


class InsufficientSamplesError(ConfigurationError):
    def __init__(self, deficits: dict[int, int]):
        listing = ", ".join(f"class {c}: short by {n}" for c, n in sorted(deficits.items()))
        super().__init__(f"Not enough accepted synthetic samples ({listing})")
        self.deficits = deficits


class NumericalError(PipelineError):
    exit_code = 3


class TrainingDivergenceError(NumericalError):
    def __init__(self, detail: str, iteration: Optional[int] = None):
        if iteration is not None:
            detail = f"{detail} (iteration {iteration})"
        super().__init__(detail)
        self.iteration = iteration
