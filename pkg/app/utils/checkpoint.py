import logging
from pathlib import Path
from typing import Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from app.config import settings
from app.errors import ConfigurationError
from app.utils.storage import write_json

logger = logging.getLogger(__name__)

CheckpointT = TypeVar("CheckpointT", bound=BaseModel)


def save_checkpoint(path: Union[str, Path], checkpoint: BaseModel) -> Path:
    """Single JSON document; floats are written in shortest round-trip form"""
    path = write_json(path, checkpoint)
    logger.info(f"[CHECKPOINT] Saved {type(checkpoint).__name__} to {path}")
    return path


def load_checkpoint(path: Union[str, Path], model: Type[CheckpointT]) -> CheckpointT:
    """
    Read and validate a checkpoint document

    Args:
        path: JSON file written by save_checkpoint
        model: Expected checkpoint schema

    Returns:
        The validated checkpoint
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"checkpoint not found: {path}")
    try:
        checkpoint = model.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigurationError(f"{path} is not a valid {model.__name__}: {str(e)}")
    version = getattr(checkpoint, "format_version", settings.CHECKPOINT_FORMAT_VERSION)
    if version != settings.CHECKPOINT_FORMAT_VERSION:
        raise ConfigurationError(
            f"{path}: checkpoint format {version}, expected {settings.CHECKPOINT_FORMAT_VERSION}")
    return checkpoint
