"""HTTP adapter putting any classifier behind the oracle wire protocol."""

from .model import (
    BUILTIN_MODELS,
    ModelError,
    ServedModel,
    builtin_model,
    load_model,
    model_from_weights,
)
from .service import MODES, create_app

__all__ = [
    "BUILTIN_MODELS",
    "MODES",
    "ModelError",
    "ServedModel",
    "builtin_model",
    "create_app",
    "load_model",
    "model_from_weights",
]
