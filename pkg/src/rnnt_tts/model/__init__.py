from .config import GstConfig, ModelConfig, StackConfig, UnknownKeyError, full_scale_config, tiny_config
from .network import (
    Joint,
    Predictor,
    PredictorState,
    ResidualHead,
    StyleEncoder,
    TextEncoder,
    TransducerTTS,
    param_count,
)

__all__ = [
    "GstConfig", "Joint", "ModelConfig", "Predictor", "PredictorState", "ResidualHead", "StackConfig",
    "StyleEncoder", "TextEncoder", "TransducerTTS", "UnknownKeyError", "param_count", "full_scale_config",
    "tiny_config",
]
