from . import tensor
from .gradcheck import GradCheckReport, grad_check
from .layers import (
    GRU,
    ConditionalLayerNorm,
    ConfigError,
    Conv1d,
    Embedding,
    FeedForward,
    KVCache,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    Param,
    TransformerBlock,
    TransformerStack,
    affine,
    conditional_layer_norm,
    multi_head_attention,
    sinusoidal_positions,
)
from .optim import AdamWState, LrSchedule, NonFiniteGradient, adamw_step, clip_grad_norm, lr_at
from .tensor import Tensor, cross_entropy, no_grad

__all__ = [
    "AdamWState", "ConditionalLayerNorm", "ConfigError", "Conv1d", "Embedding", "FeedForward", "GRU",
    "GradCheckReport", "KVCache", "LayerNorm", "Linear", "LrSchedule", "Module", "MultiHeadAttention",
    "NonFiniteGradient", "Param", "Tensor", "TransformerBlock", "TransformerStack", "adamw_step", "affine",
    "clip_grad_norm", "conditional_layer_norm", "cross_entropy", "grad_check", "lr_at", "multi_head_attention",
    "no_grad", "sinusoidal_positions", "tensor",
]
