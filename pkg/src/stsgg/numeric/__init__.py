"""Dense float64 matrices with reverse-mode gradients, plus transformer layers."""
from .checkpoint import CheckpointError, CompatibilityError
from .gradcheck import grad_check
from .nn import (
    AttentionConfig,
    DecoderLayer,
    EncoderLayer,
    FeedForward,
    LayerNorm,
    Linear,
    MLP,
    MultiHeadAttention,
    ParamStore,
    multi_head_attention,
    sinusoidal_pe,
    sinusoidal_pe_2d,
)
from .tensor import DimensionError, NumericError, Parameter, Tensor, no_grad
from .tensor import linear, softmax_rows, log_softmax_rows

__all__ = [
    "AttentionConfig", "CheckpointError", "CompatibilityError", "DecoderLayer", "DimensionError",
    "EncoderLayer", "FeedForward", "LayerNorm", "Linear", "MLP", "MultiHeadAttention",
    "NumericError", "ParamStore", "Parameter", "Tensor", "grad_check", "linear",
    "log_softmax_rows", "multi_head_attention", "no_grad", "sinusoidal_pe", "sinusoidal_pe_2d",
    "softmax_rows",
]
