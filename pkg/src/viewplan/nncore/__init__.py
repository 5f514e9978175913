"""Small dense-tensor kernel: layers with explicit backward rules, Adam and checkpoints."""
from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .gradcheck import grad_check, relative_error
from .optim import AdamState, adam_step
from .ops import (
    ShapeMismatch,
    apply_rotary,
    apply_rotary_backward,
    attention,
    attention_backward,
    linear,
    linear_backward,
    merge_heads,
    rmsnorm,
    rmsnorm_backward,
    rope_angles,
    rope_multiaxis,
    silu,
    silu_backward,
    softmax,
    split_heads,
)
from .params import AttentionParams, self_attention, self_attention_backward

__all__ = [
    "AdamState",
    "AttentionParams",
    "CheckpointError",
    "ShapeMismatch",
    "adam_step",
    "apply_rotary",
    "apply_rotary_backward",
    "attention",
    "attention_backward",
    "grad_check",
    "linear",
    "linear_backward",
    "merge_heads",
    "read_checkpoint",
    "relative_error",
    "rmsnorm",
    "rmsnorm_backward",
    "rope_angles",
    "rope_multiaxis",
    "self_attention",
    "self_attention_backward",
    "silu",
    "silu_backward",
    "softmax",
    "split_heads",
    "write_checkpoint",
]
