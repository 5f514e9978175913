"""Flow-matching camera denoiser conditioned on 2D joints and canonical motion."""
from __future__ import annotations

from .blocks import (
    GuidanceConfig,
    guided_token_assembly,
    init_block,
    mmdit_block,
    mmdit_block_backward,
    spatial_motion_attention,
    spatial_motion_attention_backward,
)
from .encoders import camera_input, encode_tokens, encode_tokens_backward, motion_input
from .flow import euler_integrate, euler_sample, fm_loss, schedule, shift_timestep
from .model import (
    Conditions,
    Denoiser,
    DenoiserConfig,
    denormalize_camera,
    normalize_camera,
)
from .train import NonFiniteLoss, TrainData, learning_rate, train_stage2


def encode_motion(m, W, b):
    """Lift a motion (or ``(B, f, k, 3)`` joints) to ``(B, f', k, d)`` tokens."""
    return encode_tokens(motion_input(m), W, b)[0]


def encode_camera(c, W, b):
    """Lift a trajectory (or ``(B, f, 9)`` parameters) to ``(B, f', 1, d)`` tokens."""
    return encode_tokens(camera_input(c), W, b)[0]


__all__ = [
    "Conditions",
    "Denoiser",
    "DenoiserConfig",
    "GuidanceConfig",
    "NonFiniteLoss",
    "TrainData",
    "denormalize_camera",
    "encode_camera",
    "encode_motion",
    "encode_tokens",
    "encode_tokens_backward",
    "euler_integrate",
    "euler_sample",
    "fm_loss",
    "guided_token_assembly",
    "init_block",
    "learning_rate",
    "mmdit_block",
    "mmdit_block_backward",
    "normalize_camera",
    "schedule",
    "shift_timestep",
    "spatial_motion_attention",
    "spatial_motion_attention_backward",
    "train_stage2",
]
