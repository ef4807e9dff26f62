"""
Reference Values for Audio-Visual Self-Distillation

BASE-size hyperparameters and the desk-scale defaults derived from them.
BASE-size values remain expressible through configuration; the toy values
are what the default configuration uses.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class BaseScale:
    """
    BASE-size model and pretraining protocol values.
    """

    # ========================================================================
    # ENCODER
    # ========================================================================

    num_layers: int = 12
    d_model: int = 768
    ffn_dim: int = 3072
    num_heads: int = 12

    # ========================================================================
    # CORRUPTION
    # ========================================================================

    p_noise: float = 0.25
    mask_rate_audio: float = 0.8
    mask_rate_video: float = 0.3
    p_m: float = 0.5
    p_a: float = 0.5

    # ========================================================================
    # TEACHER
    # ========================================================================

    ema_lambda_b: float = 0.999
    ema_lambda_e: float = 0.9999
    ema_n: int = 30_000
    avg_last_k: int = 8

    # ========================================================================
    # OPTIMIZATION
    # ========================================================================

    peak_lr: float = 5e-4
    warmup_frac: float = 0.03
    constant_frac: float = 0.90
    decay_frac: float = 0.07
    total_updates: int = 400_000


@dataclass(frozen=True)
class ToyScale:
    """
    Laptop-CPU defaults used by the default configuration.
    """

    num_layers: int = 2
    d_model: int = 128
    ffn_dim: int = 256
    num_heads: int = 4
    d_feat: int = 64
    avg_last_k: int = 2
    video_channels: int = 16
    residual_blocks: int = 1
    num_clusters: int = 16
    total_updates: int = 2000
    batch_size: int = 8


# Evaluation SNR grid in dB; +inf is the clean column
EVAL_SNR_LEVELS = (-10.0, -5.0, 0.0, 5.0, 10.0, float("inf"))

# Training-time SNR grid for sampled noise
TRAIN_SNR_LEVELS = (-10.0, -5.0, 0.0, 5.0, 10.0)

# Adam settings (the optimizer family is fixed; moments are not given)
ADAM_BETAS = (0.9, 0.98)
ADAM_EPS = 1e-6

FINAL_LR_RATIO = 0.05
INSTANCE_NORM_EPS = 1e-5

BASE = BaseScale()
TOY = ToyScale()
