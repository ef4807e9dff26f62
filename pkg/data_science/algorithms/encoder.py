"""
Fusion, Transformer Encoder and Prediction Heads

The student path is: extract -> mask -> modality dropout -> fuse -> encode
-> heads. ``AV2vecModel`` owns every student parameter; the teacher keeps an
EMA copy of ``model.encoder`` only (see distill.py).

Usage:
    model = build_model(ModelConfig(), audio_in_dim=64, video_shape=(16, 16, 1), mlm_enabled=False)
    out = student_forward(model, audio, video, audio_mask, video_mask, ModalitySelection.BOTH)
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import torch
import torch.nn as nn

from ..config import ModelConfig
from .corruption import MaskEmbeddings, MaskSet, ModalitySelection, apply_mask, apply_modality_dropout
from .errors import ConfigurationError, ShapeError
from .features import AudioExtractor, VideoExtractor


def fuse(audio_features: torch.Tensor, video_features: torch.Tensor) -> torch.Tensor:
    """Channel-wise concatenation, audio channels first"""
    if audio_features.shape[:-1] != video_features.shape[:-1]:
        raise ShapeError(
            f"cannot fuse audio {tuple(audio_features.shape)} with video {tuple(video_features.shape)}"
        )
    return torch.cat([audio_features, video_features], dim=-1)


def sinusoidal_encoding(num_frames: int, d_model: int, dtype: torch.dtype, device=None) -> torch.Tensor:
    """(T, d_model) fixed sin/cos table"""
    position = torch.arange(num_frames, dtype=torch.float64, device=device).unsqueeze(1)
    div_term = torch.exp(
        torch.arange(0, d_model, 2, dtype=torch.float64, device=device) * (-math.log(10000.0) / d_model)
    )
    pe = torch.zeros(num_frames, d_model, dtype=torch.float64, device=device)
    pe[:, 0::2] = torch.sin(position * div_term)
    pe[:, 1::2] = torch.cos(position * div_term[: d_model // 2])
    return pe.to(dtype)


class TransformerBlock(nn.Module):
    """Pre-norm block: x + MHA(LN(x)), then x + FFN(LN(x))"""

    def __init__(self, d_model: int, num_heads: int, ffn_dim: int):
        super().__init__()
        self.attn_norm = nn.LayerNorm(d_model)
        self.attn = nn.MultiheadAttention(d_model, num_heads, dropout=0.0, batch_first=True)
        self.ffn_norm = nn.LayerNorm(d_model)
        self.ffn = nn.Sequential(
            nn.Linear(d_model, ffn_dim),
            nn.GELU(),
            nn.Linear(ffn_dim, d_model),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.attn_norm(x)
        attn_out, _ = self.attn(h, h, h, need_weights=False)
        x = x + attn_out
        return x + self.ffn(self.ffn_norm(x))


class ContextEncoder(nn.Module):
    """
    Input projection (2*d_feat -> d_model), sinusoidal positions and a stack
    of bidirectional transformer blocks.

    ``forward`` returns every block's output so the teacher can average the
    last k of them.
    """

    def __init__(self, in_dim: int, d_model: int, num_layers: int, num_heads: int, ffn_dim: int):
        super().__init__()
        if d_model % num_heads != 0:
            raise ConfigurationError(f"d_model={d_model} must be divisible by num_heads={num_heads}")
        self.in_dim = in_dim
        self.d_model = d_model
        self.input_proj = nn.Linear(in_dim, d_model)
        self.blocks = nn.ModuleList(
            [TransformerBlock(d_model, num_heads, ffn_dim) for _ in range(num_layers)]
        )

    @property
    def num_layers(self) -> int:
        return len(self.blocks)

    def forward(self, fused: torch.Tensor) -> List[torch.Tensor]:
        if fused.dim() != 3 or fused.shape[-1] != self.in_dim:
            raise ShapeError(f"encoder expects (B, T, {self.in_dim}), got {tuple(fused.shape)}")
        x = self.input_proj(fused)
        x = x + sinusoidal_encoding(x.shape[1], self.d_model, x.dtype, x.device)
        layers = []
        for block in self.blocks:
            x = block(x)
            layers.append(x)
        return layers


def regression_head(hidden: torch.Tensor, head: nn.Linear) -> torch.Tensor:
    """Per-frame predictions x_t of the teacher targets"""
    return head(hidden)


def mlm_head(hidden: torch.Tensor, head: nn.Linear) -> torch.Tensor:
    """Per-frame logits over K clusters; softmax lives in the loss"""
    return head(hidden)


class AV2vecModel(nn.Module):
    """Student parameters: extractors, mask embeddings, encoder and heads"""

    def __init__(
        self,
        config: ModelConfig,
        audio_in_dim: int,
        video_shape: Tuple[int, int, int],
        mlm_enabled: bool = False,
    ):
        super().__init__()
        self.config = config
        self.audio_in_dim = audio_in_dim
        self.video_shape = tuple(video_shape)
        self.mlm_enabled = mlm_enabled

        self.audio_extractor = AudioExtractor(audio_in_dim, config.d_feat)
        self.video_extractor = VideoExtractor(
            in_channels=self.video_shape[2],
            channels=config.video_channels,
            d_feat=config.d_feat,
            num_blocks=config.residual_blocks,
            kernel_time=config.video_kernel_time,
            stem_stride=config.video_stem_stride,
        )
        self.mask_embeddings = MaskEmbeddings(config.d_feat)
        self.encoder = ContextEncoder(
            2 * config.d_feat, config.d_model, config.num_layers, config.num_heads, config.ffn_dim
        )
        self.regression_head = nn.Linear(config.d_model, config.d_model)
        self.mlm_head: Optional[nn.Linear] = (
            nn.Linear(config.d_model, config.num_clusters) if mlm_enabled else None
        )

    @property
    def dtype(self) -> torch.dtype:
        return self.regression_head.weight.dtype

    def extract(self, audio: torch.Tensor, video: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """(F^a, F^v), both (B, T, d_feat)"""
        fa = self.audio_extractor(audio)
        fv = self.video_extractor(video)
        if fa.shape[1] != fv.shape[1]:
            raise ShapeError(f"audio has {fa.shape[1]} frames after alignment, video has {fv.shape[1]}")
        return fa, fv

    def check_num_clusters(self, num_clusters: int) -> None:
        if self.mlm_head is None:
            raise ConfigurationError("model was built without an MLM head")
        if num_clusters != self.mlm_head.out_features:
            raise ConfigurationError(
                f"targets have K={num_clusters} classes, MLM head predicts {self.mlm_head.out_features}"
            )

    def describe(self) -> dict:
        """Architecture keys needed to rebuild this model"""
        return {
            "model": self.config.model_dump(),
            "audio_in_dim": self.audio_in_dim,
            "video_shape": list(self.video_shape),
            "mlm_enabled": self.mlm_enabled,
        }


@dataclass
class StudentOutput:
    layers: List[torch.Tensor]
    predictions: torch.Tensor
    logits: Optional[torch.Tensor]


def student_forward(
    model: AV2vecModel,
    audio: torch.Tensor,
    video: torch.Tensor,
    audio_mask: MaskSet,
    video_mask: MaskSet,
    selection: ModalitySelection,
) -> StudentOutput:
    """Corrupted forward pass; ``audio`` is already noised and rate-aligned"""
    fa, fv = model.extract(audio, video)
    fa = apply_mask(fa, audio_mask, model.mask_embeddings.e_audio)
    fv = apply_mask(fv, video_mask, model.mask_embeddings.e_video)
    fa, fv = apply_modality_dropout(fa, fv, selection)
    layers = model.encoder(fuse(fa, fv))
    top = layers[-1]
    predictions = regression_head(top, model.regression_head)
    logits = mlm_head(top, model.mlm_head) if model.mlm_head is not None else None
    return StudentOutput(layers, predictions, logits)


def encode_clean(
    model: AV2vecModel,
    audio: torch.Tensor,
    video: torch.Tensor,
    selection: ModalitySelection = ModalitySelection.BOTH,
) -> List[torch.Tensor]:
    """Student encoder layers on uncorrupted input (feature dumps, probes)"""
    fa, fv = model.extract(audio, video)
    fa, fv = apply_modality_dropout(fa, fv, selection)
    return model.encoder(fuse(fa, fv))


def build_model(
    config: ModelConfig,
    audio_in_dim: int,
    video_shape: Tuple[int, int, int],
    mlm_enabled: bool = False,
    seed: Optional[int] = None,
) -> AV2vecModel:
    """
    Factory function for the student model.

    With ``seed`` the initialization is reproducible and leaves the global
    torch RNG untouched.
    """
    dtype = getattr(torch, config.dtype)
    if seed is None:
        return AV2vecModel(config, audio_in_dim, video_shape, mlm_enabled).to(dtype)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = AV2vecModel(config, audio_in_dim, video_shape, mlm_enabled)
    return model.to(dtype)
