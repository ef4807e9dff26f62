"""
Modality-Specific Feature Extractors

Audio: one feed-forward layer over rate-aligned (frame-stacked) audio.
Video: a 3D convolution stem followed by per-frame residual blocks and
spatial pooling, a scaled-down 3DCNN-ResNet front-end.

Both extractors map a (B, T, ...) input to (B, T, d_feat), preserving T.
Normalization is per sample and per channel so batches of one are stable.
"""

from typing import Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, ShapeError
from .sequences import FeatureSequence


def align_rates(audio: FeatureSequence, target_rate_hz: float) -> FeatureSequence:
    """
    Stack consecutive audio frames channel-wise so the frame rate becomes
    ``target_rate_hz``. A trailing partial group is dropped.

    Example: 8 frames of dim 4 at ratio 4 become 2 frames of dim 16, the
    first being input frames 0..3 concatenated.
    """
    ratio = audio.frame_rate_hz / target_rate_hz
    if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
        raise ConfigurationError(
            f"audio rate {audio.frame_rate_hz} Hz is not an integer multiple of {target_rate_hz} Hz"
        )
    ratio = int(round(ratio))
    if ratio == 1:
        return FeatureSequence(audio.modality, audio.frames.copy(), audio.frame_rate_hz)
    n = audio.num_frames // ratio
    if n == 0:
        raise ShapeError(f"{audio.num_frames} audio frames cannot fill one group of {ratio}")
    dim = int(np.prod(audio.feature_shape))
    stacked = audio.frames[: n * ratio].reshape(n, ratio * dim)
    return FeatureSequence(audio.modality, stacked, target_rate_hz)


class AudioExtractor(nn.Module):
    """Single feed-forward layer: (B, T, in_dim) -> (B, T, d_feat)"""

    def __init__(self, in_dim: int, d_feat: int):
        super().__init__()
        self.in_dim = in_dim
        self.proj = nn.Linear(in_dim, d_feat)

    def forward(self, audio: torch.Tensor) -> torch.Tensor:
        if audio.dim() != 3 or audio.shape[-1] != self.in_dim:
            raise ShapeError(f"audio extractor expects (B, T, {self.in_dim}), got {tuple(audio.shape)}")
        return self.proj(audio)


class ResidualBlock2d(nn.Module):
    """Basic 3x3 residual block applied frame by frame"""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1, padding_mode="replicate", bias=False)
        self.norm1 = nn.InstanceNorm2d(channels, affine=True)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1, padding_mode="replicate", bias=False)
        self.norm2 = nn.InstanceNorm2d(channels, affine=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        branch = F.relu(self.norm1(self.conv1(x)))
        branch = self.norm2(self.conv2(branch))
        return F.relu(x + branch)


class VideoExtractor(nn.Module):
    """
    (B, T, H, W, C) frames -> (B, T, d_feat).

    The stem convolves over time and space with replicate padding in time,
    so the frame count is preserved and constant input stays constant.
    """

    SPATIAL_KERNEL = 3

    def __init__(
        self,
        in_channels: int,
        channels: int,
        d_feat: int,
        num_blocks: int = 1,
        kernel_time: int = 5,
        stem_stride: int = 2,
    ):
        super().__init__()
        if kernel_time % 2 == 0:
            raise ConfigurationError(f"temporal kernel must be odd, got {kernel_time}")
        k = self.SPATIAL_KERNEL
        self.in_channels = in_channels
        self.stem = nn.Conv3d(
            in_channels, channels,
            kernel_size=(kernel_time, k, k),
            stride=(1, stem_stride, stem_stride),
            padding=(kernel_time // 2, k // 2, k // 2),
            padding_mode="replicate",
            bias=False,
        )
        self.stem_norm = nn.InstanceNorm3d(channels, affine=True)
        self.blocks = nn.ModuleList(
            [ResidualBlock2d(channels) for _ in range(num_blocks)]
        )
        self.proj = nn.Linear(channels, d_feat)

    def forward(self, video: torch.Tensor) -> torch.Tensor:
        if video.dim() != 5 or video.shape[-1] != self.in_channels:
            raise ShapeError(f"video extractor expects (B, T, H, W, {self.in_channels}), got {tuple(video.shape)}")
        b, t, h, w, _ = video.shape
        if h < self.SPATIAL_KERNEL or w < self.SPATIAL_KERNEL:
            raise ShapeError(f"frames of {h}x{w} are smaller than the {self.SPATIAL_KERNEL}x{self.SPATIAL_KERNEL} kernel")

        x = F.relu(self.stem_norm(self.stem(video.permute(0, 4, 1, 2, 3))))
        c, hs, ws = x.shape[1], x.shape[3], x.shape[4]
        x = x.transpose(1, 2).reshape(b * t, c, hs, ws)
        for block in self.blocks:
            x = block(x)
        x = x.mean(dim=(2, 3)).reshape(b, t, c)
        return self.proj(x)


def model_inputs(
    audio: FeatureSequence,
    video: FeatureSequence,
    dtype: torch.dtype = torch.float32,
    device=None,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Batch-of-one tensors for the model: rate-aligned audio (1, T, ratio*D)
    and video (1, T, H, W, C).
    """
    aligned = align_rates(audio, video.frame_rate_hz)
    if aligned.num_frames != video.num_frames:
        raise ShapeError(f"{aligned.num_frames} aligned audio frames vs {video.num_frames} video frames")
    return (
        aligned.to_tensor(dtype, device).reshape(1, aligned.num_frames, -1),
        video.to_tensor(dtype, device).unsqueeze(0),
    )
