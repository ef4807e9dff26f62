"""
Student-Side Input Corruption

Order applied to the student: noise on raw audio -> feature extraction ->
span masking with learned embeddings -> modality dropout -> fusion. The
teacher never sees any of these corruptions.

All samplers are pure functions of their inputs and a numpy Generator.
Per-sample generators come from ``sample_rng`` so a batch's corruptions do
not depend on the order samples are visited.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
import torch
import torch.nn as nn

from ..config import CorruptionConfig
from .errors import ConfigurationError, IndexRangeError, ShapeError
from .rng import derive_rng, stable_id


class Purpose(int, Enum):
    """Seed-derivation keys for each stochastic decision"""
    NOISE = 1
    MASK_AUDIO = 2
    MASK_VIDEO = 3
    DROPOUT = 4
    NOISE_MIX = 5
    PROBE_NOISE = 6
    PROBE_NOISE_MIX = 7


def sample_rng(seed: int, utterance_id: str, purpose: Purpose, epoch: int) -> np.random.Generator:
    """Generator for one (sample, decision, epoch) triple"""
    return derive_rng(seed, stable_id(utterance_id), int(purpose), epoch)


@dataclass(frozen=True)
class MaskPolicy:
    """Span masking rule for one modality"""
    mask_rate: float
    span_length: int

    def __post_init__(self):
        if not 0.0 <= self.mask_rate <= 1.0:
            raise ConfigurationError(f"mask_rate must be in [0, 1], got {self.mask_rate}")
        if self.span_length < 1:
            raise ConfigurationError(f"span_length must be >= 1, got {self.span_length}")


@dataclass(frozen=True)
class MaskSet:
    """Sorted, unique masked frame indices of one modality in one sample"""
    indices: np.ndarray
    num_frames: int

    def __post_init__(self):
        idx = self.indices
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_frames):
            raise IndexRangeError(f"mask indices must lie in [0, {self.num_frames})")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise IndexRangeError("mask indices must be sorted and unique")

    def __len__(self) -> int:
        return int(self.indices.size)

    def to_bool(self) -> np.ndarray:
        mask = np.zeros(self.num_frames, dtype=bool)
        mask[self.indices] = True
        return mask

    @classmethod
    def empty(cls, num_frames: int) -> "MaskSet":
        return cls(np.zeros(0, dtype=np.int64), num_frames)

    @classmethod
    def from_bool(cls, mask: np.ndarray) -> "MaskSet":
        return cls(np.flatnonzero(mask).astype(np.int64), int(mask.shape[0]))


class ModalitySelection(str, Enum):
    BOTH = "both"
    AUDIO_ONLY = "audio_only"
    VIDEO_ONLY = "video_only"


class MaskEmbeddings(nn.Module):
    """Learned replacement vectors e^a and e^v for masked frames"""

    def __init__(self, d_feat: int):
        super().__init__()
        self.e_audio = nn.Parameter(torch.empty(d_feat).uniform_())
        self.e_video = nn.Parameter(torch.empty(d_feat).uniform_())


def sample_noise_decision(p_noise: float, rng: np.random.Generator) -> bool:
    """True with probability ``p_noise``"""
    if not 0.0 <= p_noise <= 1.0:
        raise ConfigurationError(f"p_noise must be in [0, 1], got {p_noise}")
    return bool(rng.random() < p_noise)


def masked_count(num_frames: int, mask_rate: float) -> int:
    """round(mask_rate * T), rounding halves up"""
    return int(math.floor(mask_rate * num_frames + 0.5))


def sample_span_mask(num_frames: int, policy: MaskPolicy, rng: np.random.Generator) -> MaskSet:
    """
    Union of fixed-length spans with exactly ``round(mask_rate * T)`` frames.

    Span starts are drawn uniformly without replacement; spans are clipped
    at the sequence end and the last span's tail is trimmed to hit the
    exact count.
    """
    if num_frames < 1:
        raise ShapeError(f"cannot mask a sequence of {num_frames} frames")
    target = masked_count(num_frames, policy.mask_rate)
    mask = np.zeros(num_frames, dtype=bool)
    count = 0
    if target == 0:
        return MaskSet.empty(num_frames)
    for start in rng.permutation(num_frames):
        end = min(start + policy.span_length, num_frames)
        new = np.flatnonzero(~mask[start:end]) + start
        if count + new.size >= target:
            mask[new[: target - count]] = True
            break
        mask[new] = True
        count += new.size
    return MaskSet.from_bool(mask)


def apply_mask(features: torch.Tensor, mask: MaskSet, embedding: torch.Tensor) -> torch.Tensor:
    """
    Replace frames in ``mask`` with ``embedding``; other frames pass through
    untouched. ``features`` is (T, D) or (B, T, D) with time on dim -2.
    """
    num_frames, dim = features.shape[-2], features.shape[-1]
    if embedding.shape != (dim,):
        raise ShapeError(f"mask embedding has shape {tuple(embedding.shape)}, features have dim {dim}")
    if len(mask) and int(mask.indices.max()) >= num_frames:
        raise IndexRangeError(f"mask index {int(mask.indices.max())} out of range for {num_frames} frames")
    if not len(mask):
        return features
    selector = torch.zeros(num_frames, dtype=torch.bool, device=features.device)
    selector[torch.as_tensor(mask.indices, device=features.device)] = True
    return torch.where(selector[:, None], embedding.to(features.dtype), features)


def sample_modality_dropout(p_m: float, p_a: float, rng: np.random.Generator) -> ModalitySelection:
    """both w.p. p_m; otherwise audio_only w.p. p_a, else video_only"""
    if not (0.0 <= p_m <= 1.0 and 0.0 <= p_a <= 1.0):
        raise ConfigurationError(f"p_m and p_a must be in [0, 1], got {p_m}, {p_a}")
    if rng.random() < p_m:
        return ModalitySelection.BOTH
    if rng.random() < p_a:
        return ModalitySelection.AUDIO_ONLY
    return ModalitySelection.VIDEO_ONLY


def apply_modality_dropout(
    audio: torch.Tensor, video: torch.Tensor, selection: ModalitySelection
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Zero the dropped stream; the zeros carry no gradient back to it"""
    if audio.shape[:-1] != video.shape[:-1]:
        raise ShapeError(f"audio {tuple(audio.shape)} and video {tuple(video.shape)} frame counts differ")
    if selection == ModalitySelection.AUDIO_ONLY:
        return audio, torch.zeros_like(video)
    if selection == ModalitySelection.VIDEO_ONLY:
        return torch.zeros_like(audio), video
    return audio, video


@dataclass(frozen=True)
class CorruptionPlan:
    """All corruption decisions for one sample at one epoch"""
    add_noise: bool
    audio_mask: MaskSet
    video_mask: MaskSet
    selection: ModalitySelection

    def union_mask(self) -> np.ndarray:
        """Boolean M_a ∪ M_v over frames"""
        return self.audio_mask.to_bool() | self.video_mask.to_bool()


def audio_policy(config: CorruptionConfig) -> MaskPolicy:
    return MaskPolicy(config.mask_rate_audio, config.span_len_audio)


def video_policy(config: CorruptionConfig) -> MaskPolicy:
    return MaskPolicy(config.mask_rate_video, config.span_len_video)


def corrupt_sample(
    utterance_id: str, num_frames: int, config: CorruptionConfig, seed: int, epoch: int
) -> CorruptionPlan:
    """Draw the noise decision, both masks and the modality selection"""
    add_noise = sample_noise_decision(config.p_noise, sample_rng(seed, utterance_id, Purpose.NOISE, epoch))
    audio_mask = sample_span_mask(
        num_frames, audio_policy(config), sample_rng(seed, utterance_id, Purpose.MASK_AUDIO, epoch)
    )
    if config.tied_masks:
        video_mask = audio_mask
    else:
        video_mask = sample_span_mask(
            num_frames, video_policy(config), sample_rng(seed, utterance_id, Purpose.MASK_VIDEO, epoch)
        )
    selection = sample_modality_dropout(
        config.p_m, config.p_a, sample_rng(seed, utterance_id, Purpose.DROPOUT, epoch)
    )
    return CorruptionPlan(add_noise, audio_mask, video_mask, selection)
