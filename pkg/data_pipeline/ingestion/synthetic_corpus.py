"""
Synthetic Paired Audio-Visual Corpus

Both streams are rendered from one latent phone-like state path, so each
modality carries information about the other and cross-modal distillation
is learnable.

Usage:
    from data_pipeline.ingestion.synthetic_corpus import CorpusSpec, generate_corpus

    corpus = generate_corpus(CorpusSpec(num_utterances=200, num_latent_states=8, seed=0))
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Literal, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.ndimage import gaussian_filter1d

from data_science.algorithms.errors import ConfigurationError, ShapeError
from data_science.algorithms.rng import derive_rng
from data_science.algorithms.sequences import FeatureSequence

logger = logging.getLogger(__name__)

# Stream keys for seed derivation
_WORLD_STREAM = 1
_UTTERANCE_STREAM = 2
_SPLIT_STREAM = 3


class CorpusSpec(BaseModel):
    """Shape and randomness of a synthetic corpus"""

    model_config = ConfigDict(extra="forbid")

    num_utterances: int = Field(default=200, ge=0, description="Utterances to generate")
    frames_per_utterance: Tuple[int, int] = Field(default=(40, 80), description="[T_min, T_max] video-rate frames")
    num_latent_states: int = Field(default=8, ge=2, description="Phone-like latent classes")
    audio_dim: int = Field(default=16, ge=1, description="Audio feature dimension per audio frame")
    video_dim_spatial: Tuple[int, int, int] = Field(default=(16, 16, 1), description="(height, width, channels) of video frames")
    latent_dwell: float = Field(default=6.0, ge=1.0, description="Mean frames spent in one latent state")
    audio_jitter: float = Field(default=0.3, ge=0.0, description="Std of i.i.d. audio frame jitter")
    video_jitter: float = Field(default=0.3, ge=0.0, description="Std of i.i.d. video pixel jitter")
    video_smoothing: float = Field(default=1.0, ge=0.0, description="Gaussian sigma (frames) of video temporal smoothing")
    audio_rate_hz: float = Field(default=100.0, gt=0.0, description="Audio frame rate")
    video_rate_hz: float = Field(default=25.0, gt=0.0, description="Video frame rate; the common model rate")
    visual_type: Literal["face", "lip"] = Field(default="face", description="Full-frame or central-region rendering")
    noise_bank_size: int = Field(default=8, ge=1, description="Colored noise sequences in the bank")
    noise_color: Literal["white", "pink", "brown"] = Field(default="pink", description="AR(1) color of the noise bank")
    test_fraction: float = Field(default=0.2, ge=0.0, lt=1.0, description="Held-out fraction for evaluation")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="64-bit corpus seed")
    n_jobs: int = Field(default=1, description="joblib workers for generation")

    @model_validator(mode="after")
    def _check_ranges(self):
        t_min, t_max = self.frames_per_utterance
        if t_min < 1 or t_max < t_min:
            raise ValueError(f"frames_per_utterance must satisfy 1 <= T_min <= T_max, got {self.frames_per_utterance}")
        if min(self.video_dim_spatial) < 1:
            raise ValueError(f"video_dim_spatial entries must be >= 1, got {self.video_dim_spatial}")
        ratio = self.audio_rate_hz / self.video_rate_hz
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError(f"audio_rate_hz / video_rate_hz must be a positive integer, got {ratio}")
        return self

    @property
    def rate_ratio(self) -> int:
        return int(round(self.audio_rate_hz / self.video_rate_hz))


@dataclass
class SyntheticSample:
    """One utterance: latent path plus clean audio and video rendered from it"""

    latent_labels: np.ndarray
    audio_clean: FeatureSequence
    video: FeatureSequence
    utterance_id: str

    def __post_init__(self):
        t = self.video.num_frames
        if self.latent_labels.shape != (t,):
            raise ShapeError(f"{self.utterance_id}: {self.latent_labels.shape[0]} labels for {t} video frames")
        ratio = self.audio_clean.frame_rate_hz / self.video.frame_rate_hz
        if self.audio_clean.num_frames // int(round(ratio)) != t:
            raise ShapeError(
                f"{self.utterance_id}: {self.audio_clean.num_frames} audio frames at ratio {ratio} do not align with {t} video frames"
            )

    @property
    def num_frames(self) -> int:
        return self.video.num_frames

    def with_audio(self, audio: FeatureSequence) -> "SyntheticSample":
        return replace(self, audio_clean=audio)


def validate_spec(spec: Union[CorpusSpec, dict]) -> CorpusSpec:
    """Coerce a dict or spec into a validated CorpusSpec"""
    if isinstance(spec, CorpusSpec):
        return spec
    try:
        return CorpusSpec.model_validate(spec)
    except ValidationError as e:
        raise ConfigurationError(f"invalid corpus spec: {e}") from e


class SyntheticCorpusGenerator:
    """
    Renders utterances from a shared set of per-state templates.

    Audio frames are a per-state template passed through a fixed linear map
    plus jitter. Video frames are a temporally smoothed mix of per-state
    spatial patterns plus jitter.
    """

    def __init__(self, spec: CorpusSpec):
        self.spec = spec
        rng = derive_rng(spec.seed, _WORLD_STREAM)
        k = spec.num_latent_states
        h, w, c = spec.video_dim_spatial

        base = rng.normal(size=(k, spec.audio_dim))
        mixing = rng.normal(size=(spec.audio_dim, spec.audio_dim)) / np.sqrt(spec.audio_dim)
        self._audio_templates = (base @ mixing).astype(np.float32)

        patterns = rng.normal(size=(k, h, w, c))
        if spec.visual_type == "lip":
            # state information only in the central region
            texture = 0.5 * rng.normal(size=(h, w, c))
            inner = np.zeros((h, w), dtype=bool)
            inner[h // 4: h // 4 + max(1, h // 2), w // 4: w // 4 + max(1, w // 2)] = True
            patterns = np.where(inner[None, :, :, None], patterns, texture[None])
        self._video_patterns = patterns.astype(np.float32)

    @property
    def audio_templates(self) -> np.ndarray:
        """(num_latent_states, audio_dim) noiseless audio frame per state"""
        return self._audio_templates

    @property
    def video_patterns(self) -> np.ndarray:
        return self._video_patterns

    def latent_path(self, rng: np.random.Generator, num_frames: int) -> np.ndarray:
        """Piecewise-constant Markov path; each switch moves to a different state"""
        k = self.spec.num_latent_states
        labels = np.empty(num_frames, dtype=np.int64)
        state = int(rng.integers(k))
        t = 0
        while t < num_frames:
            dwell = 1 + int(rng.poisson(self.spec.latent_dwell - 1.0))
            labels[t: t + dwell] = state
            t += dwell
            state = int((state + rng.integers(1, k)) % k)
        return labels

    def generate_one(self, index: int) -> SyntheticSample:
        spec = self.spec
        rng = derive_rng(spec.seed, _UTTERANCE_STREAM, index)
        t_min, t_max = spec.frames_per_utterance
        num_frames = int(rng.integers(t_min, t_max + 1))
        labels = self.latent_path(rng, num_frames)

        audio_states = np.repeat(labels, spec.rate_ratio)
        audio = self._audio_templates[audio_states]
        if spec.audio_jitter > 0:
            audio = audio + (spec.audio_jitter * rng.normal(size=audio.shape)).astype(np.float32)

        k = spec.num_latent_states
        weights = np.eye(k)[labels]
        if spec.video_smoothing > 0:
            weights = gaussian_filter1d(weights, sigma=spec.video_smoothing, axis=0, mode="nearest")
        video = np.tensordot(weights, self._video_patterns, axes=(1, 0))
        if spec.video_jitter > 0:
            video = video + spec.video_jitter * rng.normal(size=video.shape)

        return SyntheticSample(
            latent_labels=labels,
            audio_clean=FeatureSequence("audio", audio.astype(np.float32), spec.audio_rate_hz),
            video=FeatureSequence("video", video.astype(np.float32), spec.video_rate_hz),
            utterance_id=f"utt{index:06d}",
        )

    def generate(self, indices: Sequence[int]) -> List[SyntheticSample]:
        if self.spec.n_jobs == 1 or len(indices) < 2:
            return [self.generate_one(i) for i in indices]
        return Parallel(n_jobs=self.spec.n_jobs)(delayed(self.generate_one)(i) for i in indices)


def create_corpus_generator(spec: Union[CorpusSpec, dict]) -> SyntheticCorpusGenerator:
    """Factory function to create a generator from a spec or dict"""
    return SyntheticCorpusGenerator(validate_spec(spec))


def generate_corpus(spec: Union[CorpusSpec, dict]) -> List[SyntheticSample]:
    """Generate the full corpus; deterministic given the spec's seed"""
    generator = create_corpus_generator(spec)
    corpus = generator.generate(range(generator.spec.num_utterances))
    logger.info(f"✓ Generated {len(corpus)} synthetic utterances ({generator.spec.num_latent_states} latent states)")
    return corpus


def split_corpus(
    corpus: Sequence[SyntheticSample], test_fraction: float, seed: int
) -> Tuple[List[SyntheticSample], List[SyntheticSample]]:
    """Seeded utterance-level split into (train, test)"""
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigurationError(f"test_fraction must be in [0, 1), got {test_fraction}")
    order = derive_rng(seed, _SPLIT_STREAM).permutation(len(corpus))
    num_test = int(round(test_fraction * len(corpus)))
    test_ids = set(order[:num_test].tolist())
    train = [s for i, s in enumerate(corpus) if i not in test_ids]
    test = [s for i, s in enumerate(corpus) if i in test_ids]
    return train, test
