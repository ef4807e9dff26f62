"""
Configuration models for the AV2vec model, corruption, teacher and training

Each section is a pydantic model; unknown keys are rejected so a typo in a
config file fails before any work starts.
"""

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from data_pipeline.ingestion.synthetic_corpus import CorpusSpec

from .algorithms.av_constants import (
    ADAM_BETAS,
    ADAM_EPS,
    BASE,
    FINAL_LR_RATIO,
    INSTANCE_NORM_EPS,
    TOY,
)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class ModelConfig(_Section):
    """Feature extractor, encoder and head dimensions"""

    d_feat: int = Field(default=TOY.d_feat, ge=1, description="Per-modality intermediate feature width")
    num_layers: int = Field(default=TOY.num_layers, ge=1, description="Transformer blocks")
    d_model: int = Field(default=TOY.d_model, ge=1, description="Transformer embedding dimension")
    ffn_dim: int = Field(default=TOY.ffn_dim, ge=1, description="Transformer feed-forward dimension")
    num_heads: int = Field(default=TOY.num_heads, ge=1, description="Attention heads")
    video_channels: int = Field(default=TOY.video_channels, ge=1, description="Visual front-end channels")
    residual_blocks: int = Field(default=TOY.residual_blocks, ge=0, description="Visual front-end residual blocks")
    video_kernel_time: int = Field(default=5, ge=1, description="Temporal extent of the 3D convolution stem (odd)")
    video_stem_stride: int = Field(default=2, ge=1, description="Spatial stride of the 3D convolution stem")
    num_clusters: int = Field(default=TOY.num_clusters, ge=1, description="K: MLM head classes")
    dtype: Literal["float32", "float64"] = Field(default="float32", description="Parameter dtype; float64 is the reference mode")

    @model_validator(mode="after")
    def _check_heads(self):
        if self.d_model % self.num_heads != 0:
            raise ValueError(f"d_model={self.d_model} must be divisible by num_heads={self.num_heads}")
        if self.video_kernel_time % 2 == 0:
            raise ValueError(f"video_kernel_time={self.video_kernel_time} must be odd")
        return self


class CorruptionConfig(_Section):
    """Student-side corruption probabilities and mask policies"""

    mask_rate_audio: float = Field(default=BASE.mask_rate_audio, ge=0.0, le=1.0, description="Fraction of audio frames masked")
    mask_rate_video: float = Field(default=BASE.mask_rate_video, ge=0.0, le=1.0, description="Fraction of video frames masked")
    span_len_audio: int = Field(default=10, ge=1, description="Audio mask span length in frames")
    span_len_video: int = Field(default=5, ge=1, description="Video mask span length in frames")
    p_noise: float = Field(default=BASE.p_noise, ge=0.0, le=1.0, description="Probability of adding noise to student audio")
    p_m: float = Field(default=BASE.p_m, ge=0.0, le=1.0, description="Probability that both modalities are kept")
    p_a: float = Field(default=BASE.p_a, ge=0.0, le=1.0, description="Probability of keeping audio when one modality is dropped")
    tied_masks: bool = Field(default=False, description="Reuse the audio mask indices for video")


class DistillConfig(_Section):
    """EMA teacher and target construction"""

    ema_lambda_b: float = Field(default=BASE.ema_lambda_b, gt=0.0, lt=1.0, description="Initial EMA decay")
    ema_lambda_e: float = Field(default=BASE.ema_lambda_e, gt=0.0, lt=1.0, description="Final EMA decay")
    ema_n: int = Field(default=BASE.ema_n, ge=1, description="Updates over which decay ramps linearly")
    avg_last_k: int = Field(default=TOY.avg_last_k, ge=1, description="Teacher layers averaged into targets")
    teacher_dropout_mode: Literal["none", "same", "opposite"] = Field(default="none", description="Teacher modality dropout ablation")
    instance_norm_eps: float = Field(default=INSTANCE_NORM_EPS, gt=0.0, description="Instance norm epsilon")
    normalize_after_average: bool = Field(default=False, description="Normalize once after averaging instead of per layer")
    reg_weight: float = Field(default=1.0, ge=0.0, description="Weight of the regression loss")
    mlm_weight: float = Field(default=1.0, ge=0.0, description="Weight of the MLM loss")

    @model_validator(mode="after")
    def _check_schedule(self):
        if self.ema_lambda_b > self.ema_lambda_e:
            raise ValueError("ema_lambda_b must not exceed ema_lambda_e")
        return self


class PretrainConfig(_Section):
    """Pretraining loop settings"""

    batch_size: int = Field(default=TOY.batch_size, ge=1, description="Utterances per update")
    total_updates: int = Field(default=TOY.total_updates, ge=0, description="Optimizer updates")
    peak_lr: float = Field(default=BASE.peak_lr, gt=0.0, description="Peak learning rate")
    warmup_frac: float = Field(default=BASE.warmup_frac, ge=0.0, le=1.0, description="Linear warmup fraction")
    constant_frac: float = Field(default=BASE.constant_frac, ge=0.0, le=1.0, description="Constant phase fraction")
    decay_frac: float = Field(default=BASE.decay_frac, ge=0.0, le=1.0, description="Exponential decay fraction")
    final_lr_ratio: float = Field(default=FINAL_LR_RATIO, gt=0.0, le=1.0, description="Final LR as a fraction of peak")
    adam_beta1: float = Field(default=ADAM_BETAS[0], ge=0.0, lt=1.0, description="Adam beta1")
    adam_beta2: float = Field(default=ADAM_BETAS[1], ge=0.0, lt=1.0, description="Adam beta2")
    adam_eps: float = Field(default=ADAM_EPS, gt=0.0, description="Adam epsilon")
    checkpoint_interval: int = Field(default=500, ge=1, description="Updates between checkpoints")

    @model_validator(mode="after")
    def _check_fractions(self):
        total = self.warmup_frac + self.constant_frac + self.decay_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"warmup_frac + constant_frac + decay_frac must be 1.0, got {total}")
        return self


class FinetuneConfig(_Section):
    """Frame-classification probe finetuning"""

    freeze_steps: int = Field(default=200, ge=0, description="Initial updates with the encoder frozen")
    total_updates: int = Field(default=400, ge=0, description="Probe finetuning updates")
    lr: float = Field(default=1e-3, gt=0.0, description="Probe learning rate")
    batch_size: int = Field(default=8, ge=1, description="Utterances per update")
    task: Literal["avsr", "asr", "vsr"] = Field(default="avsr", description="Input modalities during finetuning")
    add_noise: bool = Field(default=True, description="Add training noise to audio (never for vsr)")

    @model_validator(mode="after")
    def _check_freeze(self):
        if self.freeze_steps > self.total_updates:
            raise ValueError("freeze_steps must not exceed total_updates")
        return self


class ClusterConfig(_Section):
    """k-means target derivation"""

    num_clusters: Optional[int] = Field(default=None, ge=2, description="K; defaults to model.num_clusters")
    feature_layer: Optional[int] = Field(default=None, ge=1, description="1-based layer clustered; defaults to the middle layer")
    max_iters: int = Field(default=100, ge=1, description="Lloyd iterations")


class RunConfig(_Section):
    """One experiment: every section plus mode, seed and run directory"""

    mode: Literal["av2vec", "av2vec-mlm"] = Field(default="av2vec", description="av2vec regression only, or av2vec-mlm with k-means targets")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Global 64-bit seed")
    run_dir: str = Field(default="runs/default", description="Output directory of this run")
    corpus: CorpusSpec = Field(default_factory=CorpusSpec, description="Synthetic corpus shape")
    model: ModelConfig = Field(default_factory=ModelConfig)
    corruption: CorruptionConfig = Field(default_factory=CorruptionConfig)
    distill: DistillConfig = Field(default_factory=DistillConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = Field(default_factory=FinetuneConfig)
    cluster: ClusterConfig = Field(default_factory=ClusterConfig)

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.distill.avg_last_k > self.model.num_layers:
            raise ValueError(
                f"distill.avg_last_k={self.distill.avg_last_k} exceeds model.num_layers={self.model.num_layers}"
            )
        if self.cluster.feature_layer is not None and self.cluster.feature_layer > self.model.num_layers:
            raise ValueError(
                f"cluster.feature_layer={self.cluster.feature_layer} exceeds model.num_layers={self.model.num_layers}"
            )
        if self.cluster.num_clusters is not None and self.cluster.num_clusters != self.model.num_clusters:
            raise ValueError(
                f"cluster.num_clusters={self.cluster.num_clusters} must match model.num_clusters={self.model.num_clusters}"
            )
        return self

    @property
    def mlm_enabled(self) -> bool:
        return self.mode == "av2vec-mlm"

    @property
    def num_clusters(self) -> int:
        return self.cluster.num_clusters or self.model.num_clusters

    @property
    def audio_in_dim(self) -> int:
        """Audio width after stacking to the video rate"""
        return self.corpus.audio_dim * self.corpus.rate_ratio
