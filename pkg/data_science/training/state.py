"""
Mutable training state: student model, EMA teacher and Adam optimizer.
"""

from dataclasses import dataclass

import torch

from ..algorithms.distill import EmaSchedule, EmaTeacher
from ..algorithms.encoder import AV2vecModel, build_model
from ..config import RunConfig


@dataclass
class TrainingState:
    model: AV2vecModel
    teacher: EmaTeacher
    optimizer: torch.optim.Adam
    update_step: int = 0


def build_optimizer(model: AV2vecModel, config: RunConfig) -> torch.optim.Adam:
    pretrain = config.pretrain
    return torch.optim.Adam(
        model.parameters(),
        lr=pretrain.peak_lr,
        betas=(pretrain.adam_beta1, pretrain.adam_beta2),
        eps=pretrain.adam_eps,
    )


def init_training_state(config: RunConfig, model: AV2vecModel = None) -> TrainingState:
    """
    Fresh state at update 0. The teacher starts as an exact copy of the
    student encoder.
    """
    if model is None:
        model = build_model(
            config.model,
            audio_in_dim=config.audio_in_dim,
            video_shape=config.corpus.video_dim_spatial,
            mlm_enabled=config.mlm_enabled,
            seed=config.seed,
        )
    teacher = EmaTeacher(model.encoder, EmaSchedule.from_config(config.distill))
    return TrainingState(model, teacher, build_optimizer(model, config), 0)
