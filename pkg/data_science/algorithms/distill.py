"""
Multimodal Self-Distillation Core

The teacher is an EMA copy of the student's encoder (input projection plus
transformer blocks). It consumes clean audio and full video, evaluates the
student's own feature extractors, and never records gradients. Targets are
the average of instance-normalized outputs of its last k blocks.

Losses are sums over the union of audio and video masked frames:
    L_reg = sum ||x_t - y_t||^2
    L_mlm = sum CE(logits_t, label_t)
    L_MT  = reg_weight * L_reg + mlm_weight * L_mlm
"""

import copy
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import DistillConfig
from .corruption import ModalitySelection, apply_modality_dropout
from .encoder import AV2vecModel, ContextEncoder, fuse
from .errors import ConfigurationError, IndexRangeError, ShapeError

logger = logging.getLogger(__name__)


# ============================================================================
# EMA SCHEDULE
# ============================================================================

@dataclass(frozen=True)
class EmaSchedule:
    """Decay ramps linearly from lambda_b to lambda_e over n updates, then holds"""
    lambda_b: float
    lambda_e: float
    n: int

    def __post_init__(self):
        if not 0.0 < self.lambda_b <= self.lambda_e < 1.0:
            raise ConfigurationError(
                f"EMA decays must satisfy 0 < lambda_b <= lambda_e < 1, got {self.lambda_b}, {self.lambda_e}"
            )
        if self.n < 1:
            raise ConfigurationError(f"EMA ramp length must be >= 1, got {self.n}")

    @classmethod
    def from_config(cls, config: DistillConfig) -> "EmaSchedule":
        return cls(config.ema_lambda_b, config.ema_lambda_e, config.ema_n)


def lambda_at(step: int, schedule: EmaSchedule) -> float:
    """λ = λ_b + (λ_e - λ_b) * min(step, n) / n"""
    if step < 0:
        raise ConfigurationError(f"step must be >= 0, got {step}")
    progress = min(step, schedule.n) / schedule.n
    return schedule.lambda_b + (schedule.lambda_e - schedule.lambda_b) * progress


@torch.no_grad()
def ema_update(teacher: nn.Module, student: nn.Module, lam: float) -> None:
    """θ <- λ·θ + (1 - λ)·φ for every parameter, in place"""
    teacher_params = dict(teacher.named_parameters())
    student_params = dict(student.named_parameters())
    if teacher_params.keys() != student_params.keys():
        raise ShapeError("teacher and student encoders have different parameter sets")
    for name, theta in teacher_params.items():
        phi = student_params[name]
        if theta.shape != phi.shape:
            raise ShapeError(f"{name}: teacher {tuple(theta.shape)} vs student {tuple(phi.shape)}")
        theta.mul_(lam).add_(phi, alpha=1.0 - lam)


class EmaTeacher:
    """
    Teacher state: a frozen copy of the student encoder plus the EMA step.

    Initialized as θ_0 = φ_0. Holds no extractors or heads; ``teacher_forward``
    borrows the student's extractors.
    """

    def __init__(self, student_encoder: ContextEncoder, schedule: EmaSchedule, update_step: int = 0):
        self.encoder = copy.deepcopy(student_encoder)
        self.encoder.requires_grad_(False)
        self.encoder.eval()
        self.schedule = schedule
        self.update_step = update_step

    def current_lambda(self) -> float:
        return lambda_at(self.update_step, self.schedule)

    def update(self, student_encoder: ContextEncoder, lam: Optional[float] = None) -> float:
        """Apply one EMA step after an optimizer step; returns the λ used"""
        lam = self.current_lambda() if lam is None else lam
        ema_update(self.encoder, student_encoder, lam)
        self.update_step += 1
        return lam

    def named_tensors(self) -> dict:
        return {name: p for name, p in self.encoder.named_parameters()}


# ============================================================================
# TEACHER FORWARD AND TARGETS
# ============================================================================

class TeacherDropoutMode(str, Enum):
    NONE = "none"
    SAME = "same"
    OPPOSITE = "opposite"


_OPPOSITE = {
    ModalitySelection.BOTH: ModalitySelection.BOTH,
    ModalitySelection.AUDIO_ONLY: ModalitySelection.VIDEO_ONLY,
    ModalitySelection.VIDEO_ONLY: ModalitySelection.AUDIO_ONLY,
}


def teacher_selection(mode: TeacherDropoutMode, student_selection: ModalitySelection) -> ModalitySelection:
    """Which streams the teacher keeps given the student's dropout outcome"""
    mode = TeacherDropoutMode(mode)
    if mode == TeacherDropoutMode.NONE:
        return ModalitySelection.BOTH
    if mode == TeacherDropoutMode.SAME:
        return student_selection
    return _OPPOSITE[student_selection]


@torch.no_grad()
def teacher_forward(
    model: AV2vecModel,
    teacher: EmaTeacher,
    audio_clean: torch.Tensor,
    video: torch.Tensor,
    mode: TeacherDropoutMode = TeacherDropoutMode.NONE,
    student_selection: ModalitySelection = ModalitySelection.BOTH,
) -> List[torch.Tensor]:
    """Teacher layer outputs on clean, unmasked input"""
    fa, fv = model.extract(audio_clean, video)
    fa, fv = apply_modality_dropout(fa, fv, teacher_selection(mode, student_selection))
    return teacher.encoder(fuse(fa, fv))


def instance_norm(hidden: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """
    Per-sample, per-channel normalization over time with population variance.
    ``hidden`` is (T, d) or (B, T, d).
    """
    squeeze = hidden.dim() == 2
    x = hidden.unsqueeze(0) if squeeze else hidden
    if x.shape[1] == 1:
        out = torch.zeros_like(x)
    else:
        out = F.instance_norm(x.transpose(1, 2), eps=eps).transpose(1, 2)
    return out.squeeze(0) if squeeze else out


@dataclass
class DistillTargets:
    y: torch.Tensor
    valid_mask: torch.Tensor


@torch.no_grad()
def make_targets(
    layer_outputs: Sequence[torch.Tensor],
    k: int,
    eps: float = 1e-5,
    normalize_after_average: bool = False,
) -> torch.Tensor:
    """Mean of the instance-normalized last ``k`` layer outputs"""
    if not 1 <= k <= len(layer_outputs):
        raise ConfigurationError(f"cannot average the last {k} of {len(layer_outputs)} layers")
    selected = list(layer_outputs[-k:])
    if normalize_after_average:
        return instance_norm(torch.stack(selected).mean(dim=0), eps)
    return torch.stack([instance_norm(h, eps) for h in selected]).mean(dim=0)


def target_std(y: torch.Tensor) -> float:
    """Collapse monitor: channel-mean of the std of targets across all frames"""
    flat = y.detach().reshape(-1, y.shape[-1]).double()
    if flat.shape[0] < 2:
        return 0.0
    return float(flat.std(dim=0, unbiased=False).mean())


# ============================================================================
# LOSSES
# ============================================================================

def _as_bool_mask(mask, like: torch.Tensor) -> torch.Tensor:
    if isinstance(mask, np.ndarray):
        mask = torch.from_numpy(mask)
    mask = mask.to(device=like.device, dtype=torch.bool)
    if mask.shape != like.shape[:-1]:
        mask = mask.expand(like.shape[:-1])
    return mask


def loss_reg(predictions: torch.Tensor, targets: DistillTargets) -> torch.Tensor:
    """Σ over masked frames of the squared error; other frames contribute nothing"""
    if predictions.shape != targets.y.shape:
        raise ShapeError(f"predictions {tuple(predictions.shape)} vs targets {tuple(targets.y.shape)}")
    mask = _as_bool_mask(targets.valid_mask, predictions)
    if not bool(mask.any()):
        logger.warning("⚠️  Empty masked region; regression loss is 0")
    return (predictions[mask] - targets.y[mask]).pow(2).sum()


def loss_mlm(logits: torch.Tensor, labels: torch.Tensor, mask) -> torch.Tensor:
    """Σ over masked frames of cross entropy against discrete labels"""
    num_classes = logits.shape[-1]
    if labels.shape != logits.shape[:-1]:
        raise ShapeError(f"labels {tuple(labels.shape)} do not align with logits {tuple(logits.shape)}")
    if labels.numel() and (int(labels.max()) >= num_classes or int(labels.min()) < 0):
        raise IndexRangeError(f"labels must lie in [0, {num_classes})")
    mask = _as_bool_mask(mask, logits)
    if not bool(mask.any()):
        logger.warning("⚠️  Empty masked region; MLM loss is 0")
    return F.cross_entropy(logits[mask], labels[mask].long(), reduction="sum")


def loss_total(
    l_reg: torch.Tensor,
    l_mlm: Optional[torch.Tensor],
    mlm_enabled: bool,
    reg_weight: float = 1.0,
    mlm_weight: float = 1.0,
) -> torch.Tensor:
    if not mlm_enabled:
        return reg_weight * l_reg
    if l_mlm is None:
        raise ConfigurationError("MLM is enabled but no MLM loss was computed")
    return reg_weight * l_reg + mlm_weight * l_mlm
