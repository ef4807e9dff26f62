"""
Learning-rate schedule: linear warmup, constant plateau, exponential decay.

The schedule is a pure function of the update number, so the optimizer's
learning rate is set by hand before every step and a resumed run picks up
exactly where it left off.
"""

from dataclasses import dataclass

import torch

from ..algorithms.errors import ConfigurationError
from ..config import PretrainConfig


@dataclass(frozen=True)
class LrSchedule:
    peak_lr: float
    total_updates: int
    warmup_frac: float = 0.03
    constant_frac: float = 0.90
    decay_frac: float = 0.07
    final_lr_ratio: float = 0.05

    def __post_init__(self):
        total = self.warmup_frac + self.constant_frac + self.decay_frac
        if abs(total - 1.0) > 1e-9:
            raise ConfigurationError(f"schedule fractions must sum to 1.0, got {total}")
        if not 0.0 < self.final_lr_ratio <= 1.0:
            raise ConfigurationError(f"final_lr_ratio must be in (0, 1], got {self.final_lr_ratio}")
        if self.peak_lr <= 0 or self.total_updates < 0:
            raise ConfigurationError("peak_lr must be > 0 and total_updates >= 0")

    @classmethod
    def from_config(cls, config: PretrainConfig) -> "LrSchedule":
        return cls(
            peak_lr=config.peak_lr,
            total_updates=config.total_updates,
            warmup_frac=config.warmup_frac,
            constant_frac=config.constant_frac,
            decay_frac=config.decay_frac,
            final_lr_ratio=config.final_lr_ratio,
        )

    @property
    def warmup_end(self) -> float:
        return self.warmup_frac * self.total_updates

    @property
    def decay_start(self) -> float:
        return (self.warmup_frac + self.constant_frac) * self.total_updates


def lr_at(step: int, schedule: LrSchedule) -> float:
    """Learning rate of update ``step`` (0 <= step <= total_updates)"""
    if step < 0 or step > schedule.total_updates:
        raise ConfigurationError(f"step {step} outside [0, {schedule.total_updates}]")
    if step < schedule.warmup_end:
        return schedule.peak_lr * step / schedule.warmup_end
    decay_start = schedule.decay_start
    decay_len = schedule.total_updates - decay_start
    if step <= decay_start or decay_len <= 0:
        return schedule.peak_lr
    return schedule.peak_lr * schedule.final_lr_ratio ** ((step - decay_start) / decay_len)


def set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr
