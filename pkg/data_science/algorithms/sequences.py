"""
Time-major feature sequences shared by the data pipeline and the model.
"""

from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
import torch

from .errors import ShapeError

Modality = Literal["audio", "video"]


@dataclass
class FeatureSequence:
    """
    Per-frame features of one modality.

    ``frames`` is time-major: ``(T, D)`` for audio features and
    ``(T, H, W, C)`` for synthetic video frames.
    """

    modality: Modality
    frames: np.ndarray
    frame_rate_hz: float

    def __post_init__(self):
        if self.modality not in ("audio", "video"):
            raise ShapeError(f"unknown modality {self.modality!r}")
        if self.frames.ndim < 2 or self.frames.shape[0] < 1:
            raise ShapeError(f"{self.modality} frames need shape (T>=1, ...), got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ShapeError(f"{self.modality} frames contain NaN/Inf")

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def feature_shape(self) -> Tuple[int, ...]:
        return tuple(self.frames.shape[1:])

    def energy(self) -> float:
        """Sum of squares accumulated in float64"""
        return float(np.sum(np.square(self.frames, dtype=np.float64)))

    def to_tensor(self, dtype: torch.dtype = torch.float32, device: str = "cpu") -> torch.Tensor:
        return torch.as_tensor(self.frames, dtype=dtype, device=device)
