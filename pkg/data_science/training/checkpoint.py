"""
AV2C checkpoint format.

Layout (little-endian):
    b"AV2C"  u32 version
    u64 length + UTF-8 JSON metadata (sorted keys): config snapshot, model
        architecture, update_step, optimizer param groups
    u32 tensor count, then per tensor:
        u16 name length + UTF-8 name, u8 dtype code, u8 ndim, u64 dims...,
        u64 byte count + raw row-major bytes in the tensor's own dtype

Tensor name prefixes: ``student.``, ``teacher.``, ``optim.<index>.<key>``,
``probe.`` and ``rng.torch``. Saving a freshly loaded state reproduces the
file byte for byte.
"""

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import torch

from ..algorithms.distill import EmaSchedule, EmaTeacher
from ..algorithms.encoder import AV2vecModel, build_model
from ..algorithms.errors import (
    CheckpointVersionError,
    ConfigurationError,
    CorruptCheckpointError,
    MissingInputError,
)
from ..config import ModelConfig, RunConfig
from .finetuner import FrameProbe, build_probe
from .state import TrainingState, build_optimizer

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"AV2C"
CHECKPOINT_VERSION = 1

_DTYPES = {
    torch.float32: (1, "<f4"),
    torch.float64: (2, "<f8"),
    torch.int64: (3, "<i8"),
    torch.uint8: (4, "|u1"),
    torch.int32: (5, "<i4"),
    torch.bool: (6, "|b1"),
}
_CODES = {code: (dtype, np_dtype) for dtype, (code, np_dtype) in _DTYPES.items()}

PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    meta: dict
    tensors: Dict[str, torch.Tensor] = field(default_factory=dict)

    def with_prefix(self, prefix: str) -> Dict[str, torch.Tensor]:
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}

    @property
    def update_step(self) -> int:
        return int(self.meta.get("update_step", 0))


# ============================================================================
# ENCODING
# ============================================================================

def _encode(checkpoint: Checkpoint) -> bytes:
    meta = json.dumps(checkpoint.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION), struct.pack("<Q", len(meta)), meta]
    parts.append(struct.pack("<I", len(checkpoint.tensors)))
    for name, tensor in checkpoint.tensors.items():
        if tensor.dtype not in _DTYPES:
            raise ConfigurationError(f"{name}: dtype {tensor.dtype} cannot be checkpointed")
        code, np_dtype = _DTYPES[tensor.dtype]
        raw = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype=np_dtype).tobytes()
        encoded_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded_name)))
        parts.append(encoded_name)
        parts.append(struct.pack("<BB", code, tensor.dim()))
        parts.append(struct.pack(f"<{tensor.dim()}Q", *tensor.shape))
        parts.append(struct.pack("<Q", len(raw)))
        parts.append(raw)
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpointError(f"{self.path}: truncated at byte {self.pos}")
        chunk = self.data[self.pos: self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _decode(data: bytes, path) -> Checkpoint:
    reader = _Reader(data, path)
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"{path}: not an AV2C checkpoint")
    (version,) = reader.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    (meta_len,) = reader.unpack("<Q")
    try:
        meta = json.loads(reader.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpointError(f"{path}: unreadable metadata: {e}") from e

    tensors = {}
    (count,) = reader.unpack("<I")
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8", errors="strict")
        code, ndim = reader.unpack("<BB")
        if code not in _CODES:
            raise CorruptCheckpointError(f"{path}: {name} has unknown dtype code {code}")
        shape = reader.unpack(f"<{ndim}Q") if ndim else ()
        (nbytes,) = reader.unpack("<Q")
        dtype, np_dtype = _CODES[code]
        array = np.frombuffer(reader.take(nbytes), dtype=np_dtype)
        if array.size != int(np.prod(shape, dtype=np.int64)):
            raise CorruptCheckpointError(f"{path}: {name} payload does not match shape {shape}")
        tensors[name] = torch.from_numpy(array.reshape(shape).copy()).to(dtype)
    if reader.pos != len(data):
        raise CorruptCheckpointError(f"{path}: {len(data) - reader.pos} trailing bytes")
    return Checkpoint(meta, tensors)


def write_checkpoint(checkpoint: Checkpoint, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(_encode(checkpoint))
    os.replace(tmp, path)
    return path


def read_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"no checkpoint at {path}")
    return _decode(path.read_bytes(), path)


# ============================================================================
# TRAINING STATE
# ============================================================================

def state_to_checkpoint(state: TrainingState, config_snapshot: dict) -> Checkpoint:
    optim = state.optimizer.state_dict()
    meta = {
        "config": config_snapshot,
        "model": state.model.describe(),
        "update_step": state.update_step,
        "optimizer": {"param_groups": optim["param_groups"]},
    }
    tensors: Dict[str, torch.Tensor] = {}
    for name, value in state.model.state_dict().items():
        tensors[f"student.{name}"] = value
    for name, value in state.teacher.encoder.state_dict().items():
        tensors[f"teacher.{name}"] = value
    for index in sorted(optim["state"]):
        for key in sorted(optim["state"][index]):
            value = optim["state"][index][key]
            tensors[f"optim.{index}.{key}"] = value if torch.is_tensor(value) else torch.tensor(value)
    tensors["rng.torch"] = torch.get_rng_state()
    return Checkpoint(meta, tensors)


def save_checkpoint(state: TrainingState, path: PathLike, config_snapshot: dict) -> Path:
    path = write_checkpoint(state_to_checkpoint(state, config_snapshot), path)
    logger.info(f"✓ Saved checkpoint at update {state.update_step} to {path}")
    return path


def model_from_checkpoint(checkpoint: Checkpoint, model_config: Optional[ModelConfig] = None) -> AV2vecModel:
    """
    Rebuild the student. A ``model_config`` that disagrees with the stored
    architecture is a configuration error.
    """
    arch = checkpoint.meta.get("model")
    if not arch:
        raise CorruptCheckpointError("checkpoint carries no model architecture")
    stored = ModelConfig.model_validate(arch["model"])
    if model_config is not None:
        for key in ("d_model", "num_layers", "num_heads", "ffn_dim", "d_feat", "video_channels", "residual_blocks"):
            if getattr(model_config, key) != getattr(stored, key):
                raise ConfigurationError(
                    f"checkpoint has {key}={getattr(stored, key)}, configuration asks for {getattr(model_config, key)}"
                )
    model = build_model(stored, arch["audio_in_dim"], tuple(arch["video_shape"]), arch["mlm_enabled"], seed=0)
    try:
        model.load_state_dict(checkpoint.with_prefix("student."), strict=True)
    except RuntimeError as e:
        raise CorruptCheckpointError(f"student tensors do not match the stored architecture: {e}") from e
    return model


def restore_training_state(checkpoint: Checkpoint, config: RunConfig) -> TrainingState:
    """Model, teacher, optimizer and torch RNG exactly as saved"""
    model = model_from_checkpoint(checkpoint, config.model)
    if model.mlm_enabled != config.mlm_enabled:
        raise ConfigurationError(
            f"checkpoint was trained with mlm_enabled={model.mlm_enabled}, run mode is {config.mode}"
        )
    schedule = EmaSchedule.from_config(config.distill)
    teacher = EmaTeacher(model.encoder, schedule, update_step=checkpoint.update_step)
    teacher.encoder.load_state_dict(checkpoint.with_prefix("teacher."), strict=True)

    optimizer = build_optimizer(model, config)
    optim_state: Dict[int, dict] = {}
    for name, value in checkpoint.with_prefix("optim.").items():
        index, key = name.split(".", 1)
        optim_state.setdefault(int(index), {})[key] = value
    optimizer.load_state_dict({
        "state": optim_state,
        "param_groups": checkpoint.meta["optimizer"]["param_groups"],
    })
    if "rng.torch" in checkpoint.tensors:
        torch.set_rng_state(checkpoint.tensors["rng.torch"])
    return TrainingState(model, teacher, optimizer, checkpoint.update_step)


# ============================================================================
# PROBE
# ============================================================================

def save_probe_checkpoint(
    model: AV2vecModel, probe: FrameProbe, path: PathLike, config_snapshot: dict, update_step: int
) -> Path:
    """Finetuned student plus probe, probe tensors under ``probe.``"""
    meta = {
        "config": config_snapshot,
        "model": model.describe(),
        "probe": {"num_classes": probe.num_classes},
        "update_step": update_step,
    }
    tensors = {f"student.{k}": v for k, v in model.state_dict().items()}
    tensors.update({f"probe.{k}": v for k, v in probe.state_dict().items()})
    path = write_checkpoint(Checkpoint(meta, tensors), path)
    logger.info(f"✓ Saved probe checkpoint to {path}")
    return path


def load_probe_checkpoint(
    path: PathLike, model_config: Optional[ModelConfig] = None
) -> Tuple[AV2vecModel, FrameProbe]:
    checkpoint = read_checkpoint(path)
    if "probe" not in checkpoint.meta:
        raise CorruptCheckpointError(f"{path} holds no probe; run the finetune command first")
    model = model_from_checkpoint(checkpoint, model_config)
    probe = build_probe(model, int(checkpoint.meta["probe"]["num_classes"]))
    try:
        probe.load_state_dict(checkpoint.with_prefix("probe."), strict=True)
    except RuntimeError as e:
        raise CorruptCheckpointError(f"{path}: probe tensors do not match: {e}") from e
    return model, probe
