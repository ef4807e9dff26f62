"""
AV2vec / AV2vec-MLM pretraining loop.

One update: for each utterance in the batch draw its corruption plan, run the
corrupted student and the clean teacher, build targets and accumulate the
masked-frame losses; then divide by the batch's masked-frame count, take an
Adam step at lr_at(update) and apply the EMA update.

Batches and corruptions depend only on (seed, update number), so a run
resumed from a checkpoint follows the uninterrupted trajectory exactly.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from data_pipeline.ingestion.synthetic_corpus import SyntheticSample
from data_pipeline.processing.noise_mixing import sample_training_noise

from ..algorithms.corruption import Purpose, corrupt_sample, sample_rng
from ..algorithms.distill import (
    DistillTargets,
    TeacherDropoutMode,
    loss_mlm,
    loss_reg,
    loss_total,
    make_targets,
    target_std,
    teacher_forward,
)
from ..algorithms.encoder import AV2vecModel, student_forward
from ..algorithms.errors import ConfigurationError, ShapeError, TrainingDivergedError
from ..algorithms.features import model_inputs
from ..algorithms.rng import derive_rng
from ..algorithms.sequences import FeatureSequence
from ..config import RunConfig
from .schedules import LrSchedule, lr_at, set_lr
from .state import TrainingState

logger = logging.getLogger(__name__)

_SHUFFLE_STREAM = 21

METRICS_NAME = "metrics.jsonl"


@dataclass
class PretrainData:
    samples: Sequence[SyntheticSample]
    noise_bank: Sequence[FeatureSequence]
    targets: Optional[Mapping[str, np.ndarray]] = None
    num_clusters: Optional[int] = None


def batches_per_epoch(num_samples: int, batch_size: int) -> int:
    return max(1, math.ceil(num_samples / batch_size))


def batch_for_update(num_samples: int, batch_size: int, seed: int, step: int) -> Tuple[np.ndarray, int]:
    """(sample indices, epoch) of 0-based update ``step``"""
    per_epoch = batches_per_epoch(num_samples, batch_size)
    epoch, index = divmod(step, per_epoch)
    order = derive_rng(seed, _SHUFFLE_STREAM, epoch).permutation(num_samples)
    return order[index * batch_size: (index + 1) * batch_size], epoch


def _check_data(data: PretrainData, config: RunConfig, model: AV2vecModel) -> None:
    if not data.samples:
        raise ConfigurationError("cannot pretrain on an empty corpus")
    if config.corruption.p_noise > 0 and not data.noise_bank:
        raise ConfigurationError("p_noise > 0 needs a non-empty noise bank")
    if config.mlm_enabled:
        if data.targets is None:
            raise ConfigurationError("av2vec-mlm pretraining needs discrete targets")
        missing = [s.utterance_id for s in data.samples if s.utterance_id not in data.targets]
        if missing:
            raise ConfigurationError(f"no discrete targets for {len(missing)} utterances, e.g. {missing[0]}")
        model.check_num_clusters(data.num_clusters or config.num_clusters)
        k = model.mlm_head.out_features
        for utt, labels in data.targets.items():
            if labels.size and (int(labels.max()) >= k or int(labels.min()) < 0):
                raise ConfigurationError(f"{utt}: discrete labels must lie in [0, {k})")


def _dump_diagnostics(run_dir: Optional[Path], step: int, record: dict) -> Optional[Path]:
    if run_dir is None:
        return None
    path = Path(run_dir) / "diagnostics" / f"step_{step}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, default=str), encoding="utf-8")
    return path


def pretrain_step(
    state: TrainingState,
    batch: Sequence[SyntheticSample],
    epoch: int,
    data: PretrainData,
    config: RunConfig,
    run_dir: Optional[Path] = None,
    lam: Optional[float] = None,
) -> Dict[str, float]:
    """
    One optimizer update plus EMA step. ``lam`` overrides the scheduled decay
    for this update only.
    """
    model, teacher, optimizer = state.model, state.teacher, state.optimizer
    distill = config.distill
    mode = TeacherDropoutMode(distill.teacher_dropout_mode)
    dtype = model.dtype
    schedule = LrSchedule.from_config(config.pretrain)
    lr = lr_at(min(state.update_step + 1, schedule.total_updates), schedule)

    model.train()
    optimizer.zero_grad(set_to_none=True)
    reg_sum = torch.zeros((), dtype=dtype)
    mlm_sum = torch.zeros((), dtype=dtype) if config.mlm_enabled else None
    masked_frames = 0
    empty_union = 0
    targets_seen: List[torch.Tensor] = []

    for sample in batch:
        utt = sample.utterance_id
        plan = corrupt_sample(utt, sample.num_frames, config.corruption, config.seed, epoch)
        noisy_audio = sample.audio_clean
        if plan.add_noise:
            noisy_audio, _ = sample_training_noise(
                sample.audio_clean, data.noise_bank, sample_rng(config.seed, utt, Purpose.NOISE_MIX, epoch)
            )
        audio_student, video = model_inputs(noisy_audio, sample.video, dtype)
        audio_clean, _ = model_inputs(sample.audio_clean, sample.video, dtype)

        out = student_forward(model, audio_student, video, plan.audio_mask, plan.video_mask, plan.selection)
        teacher_layers = teacher_forward(model, teacher, audio_clean, video, mode, plan.selection)
        y = make_targets(teacher_layers, distill.avg_last_k, distill.instance_norm_eps, distill.normalize_after_average)
        union = torch.from_numpy(plan.union_mask())[None]
        reg_sum = reg_sum + loss_reg(out.predictions, DistillTargets(y, union))
        if config.mlm_enabled:
            labels = torch.as_tensor(data.targets[utt], dtype=torch.long)
            if labels.shape != (sample.num_frames,):
                raise ShapeError(f"{utt}: {labels.shape[0]} discrete labels for {sample.num_frames} frames")
            mlm_sum = mlm_sum + loss_mlm(out.logits, labels[None], union)
        masked_frames += int(union.sum())
        empty_union += int(not bool(union.any()))
        targets_seen.append(y[0])

    denom = max(masked_frames, 1)
    total = loss_total(reg_sum, mlm_sum, config.mlm_enabled, distill.reg_weight, distill.mlm_weight) / denom
    step_number = state.update_step + 1
    metrics = {
        "step": step_number,
        "loss_reg": float(reg_sum) / denom,
        "loss_total": float(total),
        "lr": lr,
        "target_std": target_std(torch.cat(targets_seen, dim=0)),
        "masked_frames": masked_frames,
        "empty_union": empty_union,
        "loss_reg_sum": float(reg_sum),
    }
    if config.mlm_enabled:
        metrics["loss_mlm"] = float(mlm_sum) / denom
        metrics["loss_mlm_sum"] = float(mlm_sum)

    if not torch.isfinite(total):
        record = dict(metrics, utterance_ids=[s.utterance_id for s in batch], epoch=epoch)
        path = _dump_diagnostics(run_dir, step_number, record)
        logger.error(f"❌ Loss diverged at update {step_number}; diagnostics: {path}")
        raise TrainingDivergedError(f"non-finite loss at update {step_number}")

    if total.requires_grad:
        total.backward()
    set_lr(optimizer, lr)
    optimizer.step()
    metrics["lambda"] = teacher.update(model.encoder, lam)
    state.update_step = step_number
    return metrics


def pretrain(
    state: TrainingState,
    data: PretrainData,
    config: RunConfig,
    run_dir: Optional[Path] = None,
    on_checkpoint: Optional[Callable[[TrainingState, Path], None]] = None,
    progress: bool = False,
) -> pd.DataFrame:
    """
    Run updates from ``state.update_step`` to ``pretrain.total_updates``.

    Metrics are appended to ``run_dir/metrics.jsonl`` (one JSON object per
    update) and returned as a DataFrame. ``on_checkpoint(state, path)`` is
    called every ``checkpoint_interval`` updates and at the end.
    """
    _check_data(data, config, state.model)
    total = config.pretrain.total_updates
    batch_size = config.pretrain.batch_size
    metrics_file = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        metrics_file = open(run_dir / METRICS_NAME, "a" if state.update_step > 0 else "w", encoding="utf-8")

    records = []
    try:
        steps = range(state.update_step, total)
        for step in tqdm(steps, desc="pretrain", disable=not progress):
            indices, epoch = batch_for_update(len(data.samples), batch_size, config.seed, step)
            metrics = pretrain_step(state, [data.samples[i] for i in indices], epoch, data, config, run_dir)
            records.append(metrics)
            if metrics_file is not None:
                metrics_file.write(json.dumps(metrics, sort_keys=True) + "\n")
                metrics_file.flush()
            if on_checkpoint is not None and run_dir is not None and state.update_step % config.pretrain.checkpoint_interval == 0:
                on_checkpoint(state, run_dir / "checkpoints" / f"step_{state.update_step}.ckpt")
    finally:
        if metrics_file is not None:
            metrics_file.close()

    if on_checkpoint is not None and run_dir is not None:
        on_checkpoint(state, run_dir / "checkpoints" / "last.ckpt")
    if records:
        last = records[-1]
        logger.info(f"✓ Pretraining reached update {last['step']} (loss_total {last['loss_total']:.4f})")
    return pd.DataFrame.from_records(records)


def read_metrics(run_dir: Path) -> pd.DataFrame:
    return pd.read_json(Path(run_dir) / METRICS_NAME, lines=True)
