"""
Frame-classification probe finetuning.

A linear classifier on the encoder's last layer predicts the synthetic
latent labels. The pretrained model is frozen for the first
``freeze_steps`` updates (only the probe learns), then trained jointly.
Training audio is noised with probability p_noise on the training SNR grid
unless the task is video-only.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.metrics import accuracy_score
from tqdm import tqdm

from data_pipeline.ingestion.synthetic_corpus import SyntheticSample
from data_pipeline.processing.noise_mixing import sample_training_noise

from ..algorithms.corruption import ModalitySelection, Purpose, sample_noise_decision, sample_rng
from ..algorithms.encoder import AV2vecModel, encode_clean
from ..algorithms.errors import ConfigurationError, ShapeError
from ..algorithms.features import model_inputs
from ..algorithms.sequences import FeatureSequence
from ..config import RunConfig
from .pretrainer import batch_for_update

logger = logging.getLogger(__name__)

TASK_SELECTION = {
    "avsr": ModalitySelection.BOTH,
    "asr": ModalitySelection.AUDIO_ONLY,
    "vsr": ModalitySelection.VIDEO_ONLY,
}


class FrameProbe(nn.Module):
    """Linear frame classifier over encoder outputs"""

    def __init__(self, d_model: int, num_classes: int):
        super().__init__()
        self.linear = nn.Linear(d_model, num_classes)

    @property
    def num_classes(self) -> int:
        return self.linear.out_features

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        return self.linear(hidden)


def build_probe(model: AV2vecModel, num_classes: int, seed: int = 0) -> FrameProbe:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        probe = FrameProbe(model.config.d_model, num_classes)
    return probe.to(model.dtype)


def probe_logits(
    model: AV2vecModel,
    probe: FrameProbe,
    audio: FeatureSequence,
    video: FeatureSequence,
    selection: ModalitySelection,
) -> torch.Tensor:
    audio_t, video_t = model_inputs(audio, video, model.dtype)
    return probe(encode_clean(model, audio_t, video_t, selection)[-1])[0]


def _labels(sample: SyntheticSample) -> torch.Tensor:
    labels = torch.as_tensor(sample.latent_labels, dtype=torch.long)
    if labels.shape != (sample.num_frames,):
        raise ShapeError(f"{sample.utterance_id}: {labels.shape[0]} labels for {sample.num_frames} frames")
    return labels


@torch.no_grad()
def probe_accuracy(
    model: AV2vecModel,
    probe: FrameProbe,
    samples: Sequence[SyntheticSample],
    selection: ModalitySelection = ModalitySelection.BOTH,
) -> float:
    """Frame accuracy over all frames of ``samples``"""
    if not samples:
        return float("nan")
    model.eval()
    predicted, truth = [], []
    for sample in samples:
        logits = probe_logits(model, probe, sample.audio_clean, sample.video, selection)
        predicted.append(logits.argmax(dim=-1).numpy())
        truth.append(_labels(sample).numpy())
    return float(accuracy_score(np.concatenate(truth), np.concatenate(predicted)))


@dataclass
class ProbeResult:
    model: AV2vecModel
    probe: FrameProbe
    history: pd.DataFrame
    train_accuracy: float


def finetune_probe(
    model: AV2vecModel,
    samples: Sequence[SyntheticSample],
    config: RunConfig,
    noise_bank: Sequence[FeatureSequence] = (),
    num_classes: Optional[int] = None,
    progress: bool = False,
) -> ProbeResult:
    """Freeze-then-joint finetuning of ``model`` plus a fresh probe"""
    ft = config.finetune
    if not samples:
        raise ConfigurationError("cannot finetune on an empty corpus")
    num_classes = num_classes or config.corpus.num_latent_states
    selection = TASK_SELECTION[ft.task]
    add_noise = ft.add_noise and ft.task != "vsr" and config.corruption.p_noise > 0
    if add_noise and not noise_bank:
        raise ConfigurationError("finetuning with noise needs a non-empty noise bank")

    probe = build_probe(model, num_classes, config.seed)
    optimizer = torch.optim.Adam(
        list(model.parameters()) + list(probe.parameters()),
        lr=ft.lr,
        betas=(config.pretrain.adam_beta1, config.pretrain.adam_beta2),
        eps=config.pretrain.adam_eps,
    )

    history = []
    for step in tqdm(range(ft.total_updates), desc="finetune", disable=not progress):
        frozen = step < ft.freeze_steps
        model.requires_grad_(not frozen)
        model.train()
        optimizer.zero_grad(set_to_none=True)
        indices, epoch = batch_for_update(len(samples), ft.batch_size, config.seed, step)

        loss_sum = torch.zeros((), dtype=model.dtype)
        frames = 0
        for i in indices:
            sample = samples[i]
            audio = sample.audio_clean
            utt = sample.utterance_id
            if add_noise and sample_noise_decision(
                config.corruption.p_noise, sample_rng(config.seed, utt, Purpose.PROBE_NOISE, epoch)
            ):
                audio, _ = sample_training_noise(
                    audio, noise_bank, sample_rng(config.seed, utt, Purpose.PROBE_NOISE_MIX, epoch)
                )
            logits = probe_logits(model, probe, audio, sample.video, selection)
            loss_sum = loss_sum + F.cross_entropy(logits, _labels(sample), reduction="sum")
            frames += sample.num_frames

        loss = loss_sum / max(frames, 1)
        loss.backward()
        optimizer.step()
        history.append({"step": step + 1, "loss": float(loss), "frozen": frozen})

    model.requires_grad_(True)
    accuracy = probe_accuracy(model, probe, samples, selection)
    logger.info(f"✓ Probe finetuned for {ft.total_updates} updates ({ft.task}); train frame accuracy {accuracy:.3f}")
    return ProbeResult(model, probe, pd.DataFrame.from_records(history), accuracy)
