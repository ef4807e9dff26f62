"""
Probe evaluation across SNR levels and input-modality conditions.

Conditions mirror recognition settings: ``audio_only`` (ASR-like),
``video_only`` (VSR-like) and ``both`` (AVSR-like). The video-only row does
not depend on the SNR column since the audio stream is zeroed.
"""

import logging
from pathlib import Path
from typing import Mapping, Sequence, Union

import pandas as pd

from data_pipeline.ingestion.synthetic_corpus import SyntheticSample

from ..algorithms.corruption import ModalitySelection
from ..algorithms.encoder import AV2vecModel
from .finetuner import FrameProbe, probe_accuracy

logger = logging.getLogger(__name__)

CONDITIONS = ("audio_only", "video_only", "both")
REPORT_COLUMNS = ["condition", "snr_db", "frame_accuracy", "n_frames"]


def evaluate(
    model: AV2vecModel,
    probe: FrameProbe,
    eval_sets: Mapping[float, Sequence[SyntheticSample]],
    conditions: Sequence[str] = CONDITIONS,
) -> pd.DataFrame:
    """Frame accuracy for every (condition, SNR level) pair"""
    rows = []
    for condition in conditions:
        selection = ModalitySelection(condition)
        for snr_db, samples in eval_sets.items():
            rows.append({
                "condition": condition,
                "snr_db": float(snr_db),
                "frame_accuracy": probe_accuracy(model, probe, samples, selection),
                "n_frames": int(sum(s.num_frames for s in samples)),
            })
    table = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    logger.info(f"✓ Evaluated {len(conditions)} conditions x {len(eval_sets)} SNR levels")
    return table


def accuracy_table(report: pd.DataFrame) -> pd.DataFrame:
    """condition x SNR pivot of frame accuracy"""
    return report.pivot(index="condition", columns="snr_db", values="frame_accuracy")


def write_report(report: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(path, index=False, columns=REPORT_COLUMNS)
    return path
