"""
SNR-Controlled Noise Mixing

Noise is scaled so that 10*log10(E_clean / E_added_noise) equals the requested
SNR, where E is the sum of squares over the whole sequence. Energies are
accumulated in float64.
"""

import logging
import math
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.signal import lfilter

from data_science.algorithms.av_constants import EVAL_SNR_LEVELS, TRAIN_SNR_LEVELS
from data_science.algorithms.errors import ConfigurationError, DegenerateInputError, ShapeError
from data_science.algorithms.rng import derive_rng, stable_id
from data_science.algorithms.sequences import FeatureSequence
from data_pipeline.ingestion.synthetic_corpus import CorpusSpec, SyntheticSample

logger = logging.getLogger(__name__)

NoiseColor = Literal["white", "pink", "brown"]

# AR(1) pole per noise color
_COLOR_POLES = {"white": 0.0, "pink": 0.9, "brown": 0.99}

_NOISE_BANK_STREAM = 11
_EVAL_STREAM = 12


def snr_key(snr_db: float) -> int:
    """Non-negative integer key of an SNR level for seed derivation"""
    if math.isinf(snr_db):
        return 99_999
    return int(round(snr_db * 10)) + 10_000


def make_noise_bank(
    num_noises: int,
    length: int,
    dim: int,
    seed: int,
    color: NoiseColor = "pink",
    frame_rate_hz: float = 100.0,
) -> List[FeatureSequence]:
    """
    Seeded colored noise sequences.

    Each sequence is Gaussian noise low-pass filtered along time with an
    AR(1) filter whose pole is set by ``color``.
    """
    if color not in _COLOR_POLES:
        raise ConfigurationError(f"unknown noise color {color!r}; expected one of {sorted(_COLOR_POLES)}")
    if num_noises < 0 or length < 1 or dim < 1:
        raise ConfigurationError(f"invalid noise bank shape ({num_noises}, {length}, {dim})")
    pole = _COLOR_POLES[color]
    bank = []
    for i in range(num_noises):
        rng = derive_rng(seed, _NOISE_BANK_STREAM, i)
        white = rng.normal(size=(length, dim))
        colored = lfilter([1.0], [1.0, -pole], white, axis=0) if pole > 0 else white
        bank.append(FeatureSequence("audio", colored.astype(np.float32), frame_rate_hz))
    return bank


def measure_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    """SNR of ``noisy - clean`` against ``clean`` in dB"""
    clean64 = np.asarray(clean, dtype=np.float64)
    added = np.asarray(noisy, dtype=np.float64) - clean64
    e_noise = float(np.sum(added ** 2))
    if e_noise == 0.0:
        return float("inf")
    return 10.0 * math.log10(float(np.sum(clean64 ** 2)) / e_noise)


def mix_noise(
    clean: FeatureSequence,
    noise: FeatureSequence,
    snr_db: float,
    rng: Optional[np.random.Generator] = None,
) -> FeatureSequence:
    """
    Add noise to ``clean`` at exactly ``snr_db``.

    The noise is cropped to the clean length at a random offset drawn from
    ``rng`` (offset 0 without one). ``snr_db = +inf`` returns an unchanged copy.
    """
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ConfigurationError(f"snr_db must be finite or +inf, got {snr_db}")
    if math.isinf(snr_db):
        return FeatureSequence(clean.modality, clean.frames.copy(), clean.frame_rate_hz)
    if noise.feature_shape != clean.feature_shape:
        raise ShapeError(f"noise feature shape {noise.feature_shape} != clean {clean.feature_shape}")
    n = clean.num_frames
    if noise.num_frames < n:
        raise ShapeError(f"noise has {noise.num_frames} frames, clean needs {n}")

    offset = int(rng.integers(0, noise.num_frames - n + 1)) if rng is not None else 0
    segment = noise.frames[offset: offset + n].astype(np.float64)
    clean64 = clean.frames.astype(np.float64)

    e_clean = clean.energy()
    e_noise = float(np.sum(segment ** 2))
    if e_clean == 0.0:
        raise DegenerateInputError("clean signal has zero energy; SNR is undefined")
    if e_noise == 0.0:
        raise DegenerateInputError("noise segment has zero energy; cannot reach a finite SNR")

    gain = math.sqrt(e_clean / (e_noise * 10.0 ** (snr_db / 10.0)))
    mixed = (clean64 + gain * segment).astype(clean.frames.dtype)
    return FeatureSequence(clean.modality, mixed, clean.frame_rate_hz)


def sample_training_noise(
    clean: FeatureSequence,
    noise_bank: Sequence[FeatureSequence],
    rng: np.random.Generator,
    snr_levels: Sequence[float] = TRAIN_SNR_LEVELS,
) -> Tuple[FeatureSequence, float]:
    """Noisy copy at an SNR drawn uniformly from ``snr_levels``"""
    if not noise_bank:
        raise ConfigurationError("noise bank is empty")
    snr_db = float(snr_levels[int(rng.integers(len(snr_levels)))])
    noise = noise_bank[int(rng.integers(len(noise_bank)))]
    return mix_noise(clean, noise, snr_db, rng), snr_db


def _noisy_copy(sample: SyntheticSample, noise_bank: Sequence[FeatureSequence], snr_db: float, seed: int) -> SyntheticSample:
    if math.isinf(snr_db):
        return sample
    rng = derive_rng(seed, _EVAL_STREAM, stable_id(sample.utterance_id), snr_key(snr_db))
    noise = noise_bank[int(rng.integers(len(noise_bank)))]
    return sample.with_audio(mix_noise(sample.audio_clean, noise, snr_db, rng))


def build_eval_sets(
    corpus: Sequence[SyntheticSample],
    noise_bank: Sequence[FeatureSequence],
    snr_levels: Sequence[float] = EVAL_SNR_LEVELS,
    seed: int = 0,
    n_jobs: int = 1,
) -> Dict[float, List[SyntheticSample]]:
    """
    One noisy copy of ``corpus`` per SNR level; the +inf level is the clean set.

    Video streams are shared with the input samples and never modified.
    """
    if not corpus:
        raise ConfigurationError("cannot build evaluation sets from an empty corpus")
    if not noise_bank:
        raise ConfigurationError("noise bank is empty")

    eval_sets: Dict[float, List[SyntheticSample]] = {}
    for snr_db in snr_levels:
        snr_db = float(snr_db)
        if n_jobs == 1:
            eval_sets[snr_db] = [_noisy_copy(s, noise_bank, snr_db, seed) for s in corpus]
        else:
            eval_sets[snr_db] = Parallel(n_jobs=n_jobs)(
                delayed(_noisy_copy)(s, noise_bank, snr_db, seed) for s in corpus
            )
        logger.info(f"✓ Built eval set at SNR {snr_db:g} dB ({len(corpus)} utterances)")
    return eval_sets


def corpus_noise_bank(spec: CorpusSpec) -> List[FeatureSequence]:
    """Noise bank of a corpus, long enough to crop any of its utterances twice over"""
    length = 2 * spec.frames_per_utterance[1] * spec.rate_ratio
    return make_noise_bank(
        spec.noise_bank_size, length, spec.audio_dim, spec.seed, spec.noise_color, spec.audio_rate_hz
    )
