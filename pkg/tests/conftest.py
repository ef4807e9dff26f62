"""
Shared fixtures: a tiny float64 configuration and the corpus it generates.

Everything here is small enough that a full pretrain step runs in well under
a second on a CPU.
"""

import copy

import numpy as np
import pytest

from data_pipeline.ingestion.synthetic_corpus import generate_corpus, split_corpus
from data_pipeline.processing.noise_mixing import corpus_noise_bank
from data_science.algorithms.encoder import build_model
from data_science.config import RunConfig

TINY_CONFIG = {
    "mode": "av2vec",
    "seed": 7,
    "run_dir": "runs/tiny",
    "corpus": {
        "num_utterances": 8,
        "frames_per_utterance": [6, 10],
        "num_latent_states": 4,
        "audio_dim": 4,
        "video_dim_spatial": [8, 8, 1],
        "noise_bank_size": 2,
        "test_fraction": 0.25,
        "seed": 3,
    },
    "model": {
        "d_feat": 8,
        "num_layers": 2,
        "d_model": 16,
        "ffn_dim": 32,
        "num_heads": 2,
        "video_channels": 4,
        "residual_blocks": 1,
        "video_kernel_time": 3,
        "num_clusters": 4,
        "dtype": "float64",
    },
    "corruption": {
        "span_len_audio": 3,
        "span_len_video": 2,
    },
    "distill": {
        "ema_lambda_b": 0.9,
        "ema_lambda_e": 0.99,
        "ema_n": 10,
        "avg_last_k": 2,
    },
    "pretrain": {
        "batch_size": 2,
        "total_updates": 4,
        "peak_lr": 0.001,
        "warmup_frac": 0.25,
        "constant_frac": 0.5,
        "decay_frac": 0.25,
        "checkpoint_interval": 2,
    },
    "finetune": {
        "freeze_steps": 2,
        "total_updates": 4,
        "batch_size": 2,
    },
    "cluster": {
        "max_iters": 20,
    },
}


@pytest.fixture
def tiny_config_data() -> dict:
    return copy.deepcopy(TINY_CONFIG)


@pytest.fixture
def tiny_config(tiny_config_data) -> RunConfig:
    return RunConfig.model_validate(tiny_config_data)


@pytest.fixture
def tiny_mlm_config(tiny_config_data) -> RunConfig:
    data = copy.deepcopy(tiny_config_data)
    data["mode"] = "av2vec-mlm"
    return RunConfig.model_validate(data)


@pytest.fixture
def tiny_corpus(tiny_config):
    return generate_corpus(tiny_config.corpus)


@pytest.fixture
def tiny_split(tiny_config, tiny_corpus):
    return split_corpus(tiny_corpus, tiny_config.corpus.test_fraction, tiny_config.corpus.seed)


@pytest.fixture
def noise_bank(tiny_config):
    return corpus_noise_bank(tiny_config.corpus)


@pytest.fixture
def tiny_model(tiny_config):
    return build_model(
        tiny_config.model,
        audio_in_dim=tiny_config.audio_in_dim,
        video_shape=tiny_config.corpus.video_dim_spatial,
        mlm_enabled=False,
        seed=0,
    )


@pytest.fixture
def tiny_mlm_model(tiny_config):
    return build_model(
        tiny_config.model,
        audio_in_dim=tiny_config.audio_in_dim,
        video_shape=tiny_config.corpus.video_dim_spatial,
        mlm_enabled=True,
        seed=0,
    )


@pytest.fixture
def random_targets(tiny_corpus, tiny_config):
    """Discrete labels in [0, K) for every utterance of the tiny corpus"""
    rng = np.random.default_rng(11)
    k = tiny_config.num_clusters
    return {s.utterance_id: rng.integers(0, k, size=s.num_frames) for s in tiny_corpus}


@pytest.fixture(autouse=True)
def _isolated_environment(monkeypatch):
    """No AV2VEC_* variable leaks into or out of a test"""
    for name in ("AV2VEC_RUN_DIR", "AV2VEC_SEED", "AV2VEC_LOG_LEVEL"):
        monkeypatch.setenv(name, "")
        monkeypatch.delenv(name)
