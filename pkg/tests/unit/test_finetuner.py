"""
Frame-classification probe: freeze-then-joint finetuning and accuracy.
"""

import math

import pytest
import torch

from data_science.algorithms.corruption import ModalitySelection
from data_science.algorithms.errors import ConfigurationError
from data_science.training.finetuner import build_probe, finetune_probe, probe_accuracy


def _snapshot(module):
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


def _with_finetune(config, **updates):
    return config.model_copy(update={"finetune": config.finetune.model_copy(update=updates)})


def test_fully_frozen_run_leaves_the_encoder_bit_identical(tiny_config, tiny_model, tiny_corpus, noise_bank):
    config = _with_finetune(tiny_config, freeze_steps=4, total_updates=4)
    before = _snapshot(tiny_model)
    result = finetune_probe(tiny_model, tiny_corpus, config, noise_bank)
    for name, value in result.model.state_dict().items():
        assert torch.equal(value, before[name]), name
    initial_probe = build_probe(tiny_model, tiny_config.corpus.num_latent_states, tiny_config.seed)
    assert not torch.equal(result.probe.linear.weight, initial_probe.linear.weight)
    assert result.history["frozen"].all()


def test_joint_phase_updates_the_encoder(tiny_config, tiny_model, tiny_corpus, noise_bank):
    before = _snapshot(tiny_model.encoder)
    result = finetune_probe(tiny_model, tiny_corpus, tiny_config, noise_bank)
    assert list(result.history["frozen"]) == [True, True, False, False]
    changed = [name for name, value in result.model.encoder.state_dict().items() if not torch.equal(value, before[name])]
    assert changed
    assert all(p.requires_grad for p in result.model.parameters())


def test_video_only_task_needs_no_noise_bank(tiny_config, tiny_model, tiny_corpus):
    config = _with_finetune(tiny_config, task="vsr")
    result = finetune_probe(tiny_model, tiny_corpus, config)
    assert 0.0 <= result.train_accuracy <= 1.0
    assert len(result.history) == config.finetune.total_updates


def test_noisy_finetuning_needs_a_bank(tiny_config, tiny_model, tiny_corpus):
    with pytest.raises(ConfigurationError):
        finetune_probe(tiny_model, tiny_corpus, tiny_config)


def test_empty_corpus(tiny_config, tiny_model, noise_bank):
    with pytest.raises(ConfigurationError):
        finetune_probe(tiny_model, [], tiny_config, noise_bank)


def test_accuracy_of_an_empty_set_is_nan(tiny_model):
    probe = build_probe(tiny_model, 4)
    assert math.isnan(probe_accuracy(tiny_model, probe, []))


def test_accuracy_leaves_the_model_in_eval_mode_without_grad(tiny_model, tiny_corpus):
    probe = build_probe(tiny_model, 4)
    accuracy = probe_accuracy(tiny_model, probe, tiny_corpus, ModalitySelection.AUDIO_ONLY)
    assert 0.0 <= accuracy <= 1.0
    assert not tiny_model.training
    assert all(p.grad is None for p in tiny_model.parameters())


def test_probe_can_fit_the_latent_labels(tiny_config, tiny_model, tiny_corpus, noise_bank):
    config = _with_finetune(tiny_config, freeze_steps=0, total_updates=150, lr=0.01, add_noise=False)
    result = finetune_probe(tiny_model, tiny_corpus, config, noise_bank)
    assert result.train_accuracy > 1.0 / tiny_config.corpus.num_latent_states
    assert result.history["loss"].iloc[-1] < result.history["loss"].iloc[0]
