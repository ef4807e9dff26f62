"""
Fusion, positional encoding, the context encoder and the student model.
"""

import math

import numpy as np
import pytest
import torch

from data_science.algorithms.corruption import MaskSet, ModalitySelection
from data_science.algorithms.distill import DistillTargets, loss_mlm, loss_reg
from data_science.algorithms.encoder import (
    ContextEncoder,
    build_model,
    encode_clean,
    fuse,
    sinusoidal_encoding,
    student_forward,
)
from data_science.algorithms.errors import ConfigurationError, ShapeError
from data_science.algorithms.features import model_inputs


def test_fuse_puts_audio_channels_first():
    audio = torch.ones(1, 3, 2)
    video = torch.zeros(1, 3, 4)
    fused = fuse(audio, video)
    assert fused.shape == (1, 3, 6)
    assert torch.all(fused[..., :2] == 1) and torch.all(fused[..., 2:] == 0)


def test_fuse_rejects_misaligned_streams():
    with pytest.raises(ShapeError):
        fuse(torch.ones(1, 3, 2), torch.ones(1, 4, 2))


def test_sinusoidal_encoding_values():
    pe = sinusoidal_encoding(5, 6, torch.float64)
    assert pe.shape == (5, 6)
    torch.testing.assert_close(pe[0], torch.tensor([0.0, 1.0, 0.0, 1.0, 0.0, 1.0], dtype=torch.float64))
    assert pe[3, 0].item() == pytest.approx(math.sin(3.0))
    assert pe[3, 1].item() == pytest.approx(math.cos(3.0))


def test_sinusoidal_encoding_odd_width():
    assert sinusoidal_encoding(4, 5, torch.float32).shape == (4, 5)


class TestContextEncoder:
    def test_returns_every_layer(self):
        encoder = ContextEncoder(in_dim=6, d_model=8, num_layers=3, num_heads=2, ffn_dim=16)
        layers = encoder(torch.randn(2, 7, 6))
        assert len(layers) == encoder.num_layers == 3
        assert all(h.shape == (2, 7, 8) for h in layers)

    def test_attention_is_bidirectional(self):
        torch.manual_seed(0)
        encoder = ContextEncoder(in_dim=4, d_model=8, num_layers=1, num_heads=2, ffn_dim=16).double()
        x = torch.randn(1, 6, 4, dtype=torch.float64)
        y = x.clone()
        y[0, 5] += 1.0
        # changing the last frame moves the first frame's output
        assert not torch.allclose(encoder(x)[-1][0, 0], encoder(y)[-1][0, 0])

    def test_rejects_wrong_width(self):
        encoder = ContextEncoder(in_dim=6, d_model=8, num_layers=1, num_heads=2, ffn_dim=16)
        with pytest.raises(ShapeError):
            encoder(torch.randn(1, 4, 5))

    def test_heads_must_divide_width(self):
        with pytest.raises(ConfigurationError):
            ContextEncoder(in_dim=6, d_model=10, num_layers=1, num_heads=3, ffn_dim=16)


class TestModel:
    def test_seeded_build_is_reproducible_and_leaves_global_rng_alone(self, tiny_config):
        torch.manual_seed(123)
        expected = torch.rand(1)
        torch.manual_seed(123)
        a = build_model(tiny_config.model, tiny_config.audio_in_dim, (8, 8, 1), seed=5)
        after = torch.rand(1)
        b = build_model(tiny_config.model, tiny_config.audio_in_dim, (8, 8, 1), seed=5)
        assert torch.equal(expected, after)
        for (name, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
            assert torch.equal(p, q), name

    def test_dtype(self, tiny_model):
        assert tiny_model.dtype == torch.float64
        assert all(p.dtype == torch.float64 for p in tiny_model.parameters())

    def test_student_forward_shapes(self, tiny_model, tiny_corpus, tiny_config):
        sample = tiny_corpus[0]
        t = sample.num_frames
        audio, video = model_inputs(sample.audio_clean, sample.video, torch.float64)
        out = student_forward(
            tiny_model, audio, video,
            MaskSet(np.array([0, 1]), t), MaskSet(np.array([2]), t),
            ModalitySelection.BOTH,
        )
        assert len(out.layers) == tiny_config.model.num_layers
        assert out.predictions.shape == (1, t, tiny_config.model.d_model)
        assert out.logits is None

    def test_mlm_head_logits(self, tiny_mlm_model, tiny_corpus, tiny_config):
        sample = tiny_corpus[0]
        t = sample.num_frames
        audio, video = model_inputs(sample.audio_clean, sample.video, torch.float64)
        out = student_forward(tiny_mlm_model, audio, video, MaskSet.empty(t), MaskSet.empty(t), ModalitySelection.BOTH)
        assert out.logits.shape == (1, t, tiny_config.model.num_clusters)

    def test_uncorrupted_forward_matches_encode_clean(self, tiny_model, tiny_corpus):
        sample = tiny_corpus[1]
        t = sample.num_frames
        audio, video = model_inputs(sample.audio_clean, sample.video, torch.float64)
        out = student_forward(tiny_model, audio, video, MaskSet.empty(t), MaskSet.empty(t), ModalitySelection.BOTH)
        clean = encode_clean(tiny_model, audio, video)
        for a, b in zip(out.layers, clean):
            assert torch.equal(a, b)

    def test_audio_only_ignores_the_video(self, tiny_model, tiny_corpus):
        sample = tiny_corpus[0]
        audio, video = model_inputs(sample.audio_clean, sample.video, torch.float64)
        a = encode_clean(tiny_model, audio, video, ModalitySelection.AUDIO_ONLY)[-1]
        b = encode_clean(tiny_model, audio, torch.randn_like(video), ModalitySelection.AUDIO_ONLY)[-1]
        assert torch.equal(a, b)

    def test_cluster_count_check(self, tiny_model, tiny_mlm_model):
        with pytest.raises(ConfigurationError):
            tiny_model.check_num_clusters(4)
        tiny_mlm_model.check_num_clusters(4)
        with pytest.raises(ConfigurationError):
            tiny_mlm_model.check_num_clusters(5)

    def test_describe(self, tiny_model, tiny_config):
        arch = tiny_model.describe()
        assert arch["audio_in_dim"] == tiny_config.audio_in_dim
        assert arch["video_shape"] == [8, 8, 1]
        assert arch["mlm_enabled"] is False
        assert arch["model"]["d_model"] == tiny_config.model.d_model

    @pytest.mark.parametrize("trained,untouched", [("mlm", "regression_head"), ("reg", "mlm_head")])
    def test_each_loss_leaves_the_other_head_alone(self, tiny_mlm_model, tiny_corpus, trained, untouched):
        sample = tiny_corpus[0]
        t = sample.num_frames
        audio, video = model_inputs(sample.audio_clean, sample.video, torch.float64)
        mask = MaskSet(np.arange(0, t, 2), t)
        union = torch.from_numpy(mask.to_bool())[None]
        before = {k: v.clone() for k, v in getattr(tiny_mlm_model, untouched).named_parameters()}

        optimizer = torch.optim.Adam(tiny_mlm_model.parameters(), lr=0.1)
        out = student_forward(tiny_mlm_model, audio, video, mask, mask, ModalitySelection.BOTH)
        if trained == "mlm":
            labels = torch.arange(t)[None] % tiny_mlm_model.mlm_head.out_features
            loss = loss_mlm(out.logits, labels, union)
        else:
            targets = torch.randn_like(out.predictions)
            loss = loss_reg(out.predictions, DistillTargets(targets, union))
        loss.backward()
        optimizer.step()

        for name, p in getattr(tiny_mlm_model, untouched).named_parameters():
            assert torch.equal(p, before[name]), name
        changed = getattr(tiny_mlm_model, "mlm_head" if trained == "mlm" else "regression_head").weight
        assert changed.grad is not None and torch.count_nonzero(changed.grad) > 0
