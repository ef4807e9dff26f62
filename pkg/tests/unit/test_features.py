"""
Rate alignment and the audio / video feature extractors.
"""

import numpy as np
import pytest
import torch

from data_science.algorithms.errors import ConfigurationError, ShapeError
from data_science.algorithms.features import AudioExtractor, VideoExtractor, align_rates, model_inputs
from data_science.algorithms.sequences import FeatureSequence


def _audio(frames: int, dim: int, rate: float = 100.0) -> FeatureSequence:
    values = np.arange(frames * dim, dtype=np.float32).reshape(frames, dim)
    return FeatureSequence("audio", values, rate)


class TestAlignRates:
    def test_stacks_consecutive_frames(self):
        audio = _audio(8, 4)
        aligned = align_rates(audio, 25.0)
        assert aligned.frames.shape == (2, 16)
        assert aligned.frame_rate_hz == 25.0
        np.testing.assert_array_equal(aligned.frames[0], audio.frames[0:4].reshape(-1))
        np.testing.assert_array_equal(aligned.frames[1], audio.frames[4:8].reshape(-1))

    def test_drops_a_trailing_partial_group(self):
        assert align_rates(_audio(9, 4), 25.0).num_frames == 2

    def test_equal_rates_copy(self):
        audio = _audio(5, 3, rate=25.0)
        aligned = align_rates(audio, 25.0)
        np.testing.assert_array_equal(aligned.frames, audio.frames)
        assert aligned.frames is not audio.frames

    def test_non_integer_ratio(self):
        with pytest.raises(ConfigurationError):
            align_rates(_audio(8, 4, rate=90.0), 25.0)

    def test_too_few_frames(self):
        with pytest.raises(ShapeError):
            align_rates(_audio(3, 4), 25.0)


def test_sequence_rejects_non_finite_frames():
    frames = np.ones((3, 2), dtype=np.float32)
    frames[1, 0] = np.nan
    with pytest.raises(ShapeError):
        FeatureSequence("audio", frames, 100.0)


def test_audio_extractor_shape_contract():
    extractor = AudioExtractor(in_dim=16, d_feat=8).double()
    out = extractor(torch.randn(2, 5, 16, dtype=torch.float64))
    assert out.shape == (2, 5, 8)
    with pytest.raises(ShapeError):
        extractor(torch.randn(2, 5, 15, dtype=torch.float64))


def test_audio_extractor_gradients():
    extractor = AudioExtractor(in_dim=6, d_feat=3).double()
    x = torch.randn(1, 4, 6, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(extractor, (x,))


class TestVideoExtractor:
    @pytest.fixture
    def extractor(self):
        torch.manual_seed(0)
        return VideoExtractor(in_channels=1, channels=4, d_feat=8, num_blocks=1, kernel_time=3).double()

    @pytest.mark.parametrize("frames", [1, 2, 7])
    def test_preserves_frame_count(self, extractor, frames):
        out = extractor(torch.randn(1, frames, 8, 8, 1, dtype=torch.float64))
        assert out.shape == (1, frames, 8)

    def test_constant_video_gives_constant_features(self, extractor):
        frame = torch.randn(1, 1, 8, 8, 1, dtype=torch.float64)
        out = extractor(frame.expand(1, 6, 8, 8, 1).contiguous())
        torch.testing.assert_close(out, out[:, :1].expand_as(out))

    def test_rejects_wrong_channel_count(self, extractor):
        with pytest.raises(ShapeError):
            extractor(torch.randn(1, 3, 8, 8, 3, dtype=torch.float64))

    def test_rejects_frames_smaller_than_the_kernel(self, extractor):
        with pytest.raises(ShapeError):
            extractor(torch.randn(1, 3, 2, 2, 1, dtype=torch.float64))

    def test_even_temporal_kernel(self):
        with pytest.raises(ConfigurationError):
            VideoExtractor(in_channels=1, channels=4, d_feat=8, kernel_time=4)

    def test_differentiable_in_the_input(self, extractor):
        video = torch.randn(1, 3, 6, 6, 1, dtype=torch.float64, requires_grad=True)
        extractor(video).sum().backward()
        assert video.grad is not None
        assert torch.isfinite(video.grad).all()


def test_model_inputs_are_batches_of_one(tiny_corpus):
    sample = tiny_corpus[0]
    audio, video = model_inputs(sample.audio_clean, sample.video, torch.float64)
    t = sample.num_frames
    assert audio.shape == (1, t, 4 * sample.audio_clean.feature_shape[0])
    assert video.shape == (1, t, *sample.video.feature_shape)
    assert audio.dtype == torch.float64


def test_model_inputs_reject_misaligned_streams(tiny_corpus):
    sample = tiny_corpus[0]
    extra = FeatureSequence("audio", np.ones((4 * (sample.num_frames + 1), 4), dtype=np.float32), 100.0)
    with pytest.raises(ShapeError):
        model_inputs(extra, sample.video)
