"""
Tests for the synthetic paired corpus generator and the train/test split.
"""

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from data_pipeline.ingestion.synthetic_corpus import (
    CorpusSpec,
    SyntheticSample,
    create_corpus_generator,
    generate_corpus,
    split_corpus,
)
from data_science.algorithms.errors import ConfigurationError, ShapeError
from data_science.algorithms.sequences import FeatureSequence


def test_same_seed_gives_identical_corpus(tiny_config):
    first = generate_corpus(tiny_config.corpus)
    second = generate_corpus(tiny_config.corpus)
    assert [s.utterance_id for s in first] == [s.utterance_id for s in second]
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.latent_labels, b.latent_labels)
        np.testing.assert_array_equal(a.audio_clean.frames, b.audio_clean.frames)
        np.testing.assert_array_equal(a.video.frames, b.video.frames)


def test_different_seed_changes_corpus(tiny_config):
    other = tiny_config.corpus.model_copy(update={"seed": tiny_config.corpus.seed + 1})
    a = generate_corpus(tiny_config.corpus)[0]
    b = generate_corpus(other)[0]
    assert a.audio_clean.frames.shape != b.audio_clean.frames.shape or not np.array_equal(
        a.audio_clean.frames, b.audio_clean.frames
    )


def test_shapes_and_label_range(tiny_config, tiny_corpus):
    spec = tiny_config.corpus
    t_min, t_max = spec.frames_per_utterance
    assert len(tiny_corpus) == spec.num_utterances
    for sample in tiny_corpus:
        t = sample.num_frames
        assert t_min <= t <= t_max
        assert sample.latent_labels.shape == (t,)
        assert sample.latent_labels.min() >= 0
        assert sample.latent_labels.max() < spec.num_latent_states
        assert sample.audio_clean.frames.shape == (t * spec.rate_ratio, spec.audio_dim)
        assert sample.video.frames.shape == (t, *spec.video_dim_spatial)
        assert sample.audio_clean.frame_rate_hz == spec.audio_rate_hz
        assert sample.video.frame_rate_hz == spec.video_rate_hz


def test_empty_corpus():
    assert generate_corpus(CorpusSpec(num_utterances=0)) == []


def test_parallel_generation_matches_serial(tiny_config):
    serial = generate_corpus(tiny_config.corpus)
    parallel = generate_corpus(tiny_config.corpus.model_copy(update={"n_jobs": 2}))
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.video.frames, b.video.frames)


def test_latent_path_switches_to_a_different_state():
    generator = create_corpus_generator({"num_utterances": 1, "num_latent_states": 3, "latent_dwell": 1.0})
    labels = generator.latent_path(np.random.default_rng(0), 200)
    # dwell of exactly one frame: every step is a switch
    assert np.all(np.diff(labels) != 0)


def test_lip_rendering_shares_the_border_across_states():
    generator = create_corpus_generator({"visual_type": "lip", "video_dim_spatial": [8, 8, 1]})
    patterns = generator.video_patterns
    np.testing.assert_array_equal(patterns[0, 0, 0], patterns[1, 0, 0])
    assert not np.array_equal(patterns[0, 4, 4], patterns[1, 4, 4])


@pytest.mark.parametrize("bad", [
    {"frames_per_utterance": [10, 5]},
    {"frames_per_utterance": [0, 5]},
    {"audio_rate_hz": 90.0, "video_rate_hz": 25.0},
    {"unknown_key": 1},
])
def test_invalid_spec_is_a_configuration_error(bad):
    with pytest.raises(ConfigurationError):
        create_corpus_generator(bad)


def test_sample_rejects_misaligned_labels():
    audio = FeatureSequence("audio", np.ones((8, 2), dtype=np.float32), 100.0)
    video = FeatureSequence("video", np.ones((2, 4, 4, 1), dtype=np.float32), 25.0)
    with pytest.raises(ShapeError):
        SyntheticSample(np.zeros(3, dtype=np.int64), audio, video, "bad")


def test_split_is_a_disjoint_cover(tiny_corpus):
    train, test = split_corpus(tiny_corpus, 0.25, seed=5)
    train_ids = {s.utterance_id for s in train}
    test_ids = {s.utterance_id for s in test}
    assert not train_ids & test_ids
    assert train_ids | test_ids == {s.utterance_id for s in tiny_corpus}
    assert len(test) == round(0.25 * len(tiny_corpus))


def test_split_rejects_full_test_fraction(tiny_corpus):
    with pytest.raises(ConfigurationError):
        split_corpus(tiny_corpus, 1.0, seed=0)


def test_each_modality_predicts_the_latent_state():
    spec = CorpusSpec(num_utterances=40, frames_per_utterance=(20, 30), num_latent_states=6, seed=1)
    corpus = generate_corpus(spec)
    train, test = corpus[:30], corpus[30:]
    chance = 1.0 / spec.num_latent_states

    def audio_xy(samples):
        x = np.concatenate([s.audio_clean.frames for s in samples])
        y = np.concatenate([np.repeat(s.latent_labels, spec.rate_ratio) for s in samples])
        return x, y

    def video_xy(samples):
        x = np.concatenate([s.video.frames.reshape(s.num_frames, -1) for s in samples])
        y = np.concatenate([s.latent_labels for s in samples])
        return x, y

    for to_xy in (audio_xy, video_xy):
        x_train, y_train = to_xy(train)
        x_test, y_test = to_xy(test)
        classifier = LogisticRegression(max_iter=500).fit(x_train, y_train)
        assert classifier.score(x_test, y_test) > 2 * chance
