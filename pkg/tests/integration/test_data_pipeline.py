"""
Generate -> persist -> reload -> evaluation sets, and k-means targets
written next to the stored corpus.
"""

import math

import numpy as np

from data_pipeline.database.corpus_store import read_corpus, read_targets, write_corpus, write_targets
from data_pipeline.ingestion.synthetic_corpus import generate_corpus, split_corpus
from data_pipeline.processing.noise_mixing import build_eval_sets, corpus_noise_bank, measure_snr_db
from data_science.algorithms.kmeans import assign_targets, dump_features, kmeans_fit


def test_stored_corpus_rebuilds_identical_eval_sets(tmp_path, tiny_config):
    spec = tiny_config.corpus
    train, test = split_corpus(generate_corpus(spec), spec.test_fraction, spec.seed)
    write_corpus(tmp_path / "test", test, spec)

    stored_spec, reloaded = read_corpus(tmp_path / "test")
    fresh = build_eval_sets(test, corpus_noise_bank(spec), seed=tiny_config.seed)
    stored = build_eval_sets(reloaded, corpus_noise_bank(stored_spec), seed=tiny_config.seed)

    for snr_db, samples in fresh.items():
        for a, b in zip(samples, stored[snr_db]):
            np.testing.assert_array_equal(a.audio_clean.frames, b.audio_clean.frames)
            if not math.isinf(snr_db):
                assert abs(measure_snr_db(test[0].audio_clean.frames, stored[snr_db][0].audio_clean.frames) - snr_db) < 0.1


def test_cluster_targets_persist_with_the_corpus(tmp_path, tiny_config, tiny_model, tiny_split):
    train, _ = tiny_split
    write_corpus(tmp_path, train, tiny_config.corpus)
    _, samples = read_corpus(tmp_path)

    dump = dump_features(tiny_model, samples, layer=1)
    cluster = kmeans_fit(dump.features, tiny_config.num_clusters, seed=tiny_config.seed)
    write_targets(tmp_path, assign_targets(cluster, tiny_model, samples))

    targets = read_targets(tmp_path)
    assert len(targets) == len(train)
    for sample in samples:
        assert targets[sample.utterance_id].shape == (sample.num_frames,)
