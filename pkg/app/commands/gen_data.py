"""gen-data: synthesize the paired corpus and split it into train and test"""

import logging

from data_pipeline.database.corpus_store import prepare_output_dir, write_corpus
from data_pipeline.ingestion.synthetic_corpus import generate_corpus, split_corpus
from data_science.config import RunConfig

from ..config import RunPaths

logger = logging.getLogger(__name__)

NAME = "gen-data"
HELP = "Generate the synthetic audio-visual corpus under run_dir/corpus"
SECTIONS = ("corpus", "run_dir")


def add_arguments(parser) -> None:
    pass


def run(config: RunConfig, options) -> None:
    paths = RunPaths.of(config)
    prepare_output_dir(paths.corpus, force=options.force)

    spec = config.corpus
    corpus = generate_corpus(spec)
    train, test = split_corpus(corpus, spec.test_fraction, spec.seed)
    write_corpus(paths.corpus_train, train, spec, force=True)
    write_corpus(paths.corpus_test, test, spec, force=True)

    frames = sum(s.num_frames for s in corpus)
    print(f"✓ Generated {len(corpus)} utterances ({frames} frames, {spec.num_latent_states} latent states)")
    print(f"  train: {len(train)} utterances -> {paths.corpus_train}")
    print(f"  test:  {len(test)} utterances -> {paths.corpus_test}")
