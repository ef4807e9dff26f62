"""
Loading of run artifacts for the commands: checkpoints, corpora and
discrete targets, resolved against the run directory layout.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from data_pipeline.database.corpus_store import read_corpus, read_targets
from data_pipeline.ingestion.synthetic_corpus import CorpusSpec, SyntheticSample
from data_science.algorithms.encoder import AV2vecModel
from data_science.algorithms.errors import MissingInputError
from data_science.algorithms.kmeans import load_cluster_model
from data_science.config import RunConfig
from data_science.training.checkpoint import model_from_checkpoint, read_checkpoint

from ..config import RunPaths

logger = logging.getLogger(__name__)


def resolve_checkpoint(explicit: Optional[str], default: Path, produced_by: str) -> Path:
    """``explicit`` if given, else the run directory default; must exist"""
    path = Path(explicit) if explicit else default
    if not path.is_file():
        raise MissingInputError(f"no checkpoint at {path}; run the {produced_by} command first")
    return path


def load_pretrained_model(config: RunConfig, path: Path) -> AV2vecModel:
    model = model_from_checkpoint(read_checkpoint(path), config.model)
    logger.info(f"✓ Loaded model from {path}")
    return model


def load_split(paths: RunPaths, split: str) -> Tuple[CorpusSpec, List[SyntheticSample]]:
    directory = paths.corpus_train if split == "train" else paths.corpus_test
    if not directory.is_dir():
        raise MissingInputError(f"no {split} corpus at {directory}; run the gen-data command first")
    return read_corpus(directory)


def load_mlm_targets(paths: RunPaths) -> Tuple[Dict[str, np.ndarray], int]:
    """Discrete targets from the cluster command and the K they were drawn from"""
    if not paths.cluster_model.is_file():
        raise MissingInputError(
            f"av2vec-mlm needs k-means targets but {paths.cluster_model} is missing; run the cluster command first"
        )
    cluster = load_cluster_model(paths.cluster_model)
    return read_targets(paths.corpus_train), cluster.num_clusters
