"""cluster: k-means targets from a pretrained checkpoint"""

import logging

from data_pipeline.database.corpus_store import write_targets
from data_science.algorithms.kmeans import (
    assign_targets,
    default_feature_layer,
    dump_features,
    kmeans_fit,
    save_cluster_model,
)
from data_science.config import RunConfig

from ..config import RunPaths
from ..utils.model_loader import load_pretrained_model, load_split, resolve_checkpoint

logger = logging.getLogger(__name__)

NAME = "cluster"
HELP = "Cluster hidden features of a pretrained model into discrete MLM targets"
SECTIONS = ("seed", "run_dir", "model", "cluster")


def add_arguments(parser) -> None:
    parser.add_argument("--checkpoint", help="Pretrained checkpoint (default: run_dir/checkpoints/last.ckpt)")


def run(config: RunConfig, options) -> None:
    paths = RunPaths.of(config)
    _, train = load_split(paths, "train")
    checkpoint = resolve_checkpoint(options.checkpoint, paths.last_checkpoint, "pretrain")
    model = load_pretrained_model(config, checkpoint)

    layer = config.cluster.feature_layer or default_feature_layer(model.encoder.num_layers)
    dump = dump_features(model, train, layer)
    cluster = kmeans_fit(dump.features, config.num_clusters, config.cluster.max_iters, config.seed, layer)
    save_cluster_model(cluster, paths.cluster_model)
    targets = assign_targets(cluster, model, train)
    write_targets(paths.corpus_train, targets, force=True)

    print(f"✓ k-means with K={cluster.num_clusters} on layer {layer}: objective {cluster.objective:.4f}")
    print(f"  iterations: {len(cluster.objective_history)}; targets for {len(targets)} utterances")
    print(f"  centroids: {paths.cluster_model}")
