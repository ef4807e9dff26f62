"""
k-means Discrete Targets

Hidden features of a pretrained model are clustered with k-means++ seeding
and Lloyd iterations; each frame's nearest centroid becomes its MLM label.

Distances are explicit squared differences accumulated in float64, so a
frame equidistant from two centroids is assigned to the lower index.

Usage:
    dump = dump_features(model, samples, layer=1)
    cluster = kmeans_fit(dump.features, num_clusters=16, max_iters=100, seed=0, feature_layer=1)
    targets = assign_targets(cluster, model, samples)
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import torch
from sklearn.cluster import kmeans_plusplus

from .encoder import AV2vecModel, encode_clean
from .errors import ConfigurationError, CorruptCheckpointError, CheckpointVersionError
from .features import model_inputs

logger = logging.getLogger(__name__)

CLUSTER_MAGIC = b"AV2K"
CLUSTER_VERSION = 1
_HEADER = struct.Struct("<4s4I")

_DISTANCE_CHUNK = 1024


@dataclass
class ClusterModel:
    """K x d centroids fitted on one encoder layer"""
    centroids: np.ndarray
    feature_layer: int
    objective_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 2:
            raise ConfigurationError(f"need a K x d centroid matrix with K >= 2, got {self.centroids.shape}")
        if not np.all(np.isfinite(self.centroids)):
            raise ConfigurationError("centroids contain NaN/Inf")

    @property
    def num_clusters(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])

    @property
    def objective(self) -> float:
        return self.objective_history[-1] if self.objective_history else float("nan")


@dataclass
class FeatureDump:
    """Frame features of a corpus plus the frame -> utterance index"""
    features: np.ndarray
    utterance_ids: List[str]
    offsets: np.ndarray

    def split(self, values: np.ndarray) -> Dict[str, np.ndarray]:
        """Per-utterance slices of a per-frame array"""
        return {
            utt: values[self.offsets[i]: self.offsets[i + 1]]
            for i, utt in enumerate(self.utterance_ids)
        }


def default_feature_layer(num_layers: int) -> int:
    """Middle encoder layer, 1-based"""
    return max(1, num_layers // 2)


@torch.no_grad()
def dump_features(model: AV2vecModel, samples: Sequence, layer: int) -> FeatureDump:
    """
    Layer-``layer`` (1-based) encoder outputs on clean, unmasked,
    both-modality input.
    """
    num_layers = model.encoder.num_layers
    if not 1 <= layer <= num_layers:
        raise ConfigurationError(f"feature layer must be in [1, {num_layers}], got {layer}")
    was_training = model.training
    model.eval()
    chunks, ids, lengths = [], [], []
    for sample in samples:
        audio, video = model_inputs(sample.audio_clean, sample.video, dtype=model.dtype)
        hidden = encode_clean(model, audio, video)[layer - 1][0]
        chunks.append(hidden.double().cpu().numpy())
        ids.append(sample.utterance_id)
        lengths.append(hidden.shape[0])
    model.train(was_training)
    features = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, model.config.d_model))
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    logger.info(f"✓ Dumped {features.shape[0]} frames of layer {layer} from {len(ids)} utterances")
    return FeatureDump(features, ids, offsets)


def squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(N, K) squared Euclidean distances from explicit differences"""
    points = np.asarray(points, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    out = np.empty((points.shape[0], centroids.shape[0]), dtype=np.float64)
    for start in range(0, points.shape[0], _DISTANCE_CHUNK):
        diff = points[start: start + _DISTANCE_CHUNK, None, :] - centroids[None, :, :]
        out[start: start + _DISTANCE_CHUNK] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid labels; ties go to the lowest index"""
    return np.argmin(squared_distances(points, centroids), axis=1).astype(np.int64)


def _reseed_empty(points, centroids, labels, distances):
    """Move each empty centroid onto the point farthest from its own centroid"""
    counts = np.bincount(labels, minlength=centroids.shape[0])
    own = distances[np.arange(points.shape[0]), labels].copy()
    for k in np.flatnonzero(counts == 0):
        far = int(np.argmax(own))
        logger.debug(f"Re-seeding empty cluster {k} at point {far}")
        centroids[k] = points[far]
        own[far] = -1.0
    return centroids


def kmeans_fit(
    features: np.ndarray,
    num_clusters: int,
    max_iters: int = 100,
    seed: int = 0,
    feature_layer: int = 1,
) -> ClusterModel:
    """
    Lloyd's algorithm from k-means++ seeds.

    Stops when assignments no longer change or after ``max_iters``. The
    objective (sum of squared distances to the assigned centroid) is
    recorded after every assignment step and never increases.
    """
    points = np.asarray(features, dtype=np.float64)
    n = points.shape[0]
    if num_clusters < 2:
        raise ConfigurationError(f"K must be >= 2, got {num_clusters}")
    if n < num_clusters:
        raise ConfigurationError(f"cannot fit K={num_clusters} clusters to {n} frames")
    if max_iters < 1:
        raise ConfigurationError(f"max_iters must be >= 1, got {max_iters}")

    centroids, _ = kmeans_plusplus(points, num_clusters, random_state=seed % (2 ** 32))
    centroids = centroids.astype(np.float64)
    labels = None
    history: List[float] = []

    for iteration in range(max_iters):
        distances = squared_distances(points, centroids)
        new_labels = np.argmin(distances, axis=1)
        history.append(float(distances[np.arange(n), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        updated = np.zeros_like(centroids)
        np.add.at(updated, labels, points)
        counts = np.bincount(labels, minlength=num_clusters)
        nonempty = counts > 0
        updated[nonempty] /= counts[nonempty, None]
        updated[~nonempty] = centroids[~nonempty]
        centroids = _reseed_empty(points, updated, labels, distances) if not nonempty.all() else updated

    logger.info(f"✓ k-means converged after {len(history)} iterations (objective {history[-1]:.4f})")
    return ClusterModel(centroids.astype(np.float32), feature_layer, history)


def assign_targets(
    cluster: ClusterModel, model: AV2vecModel, samples: Sequence
) -> Dict[str, np.ndarray]:
    """Per-utterance nearest-centroid labels at the cluster's feature layer"""
    if cluster.dim != model.config.d_model:
        raise ConfigurationError(f"centroids have d={cluster.dim}, model has d_model={model.config.d_model}")
    dump = dump_features(model, samples, cluster.feature_layer)
    return dump.split(assign(dump.features, cluster.centroids))


# ============================================================================
# PERSISTENCE
# ============================================================================

def save_cluster_model(cluster: ClusterModel, path: Union[str, Path]) -> Path:
    """magic, version, K, d, feature_layer, then row-major float32 centroids"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(CLUSTER_MAGIC, CLUSTER_VERSION, cluster.num_clusters, cluster.dim, cluster.feature_layer)
    path.write_bytes(header + np.ascontiguousarray(cluster.centroids, dtype="<f4").tobytes())
    return path


def load_cluster_model(path: Union[str, Path]) -> ClusterModel:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CorruptCheckpointError(f"{path}: truncated cluster header")
    magic, version, k, d, layer = _HEADER.unpack_from(data)
    if magic != CLUSTER_MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic {magic!r}")
    if version != CLUSTER_VERSION:
        raise CheckpointVersionError(f"{path}: unsupported cluster file version {version}")
    if len(data) != _HEADER.size + 4 * k * d:
        raise CorruptCheckpointError(f"{path}: expected {k}x{d} centroids")
    centroids = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(k, d).astype(np.float32)
    return ClusterModel(centroids, int(layer))
