"""
On-disk corpus storage.

Layout of a corpus directory:
    corpus.json          CorpusSpec snapshot (frame rates included)
    manifest.tsv         utterance_id <TAB> relative path <TAB> T, UTF-8
    records/<id>.av2v    one binary record per utterance
    targets/<id>.npy     optional discrete MLM labels per utterance

Record format (little-endian): magic b"AV2V", u32 version, u32 T,
u32 audio frames, u32 audio dim, u32 height, u32 width, u32 channels, then
row-major float32 payloads for latent labels, audio and video.
"""

import json
import logging
import shutil
import struct
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from data_science.algorithms.errors import CorruptRecordError, MissingInputError
from data_science.algorithms.sequences import FeatureSequence
from data_pipeline.ingestion.synthetic_corpus import CorpusSpec, SyntheticSample

logger = logging.getLogger(__name__)

RECORD_MAGIC = b"AV2V"
RECORD_VERSION = 1
_HEADER = struct.Struct("<4s7I")

MANIFEST_NAME = "manifest.tsv"
SPEC_NAME = "corpus.json"
TARGETS_DIR = "targets"

PathLike = Union[str, Path]


def encode_record(sample: SyntheticSample) -> bytes:
    t = sample.num_frames
    audio = sample.audio_clean.frames
    video = sample.video.frames
    h, w, c = video.shape[1:]
    header = _HEADER.pack(RECORD_MAGIC, RECORD_VERSION, t, audio.shape[0], audio.shape[1], h, w, c)
    payload = b"".join(
        np.ascontiguousarray(a, dtype="<f4").tobytes()
        for a in (sample.latent_labels, audio, video)
    )
    return header + payload


def decode_record(
    data: bytes, utterance_id: str, audio_rate_hz: float, video_rate_hz: float
) -> SyntheticSample:
    if len(data) < _HEADER.size:
        raise CorruptRecordError(f"{utterance_id}: record shorter than its header")
    magic, version, t, ta, da, h, w, c = _HEADER.unpack_from(data)
    if magic != RECORD_MAGIC:
        raise CorruptRecordError(f"{utterance_id}: bad magic {magic!r}")
    if version != RECORD_VERSION:
        raise CorruptRecordError(f"{utterance_id}: unsupported record version {version}")
    sizes = (t, ta * da, t * h * w * c)
    expected = _HEADER.size + 4 * sum(sizes)
    if len(data) != expected:
        raise CorruptRecordError(f"{utterance_id}: expected {expected} bytes, found {len(data)}")

    flat = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).astype(np.float32)
    labels, audio, video = np.split(flat, np.cumsum(sizes)[:-1])
    return SyntheticSample(
        latent_labels=labels.astype(np.int64),
        audio_clean=FeatureSequence("audio", audio.reshape(ta, da), audio_rate_hz),
        video=FeatureSequence("video", video.reshape(t, h, w, c), video_rate_hz),
        utterance_id=utterance_id,
    )


def prepare_output_dir(directory: PathLike, force: bool = False) -> Path:
    """Create ``directory``; refuse a non-empty one unless ``force`` wipes it"""
    directory = Path(directory)
    if directory.exists() and any(directory.iterdir()):
        if not force:
            raise FileExistsError(f"{directory} exists and is not empty; pass --force to regenerate")
        shutil.rmtree(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def write_corpus(
    directory: PathLike, samples: Sequence[SyntheticSample], spec: CorpusSpec, force: bool = False
) -> Path:
    directory = prepare_output_dir(directory, force=force)
    (directory / "records").mkdir()
    (directory / SPEC_NAME).write_text(spec.model_dump_json(indent=2), encoding="utf-8")

    rows = []
    for sample in samples:
        rel = f"records/{sample.utterance_id}.av2v"
        (directory / rel).write_bytes(encode_record(sample))
        rows.append(f"{sample.utterance_id}\t{rel}\t{sample.num_frames}\n")
    (directory / MANIFEST_NAME).write_text("".join(rows), encoding="utf-8")
    logger.info(f"✓ Wrote {len(samples)} utterances to {directory}")
    return directory


def read_manifest(directory: PathLike) -> pd.DataFrame:
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise MissingInputError(f"no corpus manifest at {path}")
    if path.stat().st_size == 0:
        return pd.DataFrame(columns=["utterance_id", "path", "num_frames"])
    try:
        return pd.read_csv(
            path, sep="\t", header=None, names=["utterance_id", "path", "num_frames"],
            dtype={"utterance_id": str, "path": str, "num_frames": int}, encoding="utf-8",
        )
    except (ValueError, pd.errors.ParserError) as e:
        raise CorruptRecordError(f"malformed manifest {path}: {e}") from e


def read_corpus_spec(directory: PathLike) -> CorpusSpec:
    path = Path(directory) / SPEC_NAME
    if not path.is_file():
        raise MissingInputError(f"no corpus spec at {path}")
    return CorpusSpec.model_validate(json.loads(path.read_text(encoding="utf-8")))


def read_corpus(directory: PathLike) -> Tuple[CorpusSpec, List[SyntheticSample]]:
    directory = Path(directory)
    spec = read_corpus_spec(directory)
    samples = []
    for row in read_manifest(directory).itertuples(index=False):
        sample = decode_record(
            (directory / row.path).read_bytes(), row.utterance_id, spec.audio_rate_hz, spec.video_rate_hz
        )
        if sample.num_frames != row.num_frames:
            raise CorruptRecordError(f"{row.utterance_id}: manifest says T={row.num_frames}, record has {sample.num_frames}")
        samples.append(sample)
    logger.info(f"✓ Loaded {len(samples)} utterances from {directory}")
    return spec, samples


def write_targets(directory: PathLike, targets: Mapping[str, np.ndarray], force: bool = True) -> Path:
    """Persist one int64 label file per utterance under ``targets/``"""
    target_dir = prepare_output_dir(Path(directory) / TARGETS_DIR, force=force)
    for utterance_id, labels in targets.items():
        np.save(target_dir / f"{utterance_id}.npy", np.asarray(labels, dtype=np.int64))
    return target_dir


def read_targets(directory: PathLike) -> Dict[str, np.ndarray]:
    target_dir = Path(directory) / TARGETS_DIR
    if not target_dir.is_dir():
        raise MissingInputError(f"no discrete targets at {target_dir}; run the cluster command first")
    return {p.stem: np.load(p) for p in sorted(target_dir.glob("*.npy"))}
