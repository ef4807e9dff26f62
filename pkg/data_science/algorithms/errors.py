"""
Error types shared by the AV2vec pipeline.

Every error carries an ``exit_code`` so the command-line layer can map a
failure to a process status without inspecting messages.
"""


class AV2vecError(Exception):
    """Base class for all pipeline errors"""
    exit_code = 1


class ConfigurationError(AV2vecError, ValueError):
    """Invalid or inconsistent configuration values"""
    exit_code = 2


class ShapeError(AV2vecError, ValueError):
    """Tensor or sequence shapes do not satisfy an operation's contract"""
    exit_code = 2


class DegenerateInputError(AV2vecError, ValueError):
    """Input carries no usable signal (e.g. zero energy for SNR scaling)"""
    exit_code = 2


class IndexRangeError(AV2vecError, IndexError):
    """Frame index or class label outside its valid range"""
    exit_code = 2


class MissingInputError(AV2vecError, FileNotFoundError):
    """A required corpus, checkpoint or target set is absent"""
    exit_code = 3


class CheckpointError(AV2vecError):
    """Base class for checkpoint persistence failures"""
    exit_code = 4


class CorruptCheckpointError(CheckpointError):
    """Checkpoint file is truncated or malformed"""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written by an unsupported format version"""


class TrainingDivergedError(AV2vecError, RuntimeError):
    """Loss became NaN or infinite during training"""
    exit_code = 5


class CorruptRecordError(AV2vecError, ValueError):
    """Corpus record, manifest or cluster file is truncated or malformed"""
    exit_code = 3
