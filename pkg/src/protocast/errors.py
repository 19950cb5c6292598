"""Exception hierarchy shared across the package."""


class ProtocastError(Exception):
    """Base class; the CLI maps any of these to exit code 1."""


class ShapeError(ProtocastError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(ProtocastError):
    """A caller violated an operation's precondition."""


class SchemaError(ProtocastError):
    """Data does not match the declared variable schema."""


class ParseError(ProtocastError):
    """A cell or row could not be parsed."""


class VocabularyError(ProtocastError):
    """A discrete value falls outside its declared vocabulary."""


class ConfigError(ProtocastError):
    """An invalid configuration value."""


class CheckpointError(ProtocastError):
    """Base for checkpoint container problems."""


class CorruptCheckpointError(CheckpointError):
    """Checksum, magic, or length mismatch while reading a checkpoint."""


class UnsupportedVersionError(CheckpointError):
    """Checkpoint format version is newer than this build supports."""


class TrainingDiverged(ProtocastError):
    """Loss became non-finite during optimization."""
