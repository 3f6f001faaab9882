"""Exception types shared by the binary file formats and the run harness."""


class FormatError(ValueError):
    """A dataset or checkpoint file could not be decoded."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class TrainingDivergedError(RuntimeError):
    """The training loss became NaN or infinite."""


class EpisodeError(RuntimeError):
    """An evaluation episode could not proceed (e.g. the object vanished from view)."""
