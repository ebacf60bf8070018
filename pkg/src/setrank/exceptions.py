"""Exception hierarchy shared by the package and the command line."""


class SetRankError(Exception):
    """Base class for every error raised deliberately by this package."""


class ParseError(SetRankError):
    def __init__(self, lineno, message):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class EmptyDatasetError(SetRankError):
    pass


class SplitError(SetRankError):
    pass


class FormatError(SetRankError):
    """Binary file could not be decoded.

    ``code`` distinguishes the failure for callers that need to branch on it.
    """

    code = "format"


class BadMagicError(FormatError):
    code = "bad-magic"


class VersionMismatchError(FormatError):
    code = "version"


class TruncatedFileError(FormatError):
    code = "truncated"


class DimensionMismatchError(SetRankError):
    pass


class TrainingDivergedError(SetRankError):
    """Raised when the objective or a gradient stops being finite.

    The last model whose objective was finite is kept on ``checkpoint``.
    """

    def __init__(self, message, checkpoint=None, log=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.log = log
