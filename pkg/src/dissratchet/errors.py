"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes (see :mod:`dissratchet.cli`).
"""


class DissRatchetError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DissRatchetError, ValueError):
    """Invalid parameters or inconsistent scenario configuration."""


class DomainError(DissRatchetError):
    """The phase-space window is not closed under the dynamics."""


class ConvergenceError(DissRatchetError):
    """An iterative solver failed to converge.

    Parameters
    ----------
    message : str
    partial : object, optional
        Whatever converged before giving up (for the eigensolver, a
        :class:`~dissratchet.krylov.SpectralSet` holding the converged subset).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class FieldFileError(DissRatchetError, OSError):
    """Base class for persistence failures."""


class ChecksumError(FieldFileError):
    pass


class UnknownKindError(FieldFileError):
    pass


class TruncatedPayloadError(FieldFileError):
    pass


class MissingArtifactError(ConfigurationError):
    """A requested stage needs an artifact that is neither on disk nor produced by this run."""


class LockError(FieldFileError):
    """The output directory is in use by another run."""
