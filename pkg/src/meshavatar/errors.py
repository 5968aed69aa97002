"""Exception hierarchy. The CLI maps these onto exit codes."""


class MeshAvatarError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MeshAvatarError):
    """Invalid configuration or mismatched dimensions (exit code 3)."""


class DataError(MeshAvatarError):
    """Missing, malformed or inconsistent input data (exit code 3)."""


class NumericError(MeshAvatarError):
    """Numerical failure: divergence, non-finite values (exit code 4)."""


class EmptyProjectionError(NumericError):
    """Every vertex projected behind the near plane."""
