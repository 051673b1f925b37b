"""Exception hierarchy shared across the toolkit."""


class RomkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(RomkitError):
    """Invalid user-supplied configuration (bad mesh sizes, bad manifests, ...)."""


class NumericalError(RomkitError):
    """A numerical routine failed to meet its contract (solver breakdown, ...)."""


class ThetaSyntaxError(ConfigurationError):
    """Coefficient-expression parse failure; carries the byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ThetaEvalError(NumericalError):
    """Coefficient expression produced a non-finite value."""


class ArchiveError(ConfigurationError):
    """Model archive is missing, corrupt, or of an unsupported version."""
