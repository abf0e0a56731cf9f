"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: validation/config problems exit 1,
file/format problems exit 2, corruption detected at runtime exits 3.
"""


class PacsetError(Exception):
    """Base class for all errors raised by this package."""


class ModelParseError(PacsetError):
    """Model document is not valid JSON. Carries the byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class ModelValidationError(PacsetError):
    """Model document violates the interchange schema."""


class ConfigError(PacsetError):
    """Layout or store configuration is invalid."""


class CapacityError(PacsetError):
    """Model exceeds a codec limit (e.g. node positions overflow 31 bits)."""


class FormatError(PacsetError):
    """Packed file header does not validate (magic/version/block size)."""


class CorruptionError(PacsetError):
    """Traversal hit a dangling reference or sentinel record."""


class BlockRangeError(PacsetError):
    """Block id outside the store's range."""


class IntegrityError(PacsetError):
    """Key/value store is missing a key that must exist."""
