class PrepError(Exception):
    """Base class for conversion errors."""


class ArchiveFormatError(PrepError, ValueError):
    """Malformed source archive; the message carries the byte offset."""
