"""CIFAR-style archive conversion into FDS dataset files."""

from .cifar import ArchiveSource, open_archive
from .convert import ConversionManifest, convert, make_split
from .errors import ArchiveFormatError, PrepError
from .fds import FdsWriter, read_fds

__all__ = ["ArchiveSource", "open_archive", "ConversionManifest", "convert",
           "make_split", "ArchiveFormatError", "PrepError", "FdsWriter", "read_fds"]
