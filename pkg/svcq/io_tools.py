"""Shared helpers for the checksummed binary formats and for file discovery."""

import struct as _struct
import zlib as _zlib
from glob import iglob as _iglob
from pathlib import Path as _Path

from .errors import BadMagic as _BadMagic
from .errors import ChecksumMismatch as _ChecksumMismatch
from .errors import TruncatedFile as _TruncatedFile
from .errors import VersionUnsupported as _VersionUnsupported

_CRC_FORMAT = "<I"
CRC_SIZE = _struct.calcsize(_CRC_FORMAT)


def append_checksum(data: bytes) -> bytes:
    """Return ``data`` followed by its little-endian CRC32."""
    return data + _struct.pack(_CRC_FORMAT, _zlib.crc32(data) & 0xFFFFFFFF)


def unpack_checked(data, magic, header_format, version, payload_size, name):
    """Validate a ``magic | header | payload | crc32`` blob and return its header fields.

    ``payload_size`` is called with the unpacked header fields and returns the
    number of payload bytes the header announces. The first two header fields
    are always the magic and the format version.
    """
    data = bytes(data)
    header_size = _struct.calcsize(header_format)
    if len(data) < len(magic):
        raise _TruncatedFile(f"{name}: file is only {len(data)} bytes long")
    if data[: len(magic)] != magic:
        raise _BadMagic(f"{name}: expected magic {magic!r}, found {data[:len(magic)]!r}")
    if len(data) < header_size + CRC_SIZE:
        raise _TruncatedFile(
            f"{name}: file of {len(data)} bytes is shorter than its header"
        )

    fields = _struct.unpack_from(header_format, data, 0)
    if fields[1] != version:
        raise _VersionUnsupported(
            f"{name}: format version {fields[1]} is not supported (expected {version})"
        )

    expected_size = header_size + payload_size(fields) + CRC_SIZE
    (stored_crc,) = _struct.unpack_from(_CRC_FORMAT, data, len(data) - CRC_SIZE)
    if _zlib.crc32(data[:-CRC_SIZE]) & 0xFFFFFFFF != stored_crc:
        if len(data) < expected_size:
            raise _TruncatedFile(
                f"{name}: expected {expected_size} bytes, found {len(data)}"
            )
        raise _ChecksumMismatch(f"{name}: CRC32 trailer does not match contents")
    if len(data) != expected_size:
        raise _TruncatedFile(f"{name}: expected {expected_size} bytes, found {len(data)}")

    return fields, data[header_size : header_size + payload_size(fields)]


def get_files_in_patterns(patterns, recursive=True):
    """Return the sorted, unique files matching any of the glob ``patterns``."""
    return sorted(
        {
            _Path(f).resolve()
            for pattern in patterns
            for f in _iglob(str(pattern), recursive=recursive)
            if _Path(f).is_file()
        }
    )
