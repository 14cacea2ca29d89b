import struct
from pathlib import Path
from typing import BinaryIO, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import BadMagicError, CorruptFileError, TruncatedFileError, VersionMismatchError

_HEADER = struct.Struct("<4sI")


def ensure_directory(path: Path) -> Path:
    """
    Create directory if it doesn't exist
    """
    path.mkdir(parents=True, exist_ok=True)
    return path


def validate_path(path: Path) -> bool:
    """Validate path exists and is directory"""
    if not path.exists():
        raise FileNotFoundError(f"Path not found: {path}")
    if not path.is_dir():
        raise NotADirectoryError(f"Path is not a directory: {path}")
    return True


def validate_file(path: Path) -> bool:
    """Validate path exists and is a regular file"""
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    if not path.is_file():
        raise IsADirectoryError(f"Path is not a file: {path}")
    return True


def peek_magic(path: Path) -> bytes:
    """
    Return the four magic bytes that open every container written by this tool.
    """
    with open(path, "rb") as fh:
        return fh.read(4)


def write_header(fh: BinaryIO, magic: bytes, version: int) -> None:
    fh.write(_HEADER.pack(magic, version))


def write_array(fh: BinaryIO, values, dtype: str = "<f8") -> None:
    """
    Write values as a flat little-endian array in row-major order.
    """
    fh.write(np.ascontiguousarray(values, dtype=dtype).tobytes())


class BinaryReader:
    """
    Sequential reader over one container file.

    The magic and version are checked on construction, before any payload is
    decoded, so a mismatching file is never partially read.
    """

    def __init__(self, path: Path, magic: bytes, version: int):
        self.path = Path(path)
        self._data = self.path.read_bytes()
        self._offset = 0

        self._require(_HEADER.size)
        found_magic, found_version = _HEADER.unpack_from(self._data, 0)
        if found_magic != magic:
            raise BadMagicError(f"{self.path}: expected magic {magic!r}, found {found_magic!r}")
        if found_version != version:
            raise VersionMismatchError(
                f"{self.path}: unsupported {magic.decode()} version {found_version} (expected {version})"
            )
        self._offset = _HEADER.size

    def _require(self, nbytes: int) -> None:
        available = len(self._data) - self._offset
        if available < nbytes:
            raise TruncatedFileError(self.path, nbytes - available)

    def unpack(self, fmt: str) -> Tuple:
        layout = struct.Struct(fmt)
        self._require(layout.size)
        values = layout.unpack_from(self._data, self._offset)
        self._offset += layout.size
        return values

    def array(self, count: int, dtype: str = "<f8", shape: Optional[Sequence[int]] = None) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        self._require(count * itemsize)
        values = np.frombuffer(self._data, dtype=dtype, count=count, offset=self._offset).copy()
        self._offset += count * itemsize
        return values.reshape(shape) if shape is not None else values

    def finish(self) -> None:
        trailing = len(self._data) - self._offset
        if trailing:
            raise CorruptFileError(f"{self.path}: {trailing} unexpected trailing bytes")
