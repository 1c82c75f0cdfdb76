"""EMB1 writer (and a reader for self-tests), implemented from the format
contract alone.

Layout, all little-endian: magic "EMB1"; one role byte (0 sentence,
1 dpr_query, 2 dpr_context); u32 dim; u64 count; then per record a u32 id
byte-length, the UTF-8 id bytes, and dim float32 values. Records keep
input order, so identical inputs produce bit-identical files.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from . import SidecarError

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sBIQ")
_ID_LEN = struct.Struct("<I")

ROLE_BYTES = {"sentence": 0, "dpr_query": 1, "dpr_context": 2}


class FormatError(SidecarError):
    """The bytes do not form a valid EMB1 file."""


def write_table(role: str, vectors: list[tuple[str, np.ndarray]], path: str | Path) -> None:
    """Write (id, vector) records atomically: temp file, then rename.

    All vectors must share one dimension and be finite; ids must be unique.
    """
    if role not in ROLE_BYTES:
        raise SidecarError(f"unknown role {role!r}")
    if not vectors:
        raise SidecarError("refusing to write a table with no vectors")
    dim = int(np.asarray(vectors[0][1]).shape[0])
    seen: set[str] = set()
    chunks = [_HEADER.pack(MAGIC, ROLE_BYTES[role], dim, len(vectors))]
    for entry_id, vec in vectors:
        if entry_id in seen:
            raise SidecarError(f"duplicate embedding id {entry_id!r}")
        seen.add(entry_id)
        arr = np.asarray(vec, dtype="<f4")
        if arr.shape != (dim,):
            raise SidecarError(f"{entry_id!r}: vector shape {arr.shape}, expected ({dim},)")
        if not np.all(np.isfinite(arr)):
            raise SidecarError(f"{entry_id!r}: vector contains NaN or infinity")
        raw_id = entry_id.encode("utf-8")
        chunks.append(_ID_LEN.pack(len(raw_id)))
        chunks.append(raw_id)
        chunks.append(arr.tobytes())

    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(prefix=path.name + ".", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(chunks))
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def read_table(path: str | Path) -> tuple[str, int, list[tuple[str, np.ndarray]]]:
    """Parse an EMB1 file into (role, dim, ordered records). Self-test use."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError("file shorter than the EMB1 header")
    magic, role_byte, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    roles = {v: k for k, v in ROLE_BYTES.items()}
    if role_byte not in roles:
        raise FormatError(f"unknown role byte {role_byte}")
    offset = _HEADER.size
    records: list[tuple[str, np.ndarray]] = []
    for _ in range(count):
        if offset + _ID_LEN.size > len(data):
            raise FormatError("truncated record header")
        (id_len,) = _ID_LEN.unpack_from(data, offset)
        offset += _ID_LEN.size
        end = offset + id_len + 4 * dim
        if end > len(data):
            raise FormatError("truncated record")
        entry_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += 4 * dim
        records.append((entry_id, vec))
    if offset != len(data):
        raise FormatError("trailing bytes after the last record")
    return roles[role_byte], dim, records
