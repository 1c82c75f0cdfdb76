"""Binary embedding tables (EMB1 files).

EMB1 layout, all little-endian: magic "EMB1"; one role byte (0 sentence,
1 dpr_query, 2 dpr_context); u32 dim; u64 count; then per record a u32 id
byte-length, the UTF-8 id bytes, and dim float32 values. Vectors are stored
exactly as produced; similarity semantics live with the consumer.

Ids follow a fixed scheme: sentence vectors are keyed "<doc_id>/s<sid>",
passage context vectors "<doc_id>/p<pid>", and query-window vectors
"<doc_id>/<section>/q<idx>".
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import BadMagic, DimMismatch, DuplicateId, IoFailure, NonFiniteValue

__all__ = [
    "Role",
    "EmbeddingTable",
    "write_table",
    "read_table",
    "sentence_key",
    "context_key",
    "query_key",
]

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sBIQ")
_ID_LEN = struct.Struct("<I")


class Role(Enum):
    SENTENCE = 0
    DPR_QUERY = 1
    DPR_CONTEXT = 2


def sentence_key(doc_id: str, sentence_id: int) -> str:
    return f"{doc_id}/s{sentence_id}"


def context_key(doc_id: str, passage_id: int) -> str:
    return f"{doc_id}/p{passage_id}"


def query_key(doc_id: str, section: str, window_index: int) -> str:
    return f"{doc_id}/{section}/q{window_index}"


@dataclass
class EmbeddingTable:
    dim: int
    role: Role
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, entry_id: str, vector: np.ndarray) -> None:
        if entry_id in self.entries:
            raise DuplicateId(f"duplicate embedding id {entry_id!r}")
        vec = np.asarray(vector, dtype="<f4")
        if vec.shape != (self.dim,):
            raise DimMismatch(f"{entry_id!r}: vector shape {vec.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(vec)):
            raise NonFiniteValue(f"{entry_id!r}: vector contains NaN or infinity")
        self.entries[entry_id] = vec

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self.entries

    def __getitem__(self, entry_id: str) -> np.ndarray:
        return self.entries[entry_id]


def write_table(table: EmbeddingTable, path: str | Path) -> None:
    """Serialize to EMB1. Round-trips bit-exactly through read_table."""
    if table.dim <= 0:
        raise DimMismatch(f"dim must be positive, got {table.dim}")
    chunks = [_HEADER.pack(MAGIC, table.role.value, table.dim, len(table.entries))]
    for entry_id, vec in table.entries.items():
        vec = np.asarray(vec, dtype="<f4")
        if vec.shape != (table.dim,):
            raise DimMismatch(f"{entry_id!r}: vector shape {vec.shape}, expected ({table.dim},)")
        if not np.all(np.isfinite(vec)):
            raise NonFiniteValue(f"{entry_id!r}: vector contains NaN or infinity")
        raw_id = entry_id.encode("utf-8")
        chunks.append(_ID_LEN.pack(len(raw_id)))
        chunks.append(raw_id)
        chunks.append(vec.tobytes())
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_table(path: str | Path) -> EmbeddingTable:
    """Parse an EMB1 file, validating as it goes.

    The declared record count is never trusted for allocation: records are
    read one at a time and a short read raises DimMismatch, so a corrupt
    header cannot trigger a huge upfront allocation.
    """
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    with fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise BadMagic(f"{path}: file shorter than the EMB1 header")
        magic, role_byte, dim, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise BadMagic(f"{path}: bad magic {magic!r}")
        try:
            role = Role(role_byte)
        except ValueError:
            raise BadMagic(f"{path}: unknown role byte {role_byte}") from None
        if dim <= 0:
            raise DimMismatch(f"{path}: declared dim {dim} is not positive")

        table = EmbeddingTable(dim=dim, role=role)
        vec_bytes = 4 * dim
        for index in range(count):
            raw_len = fh.read(_ID_LEN.size)
            if len(raw_len) < _ID_LEN.size:
                raise DimMismatch(f"{path}: truncated at record {index} (id length)")
            (id_len,) = _ID_LEN.unpack(raw_len)
            raw_id = fh.read(id_len)
            if len(raw_id) < id_len:
                raise DimMismatch(f"{path}: truncated at record {index} (id bytes)")
            entry_id = raw_id.decode("utf-8")
            raw_vec = fh.read(vec_bytes)
            if len(raw_vec) < vec_bytes:
                raise DimMismatch(f"{path}: truncated at record {index} (vector bytes)")
            vec = np.frombuffer(raw_vec, dtype="<f4")
            if not np.all(np.isfinite(vec)):
                raise NonFiniteValue(f"{path}: {entry_id!r} contains NaN or infinity")
            if entry_id in table.entries:
                raise DuplicateId(f"{path}: duplicate embedding id {entry_id!r}")
            table.entries[entry_id] = vec
        if fh.read(1):
            raise DimMismatch(f"{path}: trailing bytes after {count} records")
    return table
