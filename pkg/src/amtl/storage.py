"""Zero-drop compressed embedding store.

A masked row ends in a run of exact zeros, so only the kept prefix
(k+1 values) is stored; fetch re-pads zeros to the full dimension and
reconstructs the masked row bit-exactly. Files carry a trailing CRC32.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingTable
from .errors import CheckpointError, ShapeError, VocabularyError

STORE_MAGIC = b"AMTS"
STORE_VERSION = 1


@dataclass
class CompressedStore:
    field_name: str
    dim: int
    rows: dict[int, np.ndarray]  # id -> kept prefix, length k+1

    def k(self, value_id: int) -> int:
        return len(self._row(value_id)) - 1

    def _row(self, value_id: int) -> np.ndarray:
        row = self.rows.get(int(value_id))
        if row is None:
            raise VocabularyError(f"store {self.field_name!r}: unknown id {value_id}")
        return row

    def stored_value_count(self) -> int:
        """Total float words at rest, sum of (k+1) over rows."""
        return sum(len(r) for r in self.rows.values())


def compress(table: EmbeddingTable, selections) -> CompressedStore:
    """Keep the first k+1 entries of every row; selections maps id -> k.

    Masking only zeroes the suffix, so the kept prefix of the masked row
    equals the prefix of the raw row. Every table id needs a selection.
    """
    if isinstance(selections, np.ndarray):
        selections = {i: int(k) for i, k in enumerate(selections)}
    missing = [i for i in range(table.vocab_size) if i not in selections]
    if missing:
        raise ShapeError(
            f"field {table.field_name!r}: no selection for ids {missing[:5]}"
            + ("..." if len(missing) > 5 else "")
        )
    rows = {}
    for vid in range(table.vocab_size):
        k = int(selections[vid])
        if not 0 <= k < table.dim:
            raise ShapeError(f"selection k={k} for id {vid} outside [0, {table.dim - 1}]")
        rows[vid] = table.weights[vid, : k + 1].copy()
    return CompressedStore(field_name=table.field_name, dim=table.dim, rows=rows)


def fetch(store: CompressedStore, value_id: int) -> np.ndarray:
    """Stored prefix followed by zeros, the masked embedding reconstructed."""
    row = store._row(value_id)
    out = np.zeros(store.dim)
    out[: len(row)] = row
    return out


def avg_dim(store: CompressedStore) -> float:
    """Mean kept dimension (k+1) over all ids."""
    if not store.rows:
        raise ShapeError("empty store has no average dimension")
    return store.stored_value_count() / len(store.rows)


def memory_ratio(store: CompressedStore) -> float:
    """avg_dim / D: embedding memory is proportional to the dimension."""
    return avg_dim(store) / store.dim


def serialize(store: CompressedStore, path) -> None:
    name_raw = store.field_name.encode("utf-8")
    chunks = [
        STORE_MAGIC,
        struct.pack("<I", STORE_VERSION),
        struct.pack("<I", len(name_raw)),
        name_raw,
        struct.pack("<I", store.dim),
        struct.pack("<Q", len(store.rows)),
    ]
    for vid in sorted(store.rows):
        row = np.ascontiguousarray(store.rows[vid], dtype=np.float64)
        chunks.append(struct.pack("<QH", vid, len(row) - 1))
        chunks.append(row.tobytes())
    body = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


def deserialize(path) -> CompressedStore:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != STORE_MAGIC:
        raise CheckpointError(f"{path}: not a store file (bad magic)")
    if len(blob) < 8:
        raise CheckpointError(f"{path}: truncated store")
    body, tail = blob[:-4], blob[-4:]
    if struct.unpack("<I", tail)[0] != zlib.crc32(body):
        raise CheckpointError(f"{path}: store CRC mismatch")

    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(body):
            raise CheckpointError(f"{path}: truncated store")
        out = body[pos : pos + n]
        pos += n
        return out

    (version,) = struct.unpack("<I", take(4))
    if version != STORE_VERSION:
        raise CheckpointError(f"{path}: unsupported store version {version}")
    (name_len,) = struct.unpack("<I", take(4))
    field_name = take(name_len).decode("utf-8")
    (dim,) = struct.unpack("<I", take(4))
    (count,) = struct.unpack("<Q", take(8))
    rows = {}
    for _ in range(count):
        vid, k = struct.unpack("<QH", take(10))
        if k >= dim:
            raise CheckpointError(f"{path}: row {vid} has k={k} >= dim {dim}")
        rows[int(vid)] = np.frombuffer(take(8 * (k + 1)), dtype="<f8").copy()
    if pos != len(body):
        raise CheckpointError(f"{path}: trailing bytes in store")
    return CompressedStore(field_name=field_name, dim=int(dim), rows=rows)
