"""Binarization, bit-packed code storage, Hamming search, and AP/mAP.

Codes live in {-1,+1}^L. Packing maps component b of a code to bit b of the
row's byte stream, least-significant bit first; trailing bits of the final
byte are zero. For sign codes, squared Euclidean distance equals four times
the Hamming distance, so exhaustive Hamming ranking reproduces Euclidean
ranking exactly.
"""

from __future__ import annotations

import struct
import warnings
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, FormatError, ProtocolError, ShapeError, UnknownIdError

_CODE_MAGIC = b"BCDB"
_MAX_DIM = 2**31 - 1
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def sign_bits(f: np.ndarray) -> np.ndarray:
    """Elementwise sign as 0/1 bits, with sign(0) = +1."""
    f = np.asarray(f, dtype=np.float64)
    return (f >= 0.0).astype(np.uint8)


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack an (n, L) 0/1 array into (n, ceil(L/8)) bytes, LSB-first."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 2:
        raise ShapeError("bits must be 2-D")
    return np.packbits(bits, axis=1, bitorder="little")


def unpack_bits(packed: np.ndarray, code_len: int) -> np.ndarray:
    """Inverse of pack_bits: (n, ceil(L/8)) bytes back to (n, L) bits."""
    packed = np.atleast_2d(np.asarray(packed, dtype=np.uint8))
    return np.unpackbits(packed, axis=1, count=code_len, bitorder="little")


@dataclass
class CodeDatabase:
    """N bit-packed L-bit sign codes with image ids; immutable once built."""

    ids: list[str]
    code_len: int
    packed: np.ndarray
    _row_by_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.packed = np.atleast_2d(np.asarray(self.packed, dtype=np.uint8))
        row_bytes = (self.code_len + 7) // 8
        if self.code_len < 1:
            raise ShapeError("code_len must be >= 1")
        if self.packed.shape[0] != len(self.ids) or (
            len(self.ids) and self.packed.shape[1] != row_bytes
        ):
            raise ShapeError(
                f"packed shape {self.packed.shape} inconsistent with "
                f"{len(self.ids)} codes of {row_bytes} bytes"
            )
        if len(self.ids) == 0:
            self.packed = self.packed.reshape(0, row_bytes)
        self._row_by_id = {image_id: i for i, image_id in enumerate(self.ids)}
        if len(self._row_by_id) != len(self.ids):
            raise ContractError("duplicate image ids in code database")
        tail = self.code_len % 8
        if tail and self.packed.size and np.any(self.packed[:, -1] >> tail):
            raise ContractError("trailing bits beyond code_len must be zero")
        self.packed.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ids)

    def row(self, image_id: str) -> np.ndarray:
        try:
            return self.packed[self._row_by_id[image_id]]
        except KeyError:
            raise UnknownIdError(f"unknown image id {image_id!r}") from None

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._row_by_id

    def signs(self) -> np.ndarray:
        """Codes as an (n, L) float64 array over {-1, +1}."""
        bits = unpack_bits(self.packed, self.code_len)
        return bits.astype(np.float64) * 2.0 - 1.0

    def subset(self, ids: Sequence[str]) -> "CodeDatabase":
        rows = []
        for image_id in ids:
            idx = self._row_by_id.get(image_id)
            if idx is None:
                raise UnknownIdError(f"unknown image id {image_id!r}")
            rows.append(idx)
        return CodeDatabase(list(ids), self.code_len, self.packed[rows])


def binarize(batch, ids: list[str] | None = None) -> CodeDatabase:
    """Sign-quantize embeddings (sign(0) = +1) into a packed code database.

    Accepts an EmbeddingBatch (uses its ids) or a plain (n, L) matrix with
    an explicit id list.
    """
    f = getattr(batch, "f", batch)
    if ids is None:
        ids = getattr(batch, "ids", None)
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2:
        raise ShapeError("embeddings must be 2-D")
    if ids is None:
        raise ContractError("binarize needs image ids (embedding batch had none)")
    return CodeDatabase(list(ids), f.shape[1], pack_bits(sign_bits(f)))


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Hamming distance between two packed rows of equal length."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ContractError(f"packed rows differ in length: {a.shape} vs {b.shape}")
    return int(_POPCOUNT[np.bitwise_xor(a, b)].sum())


def hamming_to_all(db: CodeDatabase, query: np.ndarray) -> np.ndarray:
    """Hamming distances from one packed query row to every row of db."""
    query = np.asarray(query, dtype=np.uint8)
    if db.packed.shape[1:] != query.shape:
        raise ContractError(f"query row shape {query.shape} does not match database")
    return _POPCOUNT[np.bitwise_xor(db.packed, query)].sum(axis=1, dtype=np.int64)


@dataclass
class RankedList:
    query_id: str | None
    entries: list[tuple[str, int]]  # (image_id, distance), ascending (distance, id)


def search(
    db: CodeDatabase,
    query: np.ndarray,
    query_id: str | None = None,
    remove_id: str | None = None,
) -> RankedList:
    """Rank the whole database by (Hamming distance, image id) ascending."""
    distances = hamming_to_all(db, query)
    if remove_id is not None and remove_id not in db:
        warnings.warn(f"remove_id {remove_id!r} not in code database; nothing removed")
    entries = sorted(
        (
            (image_id, int(dist))
            for image_id, dist in zip(db.ids, distances)
            if image_id != remove_id
        ),
        key=lambda e: (e[1], e[0]),
    )
    return RankedList(query_id, entries)


def average_precision(flags: Sequence[bool | int], num_relevant: int) -> float:
    """Non-interpolated AP: mean of precision at each relevant hit over
    ``num_relevant``, the total relevant count in the ground truth.

    Computed in exact rational arithmetic and rounded once, so hand values
    like [1,0,1,0] -> 5/6 hold to the last bit.
    """
    if num_relevant < 1:
        raise ProtocolError("average_precision requires at least one relevant item")
    hits = 0
    total = Fraction(0)
    for rank, flag in enumerate(flags, start=1):
        if flag:
            hits += 1
            total += Fraction(hits, rank)
    return float(total / num_relevant)


def mean_ap(per_query: Iterable[tuple[Sequence[bool | int], int]]) -> float:
    """Mean AP over queries, skipping queries with zero relevant items."""
    aps = [average_precision(flags, nrel) for flags, nrel in per_query if nrel >= 1]
    if not aps:
        raise ProtocolError("no queries with relevant items; mAP is undefined")
    return sum(aps) / len(aps)


def evaluate_map(
    codes: CodeDatabase,
    query_ids: Sequence[str],
    database_ids: Sequence[str],
    is_relevant: Callable[[str, str], bool],
    threads: int = 1,
) -> float:
    """mAP of ranking ``database_ids`` by Hamming distance for each query.

    The query is removed from its own ranked list when present in the
    database. Queries with no relevant database image are skipped.
    """
    if not query_ids:
        raise ProtocolError("no queries to evaluate")
    db = codes.subset(list(database_ids))

    def one_query(query_id: str) -> tuple[list[int], int]:
        remove = query_id if query_id in db else None
        ranked = search(db, codes.row(query_id), query_id, remove_id=remove)
        flags = [1 if is_relevant(query_id, image_id) else 0 for image_id, _ in ranked.entries]
        return flags, sum(flags)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_query, query_ids))
    else:
        results = [one_query(q) for q in query_ids]
    return mean_ap(results)


def save_codes(db: CodeDatabase, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_CODE_MAGIC)
        fh.write(struct.pack("<II", len(db.ids), db.code_len))
        fh.write(db.packed.tobytes(order="C"))


def load_codes(path, ids: list[str] | None = None) -> CodeDatabase:
    """Read a code file; ids are not stored in the format, so callers either
    pass the row-ordered id list or get synthetic row-index ids."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != _CODE_MAGIC:
        raise FormatError("bad code-file magic", offset=0)
    if len(data) < 12:
        raise FormatError("truncated code-file header", offset=4)
    n, code_len = struct.unpack_from("<II", data, 4)
    row_bytes = (code_len + 7) // 8
    if n > _MAX_DIM or code_len > _MAX_DIM or 12 + n * row_bytes != len(data):
        raise FormatError(
            f"code payload for {n} codes of {row_bytes} bytes does not match file size",
            offset=4,
        )
    packed = np.frombuffer(data, dtype=np.uint8, offset=12).reshape(n, row_bytes)
    if ids is None:
        ids = [str(i) for i in range(n)]
    elif len(ids) != n:
        raise FormatError(f"id list of {len(ids)} entries for {n} codes", offset=4)
    return CodeDatabase(list(ids), code_len, packed.copy())
