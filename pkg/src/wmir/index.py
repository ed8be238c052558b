"""Embedding storage, exact cosine top-k search, and binary persistence.

Vectors are unit-normalized at ingest and stored as little-endian float32,
so the inner products computed at query time are cosine similarities.
Search is exact (full scan + exact selection): at the corpus scales this
engine targets, approximate indexes buy nothing and would break oracle
equality. Ties are broken by ascending exam id so results are fully
deterministic.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import RegionKind
from .errors import (
    DimensionMismatchError,
    EmptySearchSpaceError,
    FormatError,
    ZeroVectorError,
)
from .kernels import Scanner

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "normalize",
    "EmbeddingRecord",
    "SpaceView",
    "IndexSnapshot",
    "EmbeddingIndex",
]

MAGIC = b"WMIR"
FORMAT_VERSION = 1

_REGION_ORDER = tuple(RegionKind)  # bit order in the per-entry region flags


def normalize(v) -> np.ndarray:
    """Return v / ||v|| as float32. Raises ZeroVectorError when ||v|| = 0."""
    v64 = np.asarray(v, dtype=np.float64)
    if v64.ndim != 1:
        raise ValueError("normalize expects a 1-D vector")
    norm = float(np.linalg.norm(v64))
    if norm == 0.0 or not np.isfinite(norm):
        raise ZeroVectorError("cannot normalize a zero or non-finite vector")
    return (v64 / norm).astype(np.float32)


@dataclass(frozen=True, slots=True)
class EmbeddingRecord:
    """Unit-normalized global + region vectors for one exam."""

    exam_id: str
    global_vec: np.ndarray
    region_vecs: dict[RegionKind, np.ndarray] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "exam_id": self.exam_id,
            "global_vec": [float(x) for x in self.global_vec],
            "region_vecs": {
                r.value: [float(x) for x in v]
                for r, v in sorted(self.region_vecs.items())
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EmbeddingRecord":
        return cls(
            exam_id=raw["exam_id"],
            global_vec=np.asarray(raw["global_vec"], dtype=np.float32),
            region_vecs={
                RegionKind(r): np.asarray(v, dtype=np.float32)
                for r, v in raw.get("region_vecs", {}).items()
            },
        )


class SpaceView:
    """Immutable scan view over one embedding space (global or one region)."""

    def __init__(self, ids: tuple[str, ...], matrix: np.ndarray):
        self.ids = ids
        self.matrix = matrix
        self.ids_arr = np.asarray(ids, dtype=np.str_) if ids else np.empty(0, dtype=np.str_)
        self.id_to_row = {exam_id: row for row, exam_id in enumerate(ids)}
        self.scanner = Scanner(matrix) if len(ids) else None

    def __len__(self) -> int:
        return len(self.ids)


class IndexSnapshot:
    """Frozen snapshot of the index: one SpaceView per search space.

    Snapshots are immutable and safe to share across threads; the engine
    and the HTTP service always query a snapshot, never the live index.
    """

    def __init__(self, dim: int, spaces: dict[object, SpaceView]):
        self.dim = dim
        self._spaces = spaces

    def space(self, space: object) -> SpaceView:
        """`space` is the string 'global' or a RegionKind."""
        if space != "global" and not isinstance(space, RegionKind):
            raise ValueError(f"unknown search space {space!r}")
        return self._spaces[space]

    @property
    def exam_ids(self) -> tuple[str, ...]:
        return self._spaces["global"].ids

    def _eligible_mask(self, view: SpaceView, restrict, exclude) -> np.ndarray:
        if restrict is None:
            mask = np.ones(len(view), dtype=bool)
        else:
            mask = np.zeros(len(view), dtype=bool)
            for exam_id in restrict:
                row = view.id_to_row.get(exam_id)
                if row is not None:
                    mask[row] = True
        if exclude is not None:
            row = view.id_to_row.get(exclude)
            if row is not None:
                mask[row] = False
        return mask

    def _check_query(self, query: np.ndarray) -> np.ndarray:
        q = np.asarray(query, dtype=np.float32)
        if q.ndim != 1 or q.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"query has dimension {q.shape}, index dimension is {self.dim}"
            )
        return q

    def top_k(
        self,
        query: np.ndarray,
        k: int,
        space: object = "global",
        restrict=None,
        exclude: str | None = None,
    ) -> list[tuple[str, float]]:
        """Exact top-k by descending cosine, ties by ascending exam id.

        Only exams present in `space` participate; `restrict` further
        limits eligibility to the given exam ids, and `exclude` removes a
        single id (used for query self-exclusion). Returns at most k
        (exam_id, similarity) pairs.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        q = self._check_query(query)
        view = self.space(space)
        if len(view) == 0:
            raise EmptySearchSpaceError(f"no exams in space {space!r}")
        mask = self._eligible_mask(view, restrict, exclude)
        n_eligible = int(mask.sum())
        if n_eligible == 0:
            raise EmptySearchSpaceError(f"no eligible exams in space {space!r}")
        scores = view.scanner.scores(q)
        idx = np.flatnonzero(mask)
        sub = scores[idx]
        if k < n_eligible:
            # top-k set must include every row tied with the k-th score
            kth = np.partition(sub, n_eligible - k)[n_eligible - k]
            keep = np.flatnonzero(sub >= kth)
        else:
            keep = np.arange(n_eligible)
        ids_sub = view.ids_arr[idx[keep]]
        scores_sub = sub[keep]
        order = np.lexsort((ids_sub, -scores_sub))[:k]
        return [(str(ids_sub[i]), float(scores_sub[i])) for i in order]

    def brute_force_scan(
        self,
        query: np.ndarray,
        k: int,
        space: object = "global",
        restrict=None,
        exclude: str | None = None,
    ) -> list[tuple[str, float]]:
        """Naive full-scan oracle for top_k.

        Same contract and tie rule as top_k, but eligibility, ranking and
        truncation are reimplemented as a plain Python sort over all rows.
        Scores come from the same per-row scan primitive so the two routes
        agree bit-exactly and the oracle checks the selection logic.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        q = self._check_query(query)
        view = self.space(space)
        if len(view) == 0:
            raise EmptySearchSpaceError(f"no exams in space {space!r}")
        scores = view.scanner.scores(q)
        pairs = []
        restrict_set = None if restrict is None else set(restrict)
        for row, exam_id in enumerate(view.ids):
            if restrict_set is not None and exam_id not in restrict_set:
                continue
            if exclude is not None and exam_id == exclude:
                continue
            pairs.append((exam_id, float(scores[row])))
        if not pairs:
            raise EmptySearchSpaceError(f"no eligible exams in space {space!r}")
        pairs.sort(key=lambda p: (-p[1], p[0]))
        return pairs[:k]


class EmbeddingIndex:
    """Mutable store of embedding records with snapshot-based search.

    Mutation (upsert / load) requires exclusive access; `snapshot()`
    returns an immutable view that supports arbitrarily many concurrent
    readers. The first insert fixes the vector dimension.
    """

    def __init__(self):
        self._records: dict[str, EmbeddingRecord] = {}
        self._dim: int | None = None
        self._snapshot: IndexSnapshot | None = None

    def __len__(self) -> int:
        return len(self._records)

    @property
    def dim(self) -> int | None:
        return self._dim

    def ids(self) -> list[str]:
        return sorted(self._records)

    def get(self, exam_id: str) -> EmbeddingRecord | None:
        return self._records.get(exam_id)

    def upsert(self, record: EmbeddingRecord) -> None:
        """Normalize and store a record; same exam_id replaces wholesale."""
        gvec = normalize(record.global_vec)
        if self._dim is None:
            self._dim = int(gvec.shape[0])
        if gvec.shape[0] != self._dim:
            raise DimensionMismatchError(
                f"exam '{record.exam_id}': global vector has dimension "
                f"{gvec.shape[0]}, index dimension is {self._dim}"
            )
        region_vecs = {}
        for region, vec in record.region_vecs.items():
            rvec = normalize(vec)
            if rvec.shape[0] != self._dim:
                raise DimensionMismatchError(
                    f"exam '{record.exam_id}': region '{region.value}' vector "
                    f"has dimension {rvec.shape[0]}, index dimension is {self._dim}"
                )
            rvec.flags.writeable = False
            region_vecs[region] = rvec
        gvec.flags.writeable = False
        self._records[record.exam_id] = EmbeddingRecord(
            exam_id=record.exam_id, global_vec=gvec, region_vecs=region_vecs
        )
        self._snapshot = None

    def snapshot(self) -> IndexSnapshot:
        """Build (or reuse) the immutable search snapshot."""
        if self._snapshot is not None:
            return self._snapshot
        if self._dim is None:
            raise EmptySearchSpaceError("index is empty")
        ordered = sorted(self._records)
        spaces: dict[object, SpaceView] = {}
        gmat = np.stack([self._records[i].global_vec for i in ordered]) if ordered else np.empty((0, self._dim), np.float32)
        spaces["global"] = SpaceView(tuple(ordered), np.ascontiguousarray(gmat, dtype=np.float32))
        for region in RegionKind:
            ids = [i for i in ordered if region in self._records[i].region_vecs]
            if ids:
                mat = np.stack([self._records[i].region_vecs[region] for i in ids])
            else:
                mat = np.empty((0, self._dim), np.float32)
            spaces[region] = SpaceView(tuple(ids), np.ascontiguousarray(mat, dtype=np.float32))
        self._snapshot = IndexSnapshot(self._dim, spaces)
        return self._snapshot

    # Convenience pass-throughs so small scripts and tests can search the
    # index directly without naming the snapshot.
    def top_k(self, query, k, space="global", restrict=None, exclude=None):
        return self.snapshot().top_k(query, k, space, restrict, exclude)

    def brute_force_scan(self, query, k, space="global", restrict=None, exclude=None):
        return self.snapshot().brute_force_scan(query, k, space, restrict, exclude)

    # --- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write the versioned binary index file (little-endian float32)."""
        if self._dim is None:
            raise EmptySearchSpaceError("cannot save an empty index")
        ordered = sorted(self._records)
        dim = self._dim
        vec_bytes = 4 * dim

        entries_size = 0
        for exam_id in ordered:
            rec = self._records[exam_id]
            id_bytes = exam_id.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise FormatError(f"exam id too long to serialize: {exam_id!r}")
            entries_size += 2 + len(id_bytes) + 1 + 8 + 8 * len(rec.region_vecs)

        header = struct.pack("<4sIII", MAGIC, FORMAT_VERSION, dim, len(ordered))
        payload_start = len(header) + entries_size

        entry_parts = []
        payload_parts = []
        offset = payload_start
        for exam_id in ordered:
            rec = self._records[exam_id]
            id_bytes = exam_id.encode("utf-8")
            flags = 0
            for bit, region in enumerate(_REGION_ORDER):
                if region in rec.region_vecs:
                    flags |= 1 << bit
            part = struct.pack("<H", len(id_bytes)) + id_bytes + struct.pack("<B", flags)
            part += struct.pack("<Q", offset)
            payload_parts.append(rec.global_vec.astype("<f4", copy=False).tobytes())
            offset += vec_bytes
            for region in _REGION_ORDER:
                if region in rec.region_vecs:
                    part += struct.pack("<Q", offset)
                    payload_parts.append(
                        rec.region_vecs[region].astype("<f4", copy=False).tobytes()
                    )
                    offset += vec_bytes
            entry_parts.append(part)

        with open(path, "wb") as fh:
            fh.write(header)
            fh.writelines(entry_parts)
            fh.writelines(payload_parts)

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingIndex":
        """Read an index file; vectors round-trip bit-identically."""
        data = Path(path).read_bytes()
        if len(data) < 16:
            raise FormatError("file too short for index header")
        magic, version, dim, count = struct.unpack_from("<4sIII", data, 0)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}")
        if dim < 1:
            raise FormatError(f"bad dimension {dim}")
        vec_bytes = 4 * dim
        size = len(data)

        payload_end = 16

        def read_vec(off: int, what: str) -> np.ndarray:
            nonlocal payload_end
            if off + vec_bytes > size or off < 16:
                raise FormatError(f"{what}: offset {off} out of bounds")
            payload_end = max(payload_end, off + vec_bytes)
            vec = np.frombuffer(data, dtype="<f4", count=dim, offset=off).copy()
            norm = float(np.linalg.norm(vec.astype(np.float64)))
            if abs(norm - 1.0) > 1e-5:
                raise FormatError(f"{what}: stored vector is not unit-norm ({norm})")
            vec.flags.writeable = False
            return vec

        index = cls()
        index._dim = dim
        pos = 16
        try:
            for _ in range(count):
                (id_len,) = struct.unpack_from("<H", data, pos)
                pos += 2
                if len(data) < pos + id_len:
                    raise FormatError("truncated entry table")
                exam_id = data[pos : pos + id_len].decode("utf-8")
                pos += id_len
                (flags,) = struct.unpack_from("<B", data, pos)
                pos += 1
                (goff,) = struct.unpack_from("<Q", data, pos)
                pos += 8
                region_vecs = {}
                for bit, region in enumerate(_REGION_ORDER):
                    if flags & (1 << bit):
                        (roff,) = struct.unpack_from("<Q", data, pos)
                        pos += 8
                        region_vecs[region] = read_vec(
                            roff, f"exam '{exam_id}' region '{region.value}'"
                        )
                gvec = read_vec(goff, f"exam '{exam_id}' global")
                if exam_id in index._records:
                    raise FormatError(f"duplicate exam id '{exam_id}' in index file")
                index._records[exam_id] = EmbeddingRecord(
                    exam_id=exam_id, global_vec=gvec, region_vecs=region_vecs
                )
        except struct.error as exc:
            raise FormatError(f"truncated index file: {exc}") from None
        if size != payload_end:
            raise FormatError(
                f"file size {size} does not match payload end {payload_end}"
            )
        return index
