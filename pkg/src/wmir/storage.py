"""Newline-delimited JSON persistence for exams, embeddings, and training rows.

One JSON object per line, keys sorted, UTF-8 — the interchange format
shared by the corpus generator, the index builder, the trainer, and the
HTTP service. Writers are deterministic so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FormatError, SchemaError
from .index import EmbeddingIndex, EmbeddingRecord
from .reports import exam_from_dict

__all__ = [
    "dump_line",
    "iter_ndjson",
    "save_exams",
    "load_exams",
    "save_records",
    "load_records",
    "save_corpus",
    "load_corpus",
    "index_from_records",
    "save_training_rows",
    "load_training_rows",
    "training_rows_from_corpus",
]


def dump_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def iter_ndjson(path: str | Path):
    """Yield (line_number, parsed object); blank lines are skipped."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc


def _write_lines(path: str | Path, objs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(dump_line(obj))
            fh.write("\n")


def save_exams(path: str | Path, exams) -> None:
    _write_lines(path, (exam.to_dict() for exam in exams))


def load_exams(path: str | Path) -> list:
    exams = []
    for lineno, raw in iter_ndjson(path):
        try:
            exams.append(exam_from_dict(raw))
        except SchemaError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return exams


def save_records(path: str | Path, records) -> None:
    _write_lines(path, (record.to_dict() for record in records))


def load_records(path: str | Path) -> list[EmbeddingRecord]:
    records = []
    for lineno, raw in iter_ndjson(path):
        if not isinstance(raw, dict) or "exam_id" not in raw or "global_vec" not in raw:
            raise FormatError(
                f"{path}:{lineno}: embedding record needs exam_id and global_vec"
            )
        records.append(EmbeddingRecord.from_dict(raw))
    return records


def save_corpus(exams_path: str | Path, records_path: str | Path, corpus) -> None:
    """Write a generated corpus as paired exam and embedding files."""
    save_exams(exams_path, (exam for exam, _ in corpus))
    save_records(records_path, (record for _, record in corpus))


def load_corpus(exams_path: str | Path, records_path: str | Path):
    exams = load_exams(exams_path)
    records = load_records(records_path)
    by_id = {record.exam_id: record for record in records}
    corpus = []
    for exam in exams:
        record = by_id.get(exam.id)
        if record is None:
            raise FormatError(f"no embedding record for exam '{exam.id}'")
        corpus.append((exam, record))
    return corpus


def index_from_records(records) -> EmbeddingIndex:
    index = EmbeddingIndex()
    for record in records:
        index.upsert(record)
    return index


def save_training_rows(path: str | Path, rows) -> None:
    """Rows are (exam_id, feature vector, caption) triples."""
    _write_lines(
        path,
        (
            {
                "exam_id": exam_id,
                "features": [float(x) for x in features],
                "caption": caption,
            }
            for exam_id, features, caption in rows
        ),
    )


def load_training_rows(path: str | Path):
    """Return (exam_ids, feature matrix, captions)."""
    ids: list[str] = []
    feats: list[list[float]] = []
    caps: list[str] = []
    dim = None
    for lineno, raw in iter_ndjson(path):
        if not isinstance(raw, dict) or not {"exam_id", "features", "caption"} <= set(raw):
            raise FormatError(
                f"{path}:{lineno}: training row needs exam_id, features, caption"
            )
        vec = raw["features"]
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise FormatError(
                f"{path}:{lineno}: feature dim {len(vec)} != {dim} seen earlier"
            )
        ids.append(raw["exam_id"])
        feats.append(vec)
        caps.append(raw["caption"])
    if not ids:
        raise FormatError(f"{path}: no training rows")
    return ids, np.asarray(feats, dtype=np.float64), caps


def training_rows_from_corpus(corpus):
    """Global-embedding training triples straight from a generated corpus."""
    return [
        (exam.id, record.global_vec, exam.global_caption)
        for exam, record in corpus
    ]
