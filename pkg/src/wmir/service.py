"""HTTP/JSON service: ingestion, two-stage querying, ratings, eval summaries.

Queries always run against an immutable index snapshot; ingestion builds
a new snapshot and swaps it in, so readers never block on writers.
Clinician ratings go to an append-only newline-delimited JSON log that is
replayed on startup, which makes them durable across restarts.

Request bodies are validated by hand rather than by a schema layer so
the error contract stays explicit: 400 for malformed payloads, 404 for
unknown exams or suites, 409 for embedding dimension mismatches, and 422
when a query's search space is empty.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse

from .domain import RegionKind
from .engine import RetrievalMode, RetrievalQuery, RetrievalResult, Retriever
from .errors import (
    DimensionMismatchError,
    EmptySearchSpaceError,
    FormatError,
    InvalidQueryError,
    MissingQueryRegionError,
    SchemaError,
    UnknownExamError,
    WmirError,
    ZeroVectorError,
)
from .index import EmbeddingIndex, EmbeddingRecord
from .reports import exam_from_dict
from .storage import dump_line
from .suites import SUITE_NAMES, SuiteOptions, run_suite

__all__ = ["Rating", "RatingStore", "ServiceState", "create_app"]

_MODES = {mode.value: mode for mode in RetrievalMode}


@dataclass(frozen=True, slots=True)
class Rating:
    """One clinician relevance judgment on a 5-point scale."""

    query_exam_id: str
    result_exam_id: str
    mode: str
    score: int
    rater: str
    region: RegionKind | None = None
    timestamp: str = ""

    def __post_init__(self) -> None:
        if self.score not in (1, 2, 3, 4, 5):
            raise SchemaError(f"score must be an integer 1-5, got {self.score!r}")
        if self.mode not in ("single_stage", "two_stage"):
            raise SchemaError(f"mode must be single_stage or two_stage, got {self.mode!r}")
        for name in ("query_exam_id", "result_exam_id", "rater"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise SchemaError(f"field '{name}': expected a non-empty string")
        if not self.timestamp:
            stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
            object.__setattr__(self, "timestamp", stamp)

    def to_dict(self) -> dict:
        return {
            "query_exam_id": self.query_exam_id,
            "result_exam_id": self.result_exam_id,
            "mode": self.mode,
            "score": self.score,
            "rater": self.rater,
            "region": self.region.value if self.region else None,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Rating":
        if not isinstance(raw, dict):
            raise SchemaError("rating must be a JSON object")
        known = {
            "query_exam_id",
            "result_exam_id",
            "mode",
            "score",
            "rater",
            "region",
            "timestamp",
        }
        unknown = set(raw) - known
        if unknown:
            raise SchemaError(f"unknown rating fields: {sorted(unknown)}")
        region = raw.get("region")
        if region is not None:
            try:
                region = RegionKind(region)
            except ValueError as exc:
                raise SchemaError(f"unknown region '{raw['region']}'") from exc
        score = raw.get("score")
        if isinstance(score, bool) or not isinstance(score, int):
            raise SchemaError(f"score must be an integer 1-5, got {score!r}")
        return cls(
            query_exam_id=raw.get("query_exam_id", ""),
            result_exam_id=raw.get("result_exam_id", ""),
            mode=raw.get("mode", ""),
            score=score,
            rater=raw.get("rater", ""),
            region=region,
            timestamp=raw.get("timestamp", ""),
        )


class RatingStore:
    """Append-only NDJSON rating log with replace-on-rekey replay.

    A later rating for the same (query, result, rater, mode) replaces the
    earlier one when summarizing, but every submission stays in the log.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._by_key: dict[tuple, Rating] = {}
        if self.path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rating = Rating.from_dict(json.loads(line))
                except (json.JSONDecodeError, SchemaError) as exc:
                    raise FormatError(f"{self.path}:{lineno}: {exc}") from exc
                self._by_key[self._key(rating)] = rating

    @staticmethod
    def _key(rating: Rating) -> tuple:
        return (
            rating.query_exam_id,
            rating.result_exam_id,
            rating.rater,
            rating.mode,
        )

    def append(self, rating: Rating) -> None:
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(dump_line(rating.to_dict()))
                fh.write("\n")
                fh.flush()
            self._by_key[self._key(rating)] = rating

    def ratings(self) -> list[Rating]:
        return list(self._by_key.values())

    def summary(self) -> dict:
        """Mean score per (mode, region); null where nothing is rated."""
        out: dict = {}
        for mode in ("single_stage", "two_stage"):
            buckets: dict[str, list[int]] = {r.value: [] for r in RegionKind}
            all_scores: list[int] = []
            for rating in self._by_key.values():
                if rating.mode != mode:
                    continue
                all_scores.append(rating.score)
                if rating.region is not None:
                    buckets[rating.region.value].append(rating.score)
            out[mode] = {
                region: (sum(scores) / len(scores) if scores else None)
                for region, scores in buckets.items()
            }
            out[mode]["overall"] = (
                sum(all_scores) / len(all_scores) if all_scores else None
            )
        out["count"] = len(self._by_key)
        return out


class ServiceState:
    """Exams, live index, and the rating log behind the endpoints."""

    def __init__(self, ratings_path: str | Path):
        self.exams: dict = {}
        self.index = EmbeddingIndex()
        self.ratings = RatingStore(ratings_path)
        self.write_lock = threading.Lock()

    def ingest(self, pairs) -> list[str]:
        """Validated batch upsert; all-or-nothing under the write lock."""
        with self.write_lock:
            dim = self.index.dim
            for _, record in pairs:
                vec_dim = len(record.global_vec)
                if dim is None:
                    dim = vec_dim
                elif vec_dim != dim:
                    raise DimensionMismatchError(
                        f"embedding dim {vec_dim} != index dim {dim}"
                    )
                for region, vec in record.region_vecs.items():
                    if len(vec) != dim:
                        raise DimensionMismatchError(
                            f"region '{region.value}' dim {len(vec)} != index dim {dim}"
                        )
            for exam, record in pairs:
                self.index.upsert(record)
                self.exams[exam.id] = exam
            return [exam.id for exam, _ in pairs]

    def corpus(self) -> list[tuple]:
        pairs = []
        for exam_id in sorted(self.exams):
            record = self.index.get(exam_id)
            if record is not None:
                pairs.append((self.exams[exam_id], record))
        return pairs


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def _parse_query(payload: dict) -> RetrievalQuery:
    if not isinstance(payload, dict):
        raise SchemaError("query body must be a JSON object")
    known = {
        "exam_id",
        "global_vec",
        "region_vecs",
        "region",
        "k_global",
        "k_final",
        "mode",
    }
    unknown = set(payload) - known
    if unknown:
        raise SchemaError(f"unknown query fields: {sorted(unknown)}")

    mode_raw = payload.get("mode", "two_stage")
    if mode_raw not in _MODES:
        raise SchemaError(
            f"unknown mode '{mode_raw}'; expected one of {sorted(_MODES)}"
        )
    region = payload.get("region")
    if region is not None:
        try:
            region = RegionKind(region)
        except ValueError as exc:
            raise SchemaError(f"unknown region '{payload['region']}'") from exc

    def vector(raw, what: str) -> np.ndarray:
        if (
            not isinstance(raw, list)
            or not raw
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw)
        ):
            raise SchemaError(f"{what} must be a non-empty list of numbers")
        return np.asarray(raw, dtype=np.float64)

    global_vec = payload.get("global_vec")
    if global_vec is not None:
        global_vec = vector(global_vec, "global_vec")
    region_vecs = {}
    raw_region_vecs = payload.get("region_vecs")
    if raw_region_vecs is None:
        raw_region_vecs = {}
    if not isinstance(raw_region_vecs, dict):
        raise SchemaError("region_vecs must be a mapping of region to vector")
    for key, raw_vec in raw_region_vecs.items():
        try:
            rkind = RegionKind(key)
        except ValueError as exc:
            raise SchemaError(f"unknown region '{key}' in region_vecs") from exc
        region_vecs[rkind] = vector(raw_vec, f"region_vecs[{key}]")

    for name in ("k_global", "k_final"):
        value = payload.get(name)
        if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
            raise SchemaError(f"{name} must be an integer")
    exam_id = payload.get("exam_id")
    if exam_id is not None and (not isinstance(exam_id, str) or not exam_id):
        raise SchemaError("exam_id must be a non-empty string")

    try:
        return RetrievalQuery(
            mode=_MODES[mode_raw],
            exam_id=exam_id,
            global_vec=global_vec,
            region_vecs=region_vecs,
            region=region,
            k_global=payload.get("k_global", 100),
            k_final=payload.get("k_final", 10),
        )
    except InvalidQueryError as exc:
        raise SchemaError(str(exc)) from exc


def _result_entry(state: ServiceState, exam_id: str, score: float, region) -> dict:
    exam = state.exams.get(exam_id)
    record = state.index.get(exam_id)
    entry: dict = {"exam_id": exam_id, "score": score}
    if exam is not None:
        entry["global_caption"] = exam.global_caption
        entry["binary_label"] = exam.binary_label
        if region is not None:
            entry["region_label"] = exam.region_labels[region].value
            caption = exam.region_captions.get(region)
            if caption is not None:
                entry["region_caption"] = caption
    if region is not None:
        entry["region_available"] = bool(
            record is not None and region in record.region_vecs
        )
    return entry


def _result_payload(state: ServiceState, result: RetrievalResult) -> dict:
    region = result.region
    return {
        "mode": result.mode.value,
        "region": region.value if region else None,
        "fallback_used": result.fallback_used,
        "stage1": [
            {"exam_id": eid, "score": score} for eid, score in result.stage1
        ],
        "final": [
            _result_entry(state, eid, score, region) for eid, score in result.final
        ],
    }


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="wmir", docs_url=None, redoc_url=None)
    app.state.wmir = state

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok", "exams": len(state.exams)}

    @app.post("/api/exams", status_code=201)
    def ingest_exams(payload: dict = Body(...)):
        if not isinstance(payload, dict) or "items" not in payload:
            return _error(400, "body must be an object with an 'items' list")
        items = payload["items"]
        if not isinstance(items, list) or not items:
            return _error(400, "'items' must be a non-empty list")
        pairs = []
        try:
            for item in items:
                if not isinstance(item, dict) or "exam" not in item or "embedding" not in item:
                    raise SchemaError("each item needs 'exam' and 'embedding'")
                exam = exam_from_dict(item["exam"])
                raw = item["embedding"]
                if not isinstance(raw, dict) or "global_vec" not in raw:
                    raise SchemaError("embedding needs a 'global_vec'")
                raw = dict(raw)
                raw.setdefault("exam_id", exam.id)
                if raw["exam_id"] != exam.id:
                    raise SchemaError(
                        f"embedding exam_id '{raw['exam_id']}' != exam id '{exam.id}'"
                    )
                record = EmbeddingRecord.from_dict(raw)
                pairs.append((exam, record))
        except SchemaError as exc:
            return _error(400, str(exc))
        except (ValueError, TypeError, KeyError) as exc:
            return _error(400, f"malformed batch: {exc}")
        try:
            ingested = state.ingest(pairs)
        except DimensionMismatchError as exc:
            return _error(409, str(exc))
        except (SchemaError, ZeroVectorError) as exc:
            return _error(400, str(exc))
        return {"ingested": ingested}

    @app.post("/api/query")
    def query(payload: dict = Body(...)):
        try:
            request = _parse_query(payload)
        except SchemaError as exc:
            return _error(400, str(exc))
        try:
            retriever = Retriever(state.index.snapshot())
            result = retriever.search(request)
        except UnknownExamError as exc:
            return _error(404, str(exc))
        except (InvalidQueryError, MissingQueryRegionError, ZeroVectorError) as exc:
            return _error(400, str(exc))
        except DimensionMismatchError as exc:
            return _error(409, str(exc))
        except EmptySearchSpaceError as exc:
            return _error(422, str(exc))
        return _result_payload(state, result)

    @app.get("/api/exams")
    def list_exams(offset: int = 0, limit: int = 50):
        if offset < 0 or limit < 1:
            return _error(400, "offset must be >= 0 and limit >= 1")
        ids = sorted(state.exams)
        page = ids[offset : offset + limit]
        items = []
        for exam_id in page:
            exam = state.exams[exam_id]
            record = state.index.get(exam_id)
            items.append(
                {
                    "exam_id": exam_id,
                    "global_caption": exam.global_caption,
                    "binary_label": exam.binary_label,
                    "region_labels": {
                        r.value: t.value for r, t in sorted(exam.region_labels.items())
                    },
                    "regions_available": sorted(
                        r.value for r in (record.region_vecs if record else {})
                    ),
                }
            )
        return {"total": len(ids), "offset": offset, "items": items}

    @app.post("/api/ratings", status_code=201)
    def post_rating(payload: dict = Body(...)):
        try:
            rating = Rating.from_dict(payload)
        except SchemaError as exc:
            return _error(400, str(exc))
        state.ratings.append(rating)
        return {"stored": rating.to_dict()}

    @app.get("/api/ratings/summary")
    def ratings_summary() -> dict:
        return state.ratings.summary()

    @app.get("/api/ratings")
    def list_ratings() -> dict:
        ratings = sorted(
            state.ratings.ratings(),
            key=lambda r: (r.query_exam_id, r.result_exam_id, r.rater, r.mode),
        )
        return {"ratings": [r.to_dict() for r in ratings]}

    @app.get("/api/eval/summary")
    def eval_summary(
        suite: str = "tables",
        seed: int = 0,
        resamples: int = 1000,
        max_queries: int | None = None,
    ):
        if suite not in SUITE_NAMES:
            return _error(404, f"unknown suite '{suite}'")
        corpus = state.corpus()
        if not corpus:
            return _error(422, "no exams ingested")
        options = SuiteOptions(seed=seed, resamples=resamples, max_queries=max_queries)
        try:
            reports = run_suite(suite, corpus, state.index.snapshot(), options)
        except WmirError as exc:
            return _error(422, str(exc))
        return {
            "suite": suite,
            "reports": {name: report.to_dict() for name, report in reports.items()},
        }

    return app
