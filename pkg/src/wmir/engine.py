"""Two-stage region-aware retrieval over an index snapshot.

Stage one ranks the whole corpus by global cosine similarity; stage two
reranks the candidate pool by similarity in a clinician-chosen bone
region's embedding space. When the requested region embedding is missing
(on the query or on every candidate) the engine falls back to the global
candidate list so the caller always receives results.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .domain import FractureType, RegionKind
from .errors import (
    EmptyResultError,
    EmptySearchSpaceError,
    InvalidQueryError,
    MissingQueryRegionError,
    UnknownExamError,
)
from .index import IndexSnapshot, normalize

__all__ = [
    "RetrievalMode",
    "RetrievalQuery",
    "RetrievalResult",
    "Retriever",
    "majority_vote_diagnosis",
]


class RetrievalMode(str, Enum):
    SINGLE_STAGE = "single_stage"
    TWO_STAGE = "two_stage"
    REGION_ONLY = "region_only"


@dataclass(frozen=True, slots=True)
class RetrievalQuery:
    """One retrieval request: by stored exam id or by raw vectors."""

    mode: RetrievalMode = RetrievalMode.TWO_STAGE
    exam_id: str | None = None
    global_vec: np.ndarray | None = None
    region_vecs: dict = field(default_factory=dict)
    region: RegionKind | None = None
    k_global: int = 100
    k_final: int = 10

    def __post_init__(self) -> None:
        if self.k_global < 1 or self.k_final < 1:
            raise InvalidQueryError("k_global and k_final must be >= 1")
        if self.k_final > self.k_global:
            raise InvalidQueryError(
                f"k_final ({self.k_final}) must not exceed k_global ({self.k_global})"
            )
        if self.mode in (RetrievalMode.TWO_STAGE, RetrievalMode.REGION_ONLY):
            if self.region is None:
                raise InvalidQueryError(f"mode '{self.mode.value}' requires a region")
        by_id = self.exam_id is not None
        by_raw = self.global_vec is not None or bool(self.region_vecs)
        if by_id == by_raw:
            raise InvalidQueryError(
                "query must give exactly one of exam_id or raw vectors"
            )


@dataclass(frozen=True, slots=True)
class RetrievalResult:
    """Ordered candidates with stage-tagged similarities."""

    mode: RetrievalMode
    region: RegionKind | None
    stage1: tuple[tuple[str, float], ...]
    final: tuple[tuple[str, float], ...]
    fallback_used: bool

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "region": self.region.value if self.region else None,
            "stage1": [{"exam_id": i, "score": s} for i, s in self.stage1],
            "final": [{"exam_id": i, "score": s} for i, s in self.final],
            "fallback_used": self.fallback_used,
        }


class Retriever:
    """Stateless query executor over an immutable index snapshot."""

    def __init__(self, snapshot: IndexSnapshot):
        self.snapshot = snapshot

    # --- query vector resolution --------------------------------------------

    def _resolve(self, query: RetrievalQuery):
        """Return (global_vec | None, region_vec | None, exclude_id)."""
        if query.exam_id is not None:
            gview = self.snapshot.space("global")
            row = gview.id_to_row.get(query.exam_id)
            if row is None:
                raise UnknownExamError(f"exam '{query.exam_id}' is not in the index")
            gvec = gview.matrix[row]
            rvec = None
            if query.region is not None:
                rview = self.snapshot.space(query.region)
                rrow = rview.id_to_row.get(query.exam_id)
                if rrow is not None:
                    rvec = rview.matrix[rrow]
            return gvec, rvec, query.exam_id
        gvec = None
        if query.global_vec is not None:
            gvec = normalize(query.global_vec)
        rvec = None
        if query.region is not None and query.region in query.region_vecs:
            rvec = normalize(query.region_vecs[query.region])
        return gvec, rvec, None

    # --- stages --------------------------------------------------------------

    def global_stage(
        self, query_vec: np.ndarray, k_global: int, exclude: str | None = None
    ) -> list[tuple[str, float]]:
        """Rank all stored global embeddings; the query exam itself is
        excluded when querying by a stored id."""
        return self.snapshot.top_k(query_vec, k_global, "global", exclude=exclude)

    def region_rerank(
        self,
        candidates: list[tuple[str, float]],
        query_region_vec: np.ndarray,
        region: RegionKind,
        k_final: int,
    ) -> tuple[list[tuple[str, float]], bool]:
        """Re-score candidates by region similarity.

        Candidates lacking the region embedding are dropped. Returns
        (final, fallback): when no candidate has the region, final is
        empty and fallback is signaled instead of raising.
        """
        restrict = [exam_id for exam_id, _ in candidates]
        try:
            final = self.snapshot.top_k(
                query_region_vec, k_final, region, restrict=restrict
            )
        except EmptySearchSpaceError:
            return [], True
        return final, False

    # --- modes ----------------------------------------------------------------

    def two_stage(self, query: RetrievalQuery) -> RetrievalResult:
        """Global candidate selection, then region-conditioned reranking.

        Falls back to the truncated global candidate list when the region
        embedding is missing on the query side or on every candidate.
        """
        gvec, rvec, exclude = self._resolve(query)
        if gvec is None:
            raise InvalidQueryError("two_stage requires a global query vector")
        stage1 = self.global_stage(gvec, query.k_global, exclude)
        if rvec is None:
            final, fallback = stage1[: query.k_final], True
        else:
            final, fallback = self.region_rerank(
                stage1, rvec, query.region, query.k_final
            )
            if fallback:
                final = stage1[: query.k_final]
        return RetrievalResult(
            mode=RetrievalMode.TWO_STAGE,
            region=query.region,
            stage1=tuple(stage1),
            final=tuple(final),
            fallback_used=fallback,
        )

    def single_stage(self, query: RetrievalQuery) -> RetrievalResult:
        """Global-only retrieval: final is the truncated global ranking."""
        gvec, _, exclude = self._resolve(query)
        if gvec is None:
            raise InvalidQueryError("single_stage requires a global query vector")
        stage1 = self.global_stage(gvec, query.k_global, exclude)
        return RetrievalResult(
            mode=RetrievalMode.SINGLE_STAGE,
            region=query.region,
            stage1=tuple(stage1),
            final=tuple(stage1[: query.k_final]),
            fallback_used=False,
        )

    def region_only(self, query: RetrievalQuery) -> RetrievalResult:
        """Rank directly in the region embedding space, no global stage."""
        _, rvec, exclude = self._resolve(query)
        if rvec is None:
            raise MissingQueryRegionError(
                f"query has no embedding for region "
                f"'{query.region.value if query.region else None}'"
            )
        final = self.snapshot.top_k(rvec, query.k_final, query.region, exclude=exclude)
        return RetrievalResult(
            mode=RetrievalMode.REGION_ONLY,
            region=query.region,
            stage1=(),
            final=tuple(final),
            fallback_used=False,
        )

    def search(self, query: RetrievalQuery) -> RetrievalResult:
        if query.mode is RetrievalMode.TWO_STAGE:
            return self.two_stage(query)
        if query.mode is RetrievalMode.SINGLE_STAGE:
            return self.single_stage(query)
        return self.region_only(query)


def _is_negative(label) -> bool:
    if isinstance(label, bool):
        return not label
    if isinstance(label, FractureType):
        return label is FractureType.NONE
    return str(label) == "none"


def majority_vote_diagnosis(final, label_of):
    """Most frequent label among the retrieved results.

    `final` is a list of exam ids or (exam_id, score) pairs; `label_of`
    maps an exam id to its label (bool for binary voting, FractureType for
    classification). Ties resolve to the fracture-positive / non-none
    option, then lexicographically by label value — screening favors
    sensitivity.
    """
    ids = [item[0] if isinstance(item, tuple) else item for item in final]
    if not ids:
        raise EmptyResultError("majority vote over an empty result list")
    counts = Counter(label_of(exam_id) for exam_id in ids)
    best = max(counts.values())
    tied = [label for label, c in counts.items() if c == best]
    return min(tied, key=lambda lb: (_is_negative(lb), str(lb)))
