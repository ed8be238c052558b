"""Two-stage retrieval: staging, containment, fallbacks, and voting."""

import numpy as np
import pytest

from wmir.domain import FractureType, RegionKind
from wmir.engine import (
    RetrievalMode,
    RetrievalQuery,
    Retriever,
    majority_vote_diagnosis,
)
from wmir.errors import (
    EmptyResultError,
    InvalidQueryError,
    MissingQueryRegionError,
    UnknownExamError,
)
from wmir.index import EmbeddingIndex, EmbeddingRecord

R = RegionKind.DISTAL_RADIUS


def _vec(*xs):
    return np.asarray(xs, dtype=np.float32)


def _hand_index():
    """Six exams in 3-D with hand-chosen geometry.

    Global ranking for query (1,0,0): a > b > c > d > e > f.
    Region ranking for query (0,1,0) flips a and b; d has no region
    embedding, e and f have no region embedding either.
    """
    idx = EmbeddingIndex()
    rows = [
        ("a", _vec(1.0, 0.0, 0.0), _vec(0.2, 1.0, 0.0)),
        ("b", _vec(0.9, 0.1, 0.0), _vec(0.1, 1.0, 0.0)),
        ("c", _vec(0.8, 0.2, 0.0), _vec(1.0, 0.1, 0.0)),
        ("d", _vec(0.7, 0.3, 0.0), None),
        ("e", _vec(0.6, 0.4, 0.0), None),
        ("f", _vec(0.5, 0.5, 0.0), None),
    ]
    for exam_id, gvec, rvec in rows:
        regions = {} if rvec is None else {R: rvec}
        idx.upsert(EmbeddingRecord(exam_id=exam_id, global_vec=gvec, region_vecs=regions))
    return idx


@pytest.fixture(scope="module")
def hand_retriever():
    return Retriever(_hand_index().snapshot())


class TestQueryValidation:
    def test_k_must_be_positive(self):
        with pytest.raises(InvalidQueryError):
            RetrievalQuery(exam_id="a", region=R, k_final=0)

    def test_k_final_capped_by_k_global(self):
        with pytest.raises(InvalidQueryError, match="exceed"):
            RetrievalQuery(exam_id="a", region=R, k_global=5, k_final=6)

    def test_region_required_for_two_stage(self):
        with pytest.raises(InvalidQueryError, match="region"):
            RetrievalQuery(mode=RetrievalMode.TWO_STAGE, exam_id="a")

    def test_region_required_for_region_only(self):
        with pytest.raises(InvalidQueryError, match="region"):
            RetrievalQuery(mode=RetrievalMode.REGION_ONLY, exam_id="a")

    def test_region_optional_for_single_stage(self):
        q = RetrievalQuery(mode=RetrievalMode.SINGLE_STAGE, exam_id="a")
        assert q.region is None

    def test_exactly_one_source_neither(self):
        with pytest.raises(InvalidQueryError, match="exactly one"):
            RetrievalQuery(region=R)

    def test_exactly_one_source_both(self):
        with pytest.raises(InvalidQueryError, match="exactly one"):
            RetrievalQuery(exam_id="a", global_vec=_vec(1, 0, 0), region=R)

    def test_unknown_exam(self, hand_retriever):
        q = RetrievalQuery(exam_id="nope", region=R)
        with pytest.raises(UnknownExamError):
            hand_retriever.search(q)


class TestTwoStage:
    def test_stage_ordering(self, hand_retriever):
        q = RetrievalQuery(
            global_vec=_vec(1, 0, 0),
            region_vecs={R: _vec(0, 1, 0)},
            region=R,
            k_global=6,
            k_final=2,
        )
        res = hand_retriever.two_stage(q)
        assert [i for i, _ in res.stage1] == ["a", "b", "c", "d", "e", "f"]
        # Region similarity flips a/b and drops d/e/f (no region embedding).
        assert [i for i, _ in res.final] == ["b", "a"]
        assert not res.fallback_used

    def test_final_contained_in_stage1(self, hand_retriever):
        q = RetrievalQuery(
            global_vec=_vec(0.3, 0.7, 0.1),
            region_vecs={R: _vec(0.5, 0.5, 0)},
            region=R,
            k_global=4,
            k_final=4,
        )
        res = hand_retriever.two_stage(q)
        stage1_ids = {i for i, _ in res.stage1}
        assert {i for i, _ in res.final} <= stage1_ids
        assert len(res.stage1) == 4

    def test_candidate_pool_shapes_final(self, hand_retriever):
        # c wins the region space outright, but with k_global=2 it never
        # reaches stage two.
        qv = _vec(1, 0, 0)
        rv = _vec(1, 0.1, 0)
        wide = hand_retriever.two_stage(
            RetrievalQuery(
                global_vec=qv, region_vecs={R: rv}, region=R, k_global=6, k_final=1
            )
        )
        narrow = hand_retriever.two_stage(
            RetrievalQuery(
                global_vec=qv, region_vecs={R: rv}, region=R, k_global=2, k_final=1
            )
        )
        assert [i for i, _ in wide.final] == ["c"]
        assert [i for i, _ in narrow.final] == ["a"]

    def test_query_side_fallback(self, hand_retriever):
        q = RetrievalQuery(global_vec=_vec(1, 0, 0), region=R, k_final=3)
        res = hand_retriever.two_stage(q)
        assert res.fallback_used
        assert res.final == res.stage1[:3]

    def test_candidate_side_fallback(self):
        # No stored exam has the region: rerank space is empty.
        idx = EmbeddingIndex()
        for exam_id, g in [("x", _vec(1, 0, 0)), ("y", _vec(0, 1, 0))]:
            idx.upsert(EmbeddingRecord(exam_id=exam_id, global_vec=g))
        ret = Retriever(idx.snapshot())
        q = RetrievalQuery(
            global_vec=_vec(1, 0, 0),
            region_vecs={R: _vec(0, 1, 0)},
            region=R,
            k_final=2,
        )
        res = ret.two_stage(q)
        assert res.fallback_used
        assert [i for i, _ in res.final] == ["x", "y"]

    def test_by_id_excludes_self(self, hand_retriever):
        res = hand_retriever.search(RetrievalQuery(exam_id="a", region=R, k_final=6))
        assert "a" not in [i for i, _ in res.stage1]
        assert "a" not in [i for i, _ in res.final]

    def test_full_pool_matches_region_only(self, small_snapshot):
        # With the candidate pool as wide as the corpus, reranking sees the
        # same space as direct region search.
        ret = Retriever(small_snapshot)
        n = len(small_snapshot.exam_ids)
        for exam_id in small_snapshot.exam_ids[:25]:
            two = ret.search(
                RetrievalQuery(
                    exam_id=exam_id, region=R, k_global=n, k_final=10
                )
            )
            direct = ret.search(
                RetrievalQuery(
                    mode=RetrievalMode.REGION_ONLY, exam_id=exam_id, region=R, k_final=10
                )
            )
            assert not two.fallback_used
            assert two.final == direct.final


class TestSingleStage:
    def test_final_is_truncated_stage1(self, hand_retriever):
        q = RetrievalQuery(
            mode=RetrievalMode.SINGLE_STAGE,
            global_vec=_vec(1, 0, 0),
            k_global=6,
            k_final=3,
        )
        res = hand_retriever.search(q)
        assert res.final == res.stage1[:3]
        assert not res.fallback_used

    def test_requires_global_vector(self, hand_retriever):
        q = RetrievalQuery(
            mode=RetrievalMode.SINGLE_STAGE, region_vecs={R: _vec(0, 1, 0)}
        )
        with pytest.raises(InvalidQueryError, match="global"):
            hand_retriever.search(q)


class TestRegionOnly:
    def test_ranks_in_region_space(self, hand_retriever):
        q = RetrievalQuery(
            mode=RetrievalMode.REGION_ONLY,
            region_vecs={R: _vec(1, 0, 0)},
            region=R,
            k_final=3,
        )
        res = hand_retriever.search(q)
        assert [i for i, _ in res.final] == ["c", "a", "b"]
        assert res.stage1 == ()

    def test_missing_query_region_raises(self, hand_retriever):
        q = RetrievalQuery(
            mode=RetrievalMode.REGION_ONLY, global_vec=_vec(1, 0, 0), region=R
        )
        with pytest.raises(MissingQueryRegionError):
            hand_retriever.search(q)

    def test_missing_stored_region_raises_for_id_query(self, hand_retriever):
        # Exam d exists but has no distal-radius embedding.
        q = RetrievalQuery(mode=RetrievalMode.REGION_ONLY, exam_id="d", region=R)
        with pytest.raises(MissingQueryRegionError):
            hand_retriever.search(q)


class TestResultSerialization:
    def test_to_dict_shape(self, hand_retriever):
        res = hand_retriever.search(RetrievalQuery(exam_id="a", region=R))
        raw = res.to_dict()
        assert raw["mode"] == "two_stage"
        assert raw["region"] == "distal_radius"
        assert raw["final"][0].keys() == {"exam_id", "score"}
        assert isinstance(raw["fallback_used"], bool)


class TestMajorityVote:
    def test_plain_majority(self):
        labels = {"a": True, "b": True, "c": False}
        assert majority_vote_diagnosis(["a", "b", "c"], labels.get) is True

    def test_accepts_scored_pairs(self):
        labels = {"a": False, "b": False, "c": True}
        final = [("a", 0.9), ("b", 0.8), ("c", 0.7)]
        assert majority_vote_diagnosis(final, labels.get) is False

    def test_binary_tie_prefers_positive(self):
        labels = {"a": True, "b": False}
        assert majority_vote_diagnosis(["a", "b"], labels.get) is True

    def test_type_tie_prefers_non_negative(self):
        labels = {"a": FractureType.NONE, "b": FractureType.BUCKLE}
        assert majority_vote_diagnosis(["a", "b"], labels.get) is FractureType.BUCKLE

    def test_type_tie_breaks_lexicographically(self):
        labels = {"a": FractureType.TRANSVERSE, "b": FractureType.BUCKLE}
        # Both positive and tied: FractureType.BUCKLE sorts first by value.
        assert majority_vote_diagnosis(["a", "b"], labels.get) is FractureType.BUCKLE

    def test_counts_beat_tiebreak(self):
        labels = {"a": FractureType.NONE, "b": FractureType.NONE, "c": FractureType.OTHER}
        assert (
            majority_vote_diagnosis(["a", "b", "c"], labels.get) is FractureType.NONE
        )

    def test_empty_results_raise(self):
        with pytest.raises(EmptyResultError):
            majority_vote_diagnosis([], lambda e: True)
