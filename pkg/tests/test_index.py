"""Embedding index: normalization, exact top-k, ties, persistence."""

import numpy as np
import pytest

from wmir.domain import RegionKind
from wmir.errors import (
    DimensionMismatchError,
    EmptySearchSpaceError,
    FormatError,
    ZeroVectorError,
)
from wmir.index import EmbeddingIndex, EmbeddingRecord, normalize


def _record(exam_id, vec, regions=None):
    return EmbeddingRecord(
        exam_id=exam_id,
        global_vec=np.asarray(vec, dtype=np.float32),
        region_vecs={
            region: np.asarray(v, dtype=np.float32)
            for region, v in (regions or {}).items()
        },
    )


def _axis_index():
    """Four exams along coordinate axes, two sharing an axis (exact tie)."""
    index = EmbeddingIndex()
    index.upsert(_record("b", [1.0, 0.0, 0.0]))
    index.upsert(_record("a", [1.0, 0.0, 0.0]))
    index.upsert(_record("c", [0.0, 1.0, 0.0]))
    index.upsert(_record("d", [0.0, 0.0, 1.0]))
    return index


class TestNormalize:
    def test_unit_norm(self):
        v = normalize([3.0, 4.0])
        np.testing.assert_allclose(np.linalg.norm(v), 1.0, atol=1e-6)
        assert v.dtype == np.float32

    def test_already_unit_unchanged(self):
        v = normalize([1.0, 0.0])
        np.testing.assert_array_equal(v, np.array([1.0, 0.0], dtype=np.float32))

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVectorError):
            normalize([0.0, 0.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ZeroVectorError):
            normalize([np.inf, 0.0])


class TestUpsert:
    def test_first_insert_fixes_dimension(self):
        index = EmbeddingIndex()
        index.upsert(_record("x", [1.0, 0.0]))
        with pytest.raises(DimensionMismatchError):
            index.upsert(_record("y", [1.0, 0.0, 0.0]))

    def test_region_dim_must_match(self):
        index = EmbeddingIndex()
        with pytest.raises(DimensionMismatchError):
            index.upsert(
                _record("x", [1.0, 0.0], {RegionKind.DISTAL_RADIUS: [1.0, 0.0, 0.0]})
            )

    def test_upsert_replaces_whole_record(self):
        index = EmbeddingIndex()
        index.upsert(
            _record("x", [1.0, 0.0], {RegionKind.DISTAL_RADIUS: [0.0, 1.0]})
        )
        index.upsert(_record("x", [0.0, 1.0]))
        record = index.get("x")
        assert record.region_vecs == {}
        assert len(index) == 1

    def test_vectors_normalized_at_ingest(self):
        index = EmbeddingIndex()
        index.upsert(_record("x", [2.0, 0.0]))
        np.testing.assert_allclose(index.get("x").global_vec, [1.0, 0.0])

    def test_snapshot_isolated_from_later_upserts(self):
        index = EmbeddingIndex()
        index.upsert(_record("x", [1.0, 0.0]))
        snapshot = index.snapshot()
        index.upsert(_record("y", [0.0, 1.0]))
        assert snapshot.exam_ids == ("x",)
        assert index.snapshot().exam_ids == ("x", "y")


class TestTopK:
    def test_exact_tie_broken_by_ascending_id(self):
        snapshot = _axis_index().snapshot()
        result = snapshot.top_k(np.array([1.0, 0.0, 0.0]), 2)
        assert [eid for eid, _ in result] == ["a", "b"]
        assert result[0][1] == result[1][1]

    def test_k_larger_than_space_returns_all(self):
        snapshot = _axis_index().snapshot()
        result = snapshot.top_k(np.array([1.0, 0.0, 0.0]), 50)
        assert len(result) == 4

    def test_scores_descend(self):
        snapshot = _axis_index().snapshot()
        result = snapshot.top_k(np.array([0.6, 0.8, 0.0]), 4)
        scores = [s for _, s in result]
        assert scores == sorted(scores, reverse=True)

    def test_restrict_limits_candidates(self):
        snapshot = _axis_index().snapshot()
        result = snapshot.top_k(
            np.array([1.0, 0.0, 0.0]), 10, restrict=["c", "d"]
        )
        assert {eid for eid, _ in result} == {"c", "d"}

    def test_restrict_does_not_change_scores(self):
        """A candidate's score is identical with and without restriction."""
        snapshot = _axis_index().snapshot()
        full = dict(snapshot.top_k(np.array([0.3, 0.9, 0.1]), 10))
        restricted = dict(
            snapshot.top_k(np.array([0.3, 0.9, 0.1]), 10, restrict=["a", "c"])
        )
        for eid, score in restricted.items():
            assert score == full[eid]

    def test_exclude_removes_query_exam(self):
        snapshot = _axis_index().snapshot()
        result = snapshot.top_k(np.array([1.0, 0.0, 0.0]), 10, exclude="a")
        assert "a" not in {eid for eid, _ in result}

    def test_empty_restriction_raises(self):
        snapshot = _axis_index().snapshot()
        with pytest.raises(EmptySearchSpaceError):
            snapshot.top_k(np.array([1.0, 0.0, 0.0]), 3, restrict=["zzz"])

    def test_region_space_only_contains_region_exams(self):
        index = EmbeddingIndex()
        index.upsert(
            _record("x", [1.0, 0.0], {RegionKind.DISTAL_ULNA: [1.0, 0.0]})
        )
        index.upsert(_record("y", [0.0, 1.0]))
        snapshot = index.snapshot()
        result = snapshot.top_k(np.array([1.0, 0.0]), 5, RegionKind.DISTAL_ULNA)
        assert [eid for eid, _ in result] == ["x"]
        with pytest.raises(EmptySearchSpaceError):
            snapshot.top_k(np.array([1.0, 0.0]), 5, RegionKind.ULNAR_STYLOID)

    def test_query_dimension_checked(self):
        snapshot = _axis_index().snapshot()
        with pytest.raises(DimensionMismatchError):
            snapshot.top_k(np.array([1.0, 0.0]), 2)


class TestBruteForceOracle:
    def test_agrees_on_random_corpus(self):
        rng = np.random.default_rng(4)
        index = EmbeddingIndex()
        for i in range(300):
            vec = rng.normal(size=8)
            regions = {}
            if rng.random() < 0.7:
                regions[RegionKind.DISTAL_RADIUS] = rng.normal(size=8)
            index.upsert(_record(f"e{i:03d}", vec, regions))
        snapshot = index.snapshot()
        for trial in range(20):
            q = rng.normal(size=8)
            k = int(rng.choice([1, 5, 10, 100]))
            space = "global" if trial % 2 == 0 else RegionKind.DISTAL_RADIUS
            assert snapshot.top_k(q, k, space) == snapshot.brute_force_scan(
                q, k, space
            )

    def test_agrees_with_duplicates_and_restrict(self):
        rng = np.random.default_rng(5)
        base = rng.normal(size=(40, 6))
        index = EmbeddingIndex()
        for i in range(120):
            index.upsert(_record(f"e{i:03d}", base[i % 40]))  # forced ties
        snapshot = index.snapshot()
        ids = [f"e{i:03d}" for i in range(120)]
        for _ in range(10):
            q = rng.normal(size=6)
            restrict = list(rng.choice(ids, size=30, replace=False))
            exclude = restrict[0]
            assert snapshot.top_k(
                q, 10, restrict=restrict, exclude=exclude
            ) == snapshot.brute_force_scan(q, 10, restrict=restrict, exclude=exclude)


class TestPersistence:
    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(6)
        index = EmbeddingIndex()
        for i in range(50):
            regions = {
                region: rng.normal(size=12)
                for region in RegionKind
                if rng.random() < 0.8
            }
            index.upsert(_record(f"exam-{i}", rng.normal(size=12), regions))
        path = tmp_path / "corpus.idx"
        index.save(path)
        loaded = EmbeddingIndex.load(path)
        assert loaded.ids() == index.ids()
        for eid in index.ids():
            a, b = index.get(eid), loaded.get(eid)
            np.testing.assert_array_equal(a.global_vec, b.global_vec)
            assert set(a.region_vecs) == set(b.region_vecs)
            for region in a.region_vecs:
                np.testing.assert_array_equal(
                    a.region_vecs[region], b.region_vecs[region]
                )

    def test_saved_bytes_deterministic(self, tmp_path):
        index = _axis_index()
        p1, p2 = tmp_path / "a.idx", tmp_path / "b.idx"
        index.save(p1)
        index.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.idx"
        index = _axis_index()
        index.save(path)
        data = bytearray(path.read_bytes())
        data[:4] = b"NOPE"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            EmbeddingIndex.load(path)

    def test_truncation_rejected(self, tmp_path):
        path = tmp_path / "trunc.idx"
        index = _axis_index()
        index.save(path)
        data = path.read_bytes()
        for cut in (3, len(data) // 2, len(data) - 1):
            path.write_bytes(data[:cut])
            with pytest.raises(FormatError):
                EmbeddingIndex.load(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        path = tmp_path / "pad.idx"
        index = _axis_index()
        index.save(path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError):
            EmbeddingIndex.load(path)
