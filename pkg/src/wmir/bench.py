"""Latency benchmarks: cached query path, pool-size scaling, scan kernels.

Two costs are measured. The cached path times search alone against a
prebuilt snapshot — the serving configuration, where embeddings are
precomputed. The non-cached path adds a per-query stub that re-encodes
the whole candidate pool through a projection matrix before searching,
standing in for running an encoder over the pool on every query; its
cost therefore grows with pool size.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .domain import RegionKind
from .engine import RetrievalMode, RetrievalQuery, Retriever
from .index import EmbeddingIndex, EmbeddingRecord
from .kernels import Scanner, available_backends

__all__ = [
    "BenchResult",
    "random_index",
    "bench_cached",
    "bench_pool",
    "bench_backends",
]


@dataclass(frozen=True, slots=True)
class BenchResult:
    label: str
    pool_size: int
    dim: int
    n_queries: int
    mean_ms: float
    p95_ms: float

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "pool_size": self.pool_size,
            "dim": self.dim,
            "n_queries": self.n_queries,
            "mean_ms": self.mean_ms,
            "p95_ms": self.p95_ms,
        }


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = rng.normal(size=(n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def random_index(pool_size: int, dim: int, seed: int = 0) -> EmbeddingIndex:
    """Random unit corpus with every region present on every exam."""
    rng = np.random.default_rng(seed)
    width = len(str(max(pool_size - 1, 1)))
    index = EmbeddingIndex()
    globals_ = _unit_rows(rng, pool_size, dim)
    regions = {region: _unit_rows(rng, pool_size, dim) for region in RegionKind}
    for i in range(pool_size):
        index.upsert(
            EmbeddingRecord(
                exam_id=f"bench-{i:0{width}d}",
                global_vec=globals_[i].astype(np.float32),
                region_vecs={
                    region: regions[region][i].astype(np.float32)
                    for region in RegionKind
                },
            )
        )
    return index


def _summarize(label: str, pool_size: int, dim: int, times_s: list[float]) -> BenchResult:
    arr = np.asarray(times_s, dtype=np.float64) * 1000.0
    return BenchResult(
        label=label,
        pool_size=pool_size,
        dim=dim,
        n_queries=len(times_s),
        mean_ms=float(arr.mean()),
        p95_ms=float(np.percentile(arr, 95)),
    )


def bench_cached(
    pool_size: int = 10_000,
    dim: int = 512,
    n_queries: int = 50,
    k_global: int = 100,
    k_final: int = 10,
    seed: int = 0,
    warmup: int = 3,
) -> BenchResult:
    """Time two-stage search against a prebuilt snapshot."""
    index = random_index(pool_size, dim, seed)
    retriever = Retriever(index.snapshot())
    rng = np.random.default_rng(seed + 1)
    queries = rng.normal(size=(n_queries + warmup, dim))
    region = RegionKind.DISTAL_RADIUS

    times: list[float] = []
    for i, row in enumerate(queries):
        query = RetrievalQuery(
            mode=RetrievalMode.TWO_STAGE,
            global_vec=row,
            region_vecs={region: row},
            region=region,
            k_global=min(k_global, pool_size),
            k_final=min(k_final, k_global, pool_size),
        )
        start = time.perf_counter()
        retriever.two_stage(query)
        elapsed = time.perf_counter() - start
        if i >= warmup:
            times.append(elapsed)
    return _summarize("cached", pool_size, dim, times)


def bench_pool(
    pool_size: int,
    dim: int = 512,
    n_queries: int = 20,
    k_global: int = 100,
    k_final: int = 10,
    seed: int = 0,
    warmup: int = 2,
) -> BenchResult:
    """Time the non-cached path: re-encode the pool, then search it."""
    index = random_index(pool_size, dim, seed)
    retriever = Retriever(index.snapshot())
    rng = np.random.default_rng(seed + 1)
    pool_features = rng.normal(size=(pool_size, dim))
    projection = rng.normal(size=(dim, dim)) / np.sqrt(dim)
    queries = rng.normal(size=(n_queries + warmup, dim))
    region = RegionKind.DISTAL_RADIUS

    times: list[float] = []
    for i, row in enumerate(queries):
        query = RetrievalQuery(
            mode=RetrievalMode.TWO_STAGE,
            global_vec=row,
            region_vecs={region: row},
            region=region,
            k_global=min(k_global, pool_size),
            k_final=min(k_final, k_global, pool_size),
        )
        start = time.perf_counter()
        encoded = pool_features @ projection
        encoded /= np.linalg.norm(encoded, axis=1, keepdims=True)
        retriever.two_stage(query)
        elapsed = time.perf_counter() - start
        if i >= warmup:
            times.append(elapsed)
    return _summarize("pool", pool_size, dim, times)


def bench_backends(
    pool_size: int = 2_000,
    dim: int = 256,
    n_queries: int = 50,
    seed: int = 0,
    warmup: int = 3,
) -> dict[str, BenchResult]:
    """Compare raw scan cost across the available kernel backends."""
    rng = np.random.default_rng(seed)
    matrix = _unit_rows(rng, pool_size, dim).astype(np.float32)
    queries = rng.normal(size=(n_queries + warmup, dim))
    out: dict[str, BenchResult] = {}
    for backend in available_backends():
        scanner = Scanner(matrix, backend=backend)
        times: list[float] = []
        for i, q in enumerate(queries):
            start = time.perf_counter()
            scanner.scores(q)
            elapsed = time.perf_counter() - start
            if i >= warmup:
                times.append(elapsed)
        out[backend] = _summarize(backend, pool_size, dim, times)
    return out
