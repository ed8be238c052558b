"""Retrieval and classification metrics with bootstrap confidence intervals.

Retrieval metrics consume a RankedRun (per-query ordered item ids plus a
relevance predicate); classification metrics consume parallel score and
label arrays. All functions are pure and deterministic; the bootstrap is
deterministic given its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    EmptyResultError,
    EmptyRunError,
    EmptySampleError,
    NoRelevantError,
    SchemaError,
    SingleClassError,
)

__all__ = [
    "RankedRun",
    "MetricValue",
    "EvalReport",
    "recall_at_k",
    "mean_average_precision",
    "rank_stats",
    "bootstrap_ci",
    "matching_score",
    "retrieval_diagnosis_f1",
    "binary_f1",
    "auroc",
    "auprc",
    "f1_at_threshold",
    "ProbeConfig",
    "linear_probe",
]


@dataclass(frozen=True, slots=True)
class RankedRun:
    """Ordered retrieval results per query plus the relevance oracle."""

    rankings: Mapping[str, tuple[str, ...]]
    is_relevant: Callable[[str, str], bool]

    def __post_init__(self) -> None:
        fixed = {}
        for qid, items in self.rankings.items():
            items = tuple(items)
            if len(set(items)) != len(items):
                raise SchemaError(f"duplicate item ids in ranking for '{qid}'")
            fixed[qid] = items
        object.__setattr__(self, "rankings", fixed)

    def query_ids(self) -> list[str]:
        return list(self.rankings)

    def hit_ranks(self, qid: str) -> list[int]:
        """1-based ranks of relevant items in this query's ranking."""
        return [
            rank
            for rank, item in enumerate(self.rankings[qid], start=1)
            if self.is_relevant(qid, item)
        ]

    def first_relevant_rank(self, qid: str) -> int | None:
        for rank, item in enumerate(self.rankings[qid], start=1):
            if self.is_relevant(qid, item):
                return rank
        return None


def _require_queries(run: RankedRun) -> list[str]:
    qids = run.query_ids()
    if not qids:
        raise EmptyRunError("run contains no queries")
    return qids


def recall_at_k(run: RankedRun, k: int) -> float:
    """Fraction of queries with at least one relevant item in the top k."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    qids = _require_queries(run)
    hits = 0
    for qid in qids:
        rank = run.first_relevant_rank(qid)
        if rank is not None and rank <= k:
            hits += 1
    return hits / len(qids)


def average_precision(run: RankedRun, qid: str) -> float:
    """Mean of precision-at-rank over the relevant hit ranks.

    A query whose ranking contains no relevant item scores 0.
    """
    ranks = run.hit_ranks(qid)
    if not ranks:
        return 0.0
    return sum((i + 1) / rank for i, rank in enumerate(ranks)) / len(ranks)


def mean_average_precision(run: RankedRun) -> float:
    qids = _require_queries(run)
    values = [average_precision(run, qid) for qid in qids]
    if all(v == 0.0 for v in values) and not any(
        run.hit_ranks(qid) for qid in qids
    ):
        raise NoRelevantError("no query has a relevant item in its ranking")
    return float(np.mean(values))


def rank_stats(run: RankedRun) -> tuple[float, int]:
    """(mean, median) of first-relevant ranks.

    The even-count median is the lower middle order statistic, so the
    median is always an integer rank actually attained.
    """
    qids = _require_queries(run)
    ranks = []
    for qid in qids:
        rank = run.first_relevant_rank(qid)
        if rank is None:
            raise NoRelevantError(f"query '{qid}' has no relevant item ranked")
        ranks.append(rank)
    ranks.sort()
    median = ranks[(len(ranks) - 1) // 2]
    return float(np.mean(ranks)), median


def bootstrap_ci(
    samples: Sequence[float],
    resamples: int = 1000,
    seed: int = 0,
    level: float = 0.95,
    statistic: Callable[[np.ndarray], float] | None = None,
) -> tuple[float, float]:
    """Percentile bootstrap interval from query-level resampling.

    `statistic` maps a resampled value array to a scalar; the default is
    the mean. Deterministic given the seed.
    """
    values = np.asarray(list(samples), dtype=np.float64)
    if values.size == 0:
        raise EmptySampleError("bootstrap needs at least one sample")
    if not 0.0 < level < 1.0:
        raise ConfigError("level must be in (0, 1)")
    if resamples < 1:
        raise ConfigError("resamples must be >= 1")
    stat = statistic if statistic is not None else (lambda a: float(np.mean(a)))
    rng = np.random.default_rng(seed)
    n = values.size
    draws = np.empty(resamples, dtype=np.float64)
    for i in range(resamples):
        draws[i] = stat(values[rng.integers(0, n, size=n)])
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(draws, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def matching_score(
    query_labels: Sequence,
    retrieved_labels: Sequence[Sequence],
    mode: str = "binary",
) -> float:
    """Mean over queries of the top-k label-agreement proportion."""
    if mode not in ("binary", "classification"):
        raise ConfigError(f"unknown matching mode '{mode}'")
    if len(query_labels) != len(retrieved_labels):
        raise SchemaError("query and retrieved label lists disagree in length")
    if not query_labels:
        raise EmptyRunError("no queries to score")
    props = []
    for qlabel, retrieved in zip(query_labels, retrieved_labels):
        retrieved = list(retrieved)
        if not retrieved:
            raise EmptyResultError("retrieved label list is empty")
        props.append(sum(1 for r in retrieved if r == qlabel) / len(retrieved))
    return float(np.mean(props))


def binary_f1(truths: Sequence[bool], preds: Sequence[bool]) -> float:
    """F1 with fracture-present as the positive class; 0 when undefined."""
    tp = sum(1 for t, p in zip(truths, preds) if t and p)
    fp = sum(1 for t, p in zip(truths, preds) if not t and p)
    fn = sum(1 for t, p in zip(truths, preds) if t and not p)
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def retrieval_diagnosis_f1(
    query_ids: Sequence[str],
    retriever,
    region,
    k: int,
    label_of: Callable[[str], bool],
    mode=None,
    k_global: int = 100,
) -> float:
    """Majority-vote fracture prediction from top-k retrieval, scored by F1.

    `label_of` gives the ground-truth fracture presence for the queried
    region. `mode` selects the retrieval strategy under test and defaults
    to two-stage.
    """
    from .engine import RetrievalMode, RetrievalQuery, majority_vote_diagnosis

    if mode is None:
        mode = RetrievalMode.TWO_STAGE
    preds, truths = [], []
    for qid in query_ids:
        query = RetrievalQuery(
            mode=mode,
            exam_id=qid,
            region=region,
            k_global=max(k_global, k),
            k_final=k,
        )
        result = retriever.search(query)
        preds.append(bool(majority_vote_diagnosis(result.final, label_of)))
        truths.append(bool(label_of(qid)))
    return binary_f1(truths, preds)


def _check_classes(labels: np.ndarray) -> tuple[int, int]:
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise SingleClassError("need both positive and negative labels")
    return pos, neg


def auroc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Mann-Whitney pairwise statistic with half credit for score ties."""
    s = np.asarray(list(scores), dtype=np.float64)
    y = np.asarray(list(labels), dtype=bool)
    if s.shape != y.shape:
        raise SchemaError("scores and labels disagree in length")
    pos, neg = _check_classes(y)
    # average ranks implement the 0.5 tie credit exactly
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    u = ranks[y].sum() - pos * (pos + 1) / 2.0
    return float(u / (pos * neg))


def auprc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Average precision with step interpolation over the ranked list."""
    s = np.asarray(list(scores), dtype=np.float64)
    y = np.asarray(list(labels), dtype=bool)
    if s.shape != y.shape:
        raise SchemaError("scores and labels disagree in length")
    pos, _ = _check_classes(y)
    order = np.lexsort((np.arange(s.size), -s))
    hits = 0
    total = 0.0
    for rank, idx in enumerate(order, start=1):
        if y[idx]:
            hits += 1
            total += hits / rank
    return total / pos


def f1_at_threshold(
    scores: Sequence[float], labels: Sequence[bool], threshold: float = 0.5
) -> float:
    s = np.asarray(list(scores), dtype=np.float64)
    y = np.asarray(list(labels), dtype=bool)
    if s.shape != y.shape:
        raise SchemaError("scores and labels disagree in length")
    preds = s >= threshold
    return binary_f1(y.tolist(), preds.tolist())


@dataclass(frozen=True, slots=True)
class ProbeConfig:
    l2: float = 1e-4
    iterations: int = 500
    lr: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.l2 < 0:
            raise ConfigError("l2 penalty must be >= 0")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def linear_probe(
    train_x,
    train_y,
    test_x,
    test_y,
    config: ProbeConfig = ProbeConfig(),
) -> dict[str, float]:
    """Logistic regression on frozen embeddings, scored on the test split.

    Full-batch gradient descent with L2 penalty on the weights; returns
    auroc, auprc, and F1 at the 0.5 probability threshold.
    """
    xtr = np.asarray(train_x, dtype=np.float64)
    ytr = np.asarray(list(train_y), dtype=np.float64)
    xte = np.asarray(test_x, dtype=np.float64)
    yte = np.asarray(list(test_y), dtype=bool)
    if xtr.ndim != 2 or xte.ndim != 2 or xtr.shape[1] != xte.shape[1]:
        raise SchemaError("train/test embedding matrices disagree in shape")
    if xtr.shape[0] != ytr.size or xte.shape[0] != yte.size:
        raise SchemaError("embedding and label counts disagree")
    _check_classes(ytr.astype(bool))

    rng = np.random.default_rng(config.seed)
    w = rng.normal(0.0, 0.01, size=xtr.shape[1])
    b = 0.0
    n = xtr.shape[0]
    for _ in range(config.iterations):
        p = _sigmoid(xtr @ w + b)
        err = p - ytr
        grad_w = xtr.T @ err / n + config.l2 * w
        grad_b = float(err.mean())
        w -= config.lr * grad_w
        b -= config.lr * grad_b

    test_scores = _sigmoid(xte @ w + b)
    return {
        "auroc": auroc(test_scores, yte),
        "auprc": auprc(test_scores, yte),
        "f1": f1_at_threshold(test_scores, yte, 0.5),
    }


@dataclass(frozen=True, slots=True)
class MetricValue:
    point: float
    ci: tuple[float, float] | None = None
    level: float = 0.95

    def to_dict(self) -> dict:
        out: dict = {"point": self.point}
        if self.ci is not None:
            out["ci"] = {"lo": self.ci[0], "hi": self.ci[1], "level": self.level}
        return out


@dataclass(frozen=True, slots=True)
class EvalReport:
    """Named metric collection, serializable for the CLI and service."""

    name: str
    metrics: dict[str, MetricValue] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "metrics": {k: v.to_dict() for k, v in self.metrics.items()},
        }
