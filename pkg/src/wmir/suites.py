"""Named evaluation suites shared by the CLI and the HTTP service.

Both entry points call the same functions with the same options, so a
service summary and an offline run over the same corpus produce
identical numbers. Suites:

- retrieval: caption retrieval over the global space (recall@k, mAP,
  rank statistics) with bootstrap confidence intervals;
- diagnosis: per-region retrieval-based fracture diagnosis comparing
  single-stage and two-stage modes (F1 plus label-matching scores);
- probe: logistic-regression linear probe on the frozen global
  embeddings against the binary fracture label;
- tables: all of the above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import FractureType, RegionKind
from .engine import RetrievalMode, RetrievalQuery, Retriever
from .errors import ConfigError, EmptyRunError
from .index import IndexSnapshot
from .metrics import (
    EvalReport,
    MetricValue,
    ProbeConfig,
    RankedRun,
    average_precision,
    bootstrap_ci,
    linear_probe,
    matching_score,
    mean_average_precision,
    rank_stats,
    recall_at_k,
    retrieval_diagnosis_f1,
)
from .reports import caption_key

__all__ = ["SuiteOptions", "SUITE_NAMES", "run_suite", "format_reports"]

SUITE_NAMES = ("retrieval", "diagnosis", "probe", "tables")


@dataclass(frozen=True, slots=True)
class SuiteOptions:
    seed: int = 0
    resamples: int = 1000
    recall_ks: tuple[int, ...] = (1, 5, 10)
    k_final: int = 10
    k_global: int = 100
    max_queries: int | None = None
    probe_train_frac: float = 0.7
    probe: ProbeConfig = ProbeConfig()

    def __post_init__(self) -> None:
        if not self.recall_ks or any(k < 1 for k in self.recall_ks):
            raise ConfigError("recall_ks must be positive")
        if not 0.0 < self.probe_train_frac < 1.0:
            raise ConfigError("probe_train_frac must lie in (0, 1)")
        if self.max_queries is not None and self.max_queries < 1:
            raise ConfigError("max_queries must be >= 1 when given")


def _subsample(ids: list[str], max_queries: int | None, seed: int) -> list[str]:
    if max_queries is None or len(ids) <= max_queries:
        return ids
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(ids), size=max_queries, replace=False)
    return [ids[i] for i in sorted(picks)]


def retrieval_suite(
    corpus, snapshot: IndexSnapshot, options: SuiteOptions = SuiteOptions()
) -> EvalReport:
    """Caption retrieval over the global space, relevance = caption key.

    Each query exam ranks every other exam; an item is relevant when its
    global caption normalizes to the same key as the query's. Queries
    whose caption is unique in the corpus are skipped (they have no
    retrievable positive).
    """
    keys = {exam.id: caption_key(exam.global_caption) for exam, _ in corpus}
    counts: dict = {}
    for key in keys.values():
        counts[key] = counts.get(key, 0) + 1
    eligible = [eid for eid in sorted(keys) if counts[keys[eid]] >= 2]
    if not eligible:
        raise EmptyRunError("no query has a duplicate-caption positive")
    query_ids = _subsample(eligible, options.max_queries, options.seed)

    gview = snapshot.space("global")
    depth = len(gview)
    rankings = {}
    for qid in query_ids:
        qvec = gview.matrix[gview.id_to_row[qid]]
        ranked = snapshot.top_k(qvec, depth, "global", exclude=qid)
        rankings[qid] = tuple(eid for eid, _ in ranked)
    run = RankedRun(rankings, lambda q, item: keys[q] == keys[item])

    metrics: dict[str, MetricValue] = {}
    for k in options.recall_ks:
        hits = [
            1.0 if (r := run.first_relevant_rank(q)) is not None and r <= k else 0.0
            for q in query_ids
        ]
        metrics[f"recall@{k}"] = MetricValue(
            point=recall_at_k(run, k),
            ci=bootstrap_ci(hits, options.resamples, options.seed),
        )
    ap_values = [average_precision(run, q) for q in query_ids]
    metrics["map"] = MetricValue(
        point=mean_average_precision(run),
        ci=bootstrap_ci(ap_values, options.resamples, options.seed),
    )
    mean_rank, median_rank = rank_stats(run)
    first_ranks = [float(run.first_relevant_rank(q)) for q in query_ids]
    metrics["mean_rank"] = MetricValue(
        point=mean_rank,
        ci=bootstrap_ci(first_ranks, options.resamples, options.seed),
    )
    metrics["median_rank"] = MetricValue(point=float(median_rank))
    return EvalReport(name="retrieval", metrics=metrics)


def diagnosis_suite(
    corpus, snapshot: IndexSnapshot, options: SuiteOptions = SuiteOptions()
) -> EvalReport:
    """Region-conditioned diagnosis: single-stage vs two-stage, per region."""
    exams = {exam.id: exam for exam, _ in corpus}
    all_ids = sorted(exams)
    query_ids = _subsample(all_ids, options.max_queries, options.seed)
    retriever = Retriever(snapshot)

    metrics: dict[str, MetricValue] = {}
    for region in RegionKind:
        def present(eid: str, _region=region) -> bool:
            return exams[eid].region_labels[_region] is not FractureType.NONE

        def type_of(eid: str, _region=region) -> FractureType:
            return exams[eid].region_labels[_region]

        for mode in (RetrievalMode.SINGLE_STAGE, RetrievalMode.TWO_STAGE):
            f1 = retrieval_diagnosis_f1(
                query_ids,
                retriever,
                region,
                options.k_final,
                present,
                mode=mode,
                k_global=options.k_global,
            )
            binary_props = []
            type_props = []
            for qid in query_ids:
                result = retriever.search(
                    RetrievalQuery(
                        mode=mode,
                        exam_id=qid,
                        region=region,
                        k_global=options.k_global,
                        k_final=options.k_final,
                    )
                )
                retrieved = [eid for eid, _ in result.final]
                if not retrieved:
                    continue
                binary_props.append(
                    matching_score(
                        [present(qid)], [[present(eid) for eid in retrieved]], "binary"
                    )
                )
                type_props.append(
                    matching_score(
                        [type_of(qid)],
                        [[type_of(eid) for eid in retrieved]],
                        "classification",
                    )
                )
            prefix = f"{mode.value}/{region.value}"
            metrics[f"f1/{prefix}"] = MetricValue(point=f1)
            metrics[f"match_binary/{prefix}"] = MetricValue(
                point=float(np.mean(binary_props)),
                ci=bootstrap_ci(binary_props, options.resamples, options.seed),
            )
            metrics[f"match_type/{prefix}"] = MetricValue(
                point=float(np.mean(type_props)),
                ci=bootstrap_ci(type_props, options.resamples, options.seed),
            )
    return EvalReport(name="diagnosis", metrics=metrics)


def probe_suite(
    corpus, snapshot: IndexSnapshot, options: SuiteOptions = SuiteOptions()
) -> EvalReport:
    """Linear probe on frozen global embeddings vs the binary label."""
    del snapshot
    ordered = sorted(corpus, key=lambda pair: pair[0].id)
    x = np.stack([record.global_vec for _, record in ordered]).astype(np.float64)
    y = [exam.binary_label for exam, _ in ordered]
    rng = np.random.default_rng(options.seed)
    order = rng.permutation(len(ordered))
    cut = max(1, min(len(ordered) - 1, int(len(ordered) * options.probe_train_frac)))
    train_idx, test_idx = order[:cut], order[cut:]
    scores = linear_probe(
        x[train_idx],
        [y[i] for i in train_idx],
        x[test_idx],
        [y[i] for i in test_idx],
        options.probe,
    )
    return EvalReport(
        name="probe",
        metrics={name: MetricValue(point=value) for name, value in scores.items()},
    )


_SUITES = {
    "retrieval": retrieval_suite,
    "diagnosis": diagnosis_suite,
    "probe": probe_suite,
}


def run_suite(
    name: str, corpus, snapshot: IndexSnapshot, options: SuiteOptions = SuiteOptions()
) -> dict[str, EvalReport]:
    """Run one named suite (or all of them for 'tables')."""
    if name == "tables":
        return {
            suite: _SUITES[suite](corpus, snapshot, options)
            for suite in ("retrieval", "diagnosis", "probe")
        }
    if name not in _SUITES:
        raise ConfigError(f"unknown suite '{name}'")
    return {name: _SUITES[name](corpus, snapshot, options)}


def _format_value(value: MetricValue) -> str:
    text = f"{value.point:.4f}"
    if value.ci is not None:
        text += f"  [{value.ci[0]:.4f}, {value.ci[1]:.4f}]"
    return text


def format_reports(reports: dict[str, EvalReport]) -> str:
    """Fixed-width text rendering; byte-stable for identical reports."""
    lines: list[str] = []
    for suite_name in sorted(reports):
        report = reports[suite_name]
        lines.append(f"== {suite_name} ==")
        width = max((len(k) for k in report.metrics), default=0)
        for metric_name in sorted(report.metrics):
            value = report.metrics[metric_name]
            lines.append(f"{metric_name.ljust(width)}  {_format_value(value)}")
        lines.append("")
    return "\n".join(lines)
