"""Command-line entry points for synthesis, indexing, querying, training,
evaluation, benchmarking, and serving.

Every subcommand is a thin wrapper over the library: outputs come from
the same calls a program would make. Exit codes: 0 success, 2 usage
error, 1 runtime error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .domain import RegionKind
from .engine import RetrievalMode, RetrievalQuery, Retriever
from .errors import WmirError
from . import bench as bench_mod
from .contrastive import TrainConfig, save_head, train_head
from .index import EmbeddingIndex
from .kernels import available_backends, backend_name
from .storage import (
    index_from_records,
    load_corpus,
    load_exams,
    load_records,
    load_training_rows,
    save_corpus,
)
from .suites import SUITE_NAMES, SuiteOptions, format_reports, run_suite
from .synth import GeneratorConfig, corpus_stats, generate

_MODE_ALIASES = {
    "single-stage": RetrievalMode.SINGLE_STAGE,
    "single_stage": RetrievalMode.SINGLE_STAGE,
    "two-stage": RetrievalMode.TWO_STAGE,
    "two_stage": RetrievalMode.TWO_STAGE,
    "region-only": RetrievalMode.REGION_ONLY,
    "region_only": RetrievalMode.REGION_ONLY,
}


def _parse_mode(_ctx, _param, value: str) -> RetrievalMode:
    try:
        return _MODE_ALIASES[value]
    except KeyError:
        raise click.BadParameter(
            f"'{value}' (choose from {', '.join(sorted(set(_MODE_ALIASES)))})"
        ) from None


def _runtime_error(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@click.group()
def main() -> None:
    """Region-aware wrist radiograph case retrieval toolkit."""


@main.command()
@click.option("--exams", "n_exams", type=int, required=True, help="Number of exams.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sep", type=float, default=4.0, show_default=True,
              help="Cluster separation in noise units.")
@click.option("--noise", type=float, default=1.0, show_default=True)
@click.option("--coupling", type=float, default=1.0, show_default=True,
              help="Global-embedding / region-label coupling in [0, 1].")
@click.option("--dim", type=int, default=64, show_default=True)
@click.option("--miss-rate", type=float, default=0.02, show_default=True,
              help="Per-region embedding drop probability.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
              show_default=True, help="Directory for exams.ndjson / records.ndjson.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable summary.")
def synth(n_exams, seed, sep, noise, coupling, dim, miss_rate, out_dir, as_json):
    """Generate a synthetic corpus with controllable cluster geometry."""
    try:
        config = GeneratorConfig(
            n_exams=n_exams,
            dim=dim,
            seed=seed,
            cluster_separation=sep,
            noise=noise,
            coupling=coupling,
            region_miss_rate=miss_rate,
        )
        corpus = generate(config)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        exams_path = out / "exams.ndjson"
        records_path = out / "records.ndjson"
        save_corpus(exams_path, records_path, corpus)
        stats = corpus_stats(corpus)
    except WmirError as exc:
        _runtime_error(exc)
    if as_json:
        click.echo(json.dumps(
            {"exams": str(exams_path), "records": str(records_path), "stats": stats},
            sort_keys=True,
        ))
    else:
        click.echo(f"wrote {stats['n_exams']} exams to {exams_path}")
        click.echo(f"wrote embeddings to {records_path}")
        click.echo(
            f"fracture-positive {stats['fracture_positive']}, region fractures "
            f"{stats['total_region_fractures']}, healing {stats['healing_fractures']}"
        )


@main.command()
@click.option("--exams", "exams_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--records", "records_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True,
              help="Binary index output path.")
def ingest(exams_path, records_path, out_path):
    """Validate a corpus and build its binary index."""
    try:
        corpus = load_corpus(exams_path, records_path)
        index = index_from_records(record for _, record in corpus)
        index.save(out_path)
    except WmirError as exc:
        _runtime_error(exc)
    click.echo(f"ingested {len(corpus)} exams into {out_path} (dim={index.dim})")


@main.command()
@click.option("--records", "records_path", type=click.Path(exists=True, dir_okay=False),
              help="Build an index from an embedding NDJSON file.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="Binary index output path (with --records).")
@click.option("--info", "info_path", type=click.Path(exists=True, dir_okay=False),
              help="Print metadata of an existing binary index.")
def index(records_path, out_path, info_path):
    """Build or inspect a binary embedding index."""
    if info_path is None and (records_path is None or out_path is None):
        raise click.UsageError("provide --records with --out, or --info PATH")
    try:
        if info_path is not None:
            idx = EmbeddingIndex.load(info_path)
            snapshot = idx.snapshot()
            per_region = {
                region.value: len(snapshot.space(region)) for region in RegionKind
            }
            click.echo(
                f"dim={idx.dim} exams={len(idx)} regions={json.dumps(per_region, sort_keys=True)} "
                f"backend={backend_name()}"
            )
            return
        records = load_records(records_path)
        idx = index_from_records(records)
        idx.save(out_path)
    except WmirError as exc:
        _runtime_error(exc)
    click.echo(f"indexed {len(records)} records into {out_path} (dim={idx.dim})")


@main.command()
@click.option("--index", "index_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--exam", "exam_id", required=True, help="Query exam id.")
@click.option("--region", type=click.Choice([r.value for r in RegionKind]),
              default=None)
@click.option("--k-global", type=int, default=100, show_default=True)
@click.option("--k-final", type=int, default=10, show_default=True)
@click.option("--mode", default="two-stage", show_default=True, callback=_parse_mode)
@click.option("--json", "as_json", is_flag=True)
def query(index_path, exam_id, region, k_global, k_final, mode, as_json):
    """Rank similar exams; prints one `rank exam_id score` line per result."""
    try:
        idx = EmbeddingIndex.load(index_path)
        retriever = Retriever(idx.snapshot())
        request = RetrievalQuery(
            mode=mode,
            exam_id=exam_id,
            region=RegionKind(region) if region else None,
            k_global=k_global,
            k_final=k_final,
        )
        result = retriever.search(request)
    except WmirError as exc:
        _runtime_error(exc)
    if as_json:
        click.echo(json.dumps(result.to_dict(), sort_keys=True))
        return
    for rank, (eid, score) in enumerate(result.final, start=1):
        click.echo(f"{rank} {eid} {score:.6f}")
    if result.fallback_used:
        click.echo("note: region unavailable, fell back to global candidates", err=True)


@main.command("train-head")
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="NDJSON of exam_id/features/caption rows.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--lr", type=float, default=1e-5, show_default=True)
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--loss", type=click.Choice(["mp", "single_positive"]), default="mp",
              show_default=True)
@click.option("--d-out", type=int, default=64, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def train_head_cmd(data_path, out_path, lr, epochs, batch_size, seed, loss, d_out, as_json):
    """Train the projection head on feature/caption pairs."""
    try:
        _, features, captions = load_training_rows(data_path)
        config = TrainConfig(
            lr=lr, epochs=epochs, batch_size=batch_size, seed=seed,
            loss=loss, d_out=d_out,
        )
        head, scale, curve = train_head(features, captions, config)
        save_head(out_path, head, scale)
    except WmirError as exc:
        _runtime_error(exc)
    if as_json:
        click.echo(json.dumps(
            {"head": out_path, "loss_curve": curve, "log_scale": scale.log_scale},
            sort_keys=True,
        ))
        return
    click.echo(f"trained {epochs} epochs on {features.shape[0]} rows -> {out_path}")
    if curve:
        click.echo(f"loss {curve[0]:.6f} -> {curve[-1]:.6f}")


@main.command("eval")
@click.option("--exams", "exams_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--records", "records_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--suite", type=click.Choice(list(SUITE_NAMES)), default="tables",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--resamples", type=int, default=1000, show_default=True)
@click.option("--max-queries", type=int, default=None)
@click.option("--json", "as_json", is_flag=True)
def eval_cmd(exams_path, records_path, suite, seed, resamples, max_queries, as_json):
    """Run an evaluation suite and print fixed-width metric tables with CIs."""
    try:
        corpus = load_corpus(exams_path, records_path)
        idx = index_from_records(record for _, record in corpus)
        options = SuiteOptions(seed=seed, resamples=resamples, max_queries=max_queries)
        reports = run_suite(suite, corpus, idx.snapshot(), options)
    except WmirError as exc:
        _runtime_error(exc)
    if as_json:
        click.echo(json.dumps(
            {"suite": suite,
             "reports": {name: r.to_dict() for name, r in reports.items()}},
            sort_keys=True,
        ))
        return
    click.echo(format_reports(reports), nl=False)


@main.command()
@click.option("--pool", "pools", type=int, multiple=True,
              help="Pool size for the non-cached path; repeatable.")
@click.option("--cached", is_flag=True, help="Time the cached query path.")
@click.option("--backends", "compare_backends", is_flag=True,
              help="Compare scan kernels.")
@click.option("--pool-dim", type=int, default=512, show_default=True)
@click.option("--queries", "n_queries", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def bench(pools, cached, compare_backends, pool_dim, n_queries, seed, as_json):
    """Measure query latency; pool sizes probe the non-cached scaling."""
    if not pools and not cached and not compare_backends:
        pools = (100, 500, 1000)
    results = []
    try:
        for pool in pools:
            results.append(bench_mod.bench_pool(
                pool, dim=pool_dim, n_queries=n_queries, seed=seed,
            ))
        if cached:
            results.append(bench_mod.bench_cached(
                dim=pool_dim, n_queries=max(n_queries, 30), seed=seed,
            ))
        backend_results = (
            bench_mod.bench_backends(seed=seed) if compare_backends else {}
        )
    except WmirError as exc:
        _runtime_error(exc)
    if as_json:
        click.echo(json.dumps(
            {
                "results": [r.to_dict() for r in results],
                "backends": {k: v.to_dict() for k, v in backend_results.items()},
            },
            sort_keys=True,
        ))
        return
    for result in results:
        click.echo(
            f"{result.label} pool={result.pool_size} dim={result.dim} "
            f"mean={result.mean_ms:.3f}ms p95={result.p95_ms:.3f}ms"
        )
    for name, result in backend_results.items():
        click.echo(
            f"kernel={name} pool={result.pool_size} dim={result.dim} "
            f"mean={result.mean_ms:.3f}ms p95={result.p95_ms:.3f}ms"
        )


@main.command()
@click.option("--exams", "exams_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--records", "records_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--index", "index_path", type=click.Path(exists=True, dir_okay=False),
              help="Prebuilt binary index (instead of --records).")
@click.option("--ratings", "ratings_path", type=click.Path(dir_okay=False),
              default="ratings.ndjson", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8470, show_default=True)
def serve(exams_path, records_path, index_path, ratings_path, host, port):
    """Serve the HTTP/JSON API over a corpus."""
    import uvicorn

    from .service import ServiceState, create_app

    if (records_path is None) == (index_path is None):
        raise click.UsageError("provide exactly one of --records or --index")
    try:
        state = ServiceState(ratings_path)
        exams = load_exams(exams_path)
        if index_path is not None:
            state.index = EmbeddingIndex.load(index_path)
        else:
            for record in load_records(records_path):
                state.index.upsert(record)
        state.exams = {exam.id: exam for exam in exams}
    except WmirError as exc:
        _runtime_error(exc)
    app = create_app(state)
    click.echo(
        f"serving {len(state.exams)} exams on {host}:{port} "
        f"(kernels: {', '.join(available_backends())})"
    )
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
