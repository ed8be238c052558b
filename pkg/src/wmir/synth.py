"""Deterministic synthetic corpus generator with a controllable latent model.

Each exam samples a report (fracture count, locations, morphology, healing
stage) from configurable proportions, renders captions through the report
pipeline, and draws embeddings from a Gaussian cluster model:

- region embeddings always cluster by (region, fracture-type) label;
- the global embedding clusters by the exam's full label signature with
  probability `coupling`, and by an unrelated decoy cluster otherwise.

With coupling = 0 the corpus exhibits globally similar exams whose region
pathology differs, which is exactly the regime where region-conditioned
reranking should beat global-only retrieval.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    FractureType,
    HealingStage,
    RegionFinding,
    RegionKind,
    Side,
    StructuredReport,
)
from .errors import ConfigError
from .index import EmbeddingRecord, normalize
from .reports import build_exam

__all__ = ["GeneratorConfig", "generate", "corpus_stats"]

# Default proportions follow the reference cohort: fractures-per-case
# histogram, fracture location counts, morphology counts, and the share
# of region fractures observed in a healing stage.
_COUNT_WEIGHTS = (2209, 2264, 2869, 159, 37, 2)
_LOCATION_WEIGHTS = (5369.0, 2030.0, 1238.0)
_MORPHOLOGY_WEIGHTS = (1621.0, 1007.0, 1924.0, 0.0)
_HEALING_PROB = 3955.0 / 8637.0

_LOCATIONS = tuple(RegionKind)
_MORPHOLOGIES = (
    FractureType.SALTER_HARRIS,
    FractureType.BUCKLE,
    FractureType.TRANSVERSE,
    FractureType.OTHER,
)
_REGION_POS = {region: i for i, region in enumerate(RegionKind)}


@dataclass(frozen=True, slots=True)
class GeneratorConfig:
    """Knobs for corpus size, cluster geometry, and label proportions.

    `cluster_separation` is the centroid scale in units of the noise
    level: embeddings are drawn as separation * unit_centroid + noise
    where the noise vector's expected norm is `noise`.
    """

    n_exams: int
    dim: int = 64
    seed: int = 0
    cluster_separation: float = 4.0
    noise: float = 1.0
    coupling: float = 1.0
    region_miss_rate: float = 0.02
    count_weights: tuple[float, ...] = _COUNT_WEIGHTS
    location_weights: tuple[float, float, float] = _LOCATION_WEIGHTS
    morphology_weights: tuple[float, float, float, float] = _MORPHOLOGY_WEIGHTS
    healing_prob: float = _HEALING_PROB
    n_decoy_clusters: int = 8

    def __post_init__(self) -> None:
        if self.n_exams < 1:
            raise ConfigError("n_exams must be >= 1")
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        if self.noise <= 0:
            raise ConfigError("noise must be positive")
        if self.cluster_separation < 0:
            raise ConfigError("cluster_separation must be >= 0")
        if not 0.0 <= self.coupling <= 1.0:
            raise ConfigError("coupling must lie in [0, 1]")
        if not 0.0 <= self.region_miss_rate < 1.0:
            raise ConfigError("region_miss_rate must lie in [0, 1)")
        if not 0.0 <= self.healing_prob <= 1.0:
            raise ConfigError("healing_prob must lie in [0, 1]")
        if self.n_decoy_clusters < 1:
            raise ConfigError("n_decoy_clusters must be >= 1")
        for name in ("count_weights", "location_weights", "morphology_weights"):
            weights = getattr(self, name)
            if not weights or any(w < 0 for w in weights):
                raise ConfigError(f"{name} must be non-negative")
            if sum(weights) <= 0:
                raise ConfigError(f"{name} must have positive total weight")
        if len(self.location_weights) != len(_LOCATIONS):
            raise ConfigError("location_weights must cover all three regions")
        if len(self.morphology_weights) != len(_MORPHOLOGIES):
            raise ConfigError("morphology_weights must cover the four types")


def _stable_int(key: str) -> int:
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _centroid(seed: int, key: str, dim: int, scale: float) -> np.ndarray:
    """Deterministic cluster centroid: scaled random unit direction.

    Keyed by (corpus seed, class key) so every exam of the same class
    shares a centroid regardless of generation order.
    """
    rng = np.random.default_rng([seed, _stable_int(key)])
    direction = rng.normal(size=dim)
    return scale * direction / np.linalg.norm(direction)


def _normalized(weights) -> np.ndarray:
    arr = np.asarray(weights, dtype=np.float64)
    return arr / arr.sum()


def generate(config: GeneratorConfig) -> list[tuple["object", EmbeddingRecord]]:
    """Produce (Exam, EmbeddingRecord) pairs; byte-identical per config."""
    rng = np.random.default_rng(config.seed)
    count_p = _normalized(config.count_weights)
    location_p = _normalized(config.location_weights)
    morphology_p = _normalized(config.morphology_weights)
    sigma = config.noise / math.sqrt(config.dim)
    sep = config.cluster_separation

    corpus = []
    for i in range(config.n_exams):
        exam_id = f"synth-{i:05d}"
        side = Side.LEFT if rng.random() < 0.5 else Side.RIGHT

        count = int(rng.choice(len(count_p), p=count_p))
        # A fracture count can never exceed the number of drawable regions.
        count = min(count, len(_LOCATIONS), int(np.count_nonzero(location_p)))
        if count:
            picks = rng.choice(
                len(_LOCATIONS), size=count, replace=False, p=location_p
            )
            fractured = sorted(
                (_LOCATIONS[int(p)] for p in picks), key=_REGION_POS.get
            )
        else:
            fractured = []

        findings = []
        for region in fractured:
            ftype = _MORPHOLOGIES[int(rng.choice(len(morphology_p), p=morphology_p))]
            healing = (
                HealingStage.HEALING
                if rng.random() < config.healing_prob
                else HealingStage.ACUTE
            )
            findings.append(RegionFinding(region=region, fracture=ftype, healing=healing))

        report = StructuredReport(side=side, findings=tuple(findings))
        exam = build_exam(exam_id, report)

        signature = "|".join(
            f"{r.value}={exam.region_labels[r].value}" for r in RegionKind
        )
        if rng.random() < config.coupling:
            global_key = f"global:label:{signature}"
        else:
            decoy = int(rng.integers(config.n_decoy_clusters))
            global_key = f"global:decoy:{decoy}"
        center = _centroid(config.seed, global_key, config.dim, sep)
        global_vec = normalize(center + rng.normal(0.0, sigma, size=config.dim))

        region_vecs = {}
        for region in RegionKind:
            missed = rng.random() < config.region_miss_rate
            if missed:
                continue
            label = exam.region_labels[region]
            key = f"region:{region.value}:{label.value}"
            center = _centroid(config.seed, key, config.dim, sep)
            region_vecs[region] = normalize(
                center + rng.normal(0.0, sigma, size=config.dim)
            )

        corpus.append(
            (exam, EmbeddingRecord(exam_id, global_vec, region_vecs))
        )
    return corpus


def corpus_stats(corpus) -> dict:
    """Summary counts used by tests and the CLI synth report."""
    n = len(corpus)
    positives = sum(1 for exam, _ in corpus if exam.binary_label)
    per_region = {region.value: 0 for region in RegionKind}
    healing = 0
    total_fractures = 0
    missing = {region.value: 0 for region in RegionKind}
    for exam, record in corpus:
        for finding in exam.report.findings:
            per_region[finding.region.value] += 1
            total_fractures += 1
            if finding.healing is HealingStage.HEALING:
                healing += 1
        for region in RegionKind:
            if region not in record.region_vecs:
                missing[region.value] += 1
    return {
        "n_exams": n,
        "fracture_positive": positives,
        "region_fractures": per_region,
        "total_region_fractures": total_fractures,
        "healing_fractures": healing,
        "missing_region_embeddings": missing,
    }
