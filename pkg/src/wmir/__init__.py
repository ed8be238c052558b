"""Region-aware case retrieval for wrist radiograph embeddings.

Two-stage search (global candidates, region-conditioned rerank with
fallback), a multi-positive contrastive training objective with analytic
gradients, report-to-caption rendering, an evaluation harness with
bootstrap confidence intervals, a synthetic oracle corpus generator, and
an HTTP/JSON service.
"""

from .domain import (
    Displacement,
    Exam,
    FractureType,
    HealingStage,
    RegionFinding,
    RegionKind,
    Side,
    StructuredReport,
    View,
    derive_labels,
)
from .engine import (
    RetrievalMode,
    RetrievalQuery,
    RetrievalResult,
    Retriever,
    majority_vote_diagnosis,
)
from .index import EmbeddingIndex, EmbeddingRecord, IndexSnapshot, normalize
from .reports import (
    CaptionKey,
    build_exam,
    canonicalize_term,
    caption_key,
    global_caption,
    region_caption,
    validate_report,
)
from .synth import GeneratorConfig, generate

__version__ = "0.1.0"

__all__ = [
    "Displacement",
    "Exam",
    "FractureType",
    "HealingStage",
    "RegionFinding",
    "RegionKind",
    "Side",
    "StructuredReport",
    "View",
    "derive_labels",
    "RetrievalMode",
    "RetrievalQuery",
    "RetrievalResult",
    "Retriever",
    "majority_vote_diagnosis",
    "EmbeddingIndex",
    "EmbeddingRecord",
    "IndexSnapshot",
    "normalize",
    "CaptionKey",
    "build_exam",
    "canonicalize_term",
    "caption_key",
    "global_caption",
    "region_caption",
    "validate_report",
    "GeneratorConfig",
    "generate",
    "__version__",
]
