"""Core vocabulary types: regions, fracture findings, reports, and exams.

All types are immutable values, safe to share across threads. JSON field
names are the lowercase snake_case attribute names used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .errors import SchemaError

__all__ = [
    "RegionKind",
    "FractureType",
    "HealingStage",
    "Displacement",
    "Side",
    "View",
    "RegionFinding",
    "StructuredReport",
    "Exam",
    "derive_labels",
]


class RegionKind(str, Enum):
    """The three wrist bone regions that condition retrieval."""

    DISTAL_RADIUS = "distal_radius"
    DISTAL_ULNA = "distal_ulna"
    ULNAR_STYLOID = "ulnar_styloid"

    @property
    def display_name(self) -> str:
        """Human-readable name, e.g. ``distal radius``."""
        return self.value.replace("_", " ")


class FractureType(str, Enum):
    """Fracture morphology; ``other`` is the catch-all for unlisted types."""

    SALTER_HARRIS = "salter_harris"
    BUCKLE = "buckle"
    TRANSVERSE = "transverse"
    OTHER = "other"
    NONE = "none"


class HealingStage(str, Enum):
    ACUTE = "acute"
    HEALING = "healing"
    UNKNOWN = "unknown"


class Displacement(str, Enum):
    NONE = "none"
    MILD = "mild"
    MODERATE = "moderate"
    SEVERE = "severe"
    UNKNOWN = "unknown"


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"


class View(str, Enum):
    """Only the PA projection is in scope."""

    PA = "pa"


@dataclass(frozen=True, slots=True)
class RegionFinding:
    """One region-level finding from a structured report."""

    region: RegionKind
    fracture: FractureType
    healing: HealingStage = HealingStage.UNKNOWN
    displacement: Displacement = Displacement.UNKNOWN

    def __post_init__(self) -> None:
        if self.fracture is FractureType.NONE:
            if self.healing is not HealingStage.UNKNOWN:
                raise SchemaError(
                    f"finding for {self.region.value}: fracture 'none' cannot "
                    f"carry healing stage '{self.healing.value}'"
                )
            if self.displacement not in (Displacement.NONE, Displacement.UNKNOWN):
                raise SchemaError(
                    f"finding for {self.region.value}: fracture 'none' cannot "
                    f"carry displacement '{self.displacement.value}'"
                )

    def to_dict(self) -> dict:
        return {
            "region": self.region.value,
            "fracture": self.fracture.value,
            "healing": self.healing.value,
            "displacement": self.displacement.value,
        }


@dataclass(frozen=True, slots=True)
class StructuredReport:
    """Validated, canonicalized record of side/view/region findings.

    Invariants: at most one finding per region, view is always PA.
    Construct via :func:`wmir.reports.validate_report` when parsing
    external records; direct construction still enforces the invariants.
    """

    side: Side
    findings: tuple[RegionFinding, ...] = ()
    view: View = View.PA

    def __post_init__(self) -> None:
        seen = set()
        for finding in self.findings:
            if finding.region in seen:
                from .errors import DuplicateRegionError

                raise DuplicateRegionError(
                    f"region '{finding.region.value}' listed more than once"
                )
            seen.add(finding.region)

    def finding_for(self, region: RegionKind) -> RegionFinding | None:
        for finding in self.findings:
            if finding.region is region:
                return finding
        return None

    def to_dict(self) -> dict:
        return {
            "side": self.side.value,
            "view": self.view.value,
            "findings": [f.to_dict() for f in self.findings],
        }


def derive_labels(
    report: StructuredReport,
) -> tuple[bool, dict[RegionKind, FractureType]]:
    """Derive the binary fracture label and per-region fracture-type labels.

    The binary label is true iff any finding has a fracture other than
    ``none``. Regions absent from the report are labeled ``none`` (the
    binary evaluation has no abstain class). Total and deterministic on
    valid reports.
    """
    region_labels = {region: FractureType.NONE for region in RegionKind}
    for finding in report.findings:
        region_labels[finding.region] = finding.fracture
    binary = any(t is not FractureType.NONE for t in region_labels.values())
    return binary, region_labels


@dataclass(frozen=True, slots=True)
class Exam:
    """One radiographic examination with its derived captions and labels."""

    id: str
    report: StructuredReport
    global_caption: str
    region_captions: Mapping[RegionKind, str] = field(default_factory=dict)
    binary_label: bool = False
    region_labels: Mapping[RegionKind, FractureType] = field(default_factory=dict)

    def __post_init__(self) -> None:
        binary, labels = derive_labels(self.report)
        if self.binary_label != binary:
            raise SchemaError(
                f"exam '{self.id}': binary_label {self.binary_label} disagrees "
                f"with report findings"
            )
        if dict(self.region_labels) != labels:
            raise SchemaError(
                f"exam '{self.id}': region_labels disagree with report findings"
            )
        finding_regions = {f.region for f in self.report.findings}
        extra = set(self.region_captions) - finding_regions
        if extra:
            raise SchemaError(
                f"exam '{self.id}': region_captions for regions without "
                f"findings: {sorted(r.value for r in extra)}"
            )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "report": self.report.to_dict(),
            "global_caption": self.global_caption,
            "region_captions": {
                r.value: c for r, c in sorted(self.region_captions.items())
            },
            "binary_label": self.binary_label,
            "region_labels": {
                r.value: t.value for r, t in sorted(self.region_labels.items())
            },
        }
