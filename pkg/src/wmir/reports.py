"""Report validation, terminology canonicalization, and caption rendering.

Captions are produced by deterministic templates so that byte-equal reports
always yield byte-equal captions; caption identity (after normalization by
:func:`caption_key`) is the positive relation used both for contrastive
supervision and for retrieval relevance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

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
from .errors import ConfigError, DuplicateRegionError, SchemaError

__all__ = [
    "CanonicalizationTable",
    "DEFAULT_TABLE",
    "CaptionKey",
    "canonicalize_term",
    "validate_report",
    "global_caption",
    "region_caption",
    "caption_key",
    "build_exam",
    "exam_from_dict",
]


class CanonicalizationTable:
    """Ordered whole-word replacement rules, applied case-insensitively.

    The ruleset must be idempotent: every replacement string is itself a
    fixed point of the table, so applying the table twice equals applying
    it once.
    """

    def __init__(self, rules: list[tuple[str, str]]):
        self.rules = list(rules)
        self._compiled = [
            (re.compile(rf"\b{re.escape(pat)}\b", re.IGNORECASE), repl)
            for pat, repl in self.rules
        ]
        for _, repl in self.rules:
            if self.apply(repl) != repl:
                raise ConfigError(
                    f"replacement '{repl}' is not a fixed point of the table; "
                    f"the ruleset would not be idempotent"
                )

    def apply(self, text: str) -> str:
        for regexp, repl in self._compiled:
            text = regexp.sub(lambda _m: repl, text)
        return text

    @classmethod
    def from_file(cls, path: str | Path) -> "CanonicalizationTable":
        """Load rules from a plain-text file: one ``pattern<TAB>replacement``
        per line, ``#`` comments and blank lines ignored."""
        rules = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected two tab-separated columns")
            rules.append((parts[0].strip(), parts[1].strip()))
        return cls(rules)


# The only rule named by the source data convention; callers may extend via
# a table file.
DEFAULT_TABLE = CanonicalizationTable([("ulna styloid", "ulnar styloid")])


def canonicalize_term(term: str, table: CanonicalizationTable = DEFAULT_TABLE) -> str:
    """Apply whole-word canonicalization rules in table order. Idempotent."""
    return table.apply(term)


@dataclass(frozen=True, slots=True)
class CaptionKey:
    """Normalized caption identity: lowercased, whitespace-collapsed,
    trailing punctuation preserved."""

    normalized_text: str


def caption_key(caption: str) -> CaptionKey:
    return CaptionKey(" ".join(caption.lower().split()))


# --- validation --------------------------------------------------------------

def _parse_enum(value: object, enum_cls, field_name: str, table: CanonicalizationTable):
    if not isinstance(value, str):
        raise SchemaError(f"field '{field_name}': expected a string, got {type(value).__name__}")
    normalized = " ".join(canonicalize_term(value, table).lower().split())
    normalized = normalized.replace(" ", "_").replace("-", "_")
    try:
        return enum_cls(normalized)
    except ValueError:
        raise SchemaError(
            f"field '{field_name}': '{value}' is not one of "
            f"{[m.value for m in enum_cls]}"
        ) from None


def _require_keys(record: dict, required: set[str], optional: set[str], context: str) -> None:
    keys = set(record)
    missing = required - keys
    if missing:
        raise SchemaError(f"{context}: missing field(s) {sorted(missing)}")
    unknown = keys - required - optional
    if unknown:
        raise SchemaError(f"{context}: unknown field(s) {sorted(unknown)}")


def validate_report(
    raw: dict, table: CanonicalizationTable = DEFAULT_TABLE
) -> StructuredReport:
    """Validate a parsed key-value record into a canonical StructuredReport.

    Enum values are canonicalized (whole-word table rules) and case/space
    normalized. Raises SchemaError on missing/unknown fields or bad enum
    values and DuplicateRegionError when a region appears twice.
    """
    if not isinstance(raw, dict):
        raise SchemaError(f"report record must be a mapping, got {type(raw).__name__}")
    _require_keys(raw, {"side", "findings"}, {"view"}, "report")
    side = _parse_enum(raw["side"], Side, "side", table)
    view = _parse_enum(raw.get("view", "pa"), View, "view", table)
    raw_findings = raw["findings"]
    if not isinstance(raw_findings, list):
        raise SchemaError("field 'findings': expected a list")
    findings = []
    seen: set[RegionKind] = set()
    for i, item in enumerate(raw_findings):
        if not isinstance(item, dict):
            raise SchemaError(f"findings[{i}]: expected a mapping")
        _require_keys(
            item, {"region", "fracture"}, {"healing", "displacement"}, f"findings[{i}]"
        )
        region = _parse_enum(item["region"], RegionKind, f"findings[{i}].region", table)
        if region in seen:
            raise DuplicateRegionError(
                f"region '{region.value}' listed more than once"
            )
        seen.add(region)
        findings.append(
            RegionFinding(
                region=region,
                fracture=_parse_enum(
                    item["fracture"], FractureType, f"findings[{i}].fracture", table
                ),
                healing=_parse_enum(
                    item.get("healing", "unknown"),
                    HealingStage,
                    f"findings[{i}].healing",
                    table,
                ),
                displacement=_parse_enum(
                    item.get("displacement", "unknown"),
                    Displacement,
                    f"findings[{i}].displacement",
                    table,
                ),
            )
        )
    return StructuredReport(side=side, view=view, findings=tuple(findings))


# --- caption templates -------------------------------------------------------

_TYPE_PHRASE = {
    FractureType.SALTER_HARRIS: "Salter-Harris fracture",
    FractureType.BUCKLE: "buckle fracture",
    FractureType.TRANSVERSE: "transverse fracture",
    FractureType.OTHER: "fracture",
}

NO_FRACTURE = "no acute fracture"


def _finding_phrase(finding: RegionFinding) -> str:
    region_name = finding.region.display_name
    if finding.fracture is FractureType.NONE:
        return f"{NO_FRACTURE} in the {region_name}"
    phrase = f"{_TYPE_PHRASE[finding.fracture]} in the {region_name}"
    if finding.healing is HealingStage.HEALING:
        phrase += ", currently in healing stage"
    if finding.displacement not in (Displacement.NONE, Displacement.UNKNOWN):
        phrase += f", with displacement ({finding.displacement.value})"
    return phrase


def global_caption(report: StructuredReport) -> str:
    """Render the exam-level caption.

    Grammar: ``{Side} wrist X-ray (PA view) showing {details}.`` where
    details joins per-finding phrases with ``; `` in report order, or is
    ``no acute fracture`` for an empty report.
    """
    if report.findings:
        details = "; ".join(_finding_phrase(f) for f in report.findings)
    else:
        details = NO_FRACTURE
    side = report.side.value.capitalize()
    view = report.view.value.upper()
    return f"{side} wrist X-ray ({view} view) showing {details}."


def region_caption(report: StructuredReport, region: RegionKind) -> str:
    """Render the caption for one bone region crop.

    Grammar: ``{Region name} region showing {details}.``; a region without
    a (positive) finding renders ``no acute fracture``.
    """
    finding = report.finding_for(region)
    if finding is None or finding.fracture is FractureType.NONE:
        details = NO_FRACTURE
    else:
        details = _finding_phrase(finding)
    return f"{region.display_name.capitalize()} region showing {details}."


# --- exam assembly -----------------------------------------------------------

def build_exam(exam_id: str, report: StructuredReport) -> Exam:
    """Assemble an Exam from a validated report: render captions, derive labels."""
    binary, region_labels = derive_labels(report)
    return Exam(
        id=exam_id,
        report=report,
        global_caption=global_caption(report),
        region_captions={
            f.region: region_caption(report, f.region) for f in report.findings
        },
        binary_label=binary,
        region_labels=region_labels,
    )


def exam_from_dict(raw: dict, table: CanonicalizationTable = DEFAULT_TABLE) -> Exam:
    """Parse and validate a serialized Exam record.

    The derived fields (captions, labels) must agree with the embedded
    report; the Exam constructor enforces label consistency and the
    region-caption key invariant.
    """
    if not isinstance(raw, dict):
        raise SchemaError(f"exam record must be a mapping, got {type(raw).__name__}")
    _require_keys(
        raw,
        {"id", "report"},
        {"global_caption", "region_captions", "binary_label", "region_labels"},
        "exam",
    )
    if not isinstance(raw["id"], str) or not raw["id"]:
        raise SchemaError("field 'id': expected a non-empty string")
    report = validate_report(raw["report"], table)
    rebuilt = build_exam(raw["id"], report)
    if "global_caption" in raw and raw["global_caption"] != rebuilt.global_caption:
        raise SchemaError(f"exam '{raw['id']}': global_caption disagrees with report")
    if "region_captions" in raw:
        given = raw["region_captions"]
        if not isinstance(given, dict):
            raise SchemaError("field 'region_captions': expected a mapping")
        expected = {r.value: c for r, c in rebuilt.region_captions.items()}
        if given != expected:
            raise SchemaError(f"exam '{raw['id']}': region_captions disagree with report")
    if "binary_label" in raw and raw["binary_label"] != rebuilt.binary_label:
        raise SchemaError(f"exam '{raw['id']}': binary_label disagrees with report")
    if "region_labels" in raw:
        given = raw["region_labels"]
        if not isinstance(given, dict):
            raise SchemaError("field 'region_labels': expected a mapping")
        expected = {r.value: t.value for r, t in rebuilt.region_labels.items()}
        if given != expected:
            raise SchemaError(f"exam '{raw['id']}': region_labels disagree with report")
    return rebuilt
