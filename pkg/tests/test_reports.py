"""Report validation, term canonicalization, and caption rendering."""

import pytest

from wmir.domain import (
    Displacement,
    FractureType,
    HealingStage,
    RegionFinding,
    RegionKind,
    Side,
    StructuredReport,
)
from wmir.errors import ConfigError, SchemaError
from wmir.reports import (
    CanonicalizationTable,
    build_exam,
    canonicalize_term,
    caption_key,
    exam_from_dict,
    global_caption,
    region_caption,
    validate_report,
)

GLOBAL_EXAMPLE = (
    "Left wrist X-ray (PA view) showing Salter-Harris fracture in the "
    "distal radius, currently in healing stage."
)
REGION_EXAMPLE = (
    "Ulnar styloid region showing fracture in the ulnar styloid, "
    "with displacement (mild)."
)


class TestCanonicalization:
    def test_ulna_styloid_variant(self):
        assert canonicalize_term("ulna styloid") == "ulnar styloid"

    def test_case_insensitive_match(self):
        assert canonicalize_term("Ulna Styloid") == "ulnar styloid"

    def test_canonical_term_is_fixed_point(self):
        assert canonicalize_term("ulnar styloid") == "ulnar styloid"
        twice = canonicalize_term(canonicalize_term("ulna styloid"))
        assert twice == "ulnar styloid"

    def test_word_boundary_respected(self):
        # no substring rewriting inside larger words
        assert canonicalize_term("triulna styloidal") == "triulna styloidal"

    def test_non_fixed_point_replacement_rejected(self):
        with pytest.raises(ConfigError):
            CanonicalizationTable([("a b", "a b c")])  # rhs matches lhs again


class TestValidateReport:
    def _raw(self, **overrides):
        raw = {
            "side": "left",
            "findings": [
                {
                    "region": "distal_radius",
                    "fracture": "salter_harris",
                    "healing": "healing",
                }
            ],
        }
        raw.update(overrides)
        return raw

    def test_valid_report_parses(self):
        report = validate_report(self._raw())
        assert report.side is Side.LEFT
        assert report.findings[0].fracture is FractureType.SALTER_HARRIS

    def test_missing_side_rejected(self):
        raw = self._raw()
        del raw["side"]
        with pytest.raises(SchemaError):
            validate_report(raw)

    def test_unknown_field_rejected(self):
        with pytest.raises(SchemaError):
            validate_report(self._raw(extra=1))

    def test_unknown_enum_value_rejected(self):
        raw = self._raw()
        raw["findings"][0]["fracture"] = "spiral"
        with pytest.raises(SchemaError):
            validate_report(raw)

    def test_region_synonym_canonicalized(self):
        raw = self._raw()
        raw["findings"][0]["region"] = "Ulna Styloid"
        report = validate_report(raw)
        assert report.findings[0].region is RegionKind.ULNAR_STYLOID

    def test_hyphen_and_space_spellings_accepted(self):
        raw = self._raw()
        raw["findings"][0]["fracture"] = "Salter-Harris"
        assert validate_report(raw).findings[0].fracture is (
            FractureType.SALTER_HARRIS
        )

    def test_duplicate_region_rejected(self):
        raw = self._raw()
        raw["findings"].append(dict(raw["findings"][0]))
        with pytest.raises(SchemaError):
            validate_report(raw)


class TestCaptionRendering:
    def test_global_example_byte_exact(self):
        report = StructuredReport(
            side=Side.LEFT,
            findings=(
                RegionFinding(
                    RegionKind.DISTAL_RADIUS,
                    FractureType.SALTER_HARRIS,
                    HealingStage.HEALING,
                ),
            ),
        )
        assert global_caption(report) == GLOBAL_EXAMPLE

    def test_region_example_byte_exact(self):
        report = StructuredReport(
            side=Side.RIGHT,
            findings=(
                RegionFinding(
                    RegionKind.ULNAR_STYLOID,
                    FractureType.OTHER,
                    HealingStage.ACUTE,
                    Displacement.MILD,
                ),
            ),
        )
        assert region_caption(report, RegionKind.ULNAR_STYLOID) == REGION_EXAMPLE

    def test_empty_report_renders_no_acute_fracture(self):
        report = StructuredReport(side=Side.RIGHT)
        assert (
            global_caption(report)
            == "Right wrist X-ray (PA view) showing no acute fracture."
        )

    def test_region_without_finding_renders_negative(self):
        report = StructuredReport(side=Side.LEFT)
        assert (
            region_caption(report, RegionKind.DISTAL_ULNA)
            == "Distal ulna region showing no acute fracture."
        )

    def test_multi_finding_join_order(self):
        report = StructuredReport(
            side=Side.LEFT,
            findings=(
                RegionFinding(RegionKind.DISTAL_RADIUS, FractureType.BUCKLE),
                RegionFinding(RegionKind.DISTAL_ULNA, FractureType.TRANSVERSE),
            ),
        )
        caption = global_caption(report)
        assert "buckle fracture in the distal radius; " in caption
        assert caption.endswith("transverse fracture in the distal ulna.")

    def test_displacement_suffix_order(self):
        report = StructuredReport(
            side=Side.LEFT,
            findings=(
                RegionFinding(
                    RegionKind.DISTAL_RADIUS,
                    FractureType.BUCKLE,
                    HealingStage.HEALING,
                    Displacement.SEVERE,
                ),
            ),
        )
        assert global_caption(report).endswith(
            "buckle fracture in the distal radius, currently in healing "
            "stage, with displacement (severe)."
        )


class TestCaptionKey:
    def test_case_and_whitespace_insensitive(self):
        assert caption_key("A  B\tc") == caption_key("a b C")

    def test_trailing_punctuation_preserved(self):
        assert caption_key("a b.") != caption_key("a b")

    def test_distinct_content_distinct_keys(self):
        assert caption_key(GLOBAL_EXAMPLE) != caption_key(REGION_EXAMPLE)

    def test_hashable_for_grouping(self):
        groups = {caption_key("x y"), caption_key(" X  Y "), caption_key("z")}
        assert len(groups) == 2


class TestBuildExam:
    def test_exam_captions_and_labels_consistent(self):
        report = StructuredReport(
            side=Side.LEFT,
            findings=(
                RegionFinding(RegionKind.ULNAR_STYLOID, FractureType.TRANSVERSE),
            ),
        )
        exam = build_exam("e9", report)
        assert exam.binary_label is True
        assert set(exam.region_captions) == {RegionKind.ULNAR_STYLOID}
        assert exam.global_caption == global_caption(report)

    def test_round_trip_through_dict(self):
        report = StructuredReport(
            side=Side.RIGHT,
            findings=(
                RegionFinding(
                    RegionKind.DISTAL_RADIUS,
                    FractureType.SALTER_HARRIS,
                    HealingStage.HEALING,
                    Displacement.MODERATE,
                ),
            ),
        )
        exam = build_exam("e10", report)
        again = exam_from_dict(exam.to_dict())
        assert again.to_dict() == exam.to_dict()

    def test_tampered_caption_rejected(self):
        exam = build_exam("e11", StructuredReport(side=Side.LEFT))
        raw = exam.to_dict()
        raw["global_caption"] = raw["global_caption"].replace("no acute", "acute")
        with pytest.raises(SchemaError):
            exam_from_dict(raw)

    def test_tampered_label_rejected(self):
        exam = build_exam("e12", StructuredReport(side=Side.LEFT))
        raw = exam.to_dict()
        raw["binary_label"] = True
        with pytest.raises(SchemaError):
            exam_from_dict(raw)
