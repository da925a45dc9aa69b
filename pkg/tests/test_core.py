import pytest

from oocdetect.core import (
    CheckOutcome,
    Claim,
    DetectionResult,
    Explanation,
    GoldLabel,
    InvalidElement,
    KNOWN_ELEMENTS,
    NewsElement,
    ParseStatus,
    Stage,
    Verdict,
    canonicalize_element,
)


class TestCanonicalizeElement:
    @pytest.mark.parametrize("raw", ["time", "Time", "  PERSON  ", "Artwork"])
    def test_known_spellings_fold_to_lowercase(self, raw):
        element = canonicalize_element(raw)
        assert element.canonical == raw.strip().lower()
        assert element.is_known

    def test_unknown_element_is_kept_verbatim_lowercased(self):
        element = canonicalize_element("Venue")
        assert element.canonical == "venue"
        assert not element.is_known

    def test_empty_raises(self):
        with pytest.raises(InvalidElement):
            canonicalize_element("   ")

    def test_known_set_is_the_six_news_elements(self):
        assert KNOWN_ELEMENTS == ("time", "place", "person", "event", "artwork", "object")

    def test_equality_is_canonical(self):
        assert canonicalize_element("Person") == canonicalize_element("person")
        assert str(canonicalize_element("Person")) == "person"


class TestGoldLabel:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("fake", GoldLabel.FALSIFIED),
            ("falsified", GoldLabel.FALSIFIED),
            ("real", GoldLabel.PRISTINE),
            ("pristine", GoldLabel.PRISTINE),
            ("Real", GoldLabel.PRISTINE),
        ],
    )
    def test_from_string(self, raw, expected):
        assert GoldLabel.from_string(raw) is expected

    def test_from_string_rejects_garbage(self):
        with pytest.raises(ValueError):
            GoldLabel.from_string("maybe")

    def test_matches(self):
        assert GoldLabel.FALSIFIED.matches(Verdict.FAKE)
        assert GoldLabel.PRISTINE.matches(Verdict.REAL)
        assert not GoldLabel.PRISTINE.matches(Verdict.FAKE)

    def test_absent_verdict_never_matches(self):
        assert not GoldLabel.FALSIFIED.matches(None)
        assert not GoldLabel.PRISTINE.matches(None)


class TestClaim:
    def test_blank_caption_rejected(self):
        with pytest.raises(ValueError):
            Claim(id="x", caption="  ", image="a.png")

    def test_empty_id_rejected(self):
        with pytest.raises(ValueError):
            Claim(id="", caption="ok", image="a.png")

    def test_label_optional(self):
        claim = Claim(id="x", caption="ok", image="a.png")
        assert claim.gold_label is None


class TestExplanation:
    def test_blank_entity_rejected(self):
        with pytest.raises(ValueError):
            Explanation(ent_t="  ")

    def test_all_absent_is_fine(self):
        exp = Explanation(rationale="whatever the model said")
        assert exp.element is None and exp.ent_t is None


class TestCheckOutcome:
    def _outcome(self, status, verdict):
        return CheckOutcome(
            stage=Stage.INTERNAL,
            verdict=verdict,
            explanation=Explanation(),
            raw_response="text",
            parse_status=status,
        )

    def test_structured_requires_verdict(self):
        with pytest.raises(ValueError):
            self._outcome(ParseStatus.STRUCTURED, None)

    def test_non_compliant_forbids_verdict(self):
        with pytest.raises(ValueError):
            self._outcome(ParseStatus.NON_COMPLIANT, Verdict.REAL)

    def test_valid_combinations(self):
        assert self._outcome(ParseStatus.STRUCTURED, Verdict.FAKE).verdict is Verdict.FAKE
        assert self._outcome(ParseStatus.NON_COMPLIANT, None).verdict is None


class TestDetectionResult:
    def _outcome(self, stage):
        return CheckOutcome(
            stage=stage,
            verdict=Verdict.REAL,
            explanation=Explanation(),
            raw_response="t",
            parse_status=ParseStatus.STRUCTURED,
        )

    def test_stage_tags_enforced(self):
        with pytest.raises(ValueError):
            DetectionResult(
                claim_id="c",
                internal=self._outcome(Stage.EXTERNAL),
                composed=self._outcome(Stage.COMPOSED),
            )

    def test_evidence_used_requires_external(self):
        with pytest.raises(ValueError):
            DetectionResult(
                claim_id="c",
                internal=self._outcome(Stage.INTERNAL),
                composed=self._outcome(Stage.COMPOSED),
                external=None,
                evidence_used=True,
            )

    def test_well_formed(self):
        result = DetectionResult(
            claim_id="c",
            internal=self._outcome(Stage.INTERNAL),
            composed=self._outcome(Stage.COMPOSED),
            external=self._outcome(Stage.EXTERNAL),
            evidence_used=True,
            backend_calls=3,
        )
        assert result.backend_calls == 3


def test_news_element_str_and_identity():
    element = NewsElement(canonical="object")
    assert str(element) == "object"
    assert element.is_known
