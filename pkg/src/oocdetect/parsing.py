"""Turn raw model answers into CheckOutcome values.

This module owns the canonical answer sentences (the fake-answer template and
the real-answer sentence) and is their single point of definition; the prompt
catalog injects them into every template that asks for the Yes/No format.

Parsing is tiered and total: every input yields a CheckOutcome.
  Tier 1 (Structured): answer starts with a canonical Yes/No sentence.
  Tier 2 (FallbackClassified): "rightly used" / "wrongly used" appears anywhere.
  Tier 3 (NonCompliant): neither phrase present; no verdict.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .core import (
    CheckOutcome,
    Explanation,
    NewsElement,
    ParseStatus,
    Stage,
    Verdict,
    canonicalize_element,
)

# Canonical answer sentences. Each literal is defined exactly once here.
REAL_SENTENCE = "Yes, the image is rightly used."
REAL_TARGET_SENTENCE = "Yes, the image is rightly used in the given news context."
FAKE_CONTEXT_SENTENCE = "No, the image is wrongly used in a different news context."
INCONSISTENT_TEMPLATE = "The given news caption and image are inconsistent in {element}."
ENTITY_TEMPLATE = (
    "The {element} in the caption is {ent_t}, and the {element} in the image is {ent_v}."
)

_REAL_PREFIX = "yes, the image is rightly used"
_FAKE_PREFIX = "no, the image is wrongly used"
_RIGHTLY = "rightly used"
_WRONGLY = "wrongly used"

_QUOTE_CHARS = "\"'“”‘’"

# "... inconsistent in <element>". The element token runs to the next
# punctuation break; commas included so prose like "inconsistent in time,
# as ..." still yields the bare token.
_INCONSISTENT_RE = re.compile(r"inconsistent\s+in\s+([^.,;:\n]+)", re.IGNORECASE)

# Element-only fallback: "the <X> in the caption ... the <X> in the image"
# with a shared single token X. Entities are never extracted this way.
_CAPTION_PAIR_RE = re.compile(r"\bthe\s+([A-Za-z]+)\s+in\s+the\s+caption\b", re.IGNORECASE)

# Entity captures stop at a sentence end: period before whitespace/end,
# period against a closing quote (either order), or end of text. A bare
# quote is not a terminator, so entities may contain quoted spans.
_ENTITY_END = r"(?=\.\s|\.$|\.[\"”]|[\"”]\.|[\"”]$|\n|$)"


class MissingField(ValueError):
    """A labeled line required in a generated-inconsistency answer is absent or empty."""

    def __init__(self, field: str):
        super().__init__(f"missing field: {field}")
        self.field = field


class InvalidField(ValueError):
    """A field handed to the fake-target renderer is empty."""


@dataclass(frozen=True)
class GeneratedInconsistency:
    """One model-generated inconsistency: element, both entities, and the prose sentence."""

    element: NewsElement
    ent_t: str
    ent_v: str
    sentence: str


def render_fake_target(element: NewsElement | str, ent_t: str, ent_v: str) -> str:
    """Emit the canonical fake-news answer sentence for an (element, ent_t, ent_v) triple."""
    if isinstance(element, str):
        element = canonicalize_element(element)
    if not ent_t.strip() or not ent_v.strip():
        raise InvalidField("ent_t and ent_v must be non-empty")
    token = element.canonical
    return " ".join(
        (
            FAKE_CONTEXT_SENTENCE,
            INCONSISTENT_TEMPLATE.format(element=token),
            ENTITY_TEMPLATE.format(element=token, ent_t=ent_t, ent_v=ent_v),
        )
    )


def _strip_field(text: str) -> str:
    """Trim whitespace, then a balanced pair of surrounding quotes."""
    value = text.strip()
    while len(value) >= 2 and value[0] in _QUOTE_CHARS and value[-1] in _QUOTE_CHARS:
        value = value[1:-1].strip()
    return value


def _extract_element(text: str) -> tuple[NewsElement, str] | None:
    """Find the inconsistent element; returns (element, raw token) or None.

    Prefers the canonical "inconsistent in X" phrasing, then falls back to a
    paired "the X in the caption ... the X in the image" mention.
    """
    match = _INCONSISTENT_RE.search(text)
    if match:
        raw = _strip_field(match.group(1))
        if raw:
            return canonicalize_element(raw), raw
    for pair in _CAPTION_PAIR_RE.finditer(text):
        token = pair.group(1)
        if re.search(rf"\bthe\s+{re.escape(token)}\s+in\s+the\s+image\b", text, re.IGNORECASE):
            return canonicalize_element(token), token
    return None


def _extract_entities(text: str, element_raw: str) -> tuple[str | None, str | None]:
    """Capture ent_t/ent_v from the canonical entity sentence for the given element token.

    Shortest-match capture: ent_t ends at the literal ", and the <X> in the
    image is", so entities may themselves contain commas.
    """
    el = re.escape(element_raw)
    pattern = re.compile(
        rf"the\s+{el}\s+in\s+the\s+caption\s+is\s+(.+?)"
        rf",\s*and\s+the\s+{el}\s+in\s+the\s+image\s+is\s+(.+?){_ENTITY_END}",
        re.IGNORECASE,
    )
    match = pattern.search(text)
    if not match:
        return None, None
    ent_t = _strip_field(match.group(1))
    ent_v = _strip_field(match.group(2))
    return (ent_t or None), (ent_v or None)


def parse_verdict(raw: str, stage: Stage) -> CheckOutcome:
    """Parse an arbitrary model answer into a CheckOutcome. Never raises."""
    text = raw.strip()
    lowered = text.lower()

    verdict: Verdict | None = None
    status: ParseStatus
    if lowered.startswith(_REAL_PREFIX):
        verdict, status = Verdict.REAL, ParseStatus.STRUCTURED
    elif lowered.startswith(_FAKE_PREFIX):
        verdict, status = Verdict.FAKE, ParseStatus.STRUCTURED
    else:
        right_at = lowered.find(_RIGHTLY)
        wrong_at = lowered.find(_WRONGLY)
        if right_at < 0 and wrong_at < 0:
            return CheckOutcome(
                stage=stage,
                verdict=None,
                explanation=Explanation(rationale=raw),
                raw_response=raw,
                parse_status=ParseStatus.NON_COMPLIANT,
            )
        # Earliest occurrence wins; the two phrases can never share an offset.
        if wrong_at < 0 or (0 <= right_at < wrong_at):
            verdict = Verdict.REAL
        else:
            verdict = Verdict.FAKE
        status = ParseStatus.FALLBACK_CLASSIFIED

    element: NewsElement | None = None
    ent_t: str | None = None
    ent_v: str | None = None
    if verdict is Verdict.FAKE:
        found = _extract_element(text)
        if found:
            element, element_raw = found
            ent_t, ent_v = _extract_entities(text, element_raw)

    return CheckOutcome(
        stage=stage,
        verdict=verdict,
        explanation=Explanation(element=element, ent_t=ent_t, ent_v=ent_v, rationale=raw),
        raw_response=raw,
        parse_status=status,
    )


_FIELD_LABELS = (("element", "Element"), ("ent_t", "Entity_caption"), ("ent_v", "Entity_image"))


def parse_generated_inconsistency(raw: str) -> GeneratedInconsistency:
    """Extract the labeled Element / Entity_caption / Entity_image lines from a generated answer.

    Literal two-character "\\n" sequences are treated as newlines first, since
    generator models sometimes echo them verbatim from the format instruction.
    """
    text = raw.replace("\\n", "\n")
    values: dict[str, str] = {}
    first_label_pos: int | None = None
    for field, label in _FIELD_LABELS:
        match = re.search(rf"^\s*{label}[^\S\n]*:[^\S\n]*(.*)$", text, re.MULTILINE)
        if match is None or not match.group(1).strip():
            raise MissingField(field)
        values[field] = _strip_field(match.group(1))
        if first_label_pos is None or match.start() < first_label_pos:
            first_label_pos = match.start()
    sentence = text[:first_label_pos].strip()
    return GeneratedInconsistency(
        element=canonicalize_element(values["element"]),
        ent_t=values["ent_t"],
        ent_v=values["ent_v"],
        sentence=sentence,
    )
