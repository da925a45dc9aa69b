"""Shared domain types for out-of-context (OOC) news detection.

Everything here is an immutable in-memory value; no I/O, no model calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Verdict(str, Enum):
    """Binary judgment on an image-caption claim."""

    REAL = "Real"
    FAKE = "Fake"


class GoldLabel(str, Enum):
    """Ground-truth label of a dataset claim."""

    PRISTINE = "Pristine"
    FALSIFIED = "Falsified"

    @classmethod
    def from_string(cls, raw: str) -> GoldLabel:
        """Map dataset label spellings ("real"/"fake", "pristine"/"falsified") to a GoldLabel."""
        token = raw.strip().lower()
        if token in ("real", "pristine"):
            return cls.PRISTINE
        if token in ("fake", "falsified"):
            return cls.FALSIFIED
        raise ValueError(f"unknown gold label: {raw!r}")

    def matches(self, verdict: Verdict | None) -> bool:
        """True when a model verdict agrees with this gold label. Absent verdicts never match."""
        if verdict is None:
            return False
        return (self is GoldLabel.FALSIFIED) == (verdict is Verdict.FAKE)


class Stage(str, Enum):
    """Which step of the reasoning process produced an outcome."""

    INTERNAL = "Internal"
    EXTERNAL = "External"
    COMPOSED = "Composed"


class ParseStatus(str, Enum):
    """How much structure the response parser recovered from a raw model answer."""

    STRUCTURED = "Structured"
    FALLBACK_CLASSIFIED = "FallbackClassified"
    NON_COMPLIANT = "NonCompliant"


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class InvalidElement(ValueError):
    """Raised when a news-element token cannot be canonicalized."""


#: Closed vocabulary of news-element dimensions. Tokens outside this set are
#: preserved verbatim (lowercased) because generated data is open-vocabulary.
KNOWN_ELEMENTS: tuple[str, ...] = ("time", "place", "person", "event", "artwork", "object")


@dataclass(frozen=True)
class NewsElement:
    """A canonical news-element token, e.g. the dimension along which a claim is inconsistent."""

    canonical: str

    @property
    def is_known(self) -> bool:
        return self.canonical in KNOWN_ELEMENTS

    def __str__(self) -> str:
        return self.canonical


def canonicalize_element(raw: str) -> NewsElement:
    """Normalize a raw element token: trim, lowercase, keep unknown tokens as-is.

    Idempotent and pure; raises InvalidElement on empty input.
    """
    token = raw.strip().lower()
    if not token:
        raise InvalidElement("element token is empty")
    return NewsElement(canonical=token)


@dataclass(frozen=True)
class Claim:
    """One news item: an image reference paired with its caption.

    `image` is an opaque reference (local path or URL); pixels are never decoded.
    """

    id: str
    caption: str
    image: str
    gold_label: GoldLabel | None = None
    split: Split | None = None

    def __post_init__(self) -> None:
        if not self.caption.strip():
            raise ValueError(f"claim {self.id!r}: caption is empty")
        if not self.id:
            raise ValueError("claim id is empty")


@dataclass(frozen=True)
class Explanation:
    """Structured slice of a model answer: the inconsistent element and its two entities.

    All fields may be absent (e.g. for a real-news verdict); `rationale` always
    carries the full raw answer text.
    """

    element: NewsElement | None = None
    ent_t: str | None = None
    ent_v: str | None = None
    rationale: str = ""

    def __post_init__(self) -> None:
        for name in ("ent_t", "ent_v"):
            value = getattr(self, name)
            if value is not None and not value.strip():
                raise ValueError(f"{name} is present but blank")


@dataclass(frozen=True)
class CheckOutcome:
    """One stage's verdict plus whatever explanation structure the parser recovered."""

    stage: Stage
    verdict: Verdict | None
    explanation: Explanation
    raw_response: str
    parse_status: ParseStatus

    def __post_init__(self) -> None:
        if self.parse_status is ParseStatus.STRUCTURED and self.verdict is None:
            raise ValueError("structured outcome requires a verdict")
        if self.parse_status is ParseStatus.NON_COMPLIANT and self.verdict is not None:
            raise ValueError("non-compliant outcome cannot carry a verdict")


@dataclass(frozen=True)
class DetectionResult:
    """Full per-claim output of the detection pipeline.

    `backend_calls` counts logical completion calls made for this claim; cache
    hits count too, so reruns serialize identically.
    """

    claim_id: str
    internal: CheckOutcome
    composed: CheckOutcome
    external: CheckOutcome | None = None
    evidence_used: bool = False
    backend_calls: int = 0

    def __post_init__(self) -> None:
        if self.internal.stage is not Stage.INTERNAL:
            raise ValueError("internal outcome must have stage Internal")
        if self.composed.stage is not Stage.COMPOSED:
            raise ValueError("composed outcome must have stage Composed")
        if self.external is None and self.evidence_used:
            raise ValueError("evidence_used requires an external outcome")
