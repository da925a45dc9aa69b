"""Per-claim external evidence: retrieved webpage texts and detected visual entities.

The default path is offline: evidence is pre-retrieved and ingested from a
JSON Lines file. A live entity-detection client can be plugged in behind the
same interface; the pipeline falls back to stored entities when it fails.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .core import Claim, GoldLabel, Split
from .jsonl import iter_jsonl_lenient

logger = logging.getLogger(__name__)


class FileUnreadable(OSError):
    """The evidence or claims file cannot be opened."""


class SchemaError(ValueError):
    """A JSON Lines record does not match the expected schema."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


@dataclass(frozen=True)
class EvidencePage:
    """One webpage retrieved for a claim's image."""

    url: str
    body: str
    title: str | None = None

    def __post_init__(self) -> None:
        if not self.body.strip():
            raise ValueError("evidence page body is empty")


@dataclass(frozen=True)
class Evidence:
    """Everything retrieved for one claim: webpages plus detected visual entities."""

    claim_id: str
    pages: tuple[EvidencePage, ...] = ()
    visual_entities: tuple[str, ...] = ()


@dataclass
class EvidenceStore:
    """Read-only map from claim id to its Evidence; safe for concurrent lookups."""

    entries: dict[str, Evidence] = field(default_factory=dict)
    schema_errors: list[SchemaError] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)


def lookup(store: EvidenceStore, claim_id: str) -> Evidence | None:
    """Return the claim's Evidence, or None when nothing was ingested for it.

    An entry with zero pages is returned as-is; the pipeline treats it as "no
    external evidence" but its entities remain usable for internal checking.
    """
    return store.entries.get(claim_id)


def dedupe_entities(raw: list[str] | tuple[str, ...]) -> tuple[str, ...]:
    """Drop blank strings and case-insensitive duplicates, keeping first spellings in order."""
    seen: set[str] = set()
    result: list[str] = []
    for name in raw:
        cleaned = name.strip()
        key = cleaned.lower()
        if not cleaned or key in seen:
            continue
        seen.add(key)
        result.append(cleaned)
    return tuple(result)


def _parse_evidence_record(line: int, record: object) -> Evidence:
    if not isinstance(record, dict):
        raise SchemaError(line, "record is not an object")
    claim_id = record.get("claim_id")
    if not isinstance(claim_id, str) or not claim_id:
        raise SchemaError(line, "missing or invalid claim_id")
    pages_raw = record.get("pages", [])
    entities_raw = record.get("visual_entities", [])
    if not isinstance(pages_raw, list) or not isinstance(entities_raw, list):
        raise SchemaError(line, "pages and visual_entities must be arrays")
    pages: list[EvidencePage] = []
    for index, page in enumerate(pages_raw):
        if not isinstance(page, dict) or not isinstance(page.get("url"), str):
            raise SchemaError(line, f"pages[{index}]: missing url")
        body = page.get("body")
        if not isinstance(body, str) or not body.strip():
            raise SchemaError(line, f"pages[{index}]: missing or empty body")
        title = page.get("title")
        if title is not None and not isinstance(title, str):
            raise SchemaError(line, f"pages[{index}]: title must be a string")
        pages.append(EvidencePage(url=page["url"], body=body, title=title))
    if not all(isinstance(name, str) for name in entities_raw):
        raise SchemaError(line, "visual_entities must be strings")
    return Evidence(
        claim_id=claim_id,
        pages=tuple(pages),
        visual_entities=dedupe_entities(entities_raw),
    )


def ingest_evidence(path: str | Path, *, strict: bool = True) -> EvidenceStore:
    """Load an evidence JSON Lines file into an in-memory store.

    With strict=True the first malformed line raises SchemaError; otherwise
    bad lines are skipped and collected in store.schema_errors. A repeated
    claim_id is replaced by the later line, with a warning.
    """
    store = EvidenceStore()
    try:
        rows = list(iter_jsonl_lenient(path))
    except OSError as exc:
        raise FileUnreadable(f"cannot read evidence file {path}: {exc}") from exc
    for line, record, parse_error in rows:
        try:
            if parse_error is not None:
                raise SchemaError(line, f"invalid JSON: {parse_error}")
            evidence = _parse_evidence_record(line, record)
        except SchemaError as exc:
            if strict:
                raise
            store.schema_errors.append(exc)
            continue
        if evidence.claim_id in store.entries:
            logger.warning("duplicate claim_id %s at line %d; later line wins", evidence.claim_id, line)
        store.entries[evidence.claim_id] = evidence
    return store


def _parse_claim_record(line: int, record: object) -> Claim:
    if not isinstance(record, dict):
        raise SchemaError(line, "record is not an object")
    for key in ("id", "caption", "image"):
        if not isinstance(record.get(key), str) or not record[key].strip():
            raise SchemaError(line, f"missing or empty {key}")
    label_raw = record.get("label")
    gold: GoldLabel | None = None
    if label_raw is not None:
        if not isinstance(label_raw, str):
            raise SchemaError(line, "label must be a string or null")
        try:
            gold = GoldLabel.from_string(label_raw)
        except ValueError as exc:
            raise SchemaError(line, str(exc)) from exc
    split_raw = record.get("split")
    split: Split | None = None
    if split_raw is not None:
        try:
            split = Split(split_raw)
        except ValueError as exc:
            raise SchemaError(line, f"unknown split: {split_raw!r}") from exc
    return Claim(
        id=record["id"],
        caption=record["caption"],
        image=record["image"],
        gold_label=gold,
        split=split,
    )


def load_claims(path: str | Path, *, strict: bool = True) -> tuple[list[Claim], list[SchemaError]]:
    """Load a claims JSON Lines file; duplicate ids are a schema error."""
    claims: list[Claim] = []
    errors: list[SchemaError] = []
    seen_ids: set[str] = set()
    try:
        rows = list(iter_jsonl_lenient(path))
    except OSError as exc:
        raise FileUnreadable(f"cannot read claims file {path}: {exc}") from exc
    for line, record, parse_error in rows:
        try:
            if parse_error is not None:
                raise SchemaError(line, f"invalid JSON: {parse_error}")
            claim = _parse_claim_record(line, record)
            if claim.id in seen_ids:
                raise SchemaError(line, f"duplicate claim id {claim.id!r}")
        except SchemaError as exc:
            if strict:
                raise
            errors.append(exc)
            continue
        seen_ids.add(claim.id)
        claims.append(claim)
    return claims, errors


class EntityClient(Protocol):
    """Anything that can name the entities visible in an image."""

    def detect(self, image: str) -> list[str]: ...


@dataclass
class ScriptedEntityClient:
    """Test double returning a fixed entity list per image reference."""

    responses: dict[str, list[str]]
    default: list[str] | None = None

    def detect(self, image: str) -> list[str]:
        if image in self.responses:
            return list(self.responses[image])
        if self.default is not None:
            return list(self.default)
        raise KeyError(f"no scripted entities for image {image!r}")


def detect_entities(image: str, entity_client: EntityClient) -> list[str]:
    """Ask the configured client for visual entities, deduplicated, confidence order kept.

    Transport failures propagate; callers fall back to dataset-provided entities.
    """
    return list(dedupe_entities(tuple(entity_client.detect(image))))
