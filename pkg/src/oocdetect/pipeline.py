"""Three-stage detection over one claim or a batch.

The internal check asks a vision backend whether image and caption fit
together; the external check asks a chat backend whether the caption is
supported by webpages the image previously appeared on; the compose step
merges both analyses into the final verdict.  Stage failures degrade into
non-compliant outcomes instead of aborting, so a batch always yields one
result per claim.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import httpx

from .backend import (
    BackendRefused,
    CompletionBackend,
    CompletionRequest,
    ImageUnavailable,
    Message,
    UnscriptedRequest,
)
from .core import (
    CheckOutcome,
    Claim,
    DetectionResult,
    Explanation,
    NewsElement,
    ParseStatus,
    Stage,
    Verdict,
)
from .evidence import EvidenceStore, detect_entities, lookup
from .jsonl import iter_jsonl, write_json, write_jsonl
from .parsing import parse_verdict
from .prompts import PromptCatalog

ENTITY_SOURCES = ("stored", "live", "none")
COMPOSE_MODES = ("model", "shortcut")

_BACKEND_ERRORS = (
    httpx.TransportError,
    BackendRefused,
    UnscriptedRequest,
    ImageUnavailable,
)


class EmptyBatch(ValueError):
    """detect_batch was called with no claims."""


def _error_tag(exc: Exception) -> str:
    return f"[error: {type(exc).__name__}: {exc}]"


def _failure_outcome(stage: Stage, exc: Exception) -> CheckOutcome:
    tag = _error_tag(exc)
    return CheckOutcome(
        stage=stage,
        verdict=None,
        explanation=Explanation(rationale=tag),
        raw_response=tag,
        parse_status=ParseStatus.NON_COMPLIANT,
    )


@dataclass(frozen=True)
class PipelineConfig:
    max_pages: int = 3
    page_char_cap: int = 2000
    entity_source: str = "stored"
    compose_mode: str = "model"
    concurrency: int = 1
    vision_model_id: str = "vision"
    chat_model_id: str = "chat"

    def __post_init__(self):
        if self.entity_source not in ENTITY_SOURCES:
            raise ValueError(f"entity_source must be one of {ENTITY_SOURCES}")
        if self.compose_mode not in COMPOSE_MODES:
            raise ValueError(f"compose_mode must be one of {COMPOSE_MODES}")
        if self.concurrency < 1:
            raise ValueError("concurrency bound must be >= 1")
        if self.max_pages < 1:
            raise ValueError("max_pages must be >= 1")

    def to_json(self) -> dict:
        return {
            "max_pages": self.max_pages,
            "page_char_cap": self.page_char_cap,
            "entity_source": self.entity_source,
            "compose_mode": self.compose_mode,
            "concurrency": self.concurrency,
            "vision_model_id": self.vision_model_id,
            "chat_model_id": self.chat_model_id,
        }


@dataclass
class PipelineContext:
    """Everything a detection run needs, wired once up front."""

    vision_backend: CompletionBackend
    chat_backend: CompletionBackend
    catalog: PromptCatalog
    evidence_store: Optional[EvidenceStore] = None
    entity_client: Optional[object] = None
    embedding_backend: Optional[object] = None
    config: PipelineConfig = field(default_factory=PipelineConfig)


def describe(
    image: str,
    vision_backend: CompletionBackend,
    catalog: PromptCatalog,
    seed: int,
    *,
    model_id: str = "vision",
) -> str:
    """Ask the vision backend for a brief description of the image.

    The question is sampled deterministically from the caption-question list.
    The image must be readable before any backend call is attempted.
    """
    if not image.startswith(("http://", "https://")) and not Path(image).is_file():
        raise ImageUnavailable(f"cannot read image {image!r}")
    question = catalog.sample_caption_question(seed)
    request = CompletionRequest(
        model_id=model_id,
        messages=(Message(role="user", text=question, image=image),),
    )
    return vision_backend.complete(request).text


def _resolve_entities(claim: Claim, ctx: PipelineContext) -> tuple[str, ...]:
    source = ctx.config.entity_source
    if source == "none":
        return ()
    stored: tuple[str, ...] = ()
    if ctx.evidence_store is not None:
        entry = lookup(ctx.evidence_store, claim.id)
        if entry is not None:
            stored = entry.visual_entities
    if source == "stored":
        return stored
    if ctx.entity_client is None:
        return stored
    try:
        return tuple(detect_entities(claim.image, ctx.entity_client))
    except httpx.TransportError:
        return stored


def _internal_check(claim: Claim, ctx: PipelineContext) -> tuple[CheckOutcome, int]:
    entities = _resolve_entities(claim, ctx)
    prompt = ctx.catalog.render_internal_prompt(claim.caption, entities)
    request = CompletionRequest(
        model_id=ctx.config.vision_model_id,
        messages=(Message(role="user", text=prompt, image=claim.image),),
    )
    try:
        response = ctx.vision_backend.complete(request)
    except _BACKEND_ERRORS as exc:
        return _failure_outcome(Stage.INTERNAL, exc), 0
    return parse_verdict(response.text, Stage.INTERNAL), 1


def internal_check(claim: Claim, ctx: PipelineContext) -> CheckOutcome:
    """Image-text consistency check via the vision backend."""
    outcome, _ = _internal_check(claim, ctx)
    return outcome


def _external_check(
    claim: Claim, ctx: PipelineContext
) -> tuple[Optional[CheckOutcome], int]:
    if ctx.evidence_store is None:
        return None, 0
    entry = lookup(ctx.evidence_store, claim.id)
    if entry is None or not entry.pages:
        return None, 0
    prompt = ctx.catalog.render_external_prompt(
        claim.caption,
        entry.pages,
        max_pages=ctx.config.max_pages,
        page_char_cap=ctx.config.page_char_cap,
    )
    request = CompletionRequest(
        model_id=ctx.config.chat_model_id,
        messages=(Message(role="user", text=prompt),),
    )
    try:
        response = ctx.chat_backend.complete(request)
    except _BACKEND_ERRORS as exc:
        return _failure_outcome(Stage.EXTERNAL, exc), 0
    return parse_verdict(response.text, Stage.EXTERNAL), 1


def external_check(claim: Claim, ctx: PipelineContext) -> Optional[CheckOutcome]:
    """Claim-evidence relevance check; None when no evidence pages exist."""
    outcome, _ = _external_check(claim, ctx)
    return outcome


def _copy_as_composed(source: CheckOutcome) -> CheckOutcome:
    return CheckOutcome(
        stage=Stage.COMPOSED,
        verdict=source.verdict,
        explanation=source.explanation,
        raw_response=source.raw_response,
        parse_status=source.parse_status,
    )


def _fallback_to_internal(internal: CheckOutcome, raw: str) -> CheckOutcome:
    if internal.verdict is None:
        return CheckOutcome(
            stage=Stage.COMPOSED,
            verdict=None,
            explanation=Explanation(rationale=raw),
            raw_response=raw,
            parse_status=ParseStatus.NON_COMPLIANT,
        )
    return CheckOutcome(
        stage=Stage.COMPOSED,
        verdict=internal.verdict,
        explanation=internal.explanation,
        raw_response=raw,
        parse_status=ParseStatus.FALLBACK_CLASSIFIED,
    )


def _compose(
    claim: Claim,
    internal: CheckOutcome,
    external: Optional[CheckOutcome],
    ctx: PipelineContext,
) -> tuple[CheckOutcome, int]:
    if ctx.config.compose_mode == "shortcut" or external is None:
        return _copy_as_composed(internal), 0
    prompt = ctx.catalog.render_compose_prompt(claim.caption, internal, external)
    request = CompletionRequest(
        model_id=ctx.config.chat_model_id,
        messages=(Message(role="user", text=prompt),),
    )
    try:
        response = ctx.chat_backend.complete(request)
    except _BACKEND_ERRORS as exc:
        return _fallback_to_internal(internal, _error_tag(exc)), 0
    outcome = parse_verdict(response.text, Stage.COMPOSED)
    if outcome.parse_status is ParseStatus.NON_COMPLIANT:
        return _fallback_to_internal(internal, response.text), 1
    return outcome, 1


def compose(
    claim: Claim,
    internal: CheckOutcome,
    external: Optional[CheckOutcome],
    ctx: PipelineContext,
) -> CheckOutcome:
    """Final arbitration.

    With no external outcome (or shortcut mode) the internal result is
    copied through unchanged.  In model mode a non-compliant composer answer
    falls back to the internal verdict rather than losing the claim.
    """
    outcome, _ = _compose(claim, internal, external, ctx)
    return outcome


def detect(claim: Claim, ctx: PipelineContext) -> DetectionResult:
    """Run all three stages for one claim."""
    internal, n1 = _internal_check(claim, ctx)
    external, n2 = _external_check(claim, ctx)
    composed, n3 = _compose(claim, internal, external, ctx)
    return DetectionResult(
        claim_id=claim.id,
        internal=internal,
        composed=composed,
        external=external,
        evidence_used=external is not None,
        backend_calls=n1 + n2 + n3,
    )


def _detect_guarded(claim: Claim, ctx: PipelineContext) -> DetectionResult:
    try:
        return detect(claim, ctx)
    except Exception as exc:  # claim-level isolation; batches never abort
        failed = _failure_outcome(Stage.INTERNAL, exc)
        return DetectionResult(
            claim_id=claim.id,
            internal=failed,
            composed=_copy_as_composed(failed),
            external=None,
            evidence_used=False,
            backend_calls=0,
        )


@dataclass(frozen=True)
class RunManifest:
    """Sidecar record of one batch run; carries no timestamps on purpose."""

    prompt_catalog_checksum: str
    backend_ids: dict
    config: dict
    n_claims: int
    stage_counts: dict
    backend_calls: int
    network_calls: int
    cache_requests: int
    cache_hits: int
    cache_hit_rate: float

    def to_json(self) -> dict:
        return {
            "prompt_catalog_checksum": self.prompt_catalog_checksum,
            "backend_ids": self.backend_ids,
            "config": self.config,
            "n_claims": self.n_claims,
            "stage_counts": self.stage_counts,
            "backend_calls": self.backend_calls,
            "network_calls": self.network_calls,
            "cache_requests": self.cache_requests,
            "cache_hits": self.cache_hits,
            "cache_hit_rate": self.cache_hit_rate,
        }


def _usage_snapshot(backend: object) -> tuple[int, int]:
    """(logical requests, cache hits) seen by a backend so far."""
    stats = getattr(backend, "stats", None)
    if callable(stats):
        snap = stats()
        return snap.requests, snap.hits
    calls = getattr(backend, "calls", None)
    if isinstance(calls, int):
        return calls, 0
    return 0, 0


def detect_batch(
    claims: Sequence[Claim], ctx: PipelineContext
) -> tuple[list[DetectionResult], RunManifest]:
    """Detect every claim with bounded concurrency, order-stable.

    Per-claim failures are isolated into failed results.  The manifest
    separates logical completion calls (stable across cached reruns) from
    network calls actually forwarded to a backend.
    """
    if not claims:
        raise EmptyBatch("no claims to process")
    before = [
        _usage_snapshot(ctx.vision_backend),
        _usage_snapshot(ctx.chat_backend),
    ]
    bound = ctx.config.concurrency
    if bound == 1:
        results = [_detect_guarded(c, ctx) for c in claims]
    else:
        with ThreadPoolExecutor(max_workers=bound) as pool:
            results = list(pool.map(lambda c: _detect_guarded(c, ctx), claims))
    after = [
        _usage_snapshot(ctx.vision_backend),
        _usage_snapshot(ctx.chat_backend),
    ]
    requests = sum(a[0] - b[0] for a, b in zip(after, before))
    hits = sum(a[1] - b[1] for a, b in zip(after, before))
    stage_counts = {
        "internal": len(results),
        "external": sum(1 for r in results if r.external is not None),
        "composed": len(results),
        "failed": sum(1 for r in results if r.composed.verdict is None),
    }
    manifest = RunManifest(
        prompt_catalog_checksum=ctx.catalog.checksum,
        backend_ids={
            "vision": ctx.vision_backend.backend_id,
            "chat": ctx.chat_backend.backend_id,
            "embedding": getattr(ctx.embedding_backend, "backend_id", None),
        },
        config=ctx.config.to_json(),
        n_claims=len(claims),
        stage_counts=stage_counts,
        backend_calls=sum(r.backend_calls for r in results),
        network_calls=requests - hits,
        cache_requests=requests,
        cache_hits=hits,
        cache_hit_rate=(hits / requests) if requests else 0.0,
    )
    return results, manifest


# ----------------------------------------------------------------------
# Serialization

def _outcome_to_json(outcome: CheckOutcome) -> dict:
    exp = outcome.explanation
    return {
        "stage": outcome.stage.value,
        "verdict": outcome.verdict.value if outcome.verdict else None,
        "parse_status": outcome.parse_status.value,
        "raw_response": outcome.raw_response,
        "explanation": {
            "element": str(exp.element) if exp.element else None,
            "ent_t": exp.ent_t,
            "ent_v": exp.ent_v,
            "rationale": exp.rationale,
        },
    }


def _outcome_from_json(obj: dict) -> CheckOutcome:
    exp = obj["explanation"]
    element = exp["element"]
    return CheckOutcome(
        stage=Stage(obj["stage"]),
        verdict=Verdict(obj["verdict"]) if obj["verdict"] else None,
        explanation=Explanation(
            element=NewsElement(canonical=element) if element else None,
            ent_t=exp["ent_t"],
            ent_v=exp["ent_v"],
            rationale=exp["rationale"],
        ),
        raw_response=obj["raw_response"],
        parse_status=ParseStatus(obj["parse_status"]),
    )


def result_to_json(result: DetectionResult) -> dict:
    return {
        "claim_id": result.claim_id,
        "internal": _outcome_to_json(result.internal),
        "external": _outcome_to_json(result.external) if result.external else None,
        "composed": _outcome_to_json(result.composed),
        "evidence_used": result.evidence_used,
        "backend_calls": result.backend_calls,
    }


def result_from_json(obj: dict) -> DetectionResult:
    return DetectionResult(
        claim_id=obj["claim_id"],
        internal=_outcome_from_json(obj["internal"]),
        composed=_outcome_from_json(obj["composed"]),
        external=_outcome_from_json(obj["external"]) if obj["external"] else None,
        evidence_used=obj["evidence_used"],
        backend_calls=obj["backend_calls"],
    )


def write_results(path: str | Path, results: Sequence[DetectionResult]) -> int:
    return write_jsonl(path, (result_to_json(r) for r in results))


def load_results(path: str | Path) -> list[DetectionResult]:
    return [result_from_json(obj) for _, obj in iter_jsonl(path)]


def write_manifest(path: str | Path, manifest: RunManifest) -> None:
    write_json(path, manifest.to_json())
