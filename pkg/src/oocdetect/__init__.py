"""Out-of-context misinformation detection toolkit.

Detects whether a news image is rightly used with its caption by combining
an image-text consistency check, a claim-evidence relevance check over
retrieved webpages, and a composed final verdict, all over pluggable model
backends.  Also ships the instruction-dataset builders and the evaluation
metrics for judging both verdicts and generated explanations.
"""

from .backend import (
    CachedBackend,
    CompletionRequest,
    CompletionResponse,
    HashedEmbeddingBackend,
    HttpChatBackend,
    Message,
    ResponseCache,
    ScriptedBackend,
    cache_key,
    cosine,
)
from .core import (
    CheckOutcome,
    Claim,
    DetectionResult,
    Explanation,
    GoldLabel,
    KNOWN_ELEMENTS,
    NewsElement,
    ParseStatus,
    Stage,
    Verdict,
    canonicalize_element,
)
from .evidence import (
    Evidence,
    EvidencePage,
    EvidenceStore,
    ingest_evidence,
    load_claims,
)
from .instructgen import (
    FakePairSource,
    InstructionKind,
    InstructionRecord,
    build_stage1,
    build_stage2,
    validate_records,
)
from .metrics import (
    EvalReport,
    GoldExplanation,
    accuracy,
    build_report,
    element_hit_ratio,
    entity_similarity,
    response_ratio,
    rouge,
)
from .parsing import (
    GeneratedInconsistency,
    parse_generated_inconsistency,
    parse_verdict,
    render_fake_target,
)
from .pipeline import (
    PipelineConfig,
    PipelineContext,
    RunManifest,
    compose,
    describe,
    detect,
    detect_batch,
    external_check,
    internal_check,
)
from .prompts import ANSWER_FORMAT_CLAUSE, PromptCatalog

__version__ = "0.1.0"

__all__ = [
    "ANSWER_FORMAT_CLAUSE",
    "CachedBackend",
    "CheckOutcome",
    "Claim",
    "CompletionRequest",
    "CompletionResponse",
    "DetectionResult",
    "EvalReport",
    "Evidence",
    "EvidencePage",
    "EvidenceStore",
    "Explanation",
    "FakePairSource",
    "GeneratedInconsistency",
    "GoldExplanation",
    "GoldLabel",
    "HashedEmbeddingBackend",
    "HttpChatBackend",
    "InstructionKind",
    "InstructionRecord",
    "KNOWN_ELEMENTS",
    "Message",
    "NewsElement",
    "ParseStatus",
    "PipelineConfig",
    "PipelineContext",
    "PromptCatalog",
    "ResponseCache",
    "RunManifest",
    "ScriptedBackend",
    "Stage",
    "Verdict",
    "accuracy",
    "build_report",
    "build_stage1",
    "build_stage2",
    "cache_key",
    "canonicalize_element",
    "compose",
    "cosine",
    "describe",
    "detect",
    "detect_batch",
    "element_hit_ratio",
    "entity_similarity",
    "external_check",
    "ingest_evidence",
    "internal_check",
    "load_claims",
    "parse_generated_inconsistency",
    "parse_verdict",
    "render_fake_target",
    "response_ratio",
    "rouge",
    "validate_records",
]
