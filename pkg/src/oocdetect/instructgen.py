"""Builders for the two instruction-tuning datasets.

Stage 1 pairs each news image with a randomly sampled brief-description
question and uses the caption as the answer, adapting a general captioner to
news vocabulary.  Stage 2 turns falsified image-caption pairs into judgment
plus explanation targets: a chat backend is asked which news element the new
caption and the reused image disagree on, the answer is parsed, and the
canonical refusal sentence is emitted as the training target.  Real pairs are
added in equal number so the dataset stays balanced.
"""

from __future__ import annotations

import hashlib
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import httpx

from .backend import (
    BackendRefused,
    CompletionBackend,
    CompletionRequest,
    Message,
    UnscriptedRequest,
)
from .core import InvalidElement
from .jsonl import iter_jsonl, write_json, write_jsonl
from .parsing import (
    REAL_TARGET_SENTENCE,
    InvalidField,
    MissingField,
    parse_generated_inconsistency,
    render_fake_target,
)
from .prompts import PromptCatalog

STOP_MARKER = "<STOP>"
IMAGE_PLACEHOLDER = "<image>"


class EmptyDataset(ValueError):
    """A builder was invoked with nothing to build from."""


class InsufficientReals(ValueError):
    """Fewer real pairs available than generated fake records to balance."""


class InstructionKind(str, Enum):
    CAPTION_ALIGN = "CaptionAlign"
    OOC_FAKE = "OOCFake"
    OOC_REAL = "OOCReal"


@dataclass(frozen=True)
class FakePairSource:
    """One falsified pair plus the context needed to explain it.

    ``cap_new`` is the caption the image was wrongly attached to; ``cap_ori``
    is the original caption of the reused image; ``basic_description`` is a
    model-written description of the image content.
    """

    id: str
    cap_new: str
    cap_ori: str
    image: str
    basic_description: str

    def __post_init__(self):
        for name in ("id", "cap_new", "cap_ori", "image", "basic_description"):
            if not getattr(self, name).strip():
                raise ValueError(f"fake pair field {name!r} must be non-empty")
        if self.cap_new == self.cap_ori:
            raise ValueError("cap_new and cap_ori must differ")


@dataclass(frozen=True)
class InstructionRecord:
    image: str
    prompt: str
    target: str
    kind: InstructionKind
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.prompt.strip():
            raise ValueError("instruction prompt must be non-empty")
        if not self.target.strip():
            raise ValueError("instruction target must be non-empty")
        if self.kind is InstructionKind.OOC_FAKE:
            try:
                expected = render_fake_target(
                    self.provenance["element"],
                    self.provenance["ent_t"],
                    self.provenance["ent_v"],
                )
            except KeyError as exc:
                raise ValueError(
                    f"fake record provenance missing {exc.args[0]!r}"
                ) from None
            if self.target != expected:
                raise ValueError("fake target does not match its provenance triple")
        elif self.kind is InstructionKind.OOC_REAL:
            if self.target != REAL_TARGET_SENTENCE:
                raise ValueError("real target must be the canonical sentence")

    def training_text(self) -> str:
        """Serialize as one supervised turn with literal stop markers."""
        return (
            f"Human: {IMAGE_PLACEHOLDER} {self.prompt}{STOP_MARKER}; "
            f"Model: {self.target}{STOP_MARKER}"
        )

    def to_json(self) -> dict:
        return {
            "image": self.image,
            "prompt": self.prompt,
            "target": self.target,
            "kind": self.kind.value,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "InstructionRecord":
        return cls(
            image=obj["image"],
            prompt=obj["prompt"],
            target=obj["target"],
            kind=InstructionKind(obj["kind"]),
            provenance=dict(obj.get("provenance", {})),
        )


def _derived_seed(seed: int, index: int) -> int:
    """Stable per-record seed so record i's question is independent of n."""
    digest = hashlib.sha256(f"{seed}:{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def build_stage1(
    pairs: Sequence[tuple[str, str]], seed: int, catalog: PromptCatalog
) -> list[InstructionRecord]:
    """One caption-alignment record per (image, caption) pair."""
    if not pairs:
        raise EmptyDataset("no image-caption pairs given")
    records = []
    for i, (image, caption) in enumerate(pairs):
        if not caption.strip():
            raise ValueError(f"pair {i} has an empty caption")
        question = catalog.sample_caption_question(_derived_seed(seed, i))
        records.append(
            InstructionRecord(
                image=image,
                prompt=question,
                target=caption,
                kind=InstructionKind.CAPTION_ALIGN,
                provenance={"source_index": i},
            )
        )
    return records


@dataclass
class GenerationLog:
    attempted: int = 0
    generated: int = 0
    skipped: list[tuple[str, str]] = field(default_factory=list)

    @property
    def skip_count(self) -> int:
        return len(self.skipped)


_GenOutcome = Union[InstructionRecord, tuple[str, str]]


def _generate_one(
    fake: FakePairSource,
    backend: CompletionBackend,
    catalog: PromptCatalog,
    model_id: str,
) -> _GenOutcome:
    prompt = catalog.render_ooc_gen_prompt(
        fake.cap_ori, fake.cap_new, fake.basic_description
    )
    request = CompletionRequest(
        model_id=model_id, messages=(Message(role="user", text=prompt),)
    )
    try:
        response = backend.complete(request)
    except (httpx.TransportError, BackendRefused, UnscriptedRequest) as exc:
        return (fake.id, f"backend: {exc}")
    try:
        generated = parse_generated_inconsistency(response.text)
    except MissingField as exc:
        return (fake.id, f"missing field: {exc.field}")
    except (InvalidElement, InvalidField) as exc:
        return (fake.id, f"unusable answer: {exc}")
    target = render_fake_target(generated.element, generated.ent_t, generated.ent_v)
    return InstructionRecord(
        image=fake.image,
        prompt=catalog.render_internal_prompt(fake.cap_new),
        target=target,
        kind=InstructionKind.OOC_FAKE,
        provenance={
            "generator_model_id": model_id,
            "source_id": fake.id,
            "element": str(generated.element),
            "ent_t": generated.ent_t,
            "ent_v": generated.ent_v,
        },
    )


def build_stage2(
    fakes: Sequence[FakePairSource],
    reals: Sequence[tuple[str, str]],
    backend: CompletionBackend,
    catalog: PromptCatalog,
    *,
    seed: int,
    model_id: str = "ooc-generator",
    workers: int = 1,
) -> tuple[list[InstructionRecord], GenerationLog]:
    """Generate balanced OOC judgment instructions.

    Every fake pair is sent through the inconsistency-generation prompt;
    unparseable or failed generations are skipped and logged rather than
    retried.  As many real pairs as surviving fakes are then sampled without
    replacement (seeded), so the output is exactly balanced: all fake records
    first, then the sampled real records.
    """
    log = GenerationLog(attempted=len(fakes))
    if not fakes:
        return [], log

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(
                pool.map(
                    lambda f: _generate_one(f, backend, catalog, model_id), fakes
                )
            )
    else:
        outcomes = [_generate_one(f, backend, catalog, model_id) for f in fakes]

    fake_records = []
    for outcome in outcomes:
        if isinstance(outcome, InstructionRecord):
            fake_records.append(outcome)
        else:
            log.skipped.append(outcome)
    log.generated = len(fake_records)

    if len(fake_records) > len(reals):
        raise InsufficientReals(
            f"need {len(fake_records)} real pairs to balance, have {len(reals)}"
        )
    rng = random.Random(seed)
    chosen = rng.sample(range(len(reals)), k=len(fake_records))
    real_records = [
        InstructionRecord(
            image=reals[i][0],
            prompt=catalog.render_internal_prompt(reals[i][1]),
            target=REAL_TARGET_SENTENCE,
            kind=InstructionKind.OOC_REAL,
            provenance={"source_index": i},
        )
        for i in chosen
    ]
    return fake_records + real_records, log


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    duplicates: list[tuple[str, str]] = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations and not self.duplicates

    @property
    def fake_count(self) -> int:
        return self.counts.get(InstructionKind.OOC_FAKE.value, 0)

    @property
    def real_count(self) -> int:
        return self.counts.get(InstructionKind.OOC_REAL.value, 0)


def validate_records(records: Sequence[InstructionRecord]) -> ValidationReport:
    """Check record invariants and cross-record consistency without mutating."""
    report = ValidationReport()
    seen: set[tuple[str, str]] = set()
    for i, record in enumerate(records):
        label = record.provenance.get("source_id", f"record {i}")
        if not record.prompt.strip():
            report.violations.append(f"{label}: empty prompt")
        if not record.target.strip():
            report.violations.append(f"{label}: empty target")
        if record.kind is InstructionKind.OOC_FAKE:
            triple = {k: record.provenance.get(k) for k in ("element", "ent_t", "ent_v")}
            if not all(triple.values()):
                report.violations.append(f"{label}: provenance triple incomplete")
            else:
                expected = render_fake_target(
                    triple["element"], triple["ent_t"], triple["ent_v"]
                )
                if record.target != expected:
                    report.violations.append(
                        f"{label}: target does not round-trip its provenance"
                    )
        elif record.kind is InstructionKind.OOC_REAL:
            if record.target != REAL_TARGET_SENTENCE:
                report.violations.append(f"{label}: non-canonical real target")
        key = (record.image, record.target)
        if key in seen:
            report.duplicates.append(key)
        seen.add(key)
        report.counts[record.kind.value] = report.counts.get(record.kind.value, 0) + 1
    return report


def write_instruction_records(
    path: str | Path, records: Sequence[InstructionRecord]
) -> int:
    return write_jsonl(path, (r.to_json() for r in records))


def write_instruction_manifest(
    path: str | Path,
    *,
    seed: int,
    prompt_catalog_checksum: str,
    generator_model_id: Optional[str],
    records: Sequence[InstructionRecord],
    log: Optional[GenerationLog] = None,
) -> None:
    """Sidecar manifest for one build; deliberately timestamp-free."""
    counts: dict[str, int] = {}
    for record in records:
        counts[record.kind.value] = counts.get(record.kind.value, 0) + 1
    payload = {
        "seed": seed,
        "prompt_catalog_checksum": prompt_catalog_checksum,
        "generator_model_id": generator_model_id,
        "counts": counts,
        "skipped": [
            {"id": sid, "reason": reason} for sid, reason in (log.skipped if log else [])
        ],
    }
    write_json(path, payload)


def load_instruction_records(path: str | Path) -> list[InstructionRecord]:
    return [InstructionRecord.from_json(obj) for _, obj in iter_jsonl(path)]
