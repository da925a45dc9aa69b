"""Prompt catalog: the exact instruction texts sent to backends.

All templates live in a plain-text resource file (``resources/prompt_catalog.txt``)
so that a single checksum pins the exact bytes a run used.  Rendering is pure
string substitution; the Yes/No answer-format clause is composed from the same
sentence constants the verdict parser matches against, so the two sides cannot
drift apart.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .core import CheckOutcome
from .evidence import EvidencePage
from .parsing import (
    ENTITY_TEMPLATE,
    FAKE_CONTEXT_SENTENCE,
    INCONSISTENT_TEMPLATE,
    REAL_SENTENCE,
)

_BLOCK_MARKER = ">>> "
_SLOT_RE = re.compile(r"\{([a-z_]+)\}")

DEFAULT_MAX_PAGES = 3
DEFAULT_PAGE_CHAR_CAP = 2000

#: The answer-format clause shared by the internal, external and compose
#: prompts.  Built from the parser's canonical sentences so the instruction we
#: give a model and the strings we later look for are literally the same.
ANSWER_FORMAT_CLAUSE = (
    'You should answer in the following forms: "'
    + REAL_SENTENCE
    + '" or "'
    + FAKE_CONTEXT_SENTENCE
    + " "
    + INCONSISTENT_TEMPLATE.format(element="<element>")
    + " "
    + ENTITY_TEMPLATE.format(element="<element>", ent_t="<ent_t>", ent_v="<ent_v>")
    + '"'
)

_ENTITY_LINE_PREFIX = "Detected visual entities in the image: "


class TemplateError(ValueError):
    """A template slot was left unbound, or an unknown slot was supplied."""


class EmptyEvidence(ValueError):
    """Raised when an evidence prompt is requested with zero pages."""


class CatalogError(ValueError):
    """The catalog resource file is malformed or missing a required block."""


@dataclass(frozen=True)
class PromptTemplate:
    """One named template with ``{slot}`` placeholders."""

    name: str
    body: str

    @property
    def required_slots(self) -> frozenset[str]:
        return frozenset(_SLOT_RE.findall(self.body))

    def render(self, **values: str) -> str:
        """Fill every slot in a single pass.

        Substituted values are never re-scanned, so a caption that happens to
        contain ``{caption}`` or another slot spelling comes through verbatim.
        """
        required = self.required_slots
        missing = required - values.keys()
        if missing:
            raise TemplateError(
                f"template {self.name!r} is missing slots: {sorted(missing)}"
            )
        unknown = values.keys() - required
        if unknown:
            raise TemplateError(
                f"template {self.name!r} does not define slots: {sorted(unknown)}"
            )
        return _SLOT_RE.sub(lambda m: values[m.group(1)], self.body)


def _parse_blocks(text: str) -> dict[str, str]:
    """Split the catalog file into named blocks.

    A block starts at a ``>>> name`` line and runs to the next marker.  Text
    before the first marker is preamble and ignored.  Leading and trailing
    blank lines of each block are stripped; interior blank lines are kept.
    """
    blocks: dict[str, str] = {}
    name = None
    lines: list[str] = []

    def flush() -> None:
        if name is None:
            return
        body = "\n".join(lines).strip("\n")
        if not body:
            raise CatalogError(f"catalog block {name!r} is empty")
        if name in blocks:
            raise CatalogError(f"duplicate catalog block {name!r}")
        blocks[name] = body

    for line in text.split("\n"):
        if line.startswith(_BLOCK_MARKER):
            flush()
            name = line[len(_BLOCK_MARKER):].strip()
            if not name:
                raise CatalogError("catalog block marker without a name")
            lines = []
        elif name is not None:
            lines.append(line)
    flush()
    return blocks


def _clip_at_whitespace(body: str, cap: int) -> str:
    """Trim ``body`` to at most ``cap`` characters, cutting at whitespace."""
    if len(body) <= cap:
        return body
    head = body[:cap]
    cut = max(head.rfind(" "), head.rfind("\n"), head.rfind("\t"))
    if cut <= 0:
        return head
    return head[:cut].rstrip()


class PromptCatalog:
    """Loaded, read-only prompt catalog.

    Construct with :meth:`load` (packaged default) or :meth:`from_path`.
    """

    _REQUIRED = ("internal_check", "external_check", "compose_check",
                 "ooc_generation", "caption_questions")

    def __init__(self, raw: bytes, source: str):
        self._raw = raw
        self.source = source
        blocks = _parse_blocks(raw.decode("utf-8"))
        for required in self._REQUIRED:
            if required not in blocks:
                raise CatalogError(f"catalog is missing block {required!r}")
        self._templates = {
            n: PromptTemplate(name=n, body=blocks[n])
            for n in ("internal_check", "external_check", "compose_check",
                      "ooc_generation")
        }
        self.caption_questions: tuple[str, ...] = tuple(
            q for q in blocks["caption_questions"].split("\n") if q.strip()
        )
        if not self.caption_questions:
            raise CatalogError("caption_questions block holds no questions")

    @classmethod
    def load(cls) -> "PromptCatalog":
        raw = (
            resources.files("oocdetect")
            .joinpath("resources/prompt_catalog.txt")
            .read_bytes()
        )
        return cls(raw, source="packaged:prompt_catalog.txt")

    @classmethod
    def from_path(cls, path: str | Path) -> "PromptCatalog":
        p = Path(path)
        return cls(p.read_bytes(), source=str(p))

    @property
    def checksum(self) -> str:
        """Hex sha256 of the catalog file bytes, recorded in run manifests."""
        return hashlib.sha256(self._raw).hexdigest()

    def template(self, name: str) -> PromptTemplate:
        try:
            return self._templates[name]
        except KeyError:
            raise CatalogError(f"no template named {name!r}") from None

    # ------------------------------------------------------------------
    # Renderers

    def render_internal_prompt(
        self, caption: str, visual_entities: Sequence[str] = ()
    ) -> str:
        """Image-text consistency instruction for a vision backend.

        When entities are given they are appended as a single
        ``Detected visual entities in the image: ...`` line just before the
        closing ``The answer is``.
        """
        if not caption.strip():
            raise ValueError("caption must be non-empty")
        entity_block = ""
        if visual_entities:
            entity_block = (
                _ENTITY_LINE_PREFIX + ", ".join(visual_entities) + "\n"
            )
        return self.template("internal_check").render(
            answer_format=ANSWER_FORMAT_CLAUSE,
            caption=caption,
            entity_block=entity_block,
        )

    def render_external_prompt(
        self,
        caption: str,
        pages: Sequence[EvidencePage],
        *,
        max_pages: int = DEFAULT_MAX_PAGES,
        page_char_cap: int = DEFAULT_PAGE_CHAR_CAP,
    ) -> str:
        """Claim-evidence relevance instruction over retrieved webpage text.

        Keeps the first ``max_pages`` pages in their stored order and clips
        each body to ``page_char_cap`` characters at a whitespace boundary.
        """
        if not caption.strip():
            raise ValueError("caption must be non-empty")
        if not pages:
            raise EmptyEvidence("external prompt requires at least one page")
        kept = list(pages)[:max_pages]
        rendered = []
        for i, page in enumerate(kept, start=1):
            body = _clip_at_whitespace(page.body, page_char_cap)
            rendered.append(f"Evidence {i} (from {page.url}): {body}")
        return self.template("external_check").render(
            answer_format=ANSWER_FORMAT_CLAUSE,
            caption=caption,
            evidence_blocks="\n".join(rendered),
        )

    def render_compose_prompt(
        self, caption: str, internal: CheckOutcome, external: CheckOutcome
    ) -> str:
        """Final-decision instruction over the two earlier analyses."""
        if not caption.strip():
            raise ValueError("caption must be non-empty")
        for outcome in (internal, external):
            if not outcome.raw_response.strip():
                raise ValueError("compose prompt needs both raw responses")
        return self.template("compose_check").render(
            answer_format=ANSWER_FORMAT_CLAUSE,
            caption=caption,
            internal_analysis=internal.raw_response,
            external_analysis=external.raw_response,
        )

    def render_ooc_gen_prompt(
        self, cap_ori: str, cap_new: str, basic_description: str
    ) -> str:
        """Few-shot inconsistency-generation prompt for a chat backend."""
        for label, value in (
            ("cap_ori", cap_ori),
            ("cap_new", cap_new),
            ("basic_description", basic_description),
        ):
            if not value.strip():
                raise ValueError(f"{label} must be non-empty")
        return self.template("ooc_generation").render(
            cap_ori=cap_ori,
            cap_new=cap_new,
            basic_description=basic_description,
        )

    def sample_caption_question(self, seed: int) -> str:
        """Deterministically pick one of the brief-description questions."""
        rng = random.Random(seed)
        return self.caption_questions[rng.randrange(len(self.caption_questions))]
