"""Shared fixtures: a 20-claim mock corpus with scripted backends."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from oocdetect.backend import ScriptedBackend
from oocdetect.core import Claim, GoldLabel
from oocdetect.parsing import REAL_SENTENCE, render_fake_target
from oocdetect.prompts import PromptCatalog

ELEMENTS = ("time", "place", "person", "event", "artwork", "object")

# Entity pairs for the ten falsified claims; a few carry commas and interior
# quotes on purpose so serialization paths stay honest about punctuation.
FAKE_TRIPLES = {
    "c01": ("time", "the summer of 2014", "the winter of 2009"),
    "c02": ("place", "Oldham, Greater Manchester", "Bern, Switzerland"),
    "c03": ("person", "Urs Rohner", "Chris Huhne"),
    "c04": ("event", "a climate summit", "a tennis final"),
    "c05": ("artwork", 'the "Skat" painting', "Brightwell Church and Village"),
    "c06": ("object", "a lifeboat", "a cargo ferry"),
    "c07": ("time", "Tuesday morning", "a night in 1998"),
    "c08": ("person", "Nick Clegg", "Tim Henman"),
    "c09": ("place", "Ciudad Juarez", "Guangzhou"),
    "c10": ("event", "a papal visit", "a station closure"),
}


@dataclass
class Corpus:
    root: Path
    claims: list[Claim]
    claims_path: Path
    evidence_path: Path
    gold_path: Path
    vision_script: list[tuple[str, str]]
    chat_script: list[tuple[str, str]]
    triples: dict = field(default_factory=lambda: dict(FAKE_TRIPLES))

    def vision_backend(self) -> ScriptedBackend:
        return ScriptedBackend(
            "mock-vision", rules=self.vision_script, default=REAL_SENTENCE
        )

    def chat_backend(self) -> ScriptedBackend:
        return ScriptedBackend(
            "mock-chat", rules=self.chat_script, default=REAL_SENTENCE
        )


def caption_for(cid: str) -> str:
    return f"Report {cid} covering a distinct news moment."


def make_corpus(root: Path) -> Corpus:
    """Twenty claims: c01-c10 falsified, c11-c20 pristine.

    Evidence pages exist for c01-c05 (fake) and c11-c13 (real); the rest run
    evidence-free.  The scripted vision backend answers each fake caption
    with the canonical refusal built from FAKE_TRIPLES; the chat backend
    echoes the same verdict for external and compose prompts.
    """
    root.mkdir(parents=True, exist_ok=True)
    images = root / "images"
    images.mkdir(exist_ok=True)

    claims = []
    vision_script: list[tuple[str, str]] = []
    chat_script: list[tuple[str, str]] = []
    claim_rows = []
    evidence_rows = []
    gold_rows = []

    for i in range(1, 21):
        cid = f"c{i:02d}"
        fake = i <= 10
        image = images / f"{cid}.png"
        image.write_bytes(b"mock-image-bytes:" + cid.encode())
        caption = caption_for(cid)
        claims.append(
            Claim(
                id=cid,
                caption=caption,
                image=str(image),
                gold_label=GoldLabel.FALSIFIED if fake else GoldLabel.PRISTINE,
            )
        )
        claim_rows.append(
            {
                "id": cid,
                "caption": caption,
                "image": str(image),
                "label": "fake" if fake else "real",
            }
        )
        if fake:
            element, ent_t, ent_v = FAKE_TRIPLES[cid]
            answer = render_fake_target(element, ent_t, ent_v)
            vision_script.append((f"Report {cid} ", answer))
            chat_script.append((f"Report {cid} ", answer))
            gold_rows.append(
                {"claim_id": cid, "element": element, "ent_t": ent_t, "ent_v": ent_v}
            )
        if (fake and i <= 5) or (not fake and i <= 13):
            evidence_rows.append(
                {
                    "claim_id": cid,
                    "pages": [
                        {
                            "url": f"http://evidence.example/{cid}/1",
                            "title": f"Archive entry {cid}",
                            "body": f"Webpage text previously hosting the image of {cid}. "
                            * 3,
                        }
                    ],
                    "visual_entities": [f"Entity {cid}", "Crowd"],
                }
            )

    claims_path = root / "claims.jsonl"
    evidence_path = root / "evidence.jsonl"
    gold_path = root / "gold.jsonl"
    claims_path.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in claim_rows),
        encoding="utf-8",
    )
    evidence_path.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in evidence_rows),
        encoding="utf-8",
    )
    gold_path.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in gold_rows),
        encoding="utf-8",
    )
    return Corpus(
        root=root,
        claims=claims,
        claims_path=claims_path,
        evidence_path=evidence_path,
        gold_path=gold_path,
        vision_script=vision_script,
        chat_script=chat_script,
    )


# Replay inputs for the OOC-generation prompt: each case feeds one of the
# in-context examples back in as the query.  The scripted needle keys on the
# query line's double space after "image_ori:", which the example lines (single
# space) never contain, so the mock answers the filled query and nothing else.
REPLAY_CASES = (
    {
        "cap_ori": "John Constable's Brightwell Church and Village was part of the 2013 exhibition",
        "cap_new": "From J Charles Eichhorn's American Skat or The Game of Skat Defined",
        "basic_description": (
            "This image describes a rural landscape with a farmhouse, a barn, and a "
            "field. The farmhouse is situated in the middle of the field, surrounded "
            "by the barn and the open land. The painting captures the essence of a "
            "peaceful, pastoral setting, with the farmhouse serving as the central "
            "focus of the scene."
        ),
        "needle": "image_ori:  This image describes",
        "response": (
            "They are inconsistent in artwork. The artwork in caption_new is "
            "American Skat or The Game of Skat Defined, and the artwork in image_ori "
            "is Brightwell Church and Village. \\n Element: artwork \\n "
            "Entity_caption: American Skat or The Game of Skat Defined \\n "
            "Entity_image: Brightwell Church and Village"
        ),
        "expected": (
            "artwork",
            "American Skat or The Game of Skat Defined",
            "Brightwell Church and Village",
        ),
    },
    {
        "cap_ori": "Chris Huhne is among the ministers expected to address delegates at next week's Lib Dem conference",
        "cap_new": "Urs Rohner CEO of Credit Suisse participates in a panel session in Bern Switzerland on Tuesday",
        "basic_description": (
            "The image depicts a man wearing a suit and tie, standing at a podium "
            "with a microphone in front of him. He appears to be giving a speech or "
            "addressing an audience. In the background, there is a black screen or "
            "backdrop."
        ),
        "needle": "image_ori:  The image depicts",
        "response": (
            "They are inconsistent in person. The person in caption_new is Urs "
            "Rohner, and the person in image_ori is Chris Huhne.\n"
            "Element: person\n"
            "Entity_caption: Urs Rohner\n"
            "Entity_image: Chris Huhne"
        ),
        "expected": ("person", "Urs Rohner", "Chris Huhne"),
    },
)


@pytest.fixture(scope="session")
def replay_cases():
    return REPLAY_CASES


@pytest.fixture(scope="session")
def catalog() -> PromptCatalog:
    return PromptCatalog.load()


@pytest.fixture
def corpus(tmp_path) -> Corpus:
    return make_corpus(tmp_path / "corpus")


@pytest.fixture
def tiny_image(tmp_path) -> str:
    path = tmp_path / "tiny.png"
    path.write_bytes(b"not-really-a-png")
    return str(path)
