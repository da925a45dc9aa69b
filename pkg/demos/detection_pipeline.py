"""
Mocked detection pipeline, end to end
=====================================

Runs four claims through the three checking stages with scripted backends
standing in for the real vision and chat services, then repeats the batch
through a response cache to show that the rerun needs no network at all.
"""

import json
import tempfile
from pathlib import Path

from oocdetect import (
    CachedBackend,
    Claim,
    GoldLabel,
    PipelineConfig,
    PipelineContext,
    PromptCatalog,
    ResponseCache,
    ScriptedBackend,
    detect,
    detect_batch,
    ingest_evidence,
    render_fake_target,
)
from oocdetect.parsing import REAL_SENTENCE

workdir = Path(tempfile.mkdtemp(prefix="oocdetect-demo-"))
images = workdir / "images"
images.mkdir()

# ---------------------------------------------------------------------
# A tiny corpus: two falsified claims, two pristine ones.  Evidence pages
# exist for d1 and d3 only; d2 and d4 run evidence-free.
captions = {
    "d1": "Demo d1: crowds greet the delegation at the harbor in 2014.",
    "d2": "Demo d2: the mayor opens the winter festival downtown.",
    "d3": "Demo d3: volunteers repaint the old lighthouse in spring.",
    "d4": "Demo d4: students present their robots at the science fair.",
}
claims = []
for cid, caption in captions.items():
    image = images / f"{cid}.png"
    image.write_bytes(b"demo-image:" + cid.encode())
    label = GoldLabel.FALSIFIED if cid in ("d1", "d2") else GoldLabel.PRISTINE
    claims.append(Claim(id=cid, caption=caption, image=str(image), gold_label=label))

evidence_path = workdir / "evidence.jsonl"
evidence_rows = [
    {
        "claim_id": cid,
        "pages": [
            {
                "url": f"http://demo.example/{cid}",
                "title": f"Archived page for {cid}",
                "body": f"Original webpage that hosted the {cid} photograph. " * 4,
            }
        ],
        "visual_entities": [f"Landmark {cid}"],
    }
    for cid in ("d1", "d3")
]
evidence_path.write_text(
    "".join(json.dumps(row) + "\n" for row in evidence_rows), encoding="utf-8"
)

# ---------------------------------------------------------------------
# Scripted backends.  Each rule is (substring of the prompt, reply); the
# falsified claims answer with the canonical fake sentence, everything
# else defaults to the canonical real sentence.
fake_answers = [
    ("Demo d1:", render_fake_target("time", "2014", "2009")),
    ("Demo d2:", render_fake_target("event", "the winter festival", "a trade fair")),
]
vision = ScriptedBackend("demo-vision", rules=fake_answers, default=REAL_SENTENCE)
chat = ScriptedBackend("demo-chat", rules=fake_answers, default=REAL_SENTENCE)

ctx = PipelineContext(
    vision_backend=vision,
    chat_backend=chat,
    catalog=PromptCatalog.load(),
    evidence_store=ingest_evidence(evidence_path),
)

# ---------------------------------------------------------------------
# One claim in detail: d1 has evidence, so all three stages run.
result = detect(claims[0], ctx)
print("claim d1")
print("  internal:", result.internal.verdict, "/", result.internal.parse_status.value)
print("  external:", result.external.verdict)
print("  composed:", result.composed.verdict)
print("  element:", result.composed.explanation.element)
print("  logical backend calls:", result.backend_calls)
print()

# d2 has no evidence: the external stage is skipped entirely and the
# composed outcome is a copy of the internal one.
result = detect(claims[1], ctx)
print("claim d2 (no evidence)")
print("  external stage ran:", result.external is not None)
print("  composed == internal:", result.composed.verdict == result.internal.verdict)
print()

# ---------------------------------------------------------------------
# The whole batch, wrapped in a content-addressed response cache.
def cached_ctx(cache_root: Path) -> PipelineContext:
    return PipelineContext(
        vision_backend=CachedBackend(vision, ResponseCache(cache_root / "vision")),
        chat_backend=CachedBackend(chat, ResponseCache(cache_root / "chat")),
        catalog=ctx.catalog,
        evidence_store=ctx.evidence_store,
        config=PipelineConfig(concurrency=2),
    )

cache_root = workdir / "cache"
for attempt in (1, 2):
    results, manifest = detect_batch(claims, cached_ctx(cache_root))
    verdicts = {r.claim_id: str(r.composed.verdict) for r in results}
    print(f"batch run {attempt}: {verdicts}")
    print(f"  network calls: {manifest.network_calls}")
    print(f"  cache hit rate: {manifest.cache_hit_rate}")
print()
print("artifacts under", workdir)
