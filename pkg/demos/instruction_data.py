"""
Building instruction-tuning records
===================================

Stage 1 turns plain image-caption pairs into caption questions.  Stage 2
asks a generator model to name the inconsistency in a miscaptioned pair,
keeps only answers that survive a render/parse round trip, and balances
the output with an equal number of correctly captioned counterexamples.
"""

import tempfile
from pathlib import Path

from oocdetect import (
    FakePairSource,
    InstructionKind,
    PromptCatalog,
    ScriptedBackend,
    build_stage1,
    build_stage2,
    validate_records,
)
from oocdetect.instructgen import write_instruction_manifest, write_instruction_records

catalog = PromptCatalog.load()

# ---------------------------------------------------------------------
# Stage 1: every pair gets a caption question drawn deterministically
# from the question pool, so record i never depends on the dataset size.
pairs = [
    ("img/harbor.png", "Cargo ships wait outside the harbor at dawn."),
    ("img/festival.png", "Dancers rehearse before the lantern festival."),
    ("img/summit.png", "Delegates arrive for the climate summit."),
]
records = build_stage1(pairs, 7, catalog)
print("stage 1 produced", len(records), "records")
print("first training text:")
print(" ", records[0].training_text())
print()

# ---------------------------------------------------------------------
# Stage 2: run two miscaptioned pairs through a scripted generator.  The
# first answers with a well-formed labeled block; the second rambles, so
# it is skipped and logged rather than aborting the build.
fakes = [
    FakePairSource(
        id="pair-good",
        cap_new="A cathedral choir performs at the spring concert.",
        cap_ori="Cargo ships wait outside the harbor at dawn.",
        image="img/harbor.png",
        basic_description="This image shows several large ships near a breakwater.",
    ),
    FakePairSource(
        id="pair-rambling",
        cap_new="Ice sculptors compete in the winter carnival finals.",
        cap_ori="Dancers rehearse before the lantern festival.",
        image="img/festival.png",
        basic_description="This image shows a group of dancers on an outdoor stage.",
    ),
]
generator = ScriptedBackend(
    "demo-generator",
    rules=[
        (
            "Caption_new:  A cathedral choir",
            "They are inconsistent in event. The event in caption_new is a spring "
            "concert, and the event in image_ori is ships at harbor.\n"
            "Element: event\n"
            "Entity_caption: the spring concert\n"
            "Entity_image: ships waiting at the harbor",
        ),
        (
            "Caption_new:  Ice sculptors",
            "What a fascinating pairing of pictures and words, truly hard to say.",
        ),
    ],
)
reals = [
    ("img/summit.png", "Delegates arrive for the climate summit."),
    ("img/lighthouse.png", "Volunteers repaint the old lighthouse in spring."),
    ("img/fair.png", "Students present their robots at the science fair."),
]
stage2, log = build_stage2(
    fakes, reals, generator, catalog, seed=21, model_id="demo-generator"
)

print(f"stage 2: attempted {log.attempted}, generated {log.generated}")
for skipped_id, reason in log.skipped:
    print(f"  skipped {skipped_id}: {reason}")
for record in stage2:
    tag = "FAKE" if record.kind is InstructionKind.OOC_FAKE else "REAL"
    print(f"  [{tag}] {record.image}")
    print("   ", record.target[:96])
print()

# The fake record carries its extracted triple as provenance.
fake_record = next(r for r in stage2 if r.kind is InstructionKind.OOC_FAKE)
print("provenance of the kept fake:", fake_record.provenance)
print()

# ---------------------------------------------------------------------
# Validation re-checks the round-trip property and the class balance,
# then everything lands in JSONL plus a seed-pinned manifest.
report = validate_records(stage2)
print("validation ok:", report.ok, "| fakes:", report.fake_count, "| reals:", report.real_count)

outdir = Path(tempfile.mkdtemp(prefix="oocdetect-instr-"))
write_instruction_records(outdir / "instructions.jsonl", stage2)
write_instruction_manifest(
    outdir / "manifest.json",
    seed=21,
    prompt_catalog_checksum=catalog.checksum,
    generator_model_id="demo-generator",
    records=stage2,
    log=log,
)
print("wrote", outdir / "instructions.jsonl")
print("wrote", outdir / "manifest.json")
