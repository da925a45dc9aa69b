"""
Verdict parsing walkthrough
===========================

Model answers arrive as free text.  This script shows how the canonical
answer sentences are rendered, how messy real-world phrasings are parsed
back into verdicts, and how the three parse tiers differ.
"""

from oocdetect import Stage, parse_generated_inconsistency, parse_verdict
from oocdetect.parsing import (
    FAKE_CONTEXT_SENTENCE,
    REAL_SENTENCE,
    render_fake_target,
)

# The two canonical short answers the prompts ask for.
print("canonical real answer:", REAL_SENTENCE)
print("canonical fake answer:", FAKE_CONTEXT_SENTENCE)
print()

# A fully structured fake answer names the inconsistent news element and the
# conflicting entities on the caption side and the image side.
sentence = render_fake_target("time", "the summer of 2014", "the winter of 2009")
print("rendered fake target:")
print(" ", sentence)

outcome = parse_verdict(sentence, Stage.INTERNAL)
print("parsed verdict:", outcome.verdict)
print("parse tier:", outcome.parse_status.value)
print("element:", outcome.explanation.element)
print("caption-side entity:", outcome.explanation.ent_t)
print("image-side entity:", outcome.explanation.ent_v)
print()

# Prose after the canonical opening still parses: the element comes from the
# "inconsistent in ..." clause and the entities from the paired
# "in the caption is ... in the image is ..." pattern.
prose = (
    "No, the image is wrongly used in a different news context. Looking "
    "closely, the scene cannot match. The given news caption and image are "
    "inconsistent in place. The place in the caption is Geneva, and the place "
    "in the image is Zurich."
)
outcome = parse_verdict(prose, Stage.EXTERNAL)
print("opening + prose ->", outcome.verdict, "/", outcome.parse_status.value)
print("  element:", outcome.explanation.element, "| caption:", outcome.explanation.ent_t)
print()

# Without the canonical opening, a judgment that still says "rightly used"
# or "wrongly used" somewhere gets classified by the fallback tier.  The
# earliest of the two phrases wins.
hedged = "After weighing the evidence I believe the image is wrongly used here."
outcome = parse_verdict(hedged, Stage.COMPOSED)
print("hedged judgment ->", outcome.verdict, "/", outcome.parse_status.value)
print()

# An evasive answer gives no verdict at all; the pipeline treats these as
# non-compliant and falls back to the internal check's verdict.
evasive = "As a language model I cannot be completely certain about this pairing."
outcome = parse_verdict(evasive, Stage.COMPOSED)
print("evasive answer ->", outcome.verdict, "/", outcome.parse_status.value)
print()

# The generation prompt asks for a labeled block instead.  Both literal
# backslash-n escapes and real newlines are accepted.
block = (
    "They are inconsistent in person. \\n Element: person \\n "
    "Entity_caption: Urs Rohner \\n Entity_image: Chris Huhne"
)
generated = parse_generated_inconsistency(block)
print("generation answer block parses to:")
print("  element:", generated.element)
print("  caption-side entity:", generated.ent_t)
print("  image-side entity:", generated.ent_v)
