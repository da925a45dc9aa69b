"""
Scoring a detection run
=======================

Takes a handful of detection results with known gold labels, computes the
accuracy and explanation-quality metrics, and writes the per-subset series
file that plots are drawn from.
"""

import tempfile
from pathlib import Path

from oocdetect import (
    CheckOutcome,
    DetectionResult,
    Explanation,
    GoldExplanation,
    GoldLabel,
    HashedEmbeddingBackend,
    ParseStatus,
    Stage,
    Verdict,
    accuracy,
    build_report,
    canonicalize_element,
    element_hit_ratio,
    render_fake_target,
    response_ratio,
    rouge,
)
from oocdetect.metrics import evaluate_subsets, write_plot_series, write_report
from oocdetect.parsing import REAL_SENTENCE


def result(cid, verdict, element=None, ent_t=None, ent_v=None):
    if verdict is Verdict.FAKE and element:
        raw = render_fake_target(element, ent_t or "something", ent_v or "another")
    elif verdict is Verdict.REAL:
        raw = REAL_SENTENCE
    else:
        raw = "Hard to say."
    explanation = Explanation(
        element=canonicalize_element(element) if element else None,
        ent_t=ent_t,
        ent_v=ent_v,
        rationale=raw,
    )
    status = ParseStatus.NON_COMPLIANT if verdict is None else ParseStatus.STRUCTURED

    def outcome(stage):
        return CheckOutcome(
            stage=stage,
            verdict=verdict,
            explanation=explanation,
            raw_response=raw,
            parse_status=status,
        )

    return DetectionResult(
        claim_id=cid, internal=outcome(Stage.INTERNAL), composed=outcome(Stage.COMPOSED)
    )


# Six claims: four falsified (one answered wrongly, one with no verdict at
# all) and two pristine ones.
results = [
    result("f1", Verdict.FAKE, "time", "the summer of 2014", "the winter of 2009"),
    result("f2", Verdict.FAKE, "person", "Urs Rohner", "Chris Huhne"),
    result("f3", Verdict.REAL),
    result("f4", None),
    result("r1", Verdict.REAL),
    result("r2", Verdict.REAL),
]
labels = {
    "f1": GoldLabel.FALSIFIED,
    "f2": GoldLabel.FALSIFIED,
    "f3": GoldLabel.FALSIFIED,
    "f4": GoldLabel.FALSIFIED,
    "r1": GoldLabel.PRISTINE,
    "r2": GoldLabel.PRISTINE,
}
golds = {
    "f1": GoldExplanation(
        "f1", canonicalize_element("time"), "the summer of 2014", "the winter of 2009"
    ),
    "f2": GoldExplanation(
        "f2", canonicalize_element("person"), "Angela Merkel", "Chris Huhne"
    ),
}

# ---------------------------------------------------------------------
# Headline numbers.  A claim whose composed stage produced no verdict
# counts as wrong, which is why acc_fake lands at 2/4 here.
acc_all, acc_fake, acc_real = accuracy(results, labels)
print(f"acc_all = {acc_all:.4f}   acc_fake = {acc_fake:.4f}   acc_real = {acc_real:.4f}")

# How often the model committed to each explanation field, measured over
# the claims it called fake.
print("response ratios:", response_ratio(results))

# How often the named element agrees with the gold annotation, measured
# over the claims that have one.
print("element hit ratio:", element_hit_ratio(results, golds))
print()

# ---------------------------------------------------------------------
# Text overlap between a generated explanation and its reference.
scores = rouge(
    "The time in the caption is the summer of 2014.",
    "The time in the caption is the summer of 2013.",
)
print(f"rouge-1 {scores.rouge_1:.3f}  rouge-2 {scores.rouge_2:.3f}  rouge-l {scores.rouge_l:.3f}")
print()

# ---------------------------------------------------------------------
# The full report bundles everything, including hashed-embedding entity
# similarity (f1 matches its gold exactly, f2 only on the image side).
embedder = HashedEmbeddingBackend()
report = build_report(results, labels, golds, embedder)
print("mean entity similarity, caption side:", report.mean_sim_ent_t)
print("mean entity similarity, image side:", report.mean_sim_ent_v)
print()

# Subset evaluation reruns the report on seeded fractions of the results
# and writes one (metric, subset, value) row per field for plotting.
outdir = Path(tempfile.mkdtemp(prefix="oocdetect-eval-"))
subset_reports = evaluate_subsets(results, labels, golds, embedder, [0.5, 1.0], seed=3)
for fraction, sub in subset_reports:
    print(f"subset {fraction}: n={sub.n_total} acc_all={sub.acc_all}")
write_report(outdir / "report.json", report)
write_plot_series(outdir / "series.csv", subset_reports)
print()
print("series file head:")
for line in (outdir / "series.csv").read_text().splitlines()[:5]:
    print(" ", line)
print("wrote", outdir / "report.json")
