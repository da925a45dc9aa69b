"""Evaluation: verdict accuracy, explanation quality and report emission.

Accuracy is computed over composed verdicts against gold labels, overall and
per class.  Explanation quality is split into three views: how often the
model produced each structured field (response ratio), whether the named
element matches gold under canonicalization (hit ratio), and how close the
named entities are to gold under an embedding (cosine similarity, averaged
over responded items only).  ROUGE-1/2/L compare the full generated answer
text against the canonical reference sentence.
"""

from __future__ import annotations

import csv
import hashlib
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .backend import cosine
from .core import (
    Claim,
    DetectionResult,
    GoldLabel,
    NewsElement,
    Verdict,
    canonicalize_element,
)
from .jsonl import iter_jsonl, write_json
from .parsing import render_fake_target

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


class MissingLabel(ValueError):
    """A result has no gold label to score against."""

    def __init__(self, claim_id: str):
        super().__init__(f"no gold label for claim {claim_id!r}")
        self.claim_id = claim_id


class ZeroLength(ValueError):
    """ROUGE was asked to score a text with no tokens."""


@dataclass(frozen=True)
class GoldExplanation:
    """Ground-truth inconsistency for one falsified claim.

    ``reference_text`` is always the canonical refusal sentence rendered from
    the triple; passing a different text is rejected.
    """

    claim_id: str
    element: NewsElement
    ent_t: str
    ent_v: str
    reference_text: str = ""

    def __post_init__(self):
        if not self.claim_id:
            raise ValueError("gold explanation needs a claim_id")
        expected = render_fake_target(self.element, self.ent_t, self.ent_v)
        if not self.reference_text:
            object.__setattr__(self, "reference_text", expected)
        elif self.reference_text != expected:
            raise ValueError("reference_text does not match its triple")


def load_gold_explanations(path: str | Path) -> dict[str, GoldExplanation]:
    """Read a gold-explanations JSONL file keyed by claim id."""
    golds: dict[str, GoldExplanation] = {}
    for lineno, obj in iter_jsonl(path):
        gold = GoldExplanation(
            claim_id=obj["claim_id"],
            element=canonicalize_element(obj["element"]),
            ent_t=obj["ent_t"],
            ent_v=obj["ent_v"],
        )
        golds[gold.claim_id] = gold
    return golds


def labels_from_claims(claims: Sequence[Claim]) -> dict[str, GoldLabel]:
    return {c.id: c.gold_label for c in claims if c.gold_label is not None}


def accuracy(
    results: Sequence[DetectionResult], labels: Mapping[str, GoldLabel]
) -> tuple[Optional[float], Optional[float], Optional[float]]:
    """(acc_all, acc_fake, acc_real) over composed verdicts.

    An absent composed verdict counts as wrong.  Class accuracies are None
    when the class is empty; the overall value is always the count-weighted
    mean of the class values.
    """
    n = {GoldLabel.FALSIFIED: 0, GoldLabel.PRISTINE: 0}
    correct = {GoldLabel.FALSIFIED: 0, GoldLabel.PRISTINE: 0}
    for result in results:
        label = labels.get(result.claim_id)
        if label is None:
            raise MissingLabel(result.claim_id)
        n[label] += 1
        if label.matches(result.composed.verdict):
            correct[label] += 1
    total = n[GoldLabel.FALSIFIED] + n[GoldLabel.PRISTINE]
    if total == 0:
        return None, None, None

    def ratio(c: int, d: int) -> Optional[float]:
        return c / d if d else None

    return (
        (correct[GoldLabel.FALSIFIED] + correct[GoldLabel.PRISTINE]) / total,
        ratio(correct[GoldLabel.FALSIFIED], n[GoldLabel.FALSIFIED]),
        ratio(correct[GoldLabel.PRISTINE], n[GoldLabel.PRISTINE]),
    )


def response_ratio(
    results: Sequence[DetectionResult],
) -> Optional[dict[str, float]]:
    """Per-field presence among results whose composed verdict is Fake.

    Returns None when no result predicted Fake (the ratios are undefined).
    """
    fakes = [r for r in results if r.composed.verdict is Verdict.FAKE]
    if not fakes:
        return None
    n = len(fakes)
    exp = [r.composed.explanation for r in fakes]
    return {
        "element": sum(1 for e in exp if e.element is not None) / n,
        "ent_t": sum(1 for e in exp if e.ent_t is not None) / n,
        "ent_v": sum(1 for e in exp if e.ent_v is not None) / n,
    }


def element_hit_ratio(
    results: Sequence[DetectionResult], golds: Mapping[str, GoldExplanation]
) -> Optional[float]:
    """Hard-match rate of the predicted element over gold-fake claims.

    A claim with no predicted element is a miss.  None when no evaluated
    result has a gold explanation.
    """
    scored = [r for r in results if r.claim_id in golds]
    if not scored:
        return None
    hits = 0
    for result in scored:
        predicted = result.composed.explanation.element
        if predicted is not None and predicted == golds[result.claim_id].element:
            hits += 1
    return hits / len(scored)


def entity_similarity(
    results: Sequence[DetectionResult],
    golds: Mapping[str, GoldExplanation],
    embedding_backend,
) -> tuple[Optional[float], Optional[float]]:
    """Mean embedding cosine between predicted and gold entities.

    Only claims where both sides of a pair exist enter the mean; absent
    predictions are measured by response_ratio, not here.
    """

    def mean_for(attr: str) -> Optional[float]:
        sims = []
        for result in results:
            gold = golds.get(result.claim_id)
            if gold is None:
                continue
            predicted = getattr(result.composed.explanation, attr)
            if predicted is None:
                continue
            sims.append(
                cosine(
                    embedding_backend.embed(predicted),
                    embedding_backend.embed(getattr(gold, attr)),
                )
            )
        return sum(sims) / len(sims) if sims else None

    return mean_for("ent_t"), mean_for("ent_v")


# ----------------------------------------------------------------------
# ROUGE

def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def _ngrams(tokens: Sequence[str], n: int) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tuple(tokens[i:i + n])
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if (p + r) > 0 else 0.0


def _rouge_n(cand: Sequence[str], ref: Sequence[str], n: int) -> float:
    cand_counts = _ngrams(cand, n)
    ref_counts = _ngrams(ref, n)
    total_cand = sum(cand_counts.values())
    total_ref = sum(ref_counts.values())
    if total_cand == 0 or total_ref == 0:
        return 0.0
    overlap = sum(
        min(count, ref_counts.get(gram, 0)) for gram, count in cand_counts.items()
    )
    return _f1(overlap / total_cand, overlap / total_ref)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        row = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                row.append(prev[j - 1] + 1)
            else:
                row.append(max(prev[j], row[-1]))
        prev = row
    return prev[-1]


@dataclass(frozen=True)
class RougeScores:
    rouge_1: float
    rouge_2: float
    rouge_l: float


def rouge(candidate: str, reference: str) -> RougeScores:
    """ROUGE-1/2/L F1 between two texts.

    Tokenization is lowercase with a non-alphanumeric split, no stemming.
    ROUGE-2 is 0.0 when either side has no bigram.  Texts that tokenize to
    nothing raise ZeroLength.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        raise ZeroLength("both texts must contain at least one token")
    lcs = _lcs_length(cand, ref)
    rouge_l = _f1(lcs / len(cand), lcs / len(ref))
    return RougeScores(
        rouge_1=_rouge_n(cand, ref, 1),
        rouge_2=_rouge_n(cand, ref, 2),
        rouge_l=rouge_l,
    )


def _mean_rouge(
    results: Sequence[DetectionResult], golds: Mapping[str, GoldExplanation]
) -> tuple[Optional[float], Optional[float], Optional[float]]:
    scores = []
    for result in results:
        gold = golds.get(result.claim_id)
        if gold is None:
            continue
        try:
            scores.append(rouge(result.composed.raw_response, gold.reference_text))
        except ZeroLength:
            continue
    if not scores:
        return None, None, None
    n = len(scores)
    return (
        sum(s.rouge_1 for s in scores) / n,
        sum(s.rouge_2 for s in scores) / n,
        sum(s.rouge_l for s in scores) / n,
    )


# ----------------------------------------------------------------------
# Reports

@dataclass(frozen=True)
class EvalReport:
    n_total: int
    n_fake: int
    n_real: int
    acc_all: Optional[float]
    acc_fake: Optional[float]
    acc_real: Optional[float]
    response_ratio: Optional[dict]
    hit_ratio_element: Optional[float]
    mean_sim_ent_t: Optional[float]
    mean_sim_ent_v: Optional[float]
    rouge_1: Optional[float]
    rouge_2: Optional[float]
    rouge_l: Optional[float]
    manifest: Optional[str] = None
    notes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_fake": self.n_fake,
            "n_real": self.n_real,
            "acc_all": self.acc_all,
            "acc_fake": self.acc_fake,
            "acc_real": self.acc_real,
            "response_ratio": self.response_ratio,
            "hit_ratio_element": self.hit_ratio_element,
            "mean_sim_ent_t": self.mean_sim_ent_t,
            "mean_sim_ent_v": self.mean_sim_ent_v,
            "rouge_1": self.rouge_1,
            "rouge_2": self.rouge_2,
            "rouge_l": self.rouge_l,
            "manifest": self.manifest,
            "notes": self.notes,
        }


def build_report(
    results: Sequence[DetectionResult],
    labels: Mapping[str, GoldLabel],
    golds: Mapping[str, GoldExplanation],
    embedding_backend=None,
    *,
    manifest: Optional[str] = None,
) -> EvalReport:
    """Assemble every metric into one report.

    ``labels`` maps claim id to gold label, ``golds`` maps claim id to the
    gold explanation of falsified claims (may be empty).  Similarity fields
    stay absent without an embedding backend.
    """
    acc_all, acc_fake, acc_real = accuracy(results, labels)
    n_fake = sum(
        1 for r in results if labels.get(r.claim_id) is GoldLabel.FALSIFIED
    )
    n_real = sum(
        1 for r in results if labels.get(r.claim_id) is GoldLabel.PRISTINE
    )
    sim_t, sim_v = (None, None)
    if embedding_backend is not None:
        sim_t, sim_v = entity_similarity(results, golds, embedding_backend)
    rouge_1, rouge_2, rouge_l = _mean_rouge(results, golds)
    return EvalReport(
        n_total=len(results),
        n_fake=n_fake,
        n_real=n_real,
        acc_all=acc_all,
        acc_fake=acc_fake,
        acc_real=acc_real,
        response_ratio=response_ratio(results),
        hit_ratio_element=element_hit_ratio(results, golds),
        mean_sim_ent_t=sim_t,
        mean_sim_ent_v=sim_v,
        rouge_1=rouge_1,
        rouge_2=rouge_2,
        rouge_l=rouge_l,
        manifest=manifest,
        notes={"similarity_mean": "responded-only"},
    )


def _subset_seed(seed: int, fraction: float) -> int:
    digest = hashlib.sha256(f"{seed}:{fraction!r}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def sample_subset(
    results: Sequence[DetectionResult], fraction: float, seed: int
) -> list[DetectionResult]:
    """Seeded subset of size max(1, round(fraction * n)), original order kept."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    if fraction == 1.0:
        return list(results)
    k = max(1, round(fraction * len(results)))
    rng = random.Random(_subset_seed(seed, fraction))
    chosen = sorted(rng.sample(range(len(results)), k=min(k, len(results))))
    return [results[i] for i in chosen]


def evaluate_subsets(
    results: Sequence[DetectionResult],
    labels: Mapping[str, GoldLabel],
    golds: Mapping[str, GoldExplanation],
    embedding_backend,
    fractions: Sequence[float],
    seed: int,
) -> list[tuple[float, EvalReport]]:
    reports = []
    for fraction in fractions:
        subset = sample_subset(results, fraction, seed)
        reports.append(
            (fraction, build_report(subset, labels, golds, embedding_backend))
        )
    return reports


_SERIES_FIELDS = (
    "n_total", "n_fake", "n_real",
    "acc_all", "acc_fake", "acc_real",
    "hit_ratio_element", "mean_sim_ent_t", "mean_sim_ent_v",
    "rouge_1", "rouge_2", "rouge_l",
)


def write_plot_series(
    path: str | Path, reports: Sequence[tuple[str | float, EvalReport]]
) -> None:
    """Flat (metric, subset, value) CSV for external plotting.

    Absent metrics are written with an empty value so every subset emits the
    same row set.
    """
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "subset", "value"])
        for subset, report in reports:
            for name in _SERIES_FIELDS:
                value = getattr(report, name)
                writer.writerow([name, subset, "" if value is None else value])
            ratios = report.response_ratio or {}
            for key in ("element", "ent_t", "ent_v"):
                value = ratios.get(key)
                writer.writerow(
                    [f"response_ratio_{key}", subset, "" if value is None else value]
                )


def write_report(path: str | Path, report: EvalReport) -> None:
    write_json(path, report.to_json())
