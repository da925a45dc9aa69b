"""Single-executable operator interface.

Subcommands: ``ingest`` validates input files, ``build-instructions`` emits
training data, ``detect`` runs the three-stage pipeline over a claims file,
``evaluate`` scores a results file.  Settings come from an optional JSON
config file; command-line flags override it.  Exit codes: 0 success,
1 runtime failure, 2 validation or schema failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

from .backend import (
    CachedBackend,
    CompletionBackend,
    HashedEmbeddingBackend,
    HttpChatBackend,
    ResponseCache,
    ScriptedBackend,
)
from .core import GoldLabel
from .evidence import (
    ScriptedEntityClient,
    SchemaError,
    ingest_evidence,
    load_claims,
    lookup,
)
from .instructgen import (
    FakePairSource,
    build_stage1,
    build_stage2,
    write_instruction_manifest,
    write_instruction_records,
)
from .jsonl import iter_jsonl
from .metrics import (
    MissingLabel,
    build_report,
    evaluate_subsets,
    labels_from_claims,
    load_gold_explanations,
    write_plot_series,
    write_report,
)
from .pipeline import (
    PipelineConfig,
    PipelineContext,
    detect,
    detect_batch,
    write_manifest,
    write_results,
)
from .prompts import PromptCatalog

MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    """Bad or incomplete run configuration."""


@dataclass
class RunConfig:
    """Merged settings from the JSON config file and command-line flags."""

    claims: Optional[str] = None
    evidence: Optional[str] = None
    pairs: Optional[str] = None
    gold: Optional[str] = None
    out: str = "out"
    cache: Optional[str] = None
    seed: int = 0
    concurrency: int = 1
    entity_source: str = "stored"
    compose_mode: str = "model"
    max_pages: int = 3
    keep_going: bool = False
    vision_backend: Optional[dict] = None
    chat_backend: Optional[dict] = None
    embedding_backend: Optional[dict] = None
    entity_client: Optional[dict] = None
    generator_model_id: str = "ooc-generator"
    vision_model_id: str = "vision"
    chat_model_id: str = "chat"

    def validate(self) -> None:
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        for name in ("claims", "evidence", "pairs", "gold"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{name} path does not exist: {value}")


def _load_config_file(path: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ConfigError("config file must hold a JSON object")
    return payload


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """File settings first, then any flag the user actually passed wins."""
    settings: dict = {}
    if getattr(args, "config", None):
        raw = _load_config_file(args.config)
        known = {f.name for f in fields(RunConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        settings.update(raw)
    for name in (
        "claims", "evidence", "pairs", "gold", "out", "cache", "seed",
        "concurrency", "entity_source", "compose_mode", "max_pages",
    ):
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value
    if getattr(args, "keep_going", False):
        settings["keep_going"] = True
    config = RunConfig(**settings)
    config.validate()
    return config


def build_backend(
    block: Optional[dict], cache_dir: Optional[str], role: str
) -> CompletionBackend:
    """Instantiate a completion backend from its config block.

    ``kind`` selects scripted (rules inline or via ``script_path``) or http.
    With a cache directory, the backend is wrapped in a response cache.
    """
    if block is None:
        raise ConfigError(f"config defines no {role} backend")
    kind = block.get("kind")
    if kind == "scripted":
        rules = block.get("rules")
        default = block.get("default")
        if "script_path" in block:
            script = json.loads(Path(block["script_path"]).read_text(encoding="utf-8"))
            rules = script.get("rules", rules)
            default = script.get("default", default)
        inner: CompletionBackend = ScriptedBackend(
            backend_id=block.get("backend_id", f"scripted-{role}"),
            rules=[tuple(r) for r in (rules or [])],
            default=default,
        )
    elif kind == "http":
        if "url" not in block:
            raise ConfigError(f"{role} backend needs a url")
        inner = HttpChatBackend(
            backend_id=block.get("backend_id", f"http-{role}"),
            url=block["url"],
            auth_header=block.get("auth_header", "Authorization"),
            auth_scheme=block.get("auth_scheme", "Bearer"),
            token_env=block.get("token_env"),
            response_path=block.get("response_path", "choices/0/message/content"),
            timeout=block.get("timeout", 30.0),
        )
    else:
        raise ConfigError(f"{role} backend has unknown kind: {kind!r}")
    if cache_dir:
        return CachedBackend(inner, ResponseCache(cache_dir))
    return inner


def build_embedding_backend(block: Optional[dict]) -> HashedEmbeddingBackend:
    if block is None or block.get("kind", "hashed") == "hashed":
        return HashedEmbeddingBackend()
    raise ConfigError(f"unknown embedding backend kind: {block.get('kind')!r}")


def _build_entity_client(block: Optional[dict]):
    if block is None:
        return None
    if block.get("kind", "scripted") == "scripted":
        return ScriptedEntityClient(
            responses=dict(block.get("responses", {})),
            default=list(block.get("default", [])),
        )
    raise ConfigError(f"unknown entity client kind: {block.get('kind')!r}")


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------
# Subcommands

def cmd_ingest(config: RunConfig) -> int:
    if config.claims is None:
        raise ConfigError("ingest needs a claims file")
    claims, claim_errors = load_claims(config.claims, strict=False)
    print(f"claims: {len(claims)} ({len(claim_errors)} schema errors)")
    for err in claim_errors:
        print(f"claims line {err.line}: {err.message}")

    evidence_errors: list[SchemaError] = []
    store = None
    if config.evidence is not None:
        store = ingest_evidence(config.evidence, strict=False)
        evidence_errors = store.schema_errors
        print(f"evidence: {len(store)} entries ({len(evidence_errors)} schema errors)")
        for err in evidence_errors:
            print(f"evidence line {err.line}: {err.message}")
        if claims:
            covered = sum(
                1
                for c in claims
                if (entry := lookup(store, c.id)) is not None and entry.pages
            )
            print(f"coverage: {covered / len(claims):g}")
    return 0 if not claim_errors and not evidence_errors else 2


def _load_fake_pairs(path: str) -> list[FakePairSource]:
    pairs = []
    for lineno, obj in iter_jsonl(path):
        try:
            pairs.append(
                FakePairSource(
                    id=obj["id"],
                    cap_new=obj["cap_new"],
                    cap_ori=obj["cap_ori"],
                    image=obj["image"],
                    basic_description=obj["basic_description"],
                )
            )
        except KeyError as exc:
            raise SchemaError(lineno, f"fake pair missing key {exc.args[0]!r}")
        except ValueError as exc:
            raise SchemaError(lineno, str(exc))
    return pairs


def cmd_build_instructions(config: RunConfig, stage: int) -> int:
    if config.claims is None:
        raise ConfigError("build-instructions needs a claims file")
    claims, _ = load_claims(config.claims, strict=True)
    catalog = PromptCatalog.load()
    out = _out_dir(config)

    if stage == 1:
        pairs = [(c.image, c.caption) for c in claims]
        records = build_stage1(pairs, config.seed, catalog)
        records_path = out / "instructions_stage1.jsonl"
        write_instruction_records(records_path, records)
        write_instruction_manifest(
            out / "instructions_stage1_manifest.json",
            seed=config.seed,
            prompt_catalog_checksum=catalog.checksum,
            generator_model_id=None,
            records=records,
        )
        print(f"stage 1: {len(records)} records -> {records_path}")
        return 0

    if config.pairs is None:
        raise ConfigError("stage 2 needs a fake-pairs file (--pairs)")
    fakes = _load_fake_pairs(config.pairs)
    reals = [
        (c.image, c.caption) for c in claims if c.gold_label is GoldLabel.PRISTINE
    ]
    backend = build_backend(config.chat_backend, config.cache, "chat")
    records, log = build_stage2(
        fakes,
        reals,
        backend,
        catalog,
        seed=config.seed,
        model_id=config.generator_model_id,
        workers=config.concurrency,
    )
    records_path = out / "instructions_stage2.jsonl"
    write_instruction_records(records_path, records)
    write_instruction_manifest(
        out / "instructions_stage2_manifest.json",
        seed=config.seed,
        prompt_catalog_checksum=catalog.checksum,
        generator_model_id=config.generator_model_id,
        records=records,
        log=log,
    )
    print(
        f"stage 2: {log.generated} fake + {log.generated} real records, "
        f"{log.skip_count} skipped -> {records_path}"
    )
    for sid, reason in log.skipped:
        print(f"skipped {sid}: {reason}", file=sys.stderr)
    if log.attempted > 0 and log.generated == 0:
        print("all generation attempts failed", file=sys.stderr)
        return 1
    return 0


def _pipeline_context(config: RunConfig) -> PipelineContext:
    store = ingest_evidence(config.evidence) if config.evidence else None
    return PipelineContext(
        vision_backend=build_backend(config.vision_backend, config.cache, "vision"),
        chat_backend=build_backend(config.chat_backend, config.cache, "chat"),
        catalog=PromptCatalog.load(),
        evidence_store=store,
        entity_client=_build_entity_client(config.entity_client),
        embedding_backend=None,
        config=PipelineConfig(
            max_pages=config.max_pages,
            entity_source=config.entity_source,
            compose_mode=config.compose_mode,
            concurrency=config.concurrency,
            vision_model_id=config.vision_model_id,
            chat_model_id=config.chat_model_id,
        ),
    )


def cmd_detect(config: RunConfig, claim_id: Optional[str]) -> int:
    if config.claims is None:
        raise ConfigError("detect needs a claims file")
    claims, _ = load_claims(config.claims, strict=True)
    ctx = _pipeline_context(config)

    if claim_id is not None:
        matches = [c for c in claims if c.id == claim_id]
        if not matches:
            raise ConfigError(f"no claim with id {claim_id!r}")
        result = detect(matches[0], ctx)
        print(result.composed.raw_response)
        if result.composed.verdict is None and not config.keep_going:
            return 1
        return 0

    results, manifest = detect_batch(claims, ctx)
    out = _out_dir(config)
    results_path = out / "results.jsonl"
    write_results(results_path, results)
    write_manifest(out / "manifest.json", manifest)
    failed = manifest.stage_counts.get("failed", 0)
    print(
        f"detected {len(results)} claims ({failed} without verdict) "
        f"-> {results_path}"
    )
    if failed and not config.keep_going:
        return 1
    return 0


def cmd_evaluate(
    config: RunConfig, results_path: str, fractions: Optional[list[float]]
) -> int:
    if config.claims is None:
        raise ConfigError("evaluate needs a claims file for gold labels")
    if not Path(results_path).exists():
        raise ConfigError(f"results file does not exist: {results_path}")
    from .pipeline import load_results

    results = load_results(results_path)
    claims, _ = load_claims(config.claims, strict=True)
    labels = labels_from_claims(claims)
    golds = load_gold_explanations(config.gold) if config.gold else {}
    embedding = build_embedding_backend(config.embedding_backend)
    out = _out_dir(config)

    report = build_report(results, labels, golds, embedding)
    write_report(out / "report.json", report)
    print(f"n={report.n_total} (fake {report.n_fake} / real {report.n_real})")
    for name in ("acc_all", "acc_fake", "acc_real", "hit_ratio_element", "rouge_l"):
        value = getattr(report, name)
        print(f"{name}: {'absent' if value is None else format(value, '.4f')}")

    subset_fractions = sorted(set(fractions)) if fractions else [1.0]
    subset_reports = evaluate_subsets(
        results, labels, golds, embedding, subset_fractions, config.seed
    )
    write_plot_series(out / "series.csv", subset_reports)
    print(f"report -> {out / 'report.json'}; series -> {out / 'series.csv'}")
    return 0


# ----------------------------------------------------------------------
# Argument wiring

def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--claims", help="claims JSONL file")
    common.add_argument("--evidence", help="evidence JSONL file")
    common.add_argument("--pairs", help="fake-pairs JSONL file (stage 2)")
    common.add_argument("--gold", help="gold explanations JSONL file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--cache", help="response cache directory")
    common.add_argument("--seed", type=int, help="run seed")
    common.add_argument("--concurrency", type=int, help="worker bound")
    common.add_argument(
        "--entity-source", choices=["stored", "live", "none"], dest="entity_source"
    )
    common.add_argument(
        "--compose-mode", choices=["model", "shortcut"], dest="compose_mode"
    )
    common.add_argument("--max-pages", type=int, dest="max_pages")
    common.add_argument(
        "--keep-going",
        action="store_true",
        dest="keep_going",
        help="exit 0 even when some claims fail",
    )
    return common


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oocdetect",
        description="Out-of-context misinformation detection toolkit.",
    )
    common = _common_flags()
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="validate input files")
    build = sub.add_parser(
        "build-instructions", parents=[common], help="emit instruction datasets"
    )
    build.add_argument("--stage", type=int, choices=[1, 2], required=True)
    det = sub.add_parser("detect", parents=[common], help="run the detection pipeline")
    det.add_argument("--claim-id", dest="claim_id", help="detect a single claim")
    ev = sub.add_parser("evaluate", parents=[common], help="score a results file")
    ev.add_argument("results", help="results JSONL produced by detect")
    ev.add_argument(
        "--subset-fraction",
        dest="subset_fraction",
        type=float,
        action="append",
        help="evaluate a seeded subset; repeatable",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        if args.command == "ingest":
            return cmd_ingest(config)
        if args.command == "build-instructions":
            return cmd_build_instructions(config, args.stage)
        if args.command == "detect":
            return cmd_detect(config, args.claim_id)
        if args.command == "evaluate":
            return cmd_evaluate(config, args.results, args.subset_fraction)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, SchemaError, MissingLabel) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
