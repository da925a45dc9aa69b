import json
import os

import pytest

from oocdetect.cli import ConfigError, main, make_parser, resolve_config
from oocdetect.parsing import REAL_SENTENCE
from oocdetect.prompts import PromptCatalog

from conftest import REPLAY_CASES, make_corpus


def write_config(path, corpus, **overrides):
    payload = {
        "claims": str(corpus.claims_path),
        "evidence": str(corpus.evidence_path),
        "vision_backend": {
            "kind": "scripted",
            "backend_id": "mock-vision",
            "rules": [list(r) for r in corpus.vision_script],
            "default": REAL_SENTENCE,
        },
        "chat_backend": {
            "kind": "scripted",
            "backend_id": "mock-chat",
            "rules": [list(r) for r in corpus.chat_script],
            "default": REAL_SENTENCE,
        },
    }
    payload.update(overrides)
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


@pytest.fixture
def cli_corpus(tmp_path):
    return make_corpus(tmp_path / "corpus")


class TestIngest:
    def test_valid_corpus(self, cli_corpus, capsys):
        code = main(
            [
                "ingest",
                "--claims",
                str(cli_corpus.claims_path),
                "--evidence",
                str(cli_corpus.evidence_path),
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "claims: 20 (0 schema errors)" in out
        assert "evidence: 8 entries (0 schema errors)" in out
        assert "coverage: 0.4" in out

    def test_schema_errors_reported_with_line_numbers(self, tmp_path, capsys):
        claims = tmp_path / "claims.jsonl"
        claims.write_text(
            json.dumps({"id": "c1", "caption": "ok", "image": "i.jpg"})
            + "\n"
            + json.dumps({"id": "c2", "caption": "", "image": "i.jpg"})
            + "\n",
            encoding="utf-8",
        )
        code = main(["ingest", "--claims", str(claims)])
        out = capsys.readouterr().out
        assert code == 2
        assert "claims: 1 (1 schema errors)" in out
        assert "claims line 2: missing or empty caption" in out

    def test_coverage_fraction(self, tmp_path, capsys):
        claims = tmp_path / "claims.jsonl"
        evidence = tmp_path / "evidence.jsonl"
        claims.write_text(
            "".join(
                json.dumps({"id": f"c{i}", "caption": "cap", "image": "i.jpg"}) + "\n"
                for i in range(5)
            ),
            encoding="utf-8",
        )
        evidence.write_text(
            "".join(
                json.dumps(
                    {
                        "claim_id": f"c{i}",
                        "pages": [{"url": "u", "body": "text"}],
                    }
                )
                + "\n"
                for i in range(3)
            ),
            encoding="utf-8",
        )
        code = main(
            ["ingest", "--claims", str(claims), "--evidence", str(evidence)]
        )
        assert code == 0
        assert "coverage: 0.6" in capsys.readouterr().out

    def test_ingest_without_claims_is_config_error(self, capsys):
        assert main(["ingest"]) == 2
        assert "error:" in capsys.readouterr().err


class TestDetect:
    def test_batch_writes_results_and_manifest(self, cli_corpus, tmp_path, capsys):
        out_dir = tmp_path / "out"
        config = write_config(tmp_path / "config.json", cli_corpus)
        code = main(["detect", "--config", config, "--out", str(out_dir)])
        stdout = capsys.readouterr().out
        assert code == 0
        assert "detected 20 claims (0 without verdict)" in stdout
        results_path = out_dir / "results.jsonl"
        assert len(results_path.read_text().splitlines()) == 20
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["prompt_catalog_checksum"] == PromptCatalog.load().checksum
        assert manifest["backend_ids"]["vision"] == "mock-vision"
        assert manifest["backend_ids"]["chat"] == "mock-chat"
        assert manifest["n_claims"] == 20

    def test_single_claim_prints_composed_response(
        self, cli_corpus, tmp_path, capsys
    ):
        config = write_config(tmp_path / "config.json", cli_corpus)
        code = main(
            [
                "detect",
                "--config",
                config,
                "--out",
                str(tmp_path / "out"),
                "--claim-id",
                "c01",
            ]
        )
        stdout = capsys.readouterr().out
        assert code == 0
        assert "inconsistent in time" in stdout
        assert "the summer of 2014" in stdout

    def test_unknown_claim_id(self, cli_corpus, tmp_path, capsys):
        config = write_config(tmp_path / "config.json", cli_corpus)
        code = main(
            [
                "detect",
                "--config",
                config,
                "--out",
                str(tmp_path / "out"),
                "--claim-id",
                "zzz",
            ]
        )
        assert code == 2
        assert "no claim with id" in capsys.readouterr().err

    def test_failed_claims_fail_the_run_unless_keep_going(
        self, cli_corpus, tmp_path, capsys
    ):
        broken = next(c for c in cli_corpus.claims if c.id == "c14")
        os.remove(broken.image)
        config = write_config(tmp_path / "config.json", cli_corpus)
        args = [
            "detect",
            "--config",
            config,
            "--out",
            str(tmp_path / "out"),
            "--cache",
            str(tmp_path / "cache"),
        ]
        assert main(args) == 1
        assert "(1 without verdict)" in capsys.readouterr().out
        assert main(args + ["--keep-going"]) == 0

    def test_cached_rerun_is_byte_identical(self, cli_corpus, tmp_path):
        config = write_config(tmp_path / "config.json", cli_corpus)
        cache = str(tmp_path / "cache")
        out_a = tmp_path / "out-a"
        out_b = tmp_path / "out-b"
        assert (
            main(["detect", "--config", config, "--out", str(out_a), "--cache", cache])
            == 0
        )
        assert (
            main(["detect", "--config", config, "--out", str(out_b), "--cache", cache])
            == 0
        )
        assert (out_a / "results.jsonl").read_bytes() == (
            out_b / "results.jsonl"
        ).read_bytes()
        first = json.loads((out_a / "manifest.json").read_text())
        second = json.loads((out_b / "manifest.json").read_text())
        assert first["network_calls"] == 36
        assert second["network_calls"] == 0
        assert second["cache_hit_rate"] == 1.0
        assert first["backend_calls"] == second["backend_calls"]


class TestBuildInstructions:
    def test_stage1_outputs_and_determinism(self, cli_corpus, tmp_path, capsys):
        config = write_config(tmp_path / "config.json", cli_corpus)
        out_a = tmp_path / "out-a"
        out_b = tmp_path / "out-b"
        for out_dir in (out_a, out_b):
            code = main(
                [
                    "build-instructions",
                    "--stage",
                    "1",
                    "--config",
                    config,
                    "--out",
                    str(out_dir),
                    "--seed",
                    "3",
                ]
            )
            assert code == 0
        assert "stage 1: 20 records" in capsys.readouterr().out
        records = (out_a / "instructions_stage1.jsonl").read_bytes()
        assert records == (out_b / "instructions_stage1.jsonl").read_bytes()
        manifest = json.loads(
            (out_a / "instructions_stage1_manifest.json").read_text()
        )
        assert manifest["seed"] == 3
        assert manifest["generator_model_id"] is None
        assert manifest["counts"] == {"CaptionAlign": 20}

    def _stage2_setup(self, cli_corpus, tmp_path):
        pairs_path = tmp_path / "pairs.jsonl"
        pairs_path.write_text(
            "".join(
                json.dumps(
                    {
                        "id": f"replay-{i+1}",
                        "cap_new": case["cap_new"],
                        "cap_ori": case["cap_ori"],
                        "image": f"img/replay-{i+1}.jpg",
                        "basic_description": case["basic_description"],
                    }
                )
                + "\n"
                for i, case in enumerate(REPLAY_CASES)
            ),
            encoding="utf-8",
        )
        config = write_config(
            tmp_path / "config.json",
            cli_corpus,
            chat_backend={
                "kind": "scripted",
                "backend_id": "mock-gen",
                "rules": [
                    [case["needle"], case["response"]] for case in REPLAY_CASES
                ],
            },
        )
        return config, str(pairs_path)

    def test_stage2_balanced_output(self, cli_corpus, tmp_path, capsys):
        config, pairs = self._stage2_setup(cli_corpus, tmp_path)
        out_dir = tmp_path / "out"
        code = main(
            [
                "build-instructions",
                "--stage",
                "2",
                "--config",
                config,
                "--pairs",
                pairs,
                "--out",
                str(out_dir),
                "--seed",
                "5",
            ]
        )
        stdout = capsys.readouterr().out
        assert code == 0
        assert "stage 2: 2 fake + 2 real records, 0 skipped" in stdout
        lines = (out_dir / "instructions_stage2.jsonl").read_text().splitlines()
        records = [json.loads(line) for line in lines]
        assert [r["kind"] for r in records] == [
            "OOCFake",
            "OOCFake",
            "OOCReal",
            "OOCReal",
        ]
        assert records[0]["provenance"]["element"] == "artwork"
        assert records[1]["provenance"]["ent_t"] == "Urs Rohner"
        manifest = json.loads(
            (out_dir / "instructions_stage2_manifest.json").read_text()
        )
        assert manifest["counts"] == {"OOCFake": 2, "OOCReal": 2}
        assert manifest["skipped"] == []

    def test_stage2_total_generation_failure_exits_one(
        self, cli_corpus, tmp_path, capsys
    ):
        _, pairs = self._stage2_setup(cli_corpus, tmp_path)
        config = write_config(
            tmp_path / "config2.json",
            cli_corpus,
            chat_backend={"kind": "scripted", "backend_id": "mock-gen", "rules": []},
        )
        code = main(
            [
                "build-instructions",
                "--stage",
                "2",
                "--config",
                config,
                "--pairs",
                pairs,
                "--out",
                str(tmp_path / "out"),
            ]
        )
        captured = capsys.readouterr()
        assert code == 1
        assert "all generation attempts failed" in captured.err
        assert "skipped replay-1: backend:" in captured.err

    def test_stage2_requires_pairs(self, cli_corpus, tmp_path, capsys):
        config = write_config(tmp_path / "config.json", cli_corpus)
        code = main(
            [
                "build-instructions",
                "--stage",
                "2",
                "--config",
                config,
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert code == 2
        assert "needs a fake-pairs file" in capsys.readouterr().err


class TestEvaluate:
    def _detect_first(self, cli_corpus, tmp_path):
        config = write_config(tmp_path / "config.json", cli_corpus)
        out_dir = tmp_path / "out"
        assert main(["detect", "--config", config, "--out", str(out_dir)]) == 0
        return config, out_dir / "results.jsonl"

    def test_full_evaluation(self, cli_corpus, tmp_path, capsys):
        config, results = self._detect_first(cli_corpus, tmp_path)
        capsys.readouterr()
        code = main(
            [
                "evaluate",
                str(results),
                "--config",
                config,
                "--gold",
                str(cli_corpus.gold_path),
                "--out",
                str(tmp_path / "eval"),
            ]
        )
        stdout = capsys.readouterr().out
        assert code == 0
        assert "n=20 (fake 10 / real 10)" in stdout
        assert "acc_all: 1.0000" in stdout
        assert "hit_ratio_element: 1.0000" in stdout
        assert "rouge_l: 1.0000" in stdout
        report = json.loads((tmp_path / "eval" / "report.json").read_text())
        assert report["acc_fake"] == 1.0
        assert report["response_ratio"]["element"] == 1.0
        assert (tmp_path / "eval" / "series.csv").exists()

    def test_subset_series_and_determinism(self, cli_corpus, tmp_path, capsys):
        config, results = self._detect_first(cli_corpus, tmp_path)

        def run(out_name):
            code = main(
                [
                    "evaluate",
                    str(results),
                    "--config",
                    config,
                    "--gold",
                    str(cli_corpus.gold_path),
                    "--out",
                    str(tmp_path / out_name),
                    "--seed",
                    "9",
                    "--subset-fraction",
                    "0.5",
                    "--subset-fraction",
                    "0.25",
                    "--subset-fraction",
                    "0.5",
                ]
            )
            assert code == 0
            return (tmp_path / out_name / "series.csv").read_bytes()

        first = run("eval-a")
        second = run("eval-b")
        assert first == second
        # duplicate fractions collapse: two subsets, 15 rows each plus header
        assert len(first.decode().splitlines()) == 1 + 2 * 15

    def test_missing_results_file(self, cli_corpus, tmp_path, capsys):
        config = write_config(tmp_path / "config.json", cli_corpus)
        code = main(
            [
                "evaluate",
                str(tmp_path / "nope.jsonl"),
                "--config",
                config,
                "--out",
                str(tmp_path / "eval"),
            ]
        )
        assert code == 2
        assert "does not exist" in capsys.readouterr().err

    def test_evaluate_without_gold_still_reports_accuracy(
        self, cli_corpus, tmp_path, capsys
    ):
        config, results = self._detect_first(cli_corpus, tmp_path)
        capsys.readouterr()
        code = main(
            [
                "evaluate",
                str(results),
                "--config",
                config,
                "--out",
                str(tmp_path / "eval"),
            ]
        )
        stdout = capsys.readouterr().out
        assert code == 0
        assert "acc_all: 1.0000" in stdout
        assert "hit_ratio_element: absent" in stdout


class TestConfigResolution:
    def test_flag_overrides_config_value(self, cli_corpus, tmp_path):
        config_path = write_config(tmp_path / "config.json", cli_corpus, seed=5)
        parser = make_parser()
        args = parser.parse_args(
            ["detect", "--config", config_path, "--seed", "9"]
        )
        assert resolve_config(args).seed == 9

    def test_config_value_used_without_flag(self, cli_corpus, tmp_path):
        config_path = write_config(tmp_path / "config.json", cli_corpus, seed=5)
        args = make_parser().parse_args(["detect", "--config", config_path])
        assert resolve_config(args).seed == 5

    def test_keep_going_from_config_survives_absent_flag(
        self, cli_corpus, tmp_path
    ):
        config_path = write_config(
            tmp_path / "config.json", cli_corpus, keep_going=True
        )
        args = make_parser().parse_args(["detect", "--config", config_path])
        assert resolve_config(args).keep_going is True

    def test_unknown_config_key_rejected(self, cli_corpus, tmp_path, capsys):
        config_path = write_config(
            tmp_path / "config.json", cli_corpus, tpyo="oops"
        )
        code = main(["ingest", "--config", config_path])
        assert code == 2
        assert "unknown config keys" in capsys.readouterr().err

    def test_invalid_seed_rejected(self, cli_corpus, tmp_path, capsys):
        config_path = write_config(tmp_path / "config.json", cli_corpus)
        code = main(["ingest", "--config", config_path, "--seed", "-1"])
        assert code == 2
        assert "seed" in capsys.readouterr().err

    def test_nonexistent_claims_path_rejected(self, tmp_path, capsys):
        code = main(["ingest", "--claims", str(tmp_path / "ghost.jsonl")])
        assert code == 2
        assert "does not exist" in capsys.readouterr().err

    def test_malformed_config_file(self, tmp_path, capsys):
        bad = tmp_path / "config.json"
        bad.write_text("{broken", encoding="utf-8")
        code = main(["ingest", "--config", str(bad)])
        assert code == 2
        assert "not valid JSON" in capsys.readouterr().err

    def test_resolve_rejects_unknown_backend_kind(self):
        from oocdetect.cli import build_backend

        with pytest.raises(ConfigError):
            build_backend({"kind": "carrier-pigeon"}, None, "vision")

    def test_missing_backend_config(self):
        from oocdetect.cli import build_backend

        with pytest.raises(ConfigError):
            build_backend(None, None, "vision")
