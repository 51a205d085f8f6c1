"""End-to-end command exercises through main(), checking exit codes."""

import json
from pathlib import Path

import pytest

from ctrnli.checkpoint import save_joint_model, save_pipeline_model
from ctrnli.cli import main
from ctrnli.ensemble import load_predictions

FIXTURE = Path(__file__).resolve().parent.parent / "data" / "fixture"
CORPUS = str(FIXTURE / "corpus.json")
CLAIMS = str(FIXTURE / "claims.json")


@pytest.fixture(scope="module")
def ckpts(tmp_path_factory, pipeline_model, joint_model):
    """The session-trained models, saved once for every CLI test."""
    root = tmp_path_factory.mktemp("ckpts")
    save_pipeline_model(pipeline_model, root / "pipeline")
    save_joint_model(joint_model, root / "joint")
    return {"pipeline": root / "pipeline", "joint": root / "joint"}


@pytest.fixture(scope="module")
def prediction_files(tmp_path_factory, ckpts):
    root = tmp_path_factory.mktemp("preds")
    paths = {}
    for system in ("pipeline", "joint"):
        out = root / f"{system}.json"
        code = main([
            "predict", "--corpus", CORPUS, "--claims", CLAIMS,
            "--checkpoint", str(ckpts[system]), "--out", str(out),
        ])
        assert code == 0
        paths[system] = out
    return paths


class TestValidate:
    def test_clean_fixture(self, capsys):
        assert main(["validate", "--corpus", CORPUS, "--claims", CLAIMS]) == 0
        assert "0 violation" in capsys.readouterr().out

    def test_dangling_reference_fails(self, tmp_path, capsys):
        claims = json.loads(Path(CLAIMS).read_text())
        claims[0]["primary_ctr"] = "trial-99"
        claims[0]["evidence"] = {"trial-99": [0]}
        bad = tmp_path / "claims.json"
        bad.write_text(json.dumps(claims))
        assert main(["validate", "--corpus", CORPUS, "--claims", str(bad)]) == 1
        assert "trial-99" in capsys.readouterr().out

    def test_evidence_out_of_range_fails(self, tmp_path):
        claims = json.loads(Path(CLAIMS).read_text())
        claims[0]["evidence"]["trial-01"] = [40]
        bad = tmp_path / "claims.json"
        bad.write_text(json.dumps(claims))
        assert main(["validate", "--corpus", CORPUS, "--claims", str(bad)]) == 1

    def test_missing_corpus_is_usage_error(self, tmp_path):
        missing = str(tmp_path / "nope.json")
        assert main(["validate", "--corpus", missing, "--claims", CLAIMS]) == 2

    def test_malformed_corpus_is_data_error(self, tmp_path):
        bad = tmp_path / "corpus.json"
        bad.write_text("{oops")
        assert main(["validate", "--corpus", str(bad), "--claims", CLAIMS]) == 1


class TestTrain:
    def _train_args(self, out, *extra):
        return [
            "train", "--corpus", CORPUS, "--claims", CLAIMS,
            "--out", str(out), "--max-steps", "2", "--seed", "0", *extra,
        ]

    def test_seed_required(self, tmp_path):
        code = main([
            "train", "--corpus", CORPUS, "--claims", CLAIMS,
            "--out", str(tmp_path / "ckpt"), "--max-steps", "1",
        ])
        assert code == 2

    def test_seed_via_config_file(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "corpus": CORPUS, "claims": CLAIMS,
            "hyperparams": {"seed": 3, "max_steps": 1},
        }))
        code = main(["train", "--config", str(cfg), "--out", str(tmp_path / "ckpt")])
        assert code == 0

    def test_writes_pipeline_checkpoint(self, tmp_path):
        out = tmp_path / "ckpt"
        assert main(self._train_args(out)) == 0
        for fname in ("config.json", "manifest.json", "params.bin", "loss_curve.json"):
            assert (out / fname).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["system"] == "pipeline"
        curves = json.loads((out / "loss_curve.json").read_text())
        assert set(curves) == {"evidence", "entailment"}

    def test_writes_joint_checkpoint(self, tmp_path):
        out = tmp_path / "ckpt"
        assert main(self._train_args(out, "--system", "joint")) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["system"] == "joint"
        curves = json.loads((out / "loss_curve.json").read_text())
        assert set(curves) == {"total", "evidence", "entailment"}

    def test_same_seed_identical_checkpoints(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(self._train_args(a, "--system", "joint")) == 0
        assert main(self._train_args(b, "--system", "joint")) == 0
        assert (a / "params.bin").read_bytes() == (b / "params.bin").read_bytes()

    def test_flag_overrides_config_file(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "corpus": CORPUS, "claims": CLAIMS, "system": "pipeline",
            "hyperparams": {"seed": 3, "max_steps": 1},
        }))
        out = tmp_path / "ckpt"
        code = main([
            "train", "--config", str(cfg), "--system", "joint", "--out", str(out),
        ])
        assert code == 0
        assert json.loads((out / "manifest.json").read_text())["system"] == "joint"

    def test_unavailable_pretrained_backend(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HF_HUB_OFFLINE", "1")
        monkeypatch.setenv("TRANSFORMERS_OFFLINE", "1")
        code = main(self._train_args(
            tmp_path / "ckpt",
            "--encoder-backend", "pretrained",
            "--model-name", "no-such-org/no-such-model-xyz",
        ))
        assert code == 3

    def test_unknown_split_directory(self, tmp_path):
        code = main([
            "train", "--corpus", CORPUS, "--claims", str(tmp_path),
            "--split", "dev", "--out", str(tmp_path / "ckpt"), "--seed", "0",
        ])
        assert code == 2


class TestPredict:
    def test_writes_valid_predictions(self, prediction_files, corpus, claims):
        preds = load_predictions(prediction_files["pipeline"])
        assert [p.claim_id for p in preds] == [c.claim_id for c in claims]

    def test_missing_checkpoint(self, tmp_path):
        code = main([
            "predict", "--corpus", CORPUS, "--claims", CLAIMS,
            "--checkpoint", str(tmp_path / "nope"), "--out", str(tmp_path / "p.json"),
        ])
        assert code == 2

    def test_jobs_output_is_byte_identical(self, tmp_path, ckpts):
        serial, parallel = tmp_path / "serial.json", tmp_path / "parallel.json"
        base = ["predict", "--corpus", CORPUS, "--claims", CLAIMS,
                "--checkpoint", str(ckpts["joint"])]
        assert main([*base, "--out", str(serial)]) == 0
        assert main([*base, "--out", str(parallel), "--jobs", "4"]) == 0
        assert serial.read_bytes() == parallel.read_bytes()

    def test_threshold_override(self, tmp_path, ckpts):
        out = tmp_path / "p.json"
        code = main([
            "predict", "--corpus", CORPUS, "--claims", CLAIMS,
            "--checkpoint", str(ckpts["pipeline"]), "--out", str(out),
            "--threshold", "0.999999",
        ])
        assert code == 0
        preds = load_predictions(out)
        # almost nothing clears an extreme threshold, so fallbacks appear
        assert any(p.fallback_used for p in preds)
        assert all(len(p.selected) >= 1 for p in preds)

    def test_unlabeled_claims_predictable(self, tmp_path, ckpts):
        claims = json.loads(Path(CLAIMS).read_text())
        for obj in claims:
            obj.pop("label", None)
            obj.pop("evidence", None)
        unlabeled = tmp_path / "claims.json"
        unlabeled.write_text(json.dumps(claims))
        out = tmp_path / "p.json"
        code = main([
            "predict", "--corpus", CORPUS, "--claims", str(unlabeled),
            "--checkpoint", str(ckpts["joint"]), "--out", str(out),
        ])
        assert code == 0
        assert len(load_predictions(out)) == len(claims)


class TestEnsemble:
    def test_combines_and_scores_perfectly(self, tmp_path, prediction_files, capsys):
        out = tmp_path / "ens.json"
        code = main([
            "ensemble", str(prediction_files["pipeline"]), str(prediction_files["joint"]),
            "--out", str(out),
        ])
        assert code == 0
        assert main([
            "evaluate", "--corpus", CORPUS, "--claims", CLAIMS,
            "--predictions", str(out),
        ]) == 0
        table = capsys.readouterr().out
        assert "1.0000" in table

    def test_degenerate_weights_reproduce_first_file(self, tmp_path, prediction_files):
        out = tmp_path / "ens.json"
        code = main([
            "ensemble", str(prediction_files["pipeline"]), str(prediction_files["joint"]),
            "--out", str(out), "--w-pipeline", "1.0", "--w-joint", "0.0",
        ])
        assert code == 0
        assert out.read_bytes() == prediction_files["pipeline"].read_bytes()

    def test_bad_weights_are_usage_error(self, tmp_path, prediction_files):
        code = main([
            "ensemble", str(prediction_files["pipeline"]), str(prediction_files["joint"]),
            "--out", str(tmp_path / "e.json"), "--w-pipeline", "0.9", "--w-joint", "0.9",
        ])
        assert code == 2

    def test_missing_input_file(self, tmp_path, prediction_files):
        code = main([
            "ensemble", str(tmp_path / "nope.json"), str(prediction_files["joint"]),
            "--out", str(tmp_path / "e.json"),
        ])
        assert code == 2

    def test_mismatched_claims_are_data_error(self, tmp_path, prediction_files):
        truncated = json.loads(prediction_files["joint"].read_text())[:5]
        partial = tmp_path / "partial.json"
        partial.write_text(json.dumps(truncated))
        code = main([
            "ensemble", str(prediction_files["pipeline"]), str(partial),
            "--out", str(tmp_path / "e.json"),
        ])
        assert code == 1


class TestEvaluateAndReport:
    def test_report_file_round_trip(self, tmp_path, prediction_files, capsys):
        report_path = tmp_path / "metrics.json"
        code = main([
            "evaluate", "--corpus", CORPUS, "--claims", CLAIMS,
            "--predictions", str(prediction_files["joint"]), "--out", str(report_path),
        ])
        assert code == 0
        evaluate_out = capsys.readouterr().out
        obj = json.loads(report_path.read_text())
        assert obj["schema"] == "metrics/1"
        assert obj["evidence"]["micro"]["f1"] == 1.0
        assert obj["entailment"]["f1"] == 1.0

        assert main(["report", "--report", str(report_path)]) == 0
        report_out = capsys.readouterr().out
        # the rendered table is identical in both commands
        assert report_out.strip() in evaluate_out

    def test_missing_predictions(self, tmp_path):
        code = main([
            "evaluate", "--corpus", CORPUS, "--claims", CLAIMS,
            "--predictions", str(tmp_path / "nope.json"),
        ])
        assert code == 2

    def test_length_mismatch_is_data_error(self, tmp_path, prediction_files):
        preds = json.loads(prediction_files["joint"].read_text())
        preds[0]["evidence_probs"] = preds[0]["evidence_probs"] + [0.0]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(preds))
        code = main([
            "evaluate", "--corpus", CORPUS, "--claims", CLAIMS,
            "--predictions", str(bad),
        ])
        assert code == 1

    def test_missing_report_file(self, tmp_path):
        assert main(["report", "--report", str(tmp_path / "nope.json")]) == 2
