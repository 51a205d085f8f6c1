"""Checkpoint directories: save/load round-trips and corruption handling."""

import json

import numpy as np
import pytest

from ctrnli.checkpoint import (
    load_any_model,
    load_joint_model,
    load_pipeline_model,
    read_checkpoint,
    save_joint_model,
    save_pipeline_model,
)
from ctrnli.errors import BadCheckpoint
from ctrnli.joint import predict_joint
from ctrnli.pipeline import predict_pipeline


@pytest.fixture()
def pipeline_ckpt(tmp_path, pipeline_model):
    path = tmp_path / "pipeline-ckpt"
    save_pipeline_model(pipeline_model, path)
    return path


@pytest.fixture()
def joint_ckpt(tmp_path, joint_model):
    path = tmp_path / "joint-ckpt"
    save_joint_model(joint_model, path)
    return path


class TestRoundTrip:
    def test_pipeline_predictions_survive(self, corpus, claims, pipeline_model, pipeline_ckpt):
        """Float32 quantization moves probabilities by at most ~1e-4 and the
        discrete outputs not at all on an overfit model."""
        loaded = load_pipeline_model(pipeline_ckpt)
        assert loaded.pooling == pipeline_model.pooling
        assert loaded.threshold == pipeline_model.threshold
        for claim in claims:
            a = predict_pipeline(claim, corpus, pipeline_model)
            b = predict_pipeline(claim, corpus, loaded)
            np.testing.assert_allclose(a.evidence_probs, b.evidence_probs, atol=1e-4)
            np.testing.assert_allclose(a.class_probs, b.class_probs, atol=1e-4)
            assert a.selected == b.selected
            assert a.verdict == b.verdict

    def test_joint_predictions_survive(self, corpus, claims, joint_model, joint_ckpt):
        loaded = load_joint_model(joint_ckpt)
        for claim in claims:
            a = predict_joint(claim, corpus, joint_model)
            b = predict_joint(claim, corpus, loaded)
            np.testing.assert_allclose(a.evidence_probs, b.evidence_probs, atol=1e-4)
            assert a.selected == b.selected
            assert a.verdict == b.verdict

    def test_parameters_are_quantized_exactly(self, pipeline_model, pipeline_ckpt):
        loaded = load_pipeline_model(pipeline_ckpt)
        for name, arr in pipeline_model.evidence_head.params.items():
            expected = arr.astype(np.float32).astype(np.float64)
            np.testing.assert_array_equal(loaded.evidence_head.params[name], expected)
            assert loaded.evidence_head.params[name].dtype == np.float64

    def test_save_is_byte_deterministic(self, tmp_path, joint_model):
        a, b = tmp_path / "a", tmp_path / "b"
        save_joint_model(joint_model, a)
        save_joint_model(joint_model, b)
        for fname in ("params.bin", "manifest.json", "config.json"):
            assert (a / fname).read_bytes() == (b / fname).read_bytes()

    def test_load_any_model(self, pipeline_ckpt, joint_ckpt):
        system, model = load_any_model(pipeline_ckpt)
        assert system == "pipeline" and model.evidence_head is not None
        system, model = load_any_model(joint_ckpt)
        assert system == "joint" and model.verdict_head is not None

    def test_system_mismatch_rejected(self, pipeline_ckpt, joint_ckpt):
        with pytest.raises(BadCheckpoint):
            load_joint_model(pipeline_ckpt)
        with pytest.raises(BadCheckpoint):
            load_pipeline_model(joint_ckpt)


def _edit_manifest(path, mutate):
    manifest = json.loads((path / "manifest.json").read_text())
    mutate(manifest)
    (path / "manifest.json").write_text(json.dumps(manifest))


class TestCorruption:
    def test_not_a_directory(self, tmp_path):
        with pytest.raises(BadCheckpoint):
            read_checkpoint(tmp_path / "missing")

    def test_missing_manifest(self, joint_ckpt):
        (joint_ckpt / "manifest.json").unlink()
        with pytest.raises(BadCheckpoint):
            read_checkpoint(joint_ckpt)

    def test_missing_config(self, joint_ckpt):
        (joint_ckpt / "config.json").unlink()
        with pytest.raises(BadCheckpoint):
            read_checkpoint(joint_ckpt)

    def test_manifest_not_json(self, joint_ckpt):
        (joint_ckpt / "manifest.json").write_text("{broken")
        with pytest.raises(BadCheckpoint):
            read_checkpoint(joint_ckpt)

    def test_unknown_system(self, joint_ckpt):
        _edit_manifest(joint_ckpt, lambda m: m.update(system="hybrid"))
        with pytest.raises(BadCheckpoint):
            read_checkpoint(joint_ckpt)

    def test_unsupported_dtype(self, joint_ckpt):
        _edit_manifest(joint_ckpt, lambda m: m["tensors"][0].update(dtype="float16"))
        with pytest.raises(BadCheckpoint):
            read_checkpoint(joint_ckpt)

    def test_truncated_blob(self, joint_ckpt):
        blob = (joint_ckpt / "params.bin").read_bytes()
        (joint_ckpt / "params.bin").write_bytes(blob[: len(blob) // 2])
        with pytest.raises(BadCheckpoint):
            read_checkpoint(joint_ckpt)

    def test_oversized_blob(self, joint_ckpt):
        blob = (joint_ckpt / "params.bin").read_bytes()
        (joint_ckpt / "params.bin").write_bytes(blob + b"\x00\x00\x00\x00")
        with pytest.raises(BadCheckpoint):
            read_checkpoint(joint_ckpt)

    def test_negative_offset(self, joint_ckpt):
        _edit_manifest(joint_ckpt, lambda m: m["tensors"][0].update(byte_offset=-4))
        with pytest.raises(BadCheckpoint):
            read_checkpoint(joint_ckpt)

    def test_malformed_tensor_entry(self, joint_ckpt):
        def drop_shape(m):
            del m["tensors"][0]["shape"]

        _edit_manifest(joint_ckpt, drop_shape)
        with pytest.raises(BadCheckpoint):
            read_checkpoint(joint_ckpt)

    def test_renamed_tensor_rejected_on_load(self, joint_ckpt):
        def rename(m):
            entry = next(t for t in m["tensors"] if t["name"] == "verdict_head.W1")
            entry["name"] = "verdict_head.W9"

        _edit_manifest(joint_ckpt, rename)
        with pytest.raises(BadCheckpoint):
            load_joint_model(joint_ckpt)

    def test_wrong_shape_rejected_on_load(self, joint_ckpt):
        # shrink a middle tensor: the blob still parses, the shape cannot
        def reshape(m):
            entry = next(t for t in m["tensors"] if t["name"] == "verdict_head.W1")
            entry["shape"] = [entry["shape"][0], entry["shape"][1] - 1]

        _edit_manifest(joint_ckpt, reshape)
        with pytest.raises(BadCheckpoint):
            load_joint_model(joint_ckpt)

    def test_missing_namespace_rejected_on_load(self, joint_ckpt):
        def strip_verdict(m):
            m["tensors"] = [t for t in m["tensors"] if not t["name"].startswith("verdict")]

        _edit_manifest(joint_ckpt, strip_verdict)
        with pytest.raises(BadCheckpoint):
            load_joint_model(joint_ckpt)
