"""Tests for checkpoint serialization and run manifests."""

import numpy as np
import pytest

from asht import PpoConfig, init_policy, two_sensor_pair
from asht.decoders import DecoderArch, TrainingConfig, classify, train_inference
from asht.data import SequenceDataset, SequenceItem
from asht.persist import (
    Checkpoint,
    CheckpointError,
    RunManifest,
    config_digest,
    file_sha256,
    load_checkpoint,
    load_decoder_checkpoint,
    load_manifest,
    load_policy_checkpoint,
    save_checkpoint,
    save_decoder_checkpoint,
    save_manifest,
    save_policy_checkpoint,
)
from asht.policy import forward_policy


def small_arrays():
    rng = np.random.default_rng(3)
    return {"w": rng.normal(size=(3, 4)), "b": rng.normal(size=4), "s": np.array(2.5)}


class TestCheckpointRoundTrip:
    def test_arrays_and_metadata_survive(self, tmp_path):
        path = tmp_path / "m.ckpt"
        arrays = small_arrays()
        save_checkpoint(path, "monitor", arrays, {"seed": 9, "note": "x"})
        ckpt = load_checkpoint(path)
        assert ckpt.kind == "monitor"
        assert ckpt.metadata == {"seed": 9, "note": "x"}
        assert set(ckpt.arrays) == set(arrays)
        for name in arrays:
            np.testing.assert_array_equal(ckpt.arrays[name], arrays[name])
            assert ckpt.arrays[name].dtype == np.float64

    def test_resave_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        arrays = small_arrays()
        d1 = save_checkpoint(a, "policy", arrays, {"seed": 1})
        d2 = save_checkpoint(b, "policy", arrays, {"seed": 1})
        assert d1 == d2
        assert a.read_bytes() == b.read_bytes()

    def test_bad_kind_rejected_on_save(self, tmp_path):
        with pytest.raises(CheckpointError, match="kind"):
            save_checkpoint(tmp_path / "x.ckpt", "nonsense", small_arrays())


class TestCheckpointErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="no checkpoint"):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"definitely not a checkpoint, far too informal")
        with pytest.raises(CheckpointError, match="not an ASHT1"):
            load_checkpoint(path)

    def test_corruption_detected(self, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, "policy", small_arrays())
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="integrity"):
            load_checkpoint(path)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "t.ckpt"
        save_checkpoint(path, "policy", small_arrays())
        blob = path.read_bytes()
        path.write_bytes(blob[:-10])
        with pytest.raises(CheckpointError, match="integrity"):
            load_checkpoint(path)

    def test_kind_mismatch(self, tmp_path):
        path = tmp_path / "k.ckpt"
        save_checkpoint(path, "monitor", small_arrays())
        with pytest.raises(CheckpointError, match="holds a 'monitor'.*expected 'policy'"):
            load_checkpoint(path, expected_kind="policy")


class TestPolicyCheckpoint:
    def test_round_trip_preserves_behavior(self, tmp_path):
        cfg = PpoConfig(hidden_size=6, n_layers=2, cell="lstm")
        policy = init_policy(2, 2, cfg, np.random.default_rng(8))
        path = tmp_path / "p.ckpt"
        save_policy_checkpoint(path, policy, seed=44, extra_metadata={"phase": 1})
        loaded, md = load_policy_checkpoint(path)
        assert md["seed"] == 44 and md["phase"] == 1
        assert loaded.cell == "lstm" and loaded.n_layers == 2
        x = np.random.default_rng(1).random((3, 5, 4))
        logits_a, values_a, _ = forward_policy(policy, x)
        logits_b, values_b, _ = forward_policy(loaded, x)
        np.testing.assert_array_equal(logits_a, logits_b)
        np.testing.assert_array_equal(values_a, values_b)


class TestDecoderCheckpoint:
    def test_round_trip_preserves_predictions(self, tmp_path):
        rng = np.random.default_rng(12)
        items = []
        for i in range(60):
            y = rng.integers(0, 2, size=6)
            items.append(SequenceItem(item_id=i, actions=rng.integers(0, 2, size=6),
                                      observations=y, label=int(y.sum() > 3)))
        ds = SequenceDataset(items=items, label_kind="class", n_actions=2,
                             n_observations=2, n_classes=2)
        result = train_inference(ds, DecoderArch(hidden_size=6, n_layers=1),
                                 TrainingConfig(epochs=2, batch_size=16),
                                 rng=np.random.default_rng(0))
        path = tmp_path / "inf.ckpt"
        save_decoder_checkpoint(path, result.model, seed=5)
        loaded, md = load_decoder_checkpoint(path, expected_kind="inference")
        assert md["n_actions"] == 2 and md["encoder"]["head"] == "classifier"
        acts, obs = items[0].actions, items[0].observations
        pred_a, probs_a = classify(result.model, acts, obs)
        pred_b, probs_b = classify(loaded, acts, obs)
        assert pred_a == pred_b
        np.testing.assert_array_equal(probs_a, probs_b)

    def test_wrong_expectation_rejected(self, tmp_path):
        rng = np.random.default_rng(12)
        items = [SequenceItem(item_id=i, actions=np.array([0, 1]), observations=np.array([1, 0]),
                              label=i % 2) for i in range(20)]
        ds = SequenceDataset(items=items, label_kind="class", n_actions=2,
                             n_observations=2, n_classes=2)
        result = train_inference(ds, DecoderArch(hidden_size=4, n_layers=1),
                                 TrainingConfig(epochs=1, batch_size=8), rng=rng)
        path = tmp_path / "inf.ckpt"
        save_decoder_checkpoint(path, result.model, seed=5)
        with pytest.raises(CheckpointError, match="expected 'monitor'"):
            load_decoder_checkpoint(path, expected_kind="monitor")


class TestManifest:
    def test_round_trip_and_stability(self, tmp_path):
        m = RunManifest(run_id="run-7", seed=7, config={"horizon": 10},
                        artifacts={"policy.ckpt": "ab12"})
        p1, p2 = tmp_path / "m1.json", tmp_path / "m2.json"
        save_manifest(m, p1)
        save_manifest(m, p2)
        assert p1.read_bytes() == p2.read_bytes()
        back = load_manifest(p1)
        assert back == m
        assert "time" not in p1.read_text().lower()

    def test_config_digest_stable_under_key_order(self):
        assert config_digest({"a": 1, "b": [2, 3]}) == config_digest({"b": [2, 3], "a": 1})
        assert config_digest({"a": 1}) != config_digest({"a": 2})
        assert len(config_digest({})) == 16

    def test_file_sha256_matches_manual(self, tmp_path):
        import hashlib
        path = tmp_path / "f.bin"
        path.write_bytes(b"asht")
        assert file_sha256(path) == hashlib.sha256(b"asht").hexdigest()
