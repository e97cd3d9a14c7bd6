import json
from pathlib import Path

import numpy as np
import pytest

from pamkit.cli import main
from pamkit.cluster import Embedding, write_embeddings

from conftest import make_tone, write_wav

RATE = 8000


def config_yaml(tmp_path, seed=3):
    path = tmp_path / "config.yaml"
    path.write_text(
        f"""
species:
  - species_id: lowband
    f_low_hz: 700
    f_high_hz: 900
    min_dur_s: 0.5
    max_dur_s: 5.0
    mel_config: MF
  - species_id: highband
    f_low_hz: 1900
    f_high_hz: 2100
    min_dur_s: 0.5
    max_dur_s: 5.0
    mel_config: MF
reduction:
  n_neighbors: 12
  n_epochs: 80
density:
  min_cluster_size: 15
  min_samples: 2
seed: {seed}
"""
    )
    return path


def synthetic_recording(rng, bursts, dur_s=20.0):
    sigma = np.sqrt(0.5 * 1e-4)  # -40 dBFS noise
    samples = sigma * rng.standard_normal(int(dur_s * RATE))
    amp = np.sqrt(2 * 0.5 * 10 ** (-30 / 10))
    for t0, t1, freq in bursts:
        n0, n1 = int(t0 * RATE), int(t1 * RATE)
        samples[n0:n1] += make_tone(freq, (n1 - n0) / RATE, RATE, amp=amp)
    return samples


class TestDetectCommand:
    def test_empty_dir(self, tmp_path):
        (tmp_path / "audio").mkdir()
        out = tmp_path / "cand.jsonl"
        rc = main(["--config", str(config_yaml(tmp_path)), "detect",
                   "--input-dir", str(tmp_path / "audio"), "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1  # header only
        assert json.loads(lines[0])["type"] == "header"

    def test_three_planted_bursts(self, tmp_path, rng):
        audio = tmp_path / "audio"
        audio.mkdir()
        bursts = [(2.0, 4.0, 800.0), (8.0, 9.5, 2000.0), (14.0, 16.0, 800.0)]
        write_wav(audio / "rec.wav", synthetic_recording(rng, bursts), RATE)
        out = tmp_path / "cand.jsonl"
        rc = main(["--config", str(config_yaml(tmp_path)), "detect",
                   "--input-dir", str(audio), "--out", str(out)])
        assert rc == 0
        records = [json.loads(l) for l in out.read_text().splitlines()][1:]
        assert len(records) == 3
        kinds = sorted(r["species_hint"] for r in records)
        assert kinds == ["highband", "lowband", "lowband"]

    def test_corrupt_file_skipped(self, tmp_path, rng):
        audio = tmp_path / "audio"
        audio.mkdir()
        write_wav(audio / "ok.wav", synthetic_recording(rng, [(2.0, 4.0, 800.0)]), RATE)
        (audio / "bad.wav").write_bytes(b"not a wav at all")
        out = tmp_path / "cand.jsonl"
        rc = main(["--config", str(config_yaml(tmp_path)), "detect",
                   "--input-dir", str(audio), "--out", str(out)])
        assert rc == 0
        records = [json.loads(l) for l in out.read_text().splitlines()][1:]
        assert all(r["source_id"] == "ok.wav" for r in records)

    def test_rerun_byte_identical(self, tmp_path, rng):
        audio = tmp_path / "audio"
        audio.mkdir()
        write_wav(audio / "rec.wav", synthetic_recording(rng, [(2.0, 4.0, 800.0)]), RATE)
        config = config_yaml(tmp_path)
        out1, out2 = tmp_path / "c1.jsonl", tmp_path / "c2.jsonl"
        main(["--config", str(config), "detect", "--input-dir", str(audio), "--out", str(out1)])
        main(["--config", str(config), "detect", "--input-dir", str(audio), "--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()


class TestFeaturizeCommand:
    def test_silence_mf_shard(self, tmp_path):
        audio = tmp_path / "audio"
        audio.mkdir()
        write_wav(audio / "silence.wav", np.zeros(10 * RATE), RATE)
        out = tmp_path / "f.pfgf"
        rc = main(["--config", str(config_yaml(tmp_path)), "featurize",
                   "--input-dir", str(audio), "--mel", "MF", "--out", str(out)])
        assert rc == 0
        from pamkit.features import read_feature_shard

        features, records = read_feature_shard(out)
        assert len(features) == 1
        assert features[0].values.shape == (512, 128)

    def test_rerun_byte_identical(self, tmp_path, rng):
        audio = tmp_path / "audio"
        audio.mkdir()
        write_wav(audio / "n.wav", rng.uniform(-0.4, 0.4, 10 * RATE), RATE)
        config = config_yaml(tmp_path)
        a, b = tmp_path / "a.pfgf", tmp_path / "b.pfgf"
        main(["--config", str(config), "featurize", "--input-dir", str(audio),
              "--mel", "MF", "--out", str(a), "--stats-out", str(tmp_path / "sa.json")])
        main(["--config", str(config), "featurize", "--input-dir", str(audio),
              "--mel", "MF", "--out", str(b), "--stats-out", str(tmp_path / "sb.json")])
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "sa.json").read_bytes() == (tmp_path / "sb.json").read_bytes()


def blob_embedding_file(tmp_path, rng, n_per=30, centers=((0, 0), (60, 0), (0, 60))):
    embs = []
    for b, center in enumerate(centers):
        pts = np.array(center) + rng.normal(0, 0.4, (n_per, 2))
        embs.extend(
            Embedding(f"blob{b}_{i:03d}", "enc", np.asarray(v)) for i, v in enumerate(pts)
        )
    path = tmp_path / "emb.pfge"
    write_embeddings(path, embs)
    return path


class TestClusterCommand:
    def test_three_blobs(self, tmp_path, rng):
        emb_path = blob_embedding_file(tmp_path, rng)
        out = tmp_path / "assign.jsonl"
        rc = main(["--config", str(config_yaml(tmp_path)), "cluster",
                   "--embeddings", str(emb_path), "--out", str(out)])
        assert rc == 0
        records = [json.loads(l) for l in out.read_text().splitlines()]
        assert records[0]["type"] == "header"
        rows = records[1:]
        assert len(rows) == 90
        clusters = {r["cluster_id"] for r in rows if r["cluster_id"] >= 0}
        assert len(clusters) == 3

    def test_rerun_byte_identical(self, tmp_path, rng):
        emb_path = blob_embedding_file(tmp_path, rng)
        config = config_yaml(tmp_path)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        main(["--config", str(config), "cluster", "--embeddings", str(emb_path),
              "--out", str(a), "--proj2d", str(tmp_path / "p1.csv")])
        main(["--config", str(config), "cluster", "--embeddings", str(emb_path),
              "--out", str(b), "--proj2d", str(tmp_path / "p2.csv")])
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "p1.csv").read_bytes() == (tmp_path / "p2.csv").read_bytes()


class TestAugmentCommand:
    def test_masks_and_attenuation_deterministic(self, tmp_path, rng):
        audio = tmp_path / "audio"
        audio.mkdir()
        write_wav(audio / "n.wav", rng.uniform(-0.4, 0.4, 10 * RATE), RATE)
        config = config_yaml(tmp_path)
        shard = tmp_path / "f.pfgf"
        main(["--config", str(config), "featurize", "--input-dir", str(audio),
              "--mel", "MF", "--out", str(shard)])
        a, b = tmp_path / "a.pfgf", tmp_path / "b.pfgf"
        for out in (a, b):
            rc = main(["--config", str(config), "augment", "--in-shard", str(shard),
                       "--out-shard", str(out), "--ops", "masks,attenuation"])
            assert rc == 0
        assert a.read_bytes() == b.read_bytes()
        log_a = Path(str(a) + ".provenance.jsonl")
        assert log_a.exists()
        records = [json.loads(l) for l in log_a.read_text().splitlines()]
        assert records[0]["type"] == "header"
        assert records[1]["ops"][0]["name"] == "spec_masks"


class TestExportCommand:
    def test_no_validated_labels_empty_manifest(self, tmp_path):
        store_dir = tmp_path / "store"
        store_dir.mkdir()
        out = tmp_path / "export"
        rc = main(["--config", str(config_yaml(tmp_path)), "export",
                   "--store", str(store_dir), "--audio-root", str(tmp_path),
                   "--out", str(out)])
        assert rc == 0
        lines = (out / "manifest.jsonl").read_text().splitlines()
        assert json.loads(lines[0])["rows"] == 0


class TestEvalCommand:
    def make_inputs(self, tmp_path):
        scores = tmp_path / "scores.jsonl"
        scores.write_text(
            "\n".join(
                json.dumps(r)
                for r in [
                    {"file_id": "a", "species": "lowband", "scores": [0.9]},
                    {"file_id": "b", "species": "lowband", "scores": [0.8]},
                    {"file_id": "c", "species": "lowband", "scores": [0.1]},
                ]
            )
            + "\n"
        )
        labels = tmp_path / "labels.jsonl"
        labels.write_text(
            "\n".join(
                json.dumps(r)
                for r in [
                    {"file_id": "a", "species": "lowband", "present": True},
                    {"file_id": "b", "species": "lowband", "present": False},
                    {"file_id": "c", "species": "lowband", "present": True},
                ]
            )
            + "\n"
        )
        return scores, labels

    def test_three_file_fixture(self, tmp_path):
        scores, labels = self.make_inputs(tmp_path)
        out = tmp_path / "report.json"
        rc = main(["--config", str(config_yaml(tmp_path)), "eval", "--scores", str(scores),
                   "--labels", str(labels), "--out", str(out), "--csv", str(tmp_path / "r.csv")])
        assert rc == 0
        report = json.loads(out.read_text())
        row = report["species"][0]
        assert row["species"] == "lowband"
        assert row["ap"] == pytest.approx(0.833333, abs=1e-4)
        assert row["best_f1"] == pytest.approx(0.8, abs=1e-9)

    def test_digest_mismatch_refused(self, tmp_path):
        scores, labels = self.make_inputs(tmp_path)
        content = scores.read_text()
        scores.write_text(json.dumps({"type": "header", "config_digest": "deadbeef"}) + "\n" + content)
        rc = main(["--config", str(config_yaml(tmp_path)), "eval", "--scores", str(scores),
                   "--labels", str(labels), "--out", str(tmp_path / "r.json")])
        assert rc == 2

    def test_rerun_byte_identical(self, tmp_path):
        scores, labels = self.make_inputs(tmp_path)
        config = config_yaml(tmp_path)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        main(["--config", str(config), "eval", "--scores", str(scores),
              "--labels", str(labels), "--out", str(a)])
        main(["--config", str(config), "eval", "--scores", str(scores),
              "--labels", str(labels), "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
