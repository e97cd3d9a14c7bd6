import numpy as np
import pytest
from fastapi.testclient import TestClient

from pamkit.audio import AudioClip
from pamkit.cluster import ClusterAssignment, Embedding
from pamkit.config import default_config
from pamkit.service import ClusterState, create_app
from pamkit.store import DatasetStore, SegmentRecord

from conftest import make_tone


@pytest.fixture
def service(tmp_path, rng):
    store = DatasetStore(tmp_path / "store")
    config = default_config()

    # two clusters of 3 + 2 noise points, with embeddings for reclustering
    segments = []
    assignments = []
    embeddings = []
    for i in range(8):
        s = SegmentRecord.create(f"rec{i}.wav", 0.0, 2.0, species_hint="chimpanzee")
        segments.append(s)
        cluster_id = 0 if i < 3 else (1 if i < 6 else -1)
        assignments.append(
            ClusterAssignment(s.segment_id, cluster_id, 0.9 if cluster_id >= 0 else 0.0,
                              suggested_label="chimpanzee" if cluster_id == 0 else None)
        )
        embeddings.append(Embedding(s.segment_id, "enc", rng.normal(0, 1, 4)))
    store.upsert_segments(segments)
    state = ClusterState(assignments=assignments, embeddings=embeddings,
                         coords_2d={s.segment_id: (0.0, 1.0) for s in segments})

    def audio_provider(segment_id):
        return AudioClip(make_tone(500, 2.0, 8000, amp=0.4), 8000, segment_id)

    app = create_app(store, state, config, audio_provider)
    client = TestClient(app)
    return client, store, state, segments


class TestClusterEndpoints:
    def test_list_clusters_sorted_with_progress(self, service):
        client, store, state, segments = service
        body = client.get("/api/clusters").json()
        assert [c["cluster_id"] for c in body] == [0, 1]  # size ties broken by id
        assert body[0]["size"] == 3
        assert body[0]["suggested_label"] == "chimpanzee"
        assert body[0]["progress"] == {"validated": 0, "rejected": 0, "pending": 3}

    def test_segments_page(self, service):
        client, *_ = service
        body = client.get("/api/clusters/0/segments?page=0&page_size=2").json()
        assert body["total"] == 3
        assert len(body["segments"]) == 2
        assert body["segments"][0]["xy"] == [0.0, 1.0]

    def test_unknown_cluster_404(self, service):
        client, *_ = service
        assert client.get("/api/clusters/99/segments").status_code == 404


class TestMediaEndpoints:
    def test_spectrogram_png(self, service):
        client, _, _, segments = service
        r = client.get(f"/api/segments/{segments[0].segment_id}/spectrogram.png")
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert r.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_audio_wav(self, service):
        client, _, _, segments = service
        r = client.get(f"/api/segments/{segments[0].segment_id}/audio.wav")
        assert r.status_code == 200
        assert r.content[:4] == b"RIFF"

    def test_unknown_segment_404(self, service):
        client, *_ = service
        assert client.get("/api/segments/zzz/audio.wav").status_code == 404


class TestDecisions:
    def test_label_read_your_writes(self, service):
        client, _, _, segments = service
        sid = segments[0].segment_id
        r = client.post(f"/api/segments/{sid}/label",
                        json={"label": "chimpanzee", "annotator": "t"})
        assert r.status_code == 200
        body = client.get("/api/clusters/0/segments").json()
        row = next(s for s in body["segments"] if s["segment_id"] == sid)
        assert row["current_label"] == "chimpanzee"
        assert row["current_status"] == "validated"

    def test_unknown_label_422(self, service):
        client, _, _, segments = service
        r = client.post(f"/api/segments/{segments[0].segment_id}/label",
                        json={"label": "unicorn"})
        assert r.status_code == 422

    def test_reject_cluster_bumps_negative_count(self, service):
        client, *_ = service
        before = client.get("/api/stats").json()
        n_before = before["labels"].get("NEGATIVE", {}).get("validated", 0)
        r = client.post("/api/clusters/1/reject", json={"annotator": "t"})
        assert r.status_code == 200
        assert r.json()["count"] == 3
        after = client.get("/api/stats").json()
        assert after["labels"]["NEGATIVE"]["validated"] == n_before + 3

    def test_validate_cluster_uses_suggestion(self, service):
        client, store, _, _ = service
        r = client.post("/api/clusters/0/validate", json={})
        assert r.status_code == 200
        assert r.json()["label"] == "chimpanzee"
        assert sum(1 for rec in store.current_labels().values()
                   if rec.label == "chimpanzee") == 3

    def test_validate_without_suggestion_422(self, service):
        client, *_ = service
        assert client.post("/api/clusters/1/validate", json={}).status_code == 422

    def test_idempotent_decision_replay(self, service):
        client, store, _, segments = service
        sid = segments[0].segment_id
        payload = {"label": "chimpanzee", "decision_id": "k1"}
        client.post(f"/api/segments/{sid}/label", json=payload)
        client.post(f"/api/segments/{sid}/label", json=payload)
        assert len(store.label_log()) == 1

    def test_conflicting_replay_409(self, service):
        client, _, _, segments = service
        sid = segments[0].segment_id
        client.post(f"/api/segments/{sid}/label",
                    json={"label": "chimpanzee", "decision_id": "k2"})
        r = client.post(f"/api/segments/{sid}/label",
                        json={"label": "NEGATIVE", "decision_id": "k2"})
        assert r.status_code == 409


class TestRecluster:
    def poll(self, client, job_id):
        import time

        for _ in range(200):
            body = client.get(f"/api/jobs/{job_id}").json()
            if body["status"] != "running":
                return body
            time.sleep(0.05)
        pytest.fail("job never finished")

    def test_recluster_with_tiny_noise_completes(self, service):
        client, *_ = service
        r = client.post("/api/recluster", json={"max_iterations": 2})
        assert r.status_code == 200
        body = self.poll(client, r.json()["job_id"])
        # only 2 noise points, below min_cluster_size: no new clusters
        assert body["status"] == "done"
        assert body["new_clusters"] == 0

    def test_unknown_job_404(self, service):
        client, *_ = service
        assert client.get("/api/jobs/nope").status_code == 404

    def test_stats_shape(self, service):
        client, *_ = service
        body = client.get("/api/stats").json()
        assert body["total_segments"] == 8
        assert body["noise_count"] == 2
        assert body["clusters"] == 2
