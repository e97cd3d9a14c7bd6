import json

import numpy as np
import pytest

from pamkit.audio import AudioClip
from pamkit.errors import (
    ConflictError,
    EmptyInputError,
    LeakageError,
    UnknownSegmentError,
    ValidationError,
)
from pamkit.features import MF_CONFIG, GlobalStats, read_feature_shard
from pamkit.store import (
    NEGATIVE_LABEL,
    DatasetStore,
    ExportPlan,
    SegmentRecord,
    export_training_set,
    ingest_scores,
    make_segment_id,
    make_split,
)

from conftest import make_tone


def seg(source, t0, t1, kind="passive", hint=None):
    return SegmentRecord.create(source, t0, t1, source_kind=kind, species_hint=hint)


class TestSegments:
    def test_upsert_idempotent(self, tmp_path):
        store = DatasetStore(tmp_path)
        records = [seg("a.wav", 0, 1), seg("a.wav", 2, 3), seg("b.wav", 0, 1)]
        assert store.upsert_segments(records) == 3
        assert store.upsert_segments(records) == 3

    def test_content_hash_identity(self):
        assert make_segment_id("x.wav", 1.0, 2.0) == make_segment_id("x.wav", 1.0, 2.0)
        a = seg("x.wav", 1.0, 2.0)
        b = seg("x.wav", 1.0, 2.0)
        assert a.segment_id == b.segment_id

    def test_conflicting_interval_rejected(self, tmp_path):
        store = DatasetStore(tmp_path)
        a = seg("a.wav", 0, 1)
        store.upsert_segments([a])
        clash = SegmentRecord(
            segment_id=a.segment_id, source_id="a.wav", t_start_s=5.0, t_end_s=6.0
        )
        with pytest.raises(ConflictError):
            store.upsert_segments([clash])

    def test_persistence_round_trip(self, tmp_path):
        store = DatasetStore(tmp_path)
        store.upsert_segments([seg("a.wav", 0, 1, kind="handheld", hint="chimp")])
        reopened = DatasetStore(tmp_path)
        assert reopened.segments() == store.segments()


class TestDecisions:
    def test_validate_then_reject_history(self, tmp_path):
        store = DatasetStore(tmp_path)
        s = seg("a.wav", 0, 1)
        store.upsert_segments([s])
        store.record_decision(s.segment_id, "chimp", status="validated", annotator="x")
        store.record_decision(s.segment_id, "chimp", status="rejected", annotator="y")
        current = store.current_labels()[s.segment_id]
        assert current.status == "rejected"
        history = [r for r in store.label_log() if r.segment_id == s.segment_id]
        assert [r.status for r in history] == ["validated", "rejected"]

    def test_reject_cluster_bulk_negative(self, tmp_path):
        store = DatasetStore(tmp_path)
        segments = [seg("a.wav", i, i + 1) for i in range(20)]
        store.upsert_segments(segments)
        count = store.reject_cluster([s.segment_id for s in segments])
        assert count == 20
        current = store.current_labels()
        assert all(current[s.segment_id].label == NEGATIVE_LABEL for s in segments)
        assert all(current[s.segment_id].status == "validated" for s in segments)

    def test_unknown_segment_rejected(self, tmp_path):
        store = DatasetStore(tmp_path)
        with pytest.raises(UnknownSegmentError):
            store.record_decision("nope", "chimp")

    def test_append_only_log(self, tmp_path):
        store = DatasetStore(tmp_path)
        s = seg("a.wav", 0, 1)
        store.upsert_segments([s])
        store.record_decision(s.segment_id, "chimp")
        first = (tmp_path / "labels.jsonl").read_text()
        store.record_decision(s.segment_id, NEGATIVE_LABEL)
        second = (tmp_path / "labels.jsonl").read_text()
        assert second.startswith(first)

    def test_idempotent_decision_replay(self, tmp_path):
        store = DatasetStore(tmp_path)
        s = seg("a.wav", 0, 1)
        store.upsert_segments([s])
        r1 = store.record_decision(s.segment_id, "chimp", decision_id="d1")
        r2 = store.record_decision(s.segment_id, "chimp", decision_id="d1")
        assert r1.seq == r2.seq
        assert len(store.label_log()) == 1
        with pytest.raises(ConflictError):
            store.record_decision(s.segment_id, NEGATIVE_LABEL, decision_id="d1")


class TestSplit:
    def test_ten_ids(self):
        ids = [f"s{i}" for i in range(10)]
        out = make_split(ids, seed=1)
        assert sum(a.split == "train" for a in out) == 8
        assert sum(a.split == "val" for a in out) == 2

    def test_five_ids(self):
        out = make_split([f"s{i}" for i in range(5)], seed=1)
        assert sum(a.split == "train" for a in out) == 4

    def test_deterministic(self):
        ids = [f"s{i}" for i in range(37)]
        assert make_split(ids, seed=9) == make_split(ids, seed=9)
        assert make_split(ids, seed=9) != make_split(ids, seed=10)

    def test_stratified(self):
        ids = [f"a{i}" for i in range(10)] + [f"b{i}" for i in range(5)]
        strata = {i: i[0] for i in ids}
        out = make_split(ids, seed=3, stratify_by=strata)
        a_train = sum(1 for x in out if x.segment_id.startswith("a") and x.split == "train")
        b_train = sum(1 for x in out if x.segment_id.startswith("b") and x.split == "train")
        assert a_train == 8
        assert b_train == 4

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            make_split([], seed=0)


class TestIngestScores:
    def test_happy_path(self, tmp_path):
        path = tmp_path / "scores.jsonl"
        path.write_text(
            json.dumps({"file_id": "f1", "species": "chimp", "scores": [0.1, 0.7, 0.3]}) + "\n"
            + json.dumps({"file_id": "f1", "species": "hornbill", "scores": [0.2]}) + "\n"
        )
        records = ingest_scores(path)
        assert len(records) == 2
        assert records[0].scores == (0.1, 0.7, 0.3)

    def test_out_of_range_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"file_id": "f", "species": "s", "scores": [1.5]}) + "\n")
        with pytest.raises(ValidationError):
            ingest_scores(path)

    def test_duplicate_rejected(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        rec = json.dumps({"file_id": "f", "species": "s", "scores": [0.5]})
        path.write_text(rec + "\n" + rec + "\n")
        with pytest.raises(ValidationError):
            ingest_scores(path)


def tone_provider(rate=8000, dur=10.0):
    """Deterministic per-segment audio: tone keyed by the segment id hash."""

    def provider(segment):
        h = int(segment.segment_id[:4], 16)
        freq = 200 + (h % 30) * 100
        amp = 0.2 + (h % 5) * 0.1
        t = np.arange(int(dur * rate)) / rate
        return AudioClip(amp * np.sin(2 * np.pi * freq * t), rate, segment.segment_id)

    return provider


def plan(**kw):
    defaults = dict(species_order=("chimp", "hornbill"), seed=3)
    defaults.update(kw)
    return ExportPlan(**defaults)


class TestExport:
    def test_empty_store_empty_manifest(self, tmp_path):
        store = DatasetStore(tmp_path / "store")
        result = export_training_set(store, {"MF": MF_CONFIG}, plan(), tone_provider(),
                                     tmp_path / "out")
        assert result.n_positive == 0 and result.n_negative == 0
        lines = result.manifest_path.read_text().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["rows"] == 0
        assert result.shard_paths == []

    def test_one_positive_one_negative(self, tmp_path):
        store = DatasetStore(tmp_path / "store")
        pos, neg = seg("a.wav", 0, 10), seg("b.wav", 0, 10)
        store.upsert_segments([pos, neg])
        store.record_decision(pos.segment_id, "chimp")
        store.record_decision(neg.segment_id, NEGATIVE_LABEL)
        result = export_training_set(store, {"MF": MF_CONFIG}, plan(), tone_provider(),
                                     tmp_path / "out")
        rows = [json.loads(l) for l in result.manifest_path.read_text().splitlines()][1:]
        assert len(rows) == 2
        by_seg = {r["segment_id"]: r for r in rows}
        assert by_seg[pos.segment_id]["labels"] == [1, 0]
        assert by_seg[neg.segment_id]["labels"] == [0, 0]

    def test_mixup_probability_one(self, tmp_path):
        store = DatasetStore(tmp_path / "store")
        positives = [seg(f"p{i}.wav", 0, 10) for i in range(10)]
        negatives = [seg(f"n{i}.wav", 0, 10) for i in range(5)]
        store.upsert_segments(positives + negatives)
        for s in positives:
            store.record_decision(s.segment_id, "chimp")
        for s in negatives:
            store.record_decision(s.segment_id, NEGATIVE_LABEL)
        result = export_training_set(
            store, {"MF": MF_CONFIG}, plan(p_base=1.0, p_max=1.0), tone_provider(),
            tmp_path / "out",
        )
        rows = [json.loads(l) for l in result.manifest_path.read_text().splitlines()][1:]
        train_pos = [r for r in rows if r["split"] == "train" and r["labels"] == [1, 0]
                     and not r["augmentation"]]
        mix_rows = [r for r in rows if r["augmentation"]
                    and r["augmentation"][0]["name"] == "mixup"]
        assert result.n_mixup == len(mix_rows) == len(train_pos)
        train_neg_ids = {r["segment_id"] for r in rows
                         if r["split"] == "train" and r["labels"] == [0, 0]}
        for r in mix_rows:
            assert r["augmentation"][0]["params"]["background_id"] in train_neg_ids

    def test_leakage_guard(self, tmp_path):
        store = DatasetStore(tmp_path / "store")
        segments = [seg(f"x{i}.wav", 0, 10) for i in range(10)]
        store.upsert_segments(segments)
        for s in segments:
            store.record_decision(s.segment_id, "chimp")
        split = make_split([s.segment_id for s in segments], seed=3)
        val_ids = [a.segment_id for a in split if a.split == "val"]
        poisoned = GlobalStats(0.0, 1.0, 10, "MF", fit_segment_ids=tuple(val_ids))
        with pytest.raises(LeakageError):
            export_training_set(store, {"MF": MF_CONFIG}, plan(), tone_provider(),
                                tmp_path / "out", stats={"MF": poisoned})

    def test_deterministic_manifest(self, tmp_path):
        def build(where):
            store = DatasetStore(where / "store")
            segments = [seg(f"x{i}.wav", 0, 10) for i in range(8)]
            store.upsert_segments(segments)
            for i, s in enumerate(segments):
                store.record_decision(s.segment_id, "chimp" if i % 2 else NEGATIVE_LABEL)
            return export_training_set(
                store, {"MF": MF_CONFIG}, plan(p_base=0.5), tone_provider(), where / "out"
            )

        r1 = build(tmp_path / "a")
        r2 = build(tmp_path / "b")
        assert r1.manifest_path.read_bytes() == r2.manifest_path.read_bytes()
        for p1, p2 in zip(r1.shard_paths, r2.shard_paths):
            assert p1.read_bytes() == p2.read_bytes()

    def test_post_normalization_mask_stage(self, tmp_path):
        store = DatasetStore(tmp_path / "store")
        positives = [seg(f"p{i}.wav", 0, 10) for i in range(6)]
        negatives = [seg(f"n{i}.wav", 0, 10) for i in range(3)]
        store.upsert_segments(positives + negatives)
        for s in positives:
            store.record_decision(s.segment_id, "chimp")
        for s in negatives:
            store.record_decision(s.segment_id, NEGATIVE_LABEL)
        result = export_training_set(
            store, {"MF": MF_CONFIG},
            plan(p_base=1.0, p_max=1.0, mask_stage="post_normalization"),
            tone_provider(), tmp_path / "out",
        )
        rows = [json.loads(l) for l in result.manifest_path.read_text().splitlines()][1:]
        mask_ops = [op for r in rows for op in r["augmentation"] if op["name"] == "spec_masks"]
        assert mask_ops and all(op["stage"] == "post_normalization" for op in mask_ops)
        for path in result.shard_paths:
            features, _ = read_feature_shard(path)
            assert all(f.normalized for f in features)

    def test_exported_shards_normalized_and_readable(self, tmp_path):
        store = DatasetStore(tmp_path / "store")
        segments = [seg(f"x{i}.wav", 0, 10) for i in range(6)]
        store.upsert_segments(segments)
        for i, s in enumerate(segments):
            store.record_decision(s.segment_id, "chimp" if i < 4 else NEGATIVE_LABEL)
        result = export_training_set(store, {"MF": MF_CONFIG}, plan(), tone_provider(),
                                     tmp_path / "out")
        for path in result.shard_paths:
            features, records = read_feature_shard(path)
            assert all(f.normalized for f in features)
            assert all(f.values.shape == (512, 128) for f in features)
            assert len(records) == len(features)
