"""Curated-dataset store: segments, label decisions, splits, and export.

Persistence is append-only newline-delimited JSON; the current label view is
a pure fold of the decision log, so history is never lost and any state can
be rebuilt by replaying the files. No external database is involved.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from .audio import AudioClip
from .augment import (
    MaskParams,
    MixupParams,
    attenuate_feature,
    augmentation_probability,
    mixup,
    spec_masks,
)
from .errors import (
    ConflictError,
    EmptyInputError,
    LeakageError,
    ParamError,
    UnknownSegmentError,
    ValidationError,
)
from .features import (
    FeatureMatrix,
    GlobalStats,
    MelConfig,
    StatsAccumulator,
    apply_global_stats,
    featurize,
    write_feature_shard,
)

NEGATIVE_LABEL = "NEGATIVE"
SOURCE_KINDS = ("passive", "handheld", "camera_trap", "public")
LABEL_STATUSES = ("suggested", "validated", "rejected")

TRAIN_FRACTION = 0.8


def make_segment_id(source_id: str, t_start_s: float, t_end_s: float) -> str:
    """Content-derived id: stable across re-runs of the same detection."""
    start_ms = int(round(t_start_s * 1000))
    end_ms = int(round(t_end_s * 1000))
    digest = hashlib.sha256(f"{source_id}|{start_ms}|{end_ms}".encode()).hexdigest()
    return digest[:16]


@dataclass(frozen=True)
class SegmentRecord:
    segment_id: str
    source_id: str
    t_start_s: float
    t_end_s: float
    source_kind: str = "passive"
    species_hint: str | None = None

    def __post_init__(self) -> None:
        if self.t_end_s <= self.t_start_s:
            raise ParamError(f"{self.segment_id}: empty interval")
        if self.source_kind not in SOURCE_KINDS:
            raise ParamError(f"{self.segment_id}: unknown source_kind {self.source_kind!r}")

    @classmethod
    def create(cls, source_id: str, t_start_s: float, t_end_s: float,
               source_kind: str = "passive", species_hint: str | None = None) -> "SegmentRecord":
        return cls(
            segment_id=make_segment_id(source_id, t_start_s, t_end_s),
            source_id=source_id,
            t_start_s=t_start_s,
            t_end_s=t_end_s,
            source_kind=source_kind,
            species_hint=species_hint,
        )

    def to_record(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "source_id": self.source_id,
            "t_start_s": self.t_start_s,
            "t_end_s": self.t_end_s,
            "source_kind": self.source_kind,
            "species_hint": self.species_hint,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SegmentRecord":
        return cls(
            segment_id=rec["segment_id"],
            source_id=rec["source_id"],
            t_start_s=float(rec["t_start_s"]),
            t_end_s=float(rec["t_end_s"]),
            source_kind=rec.get("source_kind", "passive"),
            species_hint=rec.get("species_hint"),
        )


@dataclass(frozen=True)
class LabelRecord:
    segment_id: str
    label: str  # species name or NEGATIVE
    status: str
    annotator: str = ""
    seq: int = 0  # store-assigned, monotonic
    timestamp: float = 0.0
    note: str | None = None
    decision_id: str | None = None  # idempotency key from the review UI

    def __post_init__(self) -> None:
        if self.status not in LABEL_STATUSES:
            raise ParamError(f"{self.segment_id}: unknown status {self.status!r}")

    def to_record(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "label": self.label,
            "status": self.status,
            "annotator": self.annotator,
            "seq": self.seq,
            "timestamp": self.timestamp,
            "note": self.note,
            "decision_id": self.decision_id,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "LabelRecord":
        return cls(
            segment_id=rec["segment_id"],
            label=rec["label"],
            status=rec["status"],
            annotator=rec.get("annotator", ""),
            seq=int(rec.get("seq", 0)),
            timestamp=float(rec.get("timestamp", 0.0)),
            note=rec.get("note"),
            decision_id=rec.get("decision_id"),
        )


@dataclass(frozen=True)
class SplitAssignment:
    segment_id: str
    split: str  # train | val
    split_seed: int


@dataclass(frozen=True)
class ScoreRecord:
    file_id: str
    species: str
    scores: tuple[float, ...]


def make_split(
    segment_ids: Iterable[str],
    seed: int,
    stratify_by: Mapping[str, str] | None = None,
) -> list[SplitAssignment]:
    """Deterministic 80/20 split keyed by (seed, id); floor(0.8 n) to train.

    With stratify_by (id -> stratum), the rule applies within each stratum.
    """
    ids = sorted(set(segment_ids))
    if not ids:
        raise EmptyInputError("no segment ids to split")

    def shuffled(group: list[str]) -> list[str]:
        return sorted(group, key=lambda s: hashlib.sha256(f"{seed}:{s}".encode()).hexdigest())

    out: list[SplitAssignment] = []
    if stratify_by is None:
        groups = [ids]
    else:
        strata: dict[str, list[str]] = {}
        for sid in ids:
            strata.setdefault(stratify_by.get(sid, ""), []).append(sid)
        groups = [strata[k] for k in sorted(strata)]
    for group in groups:
        ordered = shuffled(group)
        n_train = int(TRAIN_FRACTION * len(ordered))
        for i, sid in enumerate(ordered):
            out.append(SplitAssignment(sid, "train" if i < n_train else "val", seed))
    out.sort(key=lambda a: a.segment_id)
    return out


class DatasetStore:
    """Append-only store rooted at a directory (segments.jsonl, labels.jsonl)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.segments_path = self.root / "segments.jsonl"
        self.labels_path = self.root / "labels.jsonl"
        self._segments: dict[str, SegmentRecord] = {}
        self._label_log: list[LabelRecord] = []
        self._decision_ids: dict[str, LabelRecord] = {}
        self._load()

    def _load(self) -> None:
        if self.segments_path.exists():
            with open(self.segments_path) as fh:
                for line in fh:
                    if line.strip():
                        rec = SegmentRecord.from_record(json.loads(line))
                        self._segments[rec.segment_id] = rec
        if self.labels_path.exists():
            with open(self.labels_path) as fh:
                for line in fh:
                    if line.strip():
                        rec = LabelRecord.from_record(json.loads(line))
                        self._label_log.append(rec)
                        if rec.decision_id:
                            self._decision_ids[rec.decision_id] = rec

    # -- segments ---------------------------------------------------------

    def upsert_segments(self, records: Iterable[SegmentRecord]) -> int:
        """Idempotent by segment_id; conflicting intervals for an id refuse."""
        new: list[SegmentRecord] = []
        for rec in records:
            existing = self._segments.get(rec.segment_id)
            if existing is None:
                self._segments[rec.segment_id] = rec
                new.append(rec)
            elif (existing.source_id, existing.t_start_s, existing.t_end_s) != (
                rec.source_id, rec.t_start_s, rec.t_end_s
            ):
                raise ConflictError(
                    f"{rec.segment_id}: existing interval differs from upserted record"
                )
        if new:
            with open(self.segments_path, "a") as fh:
                for rec in new:
                    fh.write(json.dumps(rec.to_record(), sort_keys=True) + "\n")
        return len(self._segments)

    def segments(self) -> dict[str, SegmentRecord]:
        return dict(self._segments)

    def get_segment(self, segment_id: str) -> SegmentRecord:
        try:
            return self._segments[segment_id]
        except KeyError:
            raise UnknownSegmentError(f"unknown segment {segment_id}") from None

    # -- label decisions ----------------------------------------------------

    def record_decision(
        self,
        segment_id: str,
        label: str,
        status: str = "validated",
        annotator: str = "",
        note: str | None = None,
        decision_id: str | None = None,
    ) -> LabelRecord:
        """Append one decision; replays of a known decision_id are no-ops."""
        if segment_id not in self._segments:
            raise UnknownSegmentError(f"unknown segment {segment_id}")
        if decision_id and decision_id in self._decision_ids:
            prior = self._decision_ids[decision_id]
            if (prior.segment_id, prior.label, prior.status) != (segment_id, label, status):
                raise ConflictError(f"decision_id {decision_id} replayed with different payload")
            return prior
        rec = LabelRecord(
            segment_id=segment_id,
            label=label,
            status=status,
            annotator=annotator,
            seq=len(self._label_log) + 1,
            timestamp=time.time(),
            note=note,
            decision_id=decision_id,
        )
        self._label_log.append(rec)
        if decision_id:
            self._decision_ids[decision_id] = rec
        with open(self.labels_path, "a") as fh:
            fh.write(json.dumps(rec.to_record(), sort_keys=True) + "\n")
        return rec

    def reject_cluster(self, segment_ids: Iterable[str], annotator: str = "",
                       decision_id: str | None = None) -> int:
        """False positives become validated NEGATIVE training segments."""
        count = 0
        for i, sid in enumerate(sorted(set(segment_ids))):
            per_segment = f"{decision_id}:{i}" if decision_id else None
            self.record_decision(sid, NEGATIVE_LABEL, status="validated",
                                 annotator=annotator, decision_id=per_segment)
            count += 1
        return count

    def label_log(self) -> list[LabelRecord]:
        return list(self._label_log)

    def current_labels(self) -> dict[str, LabelRecord]:
        """Latest decision per segment (pure fold of the append-only log)."""
        view: dict[str, LabelRecord] = {}
        for rec in self._label_log:
            view[rec.segment_id] = rec
        return view

    def validated_labels(self) -> dict[str, str]:
        """segment_id -> label for segments whose current status is validated."""
        return {
            sid: rec.label
            for sid, rec in self.current_labels().items()
            if rec.status == "validated"
        }


# -- score ingestion ---------------------------------------------------------


def ingest_scores(path: str | Path) -> list[ScoreRecord]:
    """Read detector score records {file_id, species, scores: [..]} from JSONL."""
    path = Path(path)
    out: list[ScoreRecord] = []
    seen: set[tuple[str, str]] = set()
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("type") == "header":
                continue
            file_id, species = rec["file_id"], rec["species"]
            key = (file_id, species)
            if key in seen:
                raise ValidationError(f"{path}:{ln}: duplicate record for {key}")
            seen.add(key)
            scores = [float(s) for s in rec["scores"]]
            for s in scores:
                if not (0.0 <= s <= 1.0):
                    raise ValidationError(f"{path}:{ln}: score {s} outside [0, 1]")
            out.append(ScoreRecord(file_id=file_id, species=species, scores=tuple(scores)))
    return out


# -- training-set export ------------------------------------------------------


@dataclass(frozen=True)
class ExportPlan:
    """What to materialize: species order, per-species config, augmentation."""

    species_order: tuple[str, ...]
    lf_species: frozenset[str] = frozenset()
    seed: int = 0
    p_base: float = 0.0  # 0 disables augmentation entirely
    p_max: float = 0.8
    mask_params: MaskParams = MaskParams()
    mask_stage: str = "pre_normalization"  # or post_normalization
    snr_range_db: tuple[float, float] = (3.0, 15.0)
    alpha_range_db_per_hz: tuple[float, float] = (0.002, 0.004)
    normalize: bool = True
    stratify_split: bool = False


@dataclass
class ExportResult:
    manifest_path: Path
    shard_paths: list[Path]
    n_positive: int
    n_negative: int
    n_mixup: int
    n_handheld_attenuated: int


def export_training_set(
    store: DatasetStore,
    mel_configs: Mapping[str, MelConfig],
    plan: ExportPlan,
    clip_provider: Callable[[SegmentRecord], AudioClip],
    out_dir: str | Path,
    stats: Mapping[str, GlobalStats] | None = None,
) -> ExportResult:
    """Materialize per-split feature shards plus a manifest.

    clip_provider returns the excerpt-ready clip (assembled, z-scored, at the
    config's rate) for a segment. Statistics are fitted on the train split
    only; passing stats fitted on any validation segment refuses with a
    leakage error. Augmented rows are generated for the train split with an
    inverse-class-frequency probability and logged with full provenance.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.jsonl"

    validated = store.validated_labels()
    known = {sid: lab for sid, lab in validated.items()
             if lab == NEGATIVE_LABEL or lab in plan.species_order}
    if not known:
        with open(manifest_path, "w") as fh:
            fh.write(json.dumps({"type": "header", "species_order": list(plan.species_order),
                                 "counts": {"positive": 0, "negative": 0, "mixup": 0},
                                 "rows": 0}, sort_keys=True) + "\n")
        return ExportResult(manifest_path, [], 0, 0, 0, 0)

    stratify = None
    if plan.stratify_split:
        stratify = {sid: known[sid] for sid in known}
    split_of = {a.segment_id: a.split for a in make_split(known, plan.seed, stratify)}

    def config_for(sid: str) -> MelConfig:
        label = known[sid]
        seg = store.get_segment(sid)
        species = label if label != NEGATIVE_LABEL else (seg.species_hint or "")
        return mel_configs["LF"] if species in plan.lf_species else mel_configs["MF"]

    # Featurize originals once, grouped by (split, config).
    raw_features: dict[str, FeatureMatrix] = {}
    clips: dict[str, AudioClip] = {}
    for sid in sorted(known):
        clip = clip_provider(store.get_segment(sid))
        clips[sid] = clip
        raw_features[sid] = featurize(clip, config_for(sid), segment_id=sid)

    # Global statistics: train split only (per config).
    train_ids = sorted(sid for sid in known if split_of[sid] == "train")
    val_ids = {sid for sid in known if split_of[sid] == "val"}
    if stats is None:
        accs: dict[str, StatsAccumulator] = {}
        for sid in train_ids:
            f = raw_features[sid]
            accs.setdefault(f.config_name, StatsAccumulator(f.config_name)).update(f)
        stats = {name: acc.finalize() for name, acc in accs.items()}
    else:
        for st in stats.values():
            contaminated = set(st.fit_segment_ids) & val_ids
            if contaminated:
                raise LeakageError(
                    f"stats for {st.config_name} were fitted on validation segments: "
                    f"{sorted(contaminated)[:3]}..."
                )

    class_counts: dict[str, int] = {}
    for sid in train_ids:
        lab = known[sid]
        if lab != NEGATIVE_LABEL:
            class_counts[lab] = class_counts.get(lab, 0) + 1
    max_count = max(class_counts.values(), default=0)
    train_negatives = [sid for sid in train_ids if known[sid] == NEGATIVE_LABEL]

    def label_vector(label: str) -> list[int]:
        return [1 if label == sp else 0 for sp in plan.species_order]

    rows: list[dict] = []
    outputs: dict[tuple[str, str], list[FeatureMatrix]] = {}
    metas: dict[tuple[str, str], list[dict]] = {}
    n_mixup = 0
    n_attenuated = 0

    def emit(split: str, feature: FeatureMatrix, sid: str, output_id: str,
             label: str, ops: list[dict]) -> None:
        cfg = feature.config_name
        if plan.normalize and cfg in stats and not feature.normalized:
            feature = apply_global_stats(feature, stats[cfg])
        key = (split, cfg)
        outputs.setdefault(key, []).append(feature)
        meta = {
            "output_id": output_id,
            "segment_id": sid,
            "labels": label_vector(label),
            "label_names": [] if label == NEGATIVE_LABEL else [label],
            "split": split,
            "augmentation": ops,
        }
        metas.setdefault(key, []).append(meta)
        rows.append({"type": "row", "shard": f"{split}_{cfg}.pfgf", **meta})

    for sid in sorted(known):
        split = split_of[sid]
        label = known[sid]
        emit(split, raw_features[sid], sid, sid, label, [])
        if split != "train" or label == NEGATIVE_LABEL or plan.p_base <= 0 or max_count == 0:
            continue

        p = augmentation_probability(class_counts[label], max_count, plan.p_base, plan.p_max)
        seg_seed = int.from_bytes(hashlib.sha256(f"{plan.seed}:{sid}".encode()).digest()[:8], "little")
        rng = np.random.default_rng(seg_seed)
        seg = store.get_segment(sid)
        config = config_for(sid)

        if rng.random() < p and train_negatives:
            bg_sid = train_negatives[int(rng.integers(0, len(train_negatives)))]
            snr = float(rng.uniform(*plan.snr_range_db))
            mixed, info = mixup(clips[sid], clips[bg_sid], MixupParams(snr, bg_sid))
            feature = featurize(mixed, config, segment_id=sid)
            ops = [{"name": "mixup", "params": {"snr_db": snr, "background_id": bg_sid,
                                                "limiter_fired": info["limiter_fired"]},
                    "seed": seg_seed}]
            if plan.mask_stage == "post_normalization" and plan.normalize \
                    and config.name in stats:
                feature = apply_global_stats(feature, stats[config.name])
            feature, drawn = spec_masks(feature, plan.mask_params, rng)
            ops.append({"name": "spec_masks", "params": {"masks": drawn},
                        "stage": plan.mask_stage, "seed": seg_seed})
            emit(split, feature, sid, f"{sid}#mix", label, ops)
            n_mixup += 1

        if seg.source_kind == "handheld" and rng.random() < p:
            alpha = float(rng.uniform(*plan.alpha_range_db_per_hz))
            feature = attenuate_feature(raw_features[sid], config, alpha)
            ops = [{"name": "propagation_attenuation",
                    "params": {"alpha_db_per_hz": alpha}, "seed": seg_seed}]
            emit(split, feature, sid, f"{sid}#att", label, ops)
            n_attenuated += 1

    shard_paths: list[Path] = []
    for (split, cfg), feats in sorted(outputs.items()):
        path = out_dir / f"{split}_{cfg}.pfgf"
        write_feature_shard(path, feats, metas[(split, cfg)])
        shard_paths.append(path)

    n_positive = sum(1 for sid in known if known[sid] != NEGATIVE_LABEL)
    n_negative = len(known) - n_positive
    header = {
        "type": "header",
        "species_order": list(plan.species_order),
        "counts": {"positive": n_positive, "negative": n_negative, "mixup": n_mixup,
                   "handheld_attenuated": n_attenuated},
        "stats": {name: st.to_record() for name, st in sorted(stats.items())},
        "rows": len(rows),
    }
    with open(manifest_path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return ExportResult(manifest_path, shard_paths, n_positive, n_negative, n_mixup, n_attenuated)
