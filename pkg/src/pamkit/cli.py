"""Command-line orchestration: detect | featurize | augment | cluster | export | eval | serve.

Outputs are written to temporary names and renamed on success, embed the
config digest, and are byte-identical across reruns with the same config and
seeds.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audio import AudioClip, ResampleSpec, assemble_excerpt, load_audio, resample, zscore_normalize
from .cluster import (
    read_embeddings,
    read_embeddings_text,
    reduce_embeddings,
    run_clustering,
    iterate_noise,
    seed_with_references,
    suggest_labels,
)
from .config import PipelineConfig, default_config, load_config
from .detect import detect_candidates
from .errors import PamkitError
from .evaluate import FileLabel, evaluate, threshold_grid, write_report
from .features import featurize, fit_global_stats, read_feature_shard, write_feature_shard
from .augment import spec_masks, attenuate_feature
from .store import (
    DatasetStore,
    ExportPlan,
    SegmentRecord,
    export_training_set,
    ingest_scores,
)

log = logging.getLogger("pamkit")

DATA_ROOT_ENV = "PAMKIT_DATA_ROOT"


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonl(records: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def _data_root(config: PipelineConfig) -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, config.data_root))


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        config.seed = args.seed
        config.reduction = replace(config.reduction, rng_seed=args.seed)
    if args.jobs is not None:
        config.jobs = args.jobs
    return config


def _wav_files(input_dir: Path) -> list[Path]:
    return sorted(p for p in input_dir.rglob("*.wav") if p.is_file())


# -- commands -----------------------------------------------------------------


def cmd_detect(args: argparse.Namespace) -> int:
    config = _load_config(args)
    input_dir = Path(args.input_dir)
    records: list[dict] = [{"type": "header", "config_digest": config.digest()}]
    bands = config.band_specs()
    spec = ResampleSpec(config.detection_rate_hz)
    for path in _wav_files(input_dir):
        try:
            clip = load_audio(path)
        except PamkitError as exc:
            log.warning("skipping unreadable file %s: %s", path, exc)
            continue
        rel = path.relative_to(input_dir).as_posix()
        if clip.sample_rate_hz > config.detection_rate_hz:
            clip = resample(clip, spec)
        clip = replace_source(clip, rel)
        candidates = detect_candidates(
            clip,
            bands,
            threshold_db=config.detection_threshold_db,
            win_s=config.detection_win_s,
            hop_s=config.detection_hop_s,
        )
        records.extend(c.to_record() for c in candidates)
    _atomic_write_text(Path(args.out), _jsonl(records))
    log.info("wrote %d candidates to %s", len(records) - 1, args.out)
    return 0


def replace_source(clip: AudioClip, source_id: str) -> AudioClip:
    return AudioClip(
        samples=clip.samples,
        sample_rate_hz=clip.sample_rate_hz,
        source_id=source_id,
        start_offset_s=clip.start_offset_s,
    )


def cmd_featurize(args: argparse.Namespace) -> int:
    config = _load_config(args)
    mel = config.mel[args.mel]
    input_dir = Path(args.input_dir)
    features = []
    meta = []
    for path in _wav_files(input_dir):
        clip = load_audio(path)
        if clip.sample_rate_hz != mel.sample_rate_hz:
            clip = resample(clip, ResampleSpec(mel.sample_rate_hz))
        clip = zscore_normalize(clip)
        rel = path.relative_to(input_dir).as_posix()
        features.append(featurize(clip, mel, segment_id=rel))
        meta.append({"segment_id": rel, "config_digest": config.digest()})
    if not features:
        log.warning("no wav files under %s; nothing written", input_dir)
        return 0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_feature_shard(out, features, meta)
    if args.stats_out:
        stats = fit_global_stats(features)
        _atomic_write_text(
            Path(args.stats_out),
            json.dumps({"config_digest": config.digest(), **stats.to_record()},
                       sort_keys=True, indent=2) + "\n",
        )
    log.info("wrote %d matrices to %s", len(features), out)
    return 0


def cmd_augment(args: argparse.Namespace) -> int:
    config = _load_config(args)
    features, meta = read_feature_shard(Path(args.in_shard))
    rng = np.random.default_rng(config.seed)
    out_features = []
    out_meta = []
    provenance = [{"type": "header", "config_digest": config.digest()}]
    ops_requested = args.ops.split(",") if args.ops else ["masks"]
    for feature, rec in zip(features, meta):
        ops_applied = []
        out = feature
        if "masks" in ops_requested:
            out, drawn = spec_masks(out, config.mask_params, rng)
            ops_applied.append({"name": "spec_masks", "params": {"masks": drawn},
                                "seed": config.seed})
        if "attenuation" in ops_requested:
            alpha = float(rng.uniform(*config.alpha_range_hz()))
            out = attenuate_feature(out, config.mel[out.config_name], alpha)
            ops_applied.append({"name": "propagation_attenuation",
                                "params": {"alpha_db_per_hz": alpha},
                                "seed": config.seed})
        out_features.append(out)
        base_id = rec.get("segment_id", "")
        out_meta.append({**rec, "segment_id": base_id, "augmented": True})
        provenance.append(
            {"output_id": f"{base_id}#aug", "base_segment_id": base_id, "ops": ops_applied}
        )
    out_path = Path(args.out_shard)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_feature_shard(out_path, out_features, out_meta)
    _atomic_write_text(Path(args.log_out or str(out_path) + ".provenance.jsonl"),
                       _jsonl(provenance))
    return 0


def _read_any_embeddings(path: str, kind: str):
    p = Path(path)
    if p.suffix in (".csv", ".txt"):
        embs = read_embeddings_text(p)
        return [replace(e, source_kind=kind) for e in embs]
    return read_embeddings(p, source_kind=kind)


def cmd_cluster(args: argparse.Namespace) -> int:
    config = _load_config(args)
    candidates = _read_any_embeddings(args.embeddings, "candidate")
    references = _read_any_embeddings(args.references, "reference") if args.references else []
    backgrounds = _read_any_embeddings(args.backgrounds, "background") if args.backgrounds else []
    ref_labels = {}
    if args.ref_labels:
        ref_labels = json.loads(Path(args.ref_labels).read_text())

    combined = seed_with_references(candidates, references, backgrounds)
    assignments, _ = run_clustering(combined, config.reduction, config.density)
    assignments = iterate_noise(
        combined, assignments, config.reduction, config.density,
        max_iterations=args.max_iterations,
    )
    assignments = suggest_labels(assignments, combined, ref_labels)

    records = [{"type": "header", "config_digest": config.digest(),
                "n_points": len(assignments)}]
    records.extend(a.to_record() for a in assignments)
    _atomic_write_text(Path(args.out), _jsonl(records))

    if args.proj2d:
        vectors = np.vstack([e.vector for e in combined])
        ids = [e.segment_id for e in combined]
        params2d = replace(config.reduction, out_dim=2)
        reduced = reduce_embeddings(vectors, params2d, ids=ids)
        lines = ["segment_id,x,y"]
        lines += [f"{sid},{x:.6f},{y:.6f}" for sid, (x, y) in zip(ids, reduced)]
        _atomic_write_text(Path(args.proj2d), "\n".join(lines) + "\n")
    n_clusters = len({a.cluster_id for a in assignments if a.cluster_id >= 0})
    log.info("clustered %d points into %d clusters", len(assignments), n_clusters)
    return 0


def _build_clip_provider(config: PipelineConfig, audio_root: Path, store: DatasetStore):
    """Excerpt assembly for export: cut, resample, fill to length, z-score."""
    from .store import NEGATIVE_LABEL

    cache: dict[str, AudioClip] = {}

    def load_source(source_id: str) -> AudioClip:
        if source_id not in cache:
            cache[source_id] = load_audio(audio_root / source_id)
        return cache[source_id]

    negatives = [
        sid for sid, lab in store.validated_labels().items() if lab == NEGATIVE_LABEL
    ]

    def _background_for(seg, negative_ids, total, rate, rng) -> AudioClip:
        pool = [sid for sid in negative_ids if sid != seg.segment_id]
        n = int(round(total * rate))
        if pool:
            choice = pool[int(rng.integers(0, len(pool)))]
            neg = store.get_segment(choice)
            src = load_source(neg.source_id)
            piece = src.slice_seconds(neg.t_start_s, neg.t_end_s)
            if piece.sample_rate_hz != rate:
                piece = resample(piece, ResampleSpec(rate))
            reps = int(np.ceil(n / max(len(piece.samples), 1)))
            samples = np.tile(piece.samples, reps)[:n]
            return AudioClip(samples, rate, source_id=choice)
        log.warning("no negative recordings for background fill; using silence")
        return AudioClip(np.zeros(n), rate, source_id="silence")

    def provider(seg: SegmentRecord) -> AudioClip:
        src = load_source(seg.source_id)
        label = store.validated_labels().get(seg.segment_id, "")
        species = label if label != NEGATIVE_LABEL else (seg.species_hint or "")
        mel = config.mel["LF"] if species in config.lf_species else config.mel["MF"]
        piece = src.slice_seconds(seg.t_start_s, seg.t_end_s)
        if piece.sample_rate_hz != mel.sample_rate_hz:
            piece = resample(piece, ResampleSpec(mel.sample_rate_hz))

        total = config.excerpt_dur_s
        if piece.duration_s >= total:
            excerpt = piece.slice_seconds(0, total)
        else:
            rng = np.random.default_rng(
                int.from_bytes(seg.segment_id.encode()[:8].ljust(8, b"\0"), "little")
                ^ config.seed
            )
            background = _background_for(seg, negatives, total, mel.sample_rate_hz, rng)
            excerpt = assemble_excerpt(
                piece, background, total, config.crossfade_dur_s, placement_rng=rng
            )
        return zscore_normalize(excerpt)

    return provider


def cmd_export(args: argparse.Namespace) -> int:
    config = _load_config(args)
    store = DatasetStore(args.store)
    audio_root = Path(args.audio_root) if args.audio_root else _data_root(config)
    plan = ExportPlan(
        species_order=config.species_order,
        lf_species=config.lf_species,
        seed=config.seed,
        p_base=config.p_base if args.augment else 0.0,
        p_max=config.p_max,
        mask_params=config.mask_params,
        mask_stage=config.mask_stage,
        snr_range_db=config.snr_range_db,
        alpha_range_db_per_hz=config.alpha_range_hz(),
        stratify_split=config.split_stratified,
    )
    provider = _build_clip_provider(config, audio_root, store)
    result = export_training_set(store, config.mel, plan, provider, args.out)
    if result.n_positive + result.n_negative == 0:
        log.warning("no validated labels; wrote an empty manifest")
    log.info(
        "exported %d positives, %d negatives, %d mixup rows to %s",
        result.n_positive, result.n_negative, result.n_mixup, args.out,
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args)
    digest = config.digest()
    for path in (args.scores, args.labels):
        head = Path(path).read_text().splitlines()
        if head:
            try:
                rec = json.loads(head[0])
            except json.JSONDecodeError:
                continue
            if rec.get("type") == "header" and rec.get("config_digest") not in (None, digest):
                log.error("%s was produced under config digest %s, current is %s",
                          path, rec.get("config_digest"), digest)
                return 2
    scores = ingest_scores(args.scores)
    labels = []
    with open(args.labels) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("type") == "header":
                continue
            labels.append(FileLabel(rec["file_id"], rec["species"], bool(rec["present"])))
    grid = threshold_grid(config.eval_threshold_lo, config.eval_threshold_hi,
                          config.eval_threshold_count)
    report = evaluate(scores, labels, config.species_order, grid, config_digest=digest)
    write_report(report, args.out, args.csv)
    for s in report.per_species:
        log.info("%s: AP=%.4f bestF1=%.4f @ %.3g", s.species, s.ap, s.best_f1, s.best_threshold)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .cluster import ClusterAssignment
    from .service import ClusterState, create_app

    config = _load_config(args)
    store = DatasetStore(args.store)
    state = ClusterState()
    if args.assignments:
        with open(args.assignments) as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if rec.get("type") == "header":
                    continue
                state.assignments.append(ClusterAssignment.from_record(rec))
    if args.embeddings:
        state.embeddings = _read_any_embeddings(args.embeddings, "candidate")
    if args.proj2d:
        for line in Path(args.proj2d).read_text().splitlines()[1:]:
            sid, x, y = line.split(",")
            state.coords_2d[sid] = (float(x), float(y))

    audio_root = Path(args.audio_root) if args.audio_root else _data_root(config)

    def audio_provider(segment_id: str) -> AudioClip | None:
        try:
            seg = store.get_segment(segment_id)
            src = load_audio(audio_root / seg.source_id)
            return src.slice_seconds(seg.t_start_s, seg.t_end_s)
        except (PamkitError, OSError):
            return None

    app = create_app(store, state, config, audio_provider)
    uvicorn.run(app, host=args.host, port=args.port or config.service_port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pamkit", description=__doc__)
    parser.add_argument("--config", help="pipeline config YAML")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--jobs", type=int, default=None, help="worker pool size")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect candidate segments in a directory of wav files")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("featurize", help="compute log-Mel shards for wav excerpts")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--mel", choices=("LF", "MF"), default="MF")
    p.add_argument("--out", required=True)
    p.add_argument("--stats-out")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("augment", help="apply masks/attenuation to a feature shard")
    p.add_argument("--in-shard", required=True)
    p.add_argument("--out-shard", required=True)
    p.add_argument("--ops", default="masks", help="comma list: masks,attenuation")
    p.add_argument("--log-out")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("cluster", help="reduce + cluster embeddings, suggest labels")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--references")
    p.add_argument("--backgrounds")
    p.add_argument("--ref-labels", help="JSON map segment_id -> species")
    p.add_argument("--max-iterations", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--proj2d", help="also write a 2-D projection CSV for the UI")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("export", help="materialize training shards + manifest from the store")
    p.add_argument("--store", required=True)
    p.add_argument("--audio-root")
    p.add_argument("--out", required=True)
    p.add_argument("--augment", action="store_true", help="enable augmentation rows")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("eval", help="evaluate detector score files against labels")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the review service")
    p.add_argument("--store", required=True)
    p.add_argument("--assignments")
    p.add_argument("--embeddings")
    p.add_argument("--proj2d")
    p.add_argument("--audio-root")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except PamkitError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
