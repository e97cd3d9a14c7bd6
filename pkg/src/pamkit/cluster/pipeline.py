"""Clustering passes: reference seeding, noise re-clustering, label suggestion."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from ..errors import ParamError
from .density import DensityParams, hdbscan_labels
from .io import Embedding, check_same_model
from .reduce import ReductionParams, reduce_embeddings

REFERENCE_PURITY_GATE = 0.8
REFERENCE_COUNT_GATE = 3
BACKGROUND_FLAG = "background"


@dataclass(frozen=True)
class ClusterAssignment:
    segment_id: str
    cluster_id: int  # -1 = noise
    membership_strength: float
    iteration: int = 0
    suggested_label: str | None = None

    def to_record(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "cluster_id": self.cluster_id,
            "membership_strength": round(self.membership_strength, 6),
            "iteration": self.iteration,
            "suggested_label": self.suggested_label,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ClusterAssignment":
        return cls(
            segment_id=rec["segment_id"],
            cluster_id=int(rec["cluster_id"]),
            membership_strength=float(rec["membership_strength"]),
            iteration=int(rec.get("iteration", 0)),
            suggested_label=rec.get("suggested_label"),
        )


def seed_with_references(
    candidates: list[Embedding],
    references: list[Embedding],
    backgrounds: list[Embedding],
) -> list[Embedding]:
    """Concatenate the candidate, reference, and background pools for one run."""
    combined = (
        [replace(e, source_kind="candidate") for e in candidates]
        + [replace(e, source_kind="reference") for e in references]
        + [replace(e, source_kind="background") for e in backgrounds]
    )
    check_same_model(combined)
    return combined


def run_clustering(
    embeddings: list[Embedding],
    reduction_params: ReductionParams = ReductionParams(),
    density_params: DensityParams = DensityParams(),
) -> tuple[list[ClusterAssignment], np.ndarray]:
    """First clustering pass; returns assignments and the reduced points."""
    check_same_model(embeddings)
    vectors = np.vstack([e.vector for e in embeddings])
    ids = [e.segment_id for e in embeddings]
    reduced = reduce_embeddings(vectors, reduction_params, ids=ids)
    labels, strengths = hdbscan_labels(reduced, density_params)
    assignments = [
        ClusterAssignment(
            segment_id=e.segment_id,
            cluster_id=int(lab),
            membership_strength=float(s),
            iteration=0,
        )
        for e, lab, s in zip(embeddings, labels, strengths)
    ]
    return assignments, reduced


def iterate_noise(
    embeddings: list[Embedding],
    assignments: list[ClusterAssignment],
    reduction_params: ReductionParams = ReductionParams(),
    density_params: DensityParams = DensityParams(),
    max_iterations: int = 3,
) -> list[ClusterAssignment]:
    """Re-reduce and re-cluster noise points until no new clusters appear.

    Already-clustered points are never touched; new cluster ids continue past
    the existing maximum, and the iteration counter records which pass found
    each cluster.
    """
    by_id = {e.segment_id: e for e in embeddings}
    missing = [a.segment_id for a in assignments if a.segment_id not in by_id]
    if missing:
        raise ParamError(f"assignments reference unknown embeddings, e.g. {missing[0]}")

    current = {a.segment_id: a for a in assignments}
    iteration = max((a.iteration for a in assignments), default=0)

    for _ in range(max_iterations):
        noise_ids = [sid for sid, a in current.items() if a.cluster_id == -1]
        if len(noise_ids) < density_params.min_cluster_size:
            break
        if len(noise_ids) <= reduction_params.n_neighbors:
            break  # too few points to rebuild a neighborhood graph
        iteration += 1
        vectors = np.vstack([by_id[sid].vector for sid in noise_ids])
        params = replace(reduction_params, rng_seed=reduction_params.rng_seed + iteration)
        reduced = reduce_embeddings(vectors, params, ids=noise_ids)
        labels, strengths = hdbscan_labels(reduced, density_params)
        if labels.max(initial=-1) < 0:
            break  # no new clusters
        offset = max((a.cluster_id for a in current.values()), default=-1) + 1
        for sid, lab, s in zip(noise_ids, labels, strengths):
            if lab >= 0:
                current[sid] = ClusterAssignment(
                    segment_id=sid,
                    cluster_id=offset + int(lab),
                    membership_strength=float(s),
                    iteration=iteration,
                )
    return [current[a.segment_id] for a in assignments]


def suggest_labels(
    assignments: list[ClusterAssignment],
    embeddings: list[Embedding],
    reference_labels: Mapping[str, str],
) -> list[ClusterAssignment]:
    """Attach per-cluster label suggestions from reference members.

    A cluster gets the majority reference species when at least
    REFERENCE_COUNT_GATE references agree with purity >= REFERENCE_PURITY_GATE;
    clusters dominated by background segments are flagged instead.
    """
    kind_of = {e.segment_id: e.source_kind for e in embeddings}
    members: dict[int, list[str]] = {}
    for a in assignments:
        if a.cluster_id >= 0:
            members.setdefault(a.cluster_id, []).append(a.segment_id)

    suggestion: dict[int, str | None] = {}
    for cid, sids in members.items():
        n_background = sum(1 for s in sids if kind_of.get(s) == "background")
        refs = [reference_labels[s] for s in sids
                if kind_of.get(s) == "reference" and s in reference_labels]
        label: str | None = None
        if n_background * 2 > len(sids):
            label = BACKGROUND_FLAG
        elif len(refs) >= REFERENCE_COUNT_GATE:
            top, top_count = Counter(refs).most_common(1)[0]
            if top_count / len(refs) >= REFERENCE_PURITY_GATE:
                label = top
        suggestion[cid] = label

    return [
        replace(a, suggested_label=suggestion.get(a.cluster_id))
        if a.cluster_id >= 0
        else a
        for a in assignments
    ]
