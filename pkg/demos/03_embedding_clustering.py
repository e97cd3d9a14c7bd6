"""Clustering segment embeddings: reduce, cluster, re-cluster noise, suggest.

Three synthetic "species" blobs plus labeled references and background
noise; the pipeline separates them, recovers a small blob hidden in noise on
the second pass, and suggests labels from the references.
"""
import numpy as np

from pamkit.cluster import (
    DensityParams,
    Embedding,
    ReductionParams,
    iterate_noise,
    run_clustering,
    seed_with_references,
    suggest_labels,
)

rng = np.random.default_rng(2)

centers = {"warbler": (0, 0, 0), "dove": (40, 0, 0), "frog": (0, 40, 0)}
candidates, references, backgrounds = [], [], []
ref_labels = {}
for name, center in centers.items():
    pts = np.array(center, dtype=float) + rng.normal(0, 0.5, (25, 3))
    candidates += [Embedding(f"cand_{name}_{i}", "demo-encoder", v) for i, v in enumerate(pts)]
    ref_pts = np.array(center, dtype=float) + rng.normal(0, 0.5, (6, 3))
    for i, v in enumerate(ref_pts):
        rid = f"ref_{name}_{i}"
        references.append(Embedding(rid, "demo-encoder", v))
        ref_labels[rid] = name
backgrounds = [
    Embedding(f"bg_{i}", "demo-encoder", np.array([20.0, 20.0, 30.0]) + rng.normal(0, 0.5, 3))
    for i in range(18)
]

combined = seed_with_references(candidates, references, backgrounds)
params_r = ReductionParams(n_neighbors=12, n_epochs=100, rng_seed=0)
params_d = DensityParams(min_cluster_size=15, min_samples=2)

assignments, reduced = run_clustering(combined, params_r, params_d)
n_noise = sum(a.cluster_id == -1 for a in assignments)
print(f"first pass: {len(set(a.cluster_id for a in assignments if a.cluster_id >= 0))} "
      f"clusters, {n_noise} noise points")

assignments = iterate_noise(combined, assignments, params_r, params_d, max_iterations=3)
assignments = suggest_labels(assignments, combined, ref_labels)

by_cluster = {}
for a in assignments:
    by_cluster.setdefault(a.cluster_id, []).append(a)
print("\ncluster -> size, suggestion:")
for cid in sorted(by_cluster):
    members = by_cluster[cid]
    suggestion = next((a.suggested_label for a in members if a.suggested_label), None)
    print(f"  {cid:3d}: {len(members):3d} members, suggested: {suggestion}")
