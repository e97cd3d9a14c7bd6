"""Nonlinear dimensionality reduction (UMAP procedure).

A fuzzy simplicial set is built from the exact kNN graph (smooth-kNN
bandwidth calibration with local connectivity 1), symmetrized by
probabilistic union, initialized spectrally, and laid out by stochastic
gradient descent with negative sampling. The serial mode is deterministic
for a fixed seed; the parallel mode trades that for speed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse
from scipy.optimize import curve_fit

from ..errors import ParamError
from .knn import knn_graph

SMOOTH_K_TOLERANCE = 1e-5
MIN_K_DIST_SCALE = 1e-3


@dataclass(frozen=True)
class ReductionParams:
    n_neighbors: int = 50
    min_dist: float = 0.1
    out_dim: int = 5
    n_epochs: int = 200
    rng_seed: int = 0
    spread: float = 1.0
    negative_sample_rate: int = 5
    learning_rate: float = 1.0
    parallel: bool = False

    def __post_init__(self) -> None:
        if self.n_neighbors < 2:
            raise ParamError("n_neighbors must be >= 2")
        if self.min_dist < 0:
            raise ParamError("min_dist must be >= 0")
        if self.out_dim < 2:
            raise ParamError("out_dim must be >= 2")
        if self.n_epochs < 0:
            raise ParamError("n_epochs must be >= 0")


def smooth_knn_calibration(
    knn_dists: np.ndarray,
    k: float,
    n_iter: int = 64,
    local_connectivity: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-point bandwidth sigma and connectivity offset rho.

    sigma_i solves sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(k) by
    binary search; rho_i is the distance to the first non-identical neighbor.
    """
    n = knn_dists.shape[0]
    target = np.log2(k)
    rho = np.zeros(n)
    sigma = np.zeros(n)
    mean_all = float(np.mean(knn_dists)) if knn_dists.size else 0.0

    for i in range(n):
        row = knn_dists[i]
        nonzero = row[row > 0.0]
        if nonzero.size >= local_connectivity:
            index = int(np.floor(local_connectivity))
            frac = local_connectivity - index
            if index > 0:
                rho[i] = nonzero[index - 1]
                if frac > SMOOTH_K_TOLERANCE:
                    rho[i] += frac * (nonzero[index] - nonzero[index - 1])
            else:
                rho[i] = frac * nonzero[0]
        elif nonzero.size > 0:
            rho[i] = float(np.max(nonzero))

        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(n_iter):
            shifted = row[1:] - rho[i]
            psum = float(np.sum(np.exp(-np.maximum(shifted, 0.0) / mid)))
            if abs(psum - target) < SMOOTH_K_TOLERANCE:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                mid = mid * 2.0 if hi == np.inf else (lo + hi) / 2.0
        sigma[i] = mid

        if rho[i] > 0.0:
            sigma[i] = max(sigma[i], MIN_K_DIST_SCALE * float(np.mean(row)))
        else:
            sigma[i] = max(sigma[i], MIN_K_DIST_SCALE * mean_all)
    return sigma, rho


def fuzzy_simplicial_set(
    vectors: np.ndarray,
    n_neighbors: int,
    ids: list[str] | None = None,
) -> scipy.sparse.coo_matrix:
    """Symmetrized membership-strength graph from the exact kNN graph."""
    n = vectors.shape[0]
    # Neighbor slots include the point itself first, mirroring the convention
    # that n_neighbors counts self.
    nn_idx, nn_dist = knn_graph(vectors, n_neighbors - 1, ids=ids)
    knn_indices = np.hstack([np.arange(n)[:, None], nn_idx])
    knn_dists = np.hstack([np.zeros((n, 1)), nn_dist])

    sigma, rho = smooth_knn_calibration(knn_dists, float(n_neighbors))

    rows = np.repeat(np.arange(n), n_neighbors)
    cols = knn_indices.ravel()
    shifted = knn_dists - rho[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.exp(-np.maximum(shifted, 0.0) / sigma[:, None])
    vals[:, 0] = 0.0  # no self loops
    vals[knn_dists - rho[:, None] <= 0.0] = 1.0
    vals[:, 0] = 0.0
    vals = vals.ravel()

    graph = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n))
    graph.sum_duplicates()
    transpose = graph.transpose()
    product = graph.multiply(transpose)
    graph = graph + transpose - product  # probabilistic union
    graph = graph.tocoo()
    graph.eliminate_zeros()
    return graph


def find_ab_params(spread: float, min_dist: float) -> tuple[float, float]:
    """Fit the differentiable attraction curve 1/(1 + a x^(2b)) to the
    min_dist-offset exponential."""

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    xv = np.linspace(0, spread * 3, 300)
    yv = np.zeros_like(xv)
    yv[xv < min_dist] = 1.0
    yv[xv >= min_dist] = np.exp(-(xv[xv >= min_dist] - min_dist) / spread)
    params, _ = curve_fit(curve, xv, yv)
    return float(params[0]), float(params[1])


def spectral_init(graph: scipy.sparse.spmatrix, out_dim: int) -> np.ndarray:
    """Normalized-Laplacian eigenvector initialization, rescaled to [0, 10]."""
    n = graph.shape[0]
    deg = np.asarray(graph.sum(axis=1)).ravel()
    deg_safe = np.where(deg > 0, deg, 1.0)
    d_inv_sqrt = 1.0 / np.sqrt(deg_safe)
    w = graph.tocoo()
    lap = scipy.sparse.identity(n) - scipy.sparse.coo_matrix(
        (w.data * d_inv_sqrt[w.row] * d_inv_sqrt[w.col], (w.row, w.col)), shape=(n, n)
    )
    k = out_dim + 1
    if n <= 2000 or k >= n - 1:
        vals, vecs = np.linalg.eigh(lap.toarray())
        order = np.argsort(vals)
    else:
        # Largest eigenvectors of the normalized adjacency are the smallest
        # of the Laplacian; eigsh converges much faster on the former.
        adj = scipy.sparse.identity(n) - lap
        v0 = np.full(n, 1.0 / np.sqrt(n))
        vals, vecs = scipy.sparse.linalg.eigsh(adj.tocsc(), k=k, which="LA", v0=v0)
        order = np.argsort(-vals)
    emb = vecs[:, order[1 : out_dim + 1]]
    if emb.shape[1] < out_dim:  # degenerate graph; pad with zeros
        emb = np.hstack([emb, np.zeros((n, out_dim - emb.shape[1]))])
    span = emb.max(axis=0) - emb.min(axis=0)
    scaled = np.where(span > 0, 10.0 * (emb - emb.min(axis=0)) / np.where(span > 0, span, 1.0), 0.0)
    return np.ascontiguousarray(scaled, dtype=np.float64)


def make_epochs_per_sample(weights: np.ndarray, n_epochs: int) -> np.ndarray:
    result = -1.0 * np.ones(weights.shape[0])
    n_samples = n_epochs * (weights / weights.max())
    result[n_samples > 0] = float(n_epochs) / n_samples[n_samples > 0]
    return result


@numba.njit(cache=True)
def _clip(val):
    if val > 4.0:
        return 4.0
    if val < -4.0:
        return -4.0
    return val


@numba.njit(cache=True)
def _xorshift(state):
    if state == np.uint64(0):
        state = np.uint64(0x9E3779B97F4A7C15)
    state ^= state << np.uint64(13)
    state ^= state >> np.uint64(7)
    state ^= state << np.uint64(17)
    return state


@numba.njit(cache=True)
def _sgd_layout(
    embedding,
    head,
    tail,
    epochs_per_sample,
    n_epochs,
    a,
    b,
    initial_alpha,
    negative_sample_rate,
    seed,
):
    """Serial SGD over edges with negative sampling; deterministic per seed."""
    n_vertices, dim = embedding.shape
    state = np.uint64(seed) * np.uint64(2654435761) + np.uint64(1)
    epochs_per_negative_sample = epochs_per_sample / negative_sample_rate
    epoch_of_next_negative_sample = epochs_per_negative_sample.copy()
    epoch_of_next_sample = epochs_per_sample.copy()
    alpha = initial_alpha

    for epoch in range(n_epochs):
        for i in range(epochs_per_sample.shape[0]):
            if epoch_of_next_sample[i] > epoch:
                continue
            j = head[i]
            k = tail[i]
            dist_sq = 0.0
            for d in range(dim):
                diff = embedding[j, d] - embedding[k, d]
                dist_sq += diff * diff
            if dist_sq > 0.0:
                grad_coeff = -2.0 * a * b * dist_sq ** (b - 1.0)
                grad_coeff /= a * dist_sq**b + 1.0
            else:
                grad_coeff = 0.0
            for d in range(dim):
                grad_d = _clip(grad_coeff * (embedding[j, d] - embedding[k, d]))
                embedding[j, d] += grad_d * alpha
                embedding[k, d] -= grad_d * alpha
            epoch_of_next_sample[i] += epochs_per_sample[i]

            n_neg = int((epoch - epoch_of_next_negative_sample[i]) / epochs_per_negative_sample[i])
            for _ in range(n_neg):
                state = _xorshift(state)
                k = int(state % np.uint64(n_vertices))
                dist_sq = 0.0
                for d in range(dim):
                    diff = embedding[j, d] - embedding[k, d]
                    dist_sq += diff * diff
                if dist_sq > 0.0:
                    grad_coeff = 2.0 * b
                    grad_coeff /= (0.001 + dist_sq) * (a * dist_sq**b + 1.0)
                elif j == k:
                    continue
                else:
                    grad_coeff = 0.0
                for d in range(dim):
                    if grad_coeff > 0.0:
                        grad_d = _clip(grad_coeff * (embedding[j, d] - embedding[k, d]))
                    else:
                        grad_d = 4.0
                    embedding[j, d] += grad_d * alpha
            epoch_of_next_negative_sample[i] += n_neg * epochs_per_negative_sample[i]
        alpha = initial_alpha * (1.0 - epoch / float(n_epochs))
    return embedding


@numba.njit(cache=True, parallel=True)
def _sgd_layout_parallel(
    embedding,
    head,
    tail,
    epochs_per_sample,
    n_epochs,
    a,
    b,
    initial_alpha,
    negative_sample_rate,
    seed,
):
    """Best-effort parallel variant; update races make results seed-dependent."""
    n_vertices, dim = embedding.shape
    epochs_per_negative_sample = epochs_per_sample / negative_sample_rate
    epoch_of_next_negative_sample = epochs_per_negative_sample.copy()
    epoch_of_next_sample = epochs_per_sample.copy()
    alpha = initial_alpha

    for epoch in range(n_epochs):
        for i in numba.prange(epochs_per_sample.shape[0]):
            if epoch_of_next_sample[i] > epoch:
                continue
            state = (np.uint64(seed) + np.uint64(epoch)) * np.uint64(2654435761) + np.uint64(
                i
            ) * np.uint64(40503) + np.uint64(1)
            j = head[i]
            k = tail[i]
            dist_sq = 0.0
            for d in range(dim):
                diff = embedding[j, d] - embedding[k, d]
                dist_sq += diff * diff
            if dist_sq > 0.0:
                grad_coeff = -2.0 * a * b * dist_sq ** (b - 1.0)
                grad_coeff /= a * dist_sq**b + 1.0
            else:
                grad_coeff = 0.0
            for d in range(dim):
                grad_d = _clip(grad_coeff * (embedding[j, d] - embedding[k, d]))
                embedding[j, d] += grad_d * alpha
                embedding[k, d] -= grad_d * alpha
            epoch_of_next_sample[i] += epochs_per_sample[i]

            n_neg = int((epoch - epoch_of_next_negative_sample[i]) / epochs_per_negative_sample[i])
            for _ in range(n_neg):
                state = _xorshift(state)
                k = int(state % np.uint64(n_vertices))
                dist_sq = 0.0
                for d in range(dim):
                    diff = embedding[j, d] - embedding[k, d]
                    dist_sq += diff * diff
                if dist_sq > 0.0:
                    grad_coeff = 2.0 * b
                    grad_coeff /= (0.001 + dist_sq) * (a * dist_sq**b + 1.0)
                elif j == k:
                    continue
                else:
                    grad_coeff = 0.0
                for d in range(dim):
                    if grad_coeff > 0.0:
                        grad_d = _clip(grad_coeff * (embedding[j, d] - embedding[k, d]))
                    else:
                        grad_d = 4.0
                    embedding[j, d] += grad_d * alpha
            epoch_of_next_negative_sample[i] += n_neg * epochs_per_negative_sample[i]
        alpha = initial_alpha * (1.0 - epoch / float(n_epochs))
    return embedding


def reduce_embeddings(
    vectors: np.ndarray,
    params: ReductionParams = ReductionParams(),
    ids: list[str] | None = None,
) -> np.ndarray:
    """Project vectors to params.out_dim dimensions.

    All-identical inputs collapse to a single point (documented, not an
    error). With n_epochs=0 the spectral initialization is returned as is.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if n <= params.n_neighbors:
        raise ParamError(f"need more points ({n}) than n_neighbors ({params.n_neighbors})")
    if np.all(vectors == vectors[0]):
        return np.zeros((n, params.out_dim))

    graph = fuzzy_simplicial_set(vectors, params.n_neighbors, ids=ids)
    if graph.nnz == 0:  # fully degenerate: every point identical
        return np.zeros((n, params.out_dim))

    embedding = spectral_init(graph.tocsr(), params.out_dim)
    if params.n_epochs == 0:
        return embedding

    graph = graph.tocoo()
    data = graph.data.copy()
    if params.n_epochs > 10:
        data[data < data.max() / float(params.n_epochs)] = 0.0
    keep = data > 0.0
    head = graph.row[keep].astype(np.int64)
    tail = graph.col[keep].astype(np.int64)
    epochs_per_sample = make_epochs_per_sample(data[keep], params.n_epochs)

    a, b = find_ab_params(params.spread, params.min_dist)
    layout = _sgd_layout_parallel if params.parallel else _sgd_layout
    embedding = layout(
        embedding.copy(),
        head,
        tail,
        epochs_per_sample,
        params.n_epochs,
        a,
        b,
        params.learning_rate,
        float(params.negative_sample_rate),
        np.uint64(params.rng_seed & 0xFFFFFFFFFFFFFFFF),
    )
    return np.asarray(embedding)
