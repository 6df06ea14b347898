"""Classical MDS and seeded clustering used for chain initialization."""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.mixture import GaussianMixture


def classical_mds(dist: np.ndarray, dim: int = 2) -> np.ndarray:
    """Torgerson scaling of a distance matrix.

    Each output axis is flipped so that its largest-magnitude coordinate is
    positive, which makes the embedding reproducible. Negative eigenvalues
    are truncated to zero.
    """
    d = np.asarray(dist, float)
    d = 0.5 * (d + d.T)
    n = d.shape[0]
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (d ** 2) @ J
    vals, vecs = np.linalg.eigh(B)
    order = np.argsort(vals)[::-1][:dim]
    vals, vecs = np.clip(vals[order], 0.0, None), vecs[:, order]
    X = vecs * np.sqrt(vals)
    if X.shape[1] < dim:
        X = np.hstack([X, np.zeros((n, dim - X.shape[1]))])
    for q in range(dim):
        j = int(np.argmax(np.abs(X[:, q])))
        if X[j, q] < 0:
            X[:, q] = -X[:, q]
    return X


def canonical_labels(labels) -> np.ndarray:
    """Relabel to 0..k-1 in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first)] = np.arange(first.size)
    return rank[inv.ravel()]


def _force_k_groups(labels: np.ndarray, k: int) -> np.ndarray:
    """Split the largest groups (moving their highest index) until k groups exist."""
    labels = canonical_labels(labels)
    while np.unique(labels).size < min(k, labels.size):
        counts = np.bincount(labels)
        big = int(np.argmax(counts))
        labels[np.nonzero(labels == big)[0][-1]] = labels.max() + 1
    return canonical_labels(labels)


def cluster_points(X: np.ndarray, k: int, method: str = "kmeans", seed: int = 0):
    """Partition the rows of X into k groups; returns (labels, centers).

    Labels are canonical (first appearance order). Degenerate inputs with
    fewer than k distinct rows are split by index so k groups always exist.
    """
    X = np.asarray(X, float)
    n = X.shape[0]
    k = min(k, n)
    if k <= 1:
        labels = np.zeros(n, dtype=np.int64)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            if method == "kmeans":
                model = KMeans(n_clusters=k, n_init=25, tol=1e-8, random_state=seed)
            elif method == "gmm":
                model = GaussianMixture(n_components=k, covariance_type="full", max_iter=100,
                                        random_state=seed)
            else:
                raise ValueError(f"unknown clustering method {method!r}")
            labels = model.fit_predict(X)
        labels = _force_k_groups(labels, k)
    centers = np.stack([X[labels == j].mean(axis=0) for j in range(labels.max() + 1)])
    return labels, centers
