"""Schieber et al. dissimilarity between two graphs.

The measure mixes three terms: a Jensen-Shannon divergence between the
graphs' mean node-distance distributions, the difference of their network
node dispersions, and a divergence between alpha-centrality distributions of
each graph and of its complement. Weighted edges are binarized first.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse.csgraph import shortest_path

DEFAULT_WEIGHTS = (0.45, 0.45, 0.10)
LOG2 = np.log(2.0)


def _entropy(p) -> float:
    p = np.asarray(p, float).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _adjacency(a) -> np.ndarray:
    w = getattr(a, "weights", a)
    return (np.asarray(w) > 0).astype(float)


def node_distance_distributions(adj: np.ndarray, directed: bool = False) -> np.ndarray:
    """Row i holds the fraction of other nodes at hop distance d = 1..N from i.

    Unreachable nodes are counted at distance N.
    """
    n = adj.shape[0]
    dist = shortest_path(adj, method="D", directed=directed, unweighted=True)
    dist[~np.isfinite(dist)] = n
    dist = dist.astype(np.int64)
    out = np.zeros((n, n + 1))
    for i in range(n):
        out[i] = np.bincount(dist[i], minlength=n + 1)
    return out[:, 1:] / (n - 1)


def network_node_dispersion(nd: np.ndarray) -> tuple[np.ndarray, float]:
    """Mean distance distribution and normalized node dispersion."""
    n = nd.shape[0]
    pdfm = nd.mean(axis=0)
    norm = np.log(max(2, np.count_nonzero(pdfm[: n - 1] > 0) + 1))
    rows = sum(_entropy(row) for row in nd)
    return pdfm, max(0.0, _entropy(pdfm) - rows / n) / norm


def alpha_centrality_distribution(adj: np.ndarray) -> np.ndarray:
    n = adj.shape[0]
    exo = adj.sum(axis=1) / (n - 1)
    x = np.linalg.solve(np.eye(n) - adj.T / n, exo)
    r = np.sort(x) / n ** 2
    return np.append(r, max(0.0, 1.0 - r.sum()))


def _jsd_sqrt(p: np.ndarray, q: np.ndarray) -> float:
    m = max(p.size, q.size)
    p = np.pad(p, (m - p.size, 0))
    q = np.pad(q, (m - q.size, 0))
    jsd = _entropy(0.5 * (p + q)) - 0.5 * (_entropy(p) + _entropy(q))
    return float(np.sqrt(max(jsd / LOG2, 0.0)))


def _complement(adj: np.ndarray) -> np.ndarray:
    comp = 1.0 - adj
    np.fill_diagonal(comp, 0.0)
    return comp


def schieber_distance(a, b, weights=DEFAULT_WEIGHTS, directed: bool | None = None) -> float:
    """Dissimilarity in [0, 1]; 0 for graphs with identical distance structure.

    ``a`` and ``b`` are Networks or adjacency arrays. Graphs of different
    size are padded with isolated nodes.
    """
    if directed is None:
        directed = bool(getattr(a, "directed", False) or getattr(b, "directed", False))
    A, B = _adjacency(a), _adjacency(b)
    n = max(A.shape[0], B.shape[0])
    A = np.pad(A, (0, n - A.shape[0]))
    B = np.pad(B, (0, n - B.shape[0]))
    w1, w2, w3 = weights
    first = second = third = 0.0
    if w1 + w2 > 0:
        pg, nnd_g = network_node_dispersion(node_distance_distributions(A, directed))
        ph, nnd_h = network_node_dispersion(node_distance_distributions(B, directed))
        first = _jsd_sqrt(pg, ph)
        second = abs(np.sqrt(nnd_g) - np.sqrt(nnd_h))
    if w3 > 0:
        third = 0.5 * _jsd_sqrt(alpha_centrality_distribution(A), alpha_centrality_distribution(B))
        third += 0.5 * _jsd_sqrt(alpha_centrality_distribution(_complement(A)),
                                 alpha_centrality_distribution(_complement(B)))
    return float(w1 * first + w2 * second + w3 * third)


def schieber_distance_matrix(networks, weights=DEFAULT_WEIGHTS) -> np.ndarray:
    """Pairwise dissimilarities, computing per-network summaries once."""
    nets = list(networks)
    directed = bool(getattr(nets[0], "directed", False))
    summaries = []
    for net in nets:
        A = _adjacency(net)
        pdfm, nnd = network_node_dispersion(node_distance_distributions(A, directed))
        summaries.append((pdfm, nnd, alpha_centrality_distribution(A),
                          alpha_centrality_distribution(_complement(A))))
    w1, w2, w3 = weights
    m = len(nets)
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            si, sj = summaries[i], summaries[j]
            d = (w1 * _jsd_sqrt(si[0], sj[0]) + w2 * abs(np.sqrt(si[1]) - np.sqrt(sj[1]))
                 + w3 * 0.5 * (_jsd_sqrt(si[2], sj[2]) + _jsd_sqrt(si[3], sj[3])))
            out[i, j] = out[j, i] = d
    return out
