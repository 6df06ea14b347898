"""Partition agreement, configuration agreement and network fit metrics."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..multiplex import dyad_indices


def _comb2(x):
    x = np.asarray(x, float)
    return x * (x - 1.0) / 2.0


def contingency(p1, p2) -> np.ndarray:
    _, a = np.unique(np.asarray(p1), return_inverse=True)
    _, b = np.unique(np.asarray(p2), return_inverse=True)
    tab = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(tab, (a.ravel(), b.ravel()), 1.0)
    return tab


def ari(p1, p2) -> float:
    """Hubert-Arabie adjusted Rand index."""
    p1, p2 = np.asarray(p1), np.asarray(p2)
    if p1.shape != p2.shape:
        raise ValueError("partitions differ in length")
    tab = contingency(p1, p2)
    index = _comb2(tab).sum()
    rows, cols = _comb2(tab.sum(axis=1)).sum(), _comb2(tab.sum(axis=0)).sum()
    total = _comb2(p1.size)
    expected = rows * cols / total if total > 0 else 0.0
    top = 0.5 * (rows + cols)
    if top == expected:
        return 1.0
    return float((index - expected) / (top - expected))


def match_labels(p_est, p_ref) -> dict:
    """Injective map from estimated to reference labels maximizing agreement.

    Estimated labels left over when there are more of them than reference
    labels are mapped to fresh labels above the reference range.
    """
    p_est, p_ref = np.asarray(p_est), np.asarray(p_ref)
    if p_est.shape != p_ref.shape:
        raise ValueError("partitions differ in length")
    est_labels, a = np.unique(p_est, return_inverse=True)
    ref_labels, b = np.unique(p_ref, return_inverse=True)
    tab = np.zeros((est_labels.size, ref_labels.size))
    np.add.at(tab, (a.ravel(), b.ravel()), 1.0)
    r, c = linear_sum_assignment(-tab)
    out = {est_labels[i].item(): ref_labels[j].item() for i, j in zip(r, c)}
    fresh = int(np.max(ref_labels)) + 1 if ref_labels.size else 0
    for lab in est_labels:
        if lab.item() not in out:
            out[lab.item()] = fresh
            fresh += 1
    return out


def procrustes_correlation(Z_est, Z_true) -> float:
    """Symmetric Procrustes correlation (1 means equal up to a similarity transform).

    Both configurations are centred and scaled to unit norm; the statistic is
    the sum of singular values of their cross-product.
    """
    X = np.asarray(Z_est, float)
    Y = np.asarray(Z_true, float)
    if X.shape != Y.shape:
        raise ValueError("configurations differ in shape")
    X = X - X.mean(axis=0)
    Y = Y - Y.mean(axis=0)
    nx, ny = np.linalg.norm(X), np.linalg.norm(Y)
    if nx < 1e-12 or ny < 1e-12:
        warnings.warn("degenerate configuration; Procrustes correlation set to 0")
        return 0.0
    sv = np.linalg.svd((X / nx).T @ (Y / ny), compute_uv=False)
    return float(min(sv.sum(), 1.0))


# ---------------------------------------------------------------------------
# network fit metrics


def _weights(net):
    return np.asarray(getattr(net, "weights", net))


def dyad_vector(net, directed: bool | None = None) -> np.ndarray:
    W = _weights(net)
    if directed is None:
        directed = bool(getattr(net, "directed", False))
    rows, cols = dyad_indices(W.shape[0], directed)
    return W[rows, cols]


def pr_auc(labels, scores) -> float:
    """Area under the precision-recall curve by the trapezoid rule over recall.

    One curve point per distinct score threshold, plus (recall 0, precision 1).
    Returns nan when there are no positives.
    """
    y = np.asarray(labels, float) > 0
    s = np.asarray(scores, float)
    n_pos = y.sum()
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    precision = np.r_[1.0, tp / (tp + fp)]
    recall = np.r_[0.0, tp / n_pos]
    return float(np.sum(np.diff(recall) * (precision[1:] + precision[:-1]) / 2.0))


def f1_score(obs_edges, rep_edges) -> float:
    """2TP / (2TP + FP + FN); 1 when both networks are empty."""
    o = np.asarray(obs_edges) > 0
    r = np.asarray(rep_edges) > 0
    tp = np.sum(o & r)
    denom = 2 * tp + np.sum(~o & r) + np.sum(o & ~r)
    return 1.0 if denom == 0 else float(2 * tp / denom)


def metric_binary(obs, rep, tie_prob=None, directed: bool | None = None) -> dict:
    """PR-AUC (needs ``tie_prob``), F1, squared density difference and Hamming distance."""
    fams = {getattr(obs, "family", "binary"), getattr(rep, "family", "binary")}
    if fams != {"binary"}:
        raise ValueError("binary metrics need binary networks")
    if directed is None:
        directed = bool(getattr(obs, "directed", False))
    y = dyad_vector(obs, directed)
    out = {}
    if tie_prob is not None:
        out["pr_auc"] = pr_auc(y, dyad_vector(np.asarray(tie_prob), directed))
    if rep is not None:
        r = dyad_vector(rep, directed)
        out["f1"] = f1_score(y, r)
        out["density_sq_diff"] = float(((r > 0).mean() - (y > 0).mean()) ** 2)
        out["hamming"] = float(np.mean((r > 0) != (y > 0)))
    return out


def metric_count(obs, rep, directed: bool | None = None) -> dict:
    """Mean absolute difference, true negative rate and log positive counts of the replicate."""
    if getattr(obs, "family", "count") != "count" or getattr(rep, "family", "count") != "count":
        raise ValueError("count metrics need count networks")
    if directed is None:
        directed = bool(getattr(obs, "directed", False))
    y = dyad_vector(obs, directed).astype(float)
    r = dyad_vector(rep, directed).astype(float)
    zeros = y == 0
    tnr = float(np.mean(r[zeros] == 0)) if zeros.any() else float("nan")
    return {"mad": float(np.mean(np.abs(y - r))), "tnr": tnr,
            "ecdf_data": np.sort(np.log(r[r > 0]))}
