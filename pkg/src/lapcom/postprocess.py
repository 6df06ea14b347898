"""From raw draws to identified point estimates.

Pipeline per chain: minimum-VI partition of the network allocations,
k-means relabelling of the latent spaces, alignment of the point partition to
the relabelled draws, Procrustes alignment of the positions, then the same
steps within each latent space for the node-level mixture. Chains are
reconciled by their modal number of occupied latent spaces and log-posterior
at the point estimate.
"""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import squareform
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .embedding import canonical_labels
from .evaluation.metrics import ari
from .model import LatentSpace, ModelState, log_posterior


class RelabelError(RuntimeError):
    """No iteration passed the permutation check."""


class ReconcileError(RuntimeError):
    """Every chain was discarded."""


# ---------------------------------------------------------------------------
# point partition


def posterior_similarity_matrix(draws) -> np.ndarray:
    draws = np.atleast_2d(np.asarray(draws))
    if draws.shape[0] < 1:
        raise ValueError("need at least one draw")
    n = draws.shape[1]
    psm = np.zeros((n, n))
    for row in draws:
        psm += row[:, None] == row[None, :]
    return psm / draws.shape[0]


def vi_lower_bound(labels, psm) -> float:
    """Jensen lower bound on the posterior expected variation of information."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    n = labels.size
    size = same.sum(axis=1)
    return float(np.sum(np.log2(size) + np.log2(psm.sum(axis=1))
                        - 2.0 * np.log2((same * psm).sum(axis=1))) / n)


def candidate_partitions(draws, psm) -> list:
    """Distinct sampled partitions (in order of first occurrence), then
    average-linkage cuts of 1 - PSM at every number of clusters."""
    seen, out = set(), []

    def add(labels):
        lab = canonical_labels(labels)
        key = lab.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(lab)

    for row in np.atleast_2d(draws):
        add(row)
    n = psm.shape[0]
    if n > 1:
        dist = np.clip(1.0 - psm, 0.0, None)
        np.fill_diagonal(dist, 0.0)
        tree = linkage(squareform(dist, checks=False), method="average")
        for k in range(1, n + 1):
            add(fcluster(tree, t=k, criterion="maxclust") - 1)
    return out


def minvi_partition(draws, psm=None):
    """Candidate minimizing the VI lower bound; ties go to fewer clusters, then
    to the earliest candidate. Returns (0-based labels, number of clusters)."""
    draws = np.atleast_2d(np.asarray(draws))
    if psm is None:
        psm = posterior_similarity_matrix(draws)
    best, best_key = None, None
    for idx, cand in enumerate(candidate_partitions(draws, psm)):
        key = (round(vi_lower_bound(cand, psm), 10), int(cand.max()) + 1, idx)
        if best_key is None or key < best_key:
            best, best_key = cand, key
    return best, int(best.max()) + 1


def modal_value(values) -> int:
    """Most frequent value; the smallest one on ties."""
    counts = Counter(int(v) for v in values)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


# ---------------------------------------------------------------------------
# relabelling


def _kmeans_sequences(features: list, k: int, seed: int) -> list:
    """Cluster pooled component features; return one label sequence per iteration."""
    pooled = np.vstack(features)
    if k == 1:
        labels = np.zeros(pooled.shape[0], dtype=np.int64)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            labels = KMeans(n_clusters=k, n_init=10, random_state=seed).fit_predict(pooled)
    out, start = [], 0
    for f in features:
        out.append(labels[start:start + f.shape[0]])
        start += f.shape[0]
    return out


def _is_permutation(seq, k: int) -> bool:
    return seq.size == k and np.array_equal(np.sort(seq), np.arange(k))


def _apply_network_perm(state: ModelState, rho: np.ndarray) -> ModelState:
    k = rho.size
    order = np.empty(k, dtype=np.int64)
    order[rho] = np.arange(k)  # new slot j holds old component order[j]
    full = np.concatenate([order, np.arange(k, state.G)])
    inv = np.empty(state.G, dtype=np.int64)
    inv[full] = np.arange(state.G)
    return ModelState(state.G, state.log_tau[full].copy(), state.e, inv[state.C], state.alpha,
                      [state.spaces[j].copy() for j in full])


def _apply_node_perm(sp: LatentSpace, rho: np.ndarray) -> LatentSpace:
    k = rho.size
    order = np.empty(k, dtype=np.int64)
    order[rho] = np.arange(k)
    full = np.concatenate([order, np.arange(k, sp.K)])
    inv = np.empty(sp.K, dtype=np.int64)
    inv[full] = np.arange(sp.K)
    return LatentSpace(sp.Z.copy(), inv[sp.S], sp.K, sp.w, sp.log_pi[full].copy(),
                       sp.mu[full].copy(), sp.sigma2[full].copy())


def kmeans_relabel(samples, level: str = "network", target_k: int = 1, space: int = 0,
                   seed: int = 0):
    """Relabel component-indexed parameters by k-means on pooled components.

    ``level='network'`` pools the vectorized positions of the occupied latent
    spaces; ``level='node'`` pools the node-component means of latent space
    ``space``. Only iterations with exactly ``target_k`` occupied components
    are eligible, and of those only iterations whose k-means labels form a
    permutation are kept. Returns (relabelled samples, valid mask); invalid
    entries are left unchanged.
    """
    if target_k < 1:
        raise ValueError("target_k must be >= 1")
    samples = list(samples)
    if not samples:
        raise ValueError("empty trace")
    if level not in ("network", "node"):
        raise ValueError("level must be 'network' or 'node'")
    eligible, feats = [], []
    for t, s in enumerate(samples):
        if level == "network":
            if s.G_plus == target_k:
                eligible.append(t)
                feats.append(np.stack([s.spaces[g].Z.ravel() for g in range(target_k)]))
        else:
            sp = s.spaces[space]
            if sp.K_plus == target_k:
                eligible.append(t)
                feats.append(sp.mu[:target_k])
    valid = np.zeros(len(samples), dtype=bool)
    out = list(samples)
    if eligible:
        for t, rho in zip(eligible, _kmeans_sequences(feats, target_k, seed)):
            if not _is_permutation(rho, target_k):
                continue
            valid[t] = True
            s = samples[t]
            if level == "network":
                out[t] = _apply_network_perm(s, rho)
            else:
                new = s.copy()
                new.spaces[space] = _apply_node_perm(s.spaces[space], rho)
                out[t] = new
    if not valid.any():
        raise RelabelError(f"no iteration passed the permutation check at the {level} level")
    return out, valid


def align_reference_partition(C_hat, relabelled_draws):
    """Map the point partition onto the labels used by the relabelled draws.

    Each draw votes for the label map maximizing the cross-tabulated agreement
    with ``C_hat``; the modal map wins (lexicographically smallest on ties).
    Returns (C_hat_star, label_map, tie_flag).
    """
    C_hat = np.asarray(C_hat)
    draws = np.atleast_2d(np.asarray(relabelled_draws))
    if draws.shape[1] != C_hat.size:
        raise ValueError("draws and C_hat differ in length")
    n_ref = int(C_hat.max()) + 1
    votes = Counter()
    for row in draws:
        n_col = max(int(row.max()) + 1, n_ref)
        tab = np.zeros((n_ref, n_col))
        np.add.at(tab, (C_hat, row), 1.0)
        r, c = linear_sum_assignment(-tab)
        votes[tuple(int(x) for x in c[np.argsort(r)])] += 1
    top = max(votes.values())
    winners = sorted(m for m, v in votes.items() if v == top)
    label_map = np.array(winners[0], dtype=np.int64)
    return label_map[C_hat], label_map, len(winners) > 1


# ---------------------------------------------------------------------------
# Procrustes


@dataclass(frozen=True)
class SimilarityTransform:
    """x -> scale * (x - center) @ rotation + target_center."""

    scale: float
    rotation: np.ndarray
    center: np.ndarray
    target_center: np.ndarray

    def apply(self, X) -> np.ndarray:
        return self.scale * (np.asarray(X, float) - self.center) @ self.rotation + self.target_center

    @classmethod
    def identity(cls, dim: int = 2) -> "SimilarityTransform":
        return cls(1.0, np.eye(dim), np.zeros(dim), np.zeros(dim))


def procrustes_fit(X, reference) -> SimilarityTransform:
    """Least-squares translation, rotation/reflection and isotropic scaling of X onto reference."""
    X, Y = np.asarray(X, float), np.asarray(reference, float)
    if X.shape != Y.shape:
        raise ValueError("configurations differ in shape")
    xc, yc = X.mean(axis=0), Y.mean(axis=0)
    A, B = X - xc, Y - yc
    norm = float(np.sum(A * A))
    if norm <= 1e-300 or not np.any(B):
        warnings.warn("degenerate configuration; using the identity transform")
        return SimilarityTransform.identity(X.shape[1])
    U, sv, Vt = np.linalg.svd(A.T @ B)
    R = U @ Vt
    return SimilarityTransform(float(sv.sum() / norm), R, xc, yc)


def procrustes_align(Z_draws, reference, mu_draws=None, sigma2_draws=None):
    """Align each draw to ``reference``; means get the same map, variances the squared scale.

    Returns (aligned Z, aligned mu or None, scaled sigma2 or None, transforms).
    """
    transforms = [procrustes_fit(Z, reference) for Z in Z_draws]
    Z_al = [tr.apply(Z) for tr, Z in zip(transforms, Z_draws)]
    mu_al = None if mu_draws is None else [tr.apply(m) for tr, m in zip(transforms, mu_draws)]
    s2_al = (None if sigma2_draws is None
             else [tr.scale ** 2 * np.asarray(s) for tr, s in zip(transforms, sigma2_draws)])
    return Z_al, mu_al, s2_al, transforms


# ---------------------------------------------------------------------------
# per-chain solution


@dataclass
class ClusteringSolution:
    C_hat: np.ndarray
    G_hat_plus: int
    G_plus_modal: int
    S_hat: list = field(default_factory=list)
    K_hat_plus: list = field(default_factory=list)
    K_plus_modal_draws: list = field(default_factory=list)
    Z_hat: list = field(default_factory=list)
    mu_hat: list = field(default_factory=list)
    sigma2_hat: list = field(default_factory=list)
    valid_iteration_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    node_valid_masks: list = field(default_factory=list)
    transforms: list = field(default_factory=list)
    alignment_tie: bool = False
    point_state: ModelState | None = None
    chain_index: int = 0

    def to_json(self) -> dict:
        return {
            "C_hat": (self.C_hat + 1).tolist(),
            "G_hat_plus": self.G_hat_plus,
            "G_plus_modal": self.G_plus_modal,
            "S_hat": [(s + 1).tolist() for s in self.S_hat],
            "K_hat_plus": list(self.K_hat_plus),
            "K_plus_modal_draws": list(self.K_plus_modal_draws),
            "mu_hat": [np.asarray(m).tolist() for m in self.mu_hat],
            "sigma2_hat": [np.asarray(s).tolist() for s in self.sigma2_hat],
            "valid_iterations": int(self.valid_iteration_mask.sum()),
            "n_iterations": int(self.valid_iteration_mask.size),
            "node_valid_iterations": [int(m.sum()) for m in self.node_valid_masks],
            "alignment_tie": bool(self.alignment_tie),
            "chain_index": self.chain_index,
        }


def _point_state(samples, C_hat, Z_hat, S_hat, mu_hat, s2_hat, mono) -> ModelState:
    """A full model state assembled from posterior summaries of relabelled draws."""
    G = int(C_hat.max()) + 1
    log_tau = np.log(np.mean([np.exp(s.log_tau[:G]) / np.exp(s.log_tau[:G]).sum()
                              for s in samples], axis=0))
    spaces = []
    for g in range(G):
        if mono:
            spaces.append(LatentSpace(Z_hat[g], np.zeros(Z_hat[g].shape[0], dtype=np.int64), 1, 1.0,
                                      np.zeros(1), np.zeros((1, 2)), np.ones((1, 2))))
            continue
        K = int(S_hat[g].max()) + 1
        counts = np.bincount(S_hat[g], minlength=K).astype(float)
        w = float(np.mean([s.spaces[g].w for s in samples]))
        spaces.append(LatentSpace(Z_hat[g], S_hat[g], K, w, np.log(counts / counts.sum()),
                                  mu_hat[g], s2_hat[g]))
    return ModelState(G, log_tau, float(np.mean([s.e for s in samples])), C_hat.copy(),
                      float(np.mean([s.alpha for s in samples])), spaces)


def postprocess_chain(trace, mono: bool | None = None, seed: int = 0) -> ClusteringSolution:
    """Identified point estimates for one chain (raises RelabelError on failure)."""
    samples = list(trace.samples)
    if mono is None:
        mono = trace.config.mono
    C_draws = np.stack([s.C for s in samples])
    C_hat, G_hat = minvi_partition(C_draws)
    G_modal = modal_value([s.G_plus for s in samples])
    relab, valid = kmeans_relabel(samples, "network", G_hat, seed=seed)
    kept = [relab[t] for t in np.nonzero(valid)[0]]
    C_star, _, tie = align_reference_partition(C_hat, np.stack([s.C for s in kept]))

    sol = ClusteringSolution(C_star, G_hat, G_modal, valid_iteration_mask=valid, alignment_tie=tie)
    for g in range(G_hat):
        Zs = [s.spaces[g].Z for s in kept]
        mus = [s.spaces[g].mu for s in kept]
        s2s = [s.spaces[g].sigma2 for s in kept]
        Z_al, mu_al, s2_al, trs = procrustes_align(Zs, Zs[0], mus, s2s)
        sol.Z_hat.append(np.mean(Z_al, axis=0))
        sol.transforms.append(trs)
        if mono:
            continue
        node_samples = []
        for s, m, v in zip(kept, mu_al, s2_al):
            sp = s.spaces[g].copy()
            sp.mu, sp.sigma2 = m, v
            node_samples.append(ModelState(s.G, s.log_tau, s.e, s.C, s.alpha,
                                           [sp if h == g else s.spaces[h] for h in range(s.G)]))
        S_draws = np.stack([s.spaces[g].S for s in node_samples])
        S_hat, K_hat = minvi_partition(S_draws)
        sol.K_plus_modal_draws.append(modal_value([s.spaces[g].K_plus for s in node_samples]))
        sol.K_hat_plus.append(K_hat)
        try:
            n_relab, n_valid = kmeans_relabel(node_samples, "node", K_hat, space=g, seed=seed)
        except RelabelError:
            # fall back to summaries of the averaged positions
            Zh = sol.Z_hat[-1]
            sol.S_hat.append(S_hat)
            sol.mu_hat.append(np.stack([Zh[S_hat == k].mean(axis=0) for k in range(K_hat)]))
            sol.sigma2_hat.append(np.stack([np.maximum(Zh[S_hat == k].var(axis=0), 1e-6)
                                            for k in range(K_hat)]))
            sol.node_valid_masks.append(np.zeros(len(node_samples), dtype=bool))
            continue
        n_kept = [n_relab[t].spaces[g] for t in np.nonzero(n_valid)[0]]
        S_star, _, _ = align_reference_partition(S_hat, np.stack([sp.S for sp in n_kept]))
        sol.S_hat.append(S_star)
        sol.mu_hat.append(np.mean([sp.mu[:K_hat] for sp in n_kept], axis=0))
        sol.sigma2_hat.append(np.mean([sp.sigma2[:K_hat] for sp in n_kept], axis=0))
        sol.node_valid_masks.append(n_valid)
    sol.point_state = _point_state(kept, C_star, sol.Z_hat, sol.S_hat, sol.mu_hat,
                                   sol.sigma2_hat, mono)
    return sol


def reconcile_chains(traces, data, mono: bool | None = None, seed: int = 0):
    """Pick one chain among those agreeing on the modal number of latent spaces.

    Returns (selected index, its solution, ARI of its partition against every
    other retained chain, per-chain log dict).
    """
    if not traces:
        raise ReconcileError("no chains supplied")
    sols, notes = {}, {}
    for i, tr in enumerate(traces):
        try:
            sols[i] = postprocess_chain(tr, mono, seed)
            sols[i].chain_index = i
        except RelabelError as err:
            notes[i] = f"discarded: {err}"
    if not sols:
        raise ReconcileError("all chains failed the permutation check")
    mode = modal_value([s.G_plus_modal for s in sols.values()])
    retained = [i for i, s in sols.items() if s.G_plus_modal == mode]
    for i, s in sols.items():
        if i not in retained:
            notes.setdefault(i, f"discarded: modal G+ {s.G_plus_modal} differs from {mode}")
    if not retained:
        raise ReconcileError("no chain matches the cross-chain modal number of latent spaces")
    lps = {}
    for i in retained:
        tr = traces[i]
        is_mono = tr.config.mono if mono is None else mono
        lps[i] = log_posterior(sols[i].point_state, data, tr.config.hyper, is_mono)
        notes[i] = f"retained: log-posterior at point estimate {lps[i]:.6f}"
    best = max(retained, key=lambda i: (lps[i], -i))
    aris = np.array([ari(sols[best].C_hat, sols[i].C_hat) for i in retained if i != best])
    return best, sols[best], aris, notes


# ---------------------------------------------------------------------------
# solution bundle


def save_solution(sol: ClusteringSolution, out_dir, extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = sol.to_json()
    if extra:
        payload.update(extra)
    (out / "solution.json").write_text(json.dumps(payload, indent=2))
    for g, Z in enumerate(sol.Z_hat, start=1):
        np.savetxt(out / f"Z_hat_{g}.csv", Z, delimiter=",", fmt="%.17g")
    with open(out / "transforms.csv", "w") as fh:
        fh.write("cluster,draw,scale,r11,r12,r21,r22,c1,c2,t1,t2\n")
        for g, trs in enumerate(sol.transforms, start=1):
            for d, tr in enumerate(trs, start=1):
                vals = [tr.scale, *tr.rotation.ravel(), *tr.center, *tr.target_center]
                fh.write(f"{g},{d}," + ",".join(f"{v:.17g}" for v in vals) + "\n")
    return out / "solution.json"


def load_solution(out_dir) -> dict:
    """Read solution.json plus Z_hat files; labels are returned 0-based."""
    out = Path(out_dir)
    sol = json.loads((out / "solution.json").read_text())
    sol["C_hat"] = np.asarray(sol["C_hat"], dtype=np.int64) - 1
    sol["S_hat"] = [np.asarray(s, dtype=np.int64) - 1 for s in sol["S_hat"]]
    sol["Z_hat"] = [np.loadtxt(out / f"Z_hat_{g}.csv", delimiter=",", ndmin=2)
                    for g in range(1, sol["G_hat_plus"] + 1)]
    return sol
