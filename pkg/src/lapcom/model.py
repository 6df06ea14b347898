"""Model state, hyperparameters, likelihood and full conditionals.

Labels inside the library are 0-based. Networks are allocated to latent
spaces (network-level components); nodes inside each latent space are
allocated to node-level Gaussian components with diagonal covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln, logsumexp

from .distributions import (
    BERNOULLI_LOGIT,
    POISSON_LOG,
    BnbParams,
    edge_family_for,
    logpdf_dirichlet,
    logpdf_fisher_f,
    logpdf_invgamma,
    logpdf_mvn_diag,
    logpdf_normal,
    logpmf_translated_bnb,
)
from .multiplex import Multiplex, Network, dyad_indices

LATENT_DIM = 2


class InvalidStateError(AssertionError):
    """A model state violates one of its structural invariants."""


@dataclass(frozen=True)
class Hyperparams:
    m_alpha: float = 0.0
    s_alpha: float = 1.0
    mu0: tuple = (0.0, 0.0)
    mu_prior_var: float = 1.0
    u_sigma2: float = 11.0
    v_sigma2: float = 2.0
    bnb_G: BnbParams = BnbParams(8.0, 18.0, 10.0)
    bnb_K: BnbParams = BnbParams(8.0, 18.0, 10.0)
    l_G: float = 6.0
    r_G: float = 3.0
    l_K: float = 6.0
    r_K: float = 3.0
    G0: int = 2
    K0: int = 2
    G_max: int = 5
    K_max: int = 8
    delta_Z: float = 0.1
    delta_alpha: float = 0.05
    s_e: float = 1.0
    s_w: float = 1.0
    n_min: int = 5

    @classmethod
    def defaults(cls, n_networks: int, n_nodes: int, n_min: int | None = None, **overrides):
        """Default hyperparameters for a multiplex with M networks on N nodes."""
        if n_min is None:
            n_min = 5 if n_nodes < 60 else 10
        values = dict(
            u_sigma2=11.0 if n_nodes < 60 else 21.0,
            G_max=5 if n_networks < 60 else 10,
            K_max=min(int(round(n_nodes / n_min)) + 2, n_nodes),
            n_min=n_min,
        )
        values.update(overrides)
        for key in ("bnb_G", "bnb_K"):
            if isinstance(values.get(key), (tuple, list)):
                values[key] = BnbParams(*values[key])
        if "mu0" in values:
            values["mu0"] = tuple(float(x) for x in values["mu0"])
        hp = cls(**values)
        hp.validate(n_nodes)
        return hp

    def validate(self, n_nodes: int | None = None) -> None:
        if not 1 <= self.G0 <= self.G_max:
            raise ValueError(f"need 1 <= G0 <= G_max, got G0={self.G0}, G_max={self.G_max}")
        if not 1 <= self.K0 <= self.K_max:
            raise ValueError(f"need 1 <= K0 <= K_max, got K0={self.K0}, K_max={self.K_max}")
        if n_nodes is not None and self.K_max > n_nodes:
            raise ValueError(f"K_max={self.K_max} exceeds the number of nodes {n_nodes}")
        positive = ("s_alpha", "mu_prior_var", "u_sigma2", "v_sigma2", "l_G", "r_G", "l_K",
                    "r_K", "delta_Z", "delta_alpha", "s_e", "s_w", "n_min")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            val = getattr(self, name)
            if isinstance(val, BnbParams):
                val = [val.a, val.b, val.c]
            elif isinstance(val, tuple):
                val = list(val)
            out[name] = val
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        d = dict(d)
        for key in ("bnb_G", "bnb_K"):
            if key in d:
                d[key] = BnbParams(*d[key])
        if "mu0" in d:
            d["mu0"] = tuple(d["mu0"])
        return cls(**d)

    def with_updates(self, **kw) -> "Hyperparams":
        return replace(self, **kw)


@dataclass
class LatentSpace:
    """One network-level component: latent positions plus the node mixture."""

    Z: np.ndarray  # (N, 2)
    S: np.ndarray  # (N,) node allocations, 0-based
    K: int
    w: float
    log_pi: np.ndarray  # (K,)
    mu: np.ndarray  # (K, 2)
    sigma2: np.ndarray  # (K, 2)

    @property
    def pi(self) -> np.ndarray:
        return np.exp(self.log_pi)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.S, minlength=self.K)

    @property
    def K_plus(self) -> int:
        return int(np.count_nonzero(self.counts))

    def copy(self) -> "LatentSpace":
        return LatentSpace(self.Z.copy(), self.S.copy(), self.K, self.w, self.log_pi.copy(),
                           self.mu.copy(), self.sigma2.copy())


@dataclass
class ModelState:
    G: int
    log_tau: np.ndarray  # (G,)
    e: float
    C: np.ndarray  # (M,) network allocations, 0-based
    alpha: float
    spaces: list = field(default_factory=list)

    @property
    def tau(self) -> np.ndarray:
        return np.exp(self.log_tau)

    @property
    def network_counts(self) -> np.ndarray:
        return np.bincount(self.C, minlength=self.G)

    @property
    def G_plus(self) -> int:
        return int(np.count_nonzero(self.network_counts))

    def copy(self) -> "ModelState":
        return ModelState(self.G, self.log_tau.copy(), self.e, self.C.copy(), self.alpha,
                          [sp.copy() for sp in self.spaces])

    def check(self, hyper: Hyperparams | None = None, mono: bool = False) -> None:
        """Raise InvalidStateError if any structural invariant fails."""

        def need(cond, msg):
            if not cond:
                raise InvalidStateError(msg)

        need(self.G >= 1 and len(self.spaces) == self.G and self.log_tau.shape == (self.G,),
             "component count mismatch")
        need(abs(logsumexp(self.log_tau)) < 1e-8, "tau is not a simplex")
        need(self.e > 0 and np.isfinite(self.alpha), "bad e or alpha")
        need(self.C.min() >= 0 and self.C.max() < self.G, "C label out of range")
        counts = self.network_counts
        gp = self.G_plus
        need(np.all(counts[:gp] > 0) and np.all(counts[gp:] == 0), "active components not first")
        if hyper is not None:
            need(self.G <= hyper.G_max, "G exceeds G_max")
        for g, sp in enumerate(self.spaces):
            n = sp.Z.shape[0]
            need(sp.Z.shape == (n, LATENT_DIM) and np.all(np.isfinite(sp.Z)), f"bad Z in space {g}")
            need(sp.log_pi.shape == (sp.K,) and sp.mu.shape == (sp.K, LATENT_DIM)
                 and sp.sigma2.shape == (sp.K, LATENT_DIM), f"node parameter shapes in space {g}")
            need(abs(logsumexp(sp.log_pi)) < 1e-8, f"pi_{g} is not a simplex")
            need(np.all(sp.sigma2 > 0) and sp.w > 0, f"non-positive variance or w in space {g}")
            need(sp.S.min() >= 0 and sp.S.max() < sp.K, f"S label out of range in space {g}")
            if mono:
                continue
            if hyper is not None:
                need(sp.K <= hyper.K_max, f"K exceeds K_max in space {g}")
            if g < gp:
                nc = sp.counts
                kp = sp.K_plus
                need(np.all(nc[:kp] > 0) and np.all(nc[kp:] == 0),
                     f"active node components not first in space {g}")


# ---------------------------------------------------------------------------
# likelihood


def log_partition(eta, family: str):
    if family == BERNOULLI_LOGIT:
        return np.logaddexp(0.0, eta)
    return np.exp(eta)


def squared_distances(Z: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    diff = Z[rows] - Z[cols]
    return np.einsum("ij,ij->i", diff, diff)


@dataclass(frozen=True)
class PreparedData:
    """Dyad-level sufficient statistics of a multiplex.

    Each unordered dyad i<j carries ``ysum`` (y_ij, plus y_ji when directed)
    and ``n_obs`` observations (1 undirected, 2 directed). ``const`` holds the
    per-network -sum log(y!) term of the Poisson pmf. A data-free instance
    has ``n_obs = 0`` and zero counts, giving a constant likelihood.
    """

    ysum: np.ndarray  # (M, D)
    n_obs: int
    const: np.ndarray  # (M,)
    family: str
    n_nodes: int
    rows: np.ndarray
    cols: np.ndarray

    @classmethod
    def from_multiplex(cls, mx: Multiplex, data_free: bool = False) -> "PreparedData":
        n = mx.n_nodes
        rows, cols = dyad_indices(n, directed=False)
        Y = mx.stack().astype(float)
        family = edge_family_for(mx.family)
        if data_free:
            return cls(np.zeros((len(mx), rows.size)), 0, np.zeros(len(mx)), family, n, rows, cols)
        ysum = Y[:, rows, cols]
        if mx.directed:
            ysum = ysum + Y[:, cols, rows]
        const = np.zeros(len(mx))
        if family == POISSON_LOG:
            r, c = dyad_indices(n, mx.directed)
            const = -gammaln(Y[:, r, c] + 1.0).sum(axis=1)
        return cls(ysum, 2 if mx.directed else 1, const, family, n, rows, cols)

    @property
    def n_networks(self) -> int:
        return self.ysum.shape[0]

    def d2(self, Z: np.ndarray) -> np.ndarray:
        return squared_distances(Z, self.rows, self.cols)

    def stats_loglik(self, ysum_g, n_networks_g: int, const_g: float, alpha: float,
                     d2: np.ndarray) -> float:
        """Log-likelihood of a set of networks sharing one latent space."""
        if n_networks_g == 0 or self.n_obs == 0:
            return float(const_g)
        eta = alpha - d2
        return float(ysum_g @ eta - n_networks_g * self.n_obs * log_partition(eta, self.family).sum()
                     + const_g)

    def loglik_matrix(self, alpha: float, d2_list) -> np.ndarray:
        """(M, G) matrix of per-network log-likelihoods under every latent space."""
        if self.n_obs == 0:
            return np.zeros((self.n_networks, len(d2_list)))
        eta = alpha - np.stack(d2_list, axis=1)  # (D, G)
        part = self.n_obs * log_partition(eta, self.family).sum(axis=0)
        return self.ysum @ eta - part[None, :] + self.const[:, None]


def network_loglik(Y: Network, Z: np.ndarray, alpha: float, family: str | None = None) -> float:
    """Sum of edge log-pmfs over the dyads of ``Y`` under latent positions ``Z``."""
    fam = edge_family_for(family or Y.family)
    rows, cols = dyad_indices(Y.n_nodes, Y.directed)
    y = Y.weights[rows, cols].astype(float)
    eta = alpha - squared_distances(np.asarray(Z, float), rows, cols)
    out = y @ eta - log_partition(eta, fam).sum()
    if fam == POISSON_LOG:
        out -= gammaln(y + 1.0).sum()
    return float(out)


def network_alloc_logprobs(Y_m: Network, state: ModelState, family: str | None = None) -> np.ndarray:
    """Normalized log-probabilities of allocating network ``Y_m`` to each latent space."""
    logp = np.array([state.log_tau[g] + network_loglik(Y_m, sp.Z, state.alpha, family)
                     for g, sp in enumerate(state.spaces)])
    return logp - logsumexp(logp)


def node_alloc_logprobs(z, pi, mu, sigma2) -> np.ndarray:
    """Normalized log-probabilities of node-level component membership.

    ``z`` may be a single 2-vector or an (n, 2) matrix; the result is (K,) or (n, K).
    """
    z = np.asarray(z, float)
    with np.errstate(divide="ignore"):
        log_pi = np.log(np.asarray(pi, float))
    logp = log_pi + logpdf_mvn_diag(z[..., None, :], np.asarray(mu, float), np.asarray(sigma2, float))
    return logp - logsumexp(logp, axis=-1, keepdims=True)


def node_alloc_logprobs_from_log(Z, log_pi, mu, sigma2) -> np.ndarray:
    """Unnormalized (n, K) allocation log-weights; used by the sampler."""
    inv = 1.0 / sigma2  # (K, 2)
    diff2 = (Z[:, None, :] - mu[None, :, :]) ** 2
    return log_pi - 0.5 * (np.log(sigma2).sum(axis=1) + (diff2 * inv).sum(axis=2))


# ---------------------------------------------------------------------------
# conjugate updates


def mu_full_conditional(Z, S, k: int, sigma2_k, hyper: Hyperparams):
    """Mean and (diagonal) covariance of the Gaussian full conditional of mu_k."""
    Z = np.asarray(Z, float)
    members = Z[np.asarray(S) == k]
    n_k = members.shape[0]
    sigma2_k = np.asarray(sigma2_k, float)
    prec = n_k / sigma2_k + 1.0 / hyper.mu_prior_var
    var = 1.0 / prec
    mean = var * (members.sum(axis=0) / sigma2_k + np.asarray(hyper.mu0) / hyper.mu_prior_var)
    return mean, np.diag(var)


def sigma2_full_conditional(Z, S, mu_k, k: int, hyper: Hyperparams):
    """Inverse-gamma shape and per-coordinate scales for the variances of component k."""
    Z = np.asarray(Z, float)
    members = Z[np.asarray(S) == k]
    u_star = hyper.u_sigma2 + 0.5 * members.shape[0]
    v_star = hyper.v_sigma2 + 0.5 * ((members - np.asarray(mu_k, float)) ** 2).sum(axis=0)
    return float(u_star), v_star


# ---------------------------------------------------------------------------
# Metropolis-Hastings log-ratios


def latent_prior_logpdf(Z, S, mu, sigma2) -> float:
    """Sum over nodes of log N(z_i; mu_{S_i}, diag(sigma2_{S_i}))."""
    return float(np.sum(logpdf_mvn_diag(Z, mu[S], sigma2[S])))


def mh_logratio_Z(Y_subset, Z_cur, Z_prop, S, mu, sigma2, alpha: float,
                  family: str | None = None) -> float:
    """Log acceptance ratio of a symmetric block proposal for one latent space."""
    Z_cur, Z_prop = np.asarray(Z_cur, float), np.asarray(Z_prop, float)
    S, mu, sigma2 = np.asarray(S), np.asarray(mu, float), np.asarray(sigma2, float)
    out = sum(network_loglik(Y, Z_prop, alpha, family) - network_loglik(Y, Z_cur, alpha, family)
              for Y in Y_subset)
    return float(out + latent_prior_logpdf(Z_prop, S, mu, sigma2)
                 - latent_prior_logpdf(Z_cur, S, mu, sigma2))


def mh_logratio_alpha(Y_all, C, Z_all, alpha_cur: float, alpha_prop: float,
                      hyper: Hyperparams, family: str | None = None) -> float:
    """Log acceptance ratio of a symmetric proposal for the intercept."""
    out = 0.0
    for m, Y in enumerate(Y_all):
        Z = Z_all[int(C[m])]
        out += network_loglik(Y, Z, alpha_prop, family) - network_loglik(Y, Z, alpha_cur, family)
    out += logpdf_normal(alpha_prop, hyper.m_alpha, hyper.s_alpha)
    out -= logpdf_normal(alpha_cur, hyper.m_alpha, hyper.s_alpha)
    return float(out)


def concentration_logtarget(x: float, counts, K_total: int, n_items: int, l: float, r: float) -> float:
    """Log full conditional (up to a constant) of a Dirichlet concentration.

    The mixture weights are integrated out; ``counts`` are the occupancies of
    the active components and ``K_total`` the current number of components.
    """
    if not x > 0:
        raise ValueError("concentration must be positive")
    counts = np.asarray(counts, float)
    counts = counts[counts > 0]
    a = x / K_total
    return float(logpdf_fisher_f(x, l, r) + counts.size * np.log(x) + gammaln(x)
                 - gammaln(n_items + x) + np.sum(gammaln(counts + a) - gammaln(1.0 + a)))


def mh_logratio_concentration(x_cur: float, x_prop: float, counts, K_total: int, n_items: int,
                              l: float, r: float) -> float:
    """Log acceptance ratio for a log-normal random walk on a concentration."""
    if not (x_cur > 0 and x_prop > 0):
        raise ValueError("concentrations must be positive")
    return (concentration_logtarget(x_prop, counts, K_total, n_items, l, r)
            - concentration_logtarget(x_cur, counts, K_total, n_items, l, r)
            + np.log(x_prop) - np.log(x_cur))


def component_count_logweights(K_plus: int, counts, conc: float, k_max: int, bnb: BnbParams) -> np.ndarray:
    """Normalized log-weights for the number of components over K_plus..k_max."""
    if K_plus < 1:
        raise ValueError("K_plus must be at least 1")
    if K_plus > k_max:
        raise ValueError(f"K_plus={K_plus} exceeds the upper bound {k_max}")
    counts = np.asarray(counts, float)
    counts = counts[counts > 0]
    if counts.size != K_plus:
        raise ValueError("counts must list exactly the K_plus occupied components")
    k = np.arange(K_plus, k_max + 1, dtype=float)
    a = conc / k
    logw = (logpmf_translated_bnb(k, bnb) + K_plus * np.log(conc) + gammaln(k + 1.0)
            - K_plus * np.log(k) - gammaln(k - K_plus + 1.0)
            + np.sum(gammaln(counts[None, :] + a[:, None]) - gammaln(1.0 + a[:, None]), axis=1))
    return logw - logsumexp(logw)


# ---------------------------------------------------------------------------
# joint posterior


def log_posterior(state: ModelState, data, hyper: Hyperparams, mono: bool = False) -> float:
    """Unnormalized joint log-posterior of a state.

    ``data`` is a Multiplex or PreparedData. In ``mono`` mode latent positions
    are standard normal and the node-level mixture is absent.
    """
    if isinstance(data, Multiplex):
        data = PreparedData.from_multiplex(data)
    out = 0.0
    for g, sp in enumerate(state.spaces):
        sel = state.C == g
        if sel.any():
            out += data.stats_loglik(data.ysum[sel].sum(axis=0), int(sel.sum()),
                                     float(data.const[sel].sum()), state.alpha, data.d2(sp.Z))
    G = state.G
    out += float(state.log_tau[state.C].sum())
    out += logpdf_dirichlet(state.log_tau, np.full(G, state.e / G))
    out += logpdf_fisher_f(state.e, hyper.l_G, hyper.r_G)
    out += logpmf_translated_bnb(G, hyper.bnb_G)
    out += float(logpdf_normal(state.alpha, hyper.m_alpha, hyper.s_alpha))
    mu0 = np.asarray(hyper.mu0, float)
    for sp in state.spaces:
        if mono:
            out += float(np.sum(logpdf_mvn_diag(sp.Z, np.zeros(2), np.ones(2))))
            continue
        out += logpmf_translated_bnb(sp.K, hyper.bnb_K)
        out += logpdf_fisher_f(sp.w, hyper.l_K, hyper.r_K)
        out += logpdf_dirichlet(sp.log_pi, np.full(sp.K, sp.w / sp.K))
        out += float(sp.log_pi[sp.S].sum())
        out += float(np.sum(logpdf_mvn_diag(sp.mu, mu0, np.full(2, hyper.mu_prior_var))))
        out += float(np.sum(logpdf_invgamma(sp.sigma2, hyper.u_sigma2, hyper.v_sigma2)))
        out += latent_prior_logpdf(sp.Z, sp.S, sp.mu, sp.sigma2)
    return float(out)
