"""Metropolis-within-Gibbs sampler with telescoping updates of component counts.

One sweep resamples, in order: network allocations, each occupied latent
space (positions, node allocations, node-component parameters, node
component count, node concentration, node weights), the intercept, the
number of latent spaces, the network concentration, parameters of empty
latent spaces, and the network weights.
"""

from __future__ import annotations

import logging
import os
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._kernels import sweep_kernel
from .distributions import BERNOULLI_LOGIT, BnbParams, sample_invgamma, sample_log_dirichlet
from .embedding import classical_mds, cluster_points
from .evaluation.schieber import schieber_distance_matrix
from .model import Hyperparams, LatentSpace, ModelState, PreparedData, log_posterior
from .multiplex import Multiplex, geodesic_distance_matrix

log = logging.getLogger(__name__)

LAPCOM = "lapcom"
MONO = "mono-lapcm"
VARIANTS = (LAPCOM, MONO)
BLOCKS = ("Z", "alpha", "e", "w")


@dataclass(frozen=True)
class SamplerConfig:
    """Run settings. ``n_iter`` counts post-burn-in sweeps; total = burn_in + n_iter."""

    n_iter: int = 1000
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    variant: str = LAPCOM
    init_method: str = "kmeans"
    hyper: Hyperparams | None = None
    data_free: bool = False
    tune: bool = True
    alpha_init: str = "dyad-mean"
    checkpoint_every: int = 10_000
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.n_iter < 1 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("need n_iter >= 1, burn_in >= 0, thin >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.init_method not in ("kmeans", "gmm"):
            raise ValueError("init_method must be 'kmeans' or 'gmm'")
        if self.alpha_init not in ("dyad-mean", "per-node"):
            raise ValueError("alpha_init must be 'dyad-mean' or 'per-node'")

    @property
    def mono(self) -> bool:
        return self.variant == MONO

    @property
    def n_samples(self) -> int:
        return self.n_iter // self.thin

    def resolve(self, mx: Multiplex) -> "SamplerConfig":
        """Fill in default hyperparameters for this multiplex."""
        if self.hyper is not None:
            self.hyper.validate(mx.n_nodes)
            return self
        return replace(self, hyper=Hyperparams.defaults(mx.n_networks, mx.n_nodes))

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "hyper"}
        d["hyper"] = None if self.hyper is None else self.hyper.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        if d.get("hyper") is not None:
            d["hyper"] = Hyperparams.from_dict(d["hyper"])
        return cls(**d)


@dataclass
class Trace:
    samples: list
    log_posterior: np.ndarray
    acceptance_rates: dict
    config: SamplerConfig
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    final_deltas: dict = field(default_factory=dict)
    G_plus_path: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.samples)

    def G_plus(self) -> np.ndarray:
        return np.array([s.G_plus for s in self.samples])

    def C_draws(self) -> np.ndarray:
        return np.stack([s.C for s in self.samples])


# ---------------------------------------------------------------------------
# prior draws


def prior_latent_space(n_nodes: int, hyper: Hyperparams, rng, mono: bool = False) -> LatentSpace:
    """A latent space with a single node component, drawn from the prior."""
    if mono:
        mu, sigma2, w = np.zeros((1, 2)), np.ones((1, 2)), 1.0
    else:
        mu = np.asarray(hyper.mu0) + np.sqrt(hyper.mu_prior_var) * rng.standard_normal((1, 2))
        sigma2 = sample_invgamma(hyper.u_sigma2, hyper.v_sigma2, rng, size=(1, 2))
        w = float(rng.f(hyper.l_K, hyper.r_K))
    Z = mu + np.sqrt(sigma2) * rng.standard_normal((n_nodes, 2))
    return LatentSpace(Z, np.zeros(n_nodes, dtype=np.int64), 1, w, np.zeros(1), mu, sigma2)


def sample_cluster_count_prior(n_items: int, n_draws: int, bnb: BnbParams, l: float, r: float,
                               rng: np.random.Generator, k_max: int | None = None) -> np.ndarray:
    """Draws of the number of occupied clusters implied by the mixture prior.

    K - 1 is drawn as a beta mixture of negative binomials, the concentration
    from F(l, r) and the allocations from Dir(conc / K) weights. ``k_max``
    truncates K by rejection, as the sampler does.
    """
    out = np.empty(n_draws, dtype=np.int64)
    for t in range(n_draws):
        while True:
            K = 1 + rng.negative_binomial(bnb.a, rng.beta(bnb.b, bnb.c))
            if k_max is None or K <= k_max:
                break
        conc = rng.f(l, r)
        weights = np.exp(sample_log_dirichlet(np.full(K, conc / K), rng))
        out[t] = np.unique(rng.choice(K, size=n_items, p=weights / weights.sum())).size
    return out


# ---------------------------------------------------------------------------
# initialization


def _initial_alpha(mx: Multiplex, C, spaces, how: str) -> float:
    n = mx.n_nodes
    Y = mx.stack().astype(float)
    iu = np.triu_indices(n, k=1)
    vals = []
    for m in range(len(mx)):
        Z = spaces[C[m]].Z
        d2 = ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
        if how == "per-node":
            density = Y[m].sum() / n
            spread = (d2[iu].sum()) / n
        else:
            density = Y[m].sum() / (n * (n - 1))
            spread = d2[iu].mean()
        vals.append(np.log(max(density, 1.0 / n ** 2)) + spread)
    return float(np.mean(vals))


def init_chain(mx: Multiplex, cfg: SamplerConfig, rng: np.random.Generator) -> ModelState:
    """Deterministic-given-rng starting state built from graph summaries."""
    cfg = cfg.resolve(mx)
    H = cfg.hyper
    M, N = mx.n_networks, mx.n_nodes
    seed = int(rng.integers(2 ** 31 - 1))
    n_groups = min(H.G0, M)
    if n_groups <= 1:
        C = np.zeros(M, dtype=np.int64)
    else:
        D = schieber_distance_matrix(mx.networks)
        emb = classical_mds(D, 2)
        C, _ = cluster_points(emb, n_groups, cfg.init_method, seed)
    geo = [geodesic_distance_matrix(net) for net in mx.networks]
    spaces = []
    for g in range(H.G0):
        members = np.nonzero(C == g)[0]
        if members.size == 0:
            spaces.append(prior_latent_space(N, H, rng, cfg.mono))
            continue
        Z = classical_mds(np.mean([geo[m] for m in members], axis=0), 2)
        if cfg.mono:
            spaces.append(LatentSpace(Z, np.zeros(N, dtype=np.int64), 1, 1.0, np.zeros(1),
                                      np.zeros((1, 2)), np.ones((1, 2))))
            continue
        S, centers = cluster_points(Z, H.K0, "kmeans", seed + 1 + g)
        K = H.K0
        if centers.shape[0] < K:  # fewer nodes than K0
            extra = np.asarray(H.mu0) + rng.standard_normal((K - centers.shape[0], 2))
            centers = np.vstack([centers, extra])
        sigma2 = sample_invgamma(H.u_sigma2, H.v_sigma2, rng, size=(K, 2))
        w = float(rng.f(H.l_K, H.r_K))
        spaces.append(LatentSpace(Z, S, K, w, np.full(K, -np.log(K)), centers, sigma2))
    alpha = _initial_alpha(mx, C, spaces, cfg.alpha_init)
    state = ModelState(H.G0, np.full(H.G0, -np.log(H.G0)), 1e-5, C, alpha, spaces)
    return state


def perturb_state(state: ModelState, rng: np.random.Generator, scale: float = 0.1) -> ModelState:
    """Jitter latent positions (relative to their spread) and the intercept."""
    out = state.copy()
    for sp in out.spaces:
        sd = sp.Z.std(axis=0)
        sp.Z = sp.Z + scale * sd * rng.standard_normal(sp.Z.shape)
    out.alpha = out.alpha + scale * rng.standard_normal()
    return out


# ---------------------------------------------------------------------------
# the sweep


def hyper_vector(H: Hyperparams) -> np.ndarray:
    return np.array([H.m_alpha, H.s_alpha, H.mu0[0], H.mu0[1], H.mu_prior_var, H.u_sigma2,
                     H.v_sigma2, H.bnb_G.a, H.bnb_G.b, H.bnb_G.c, H.bnb_K.a, H.bnb_K.b, H.bnb_K.c,
                     H.l_G, H.r_G, H.l_K, H.r_K, H.s_e, H.s_w], dtype=float)


class PackedState:
    """Fixed-capacity array form of a ModelState, as consumed by the kernel."""

    def __init__(self, state: ModelState, G_max: int, K_max: int):
        N = state.spaces[0].Z.shape[0]
        G = state.G
        cap_k = max(K_max, max(sp.K for sp in state.spaces))
        self.st_i = np.array([G], dtype=np.int64)
        self.st_f = np.array([state.e, state.alpha], dtype=float)
        self.C = state.C.astype(np.int64).copy()
        self.log_tau = np.zeros(G_max)
        self.log_tau[:G] = state.log_tau
        self.Z = np.zeros((G_max, N, 2))
        self.S = np.zeros((G_max, N), dtype=np.int64)
        self.K = np.ones(G_max, dtype=np.int64)
        self.w = np.ones(G_max)
        self.log_pi = np.zeros((G_max, cap_k))
        self.mu = np.zeros((G_max, cap_k, 2))
        self.sigma2 = np.ones((G_max, cap_k, 2))
        for g, sp in enumerate(state.spaces):
            self.Z[g], self.S[g], self.K[g], self.w[g] = sp.Z, sp.S, sp.K, sp.w
            self.log_pi[g, :sp.K] = sp.log_pi
            self.mu[g, :sp.K] = sp.mu
            self.sigma2[g, :sp.K] = sp.sigma2

    def to_state(self) -> ModelState:
        G = int(self.st_i[0])
        spaces = []
        for g in range(G):
            K = int(self.K[g])
            spaces.append(LatentSpace(self.Z[g].copy(), self.S[g].copy(), K, float(self.w[g]),
                                      self.log_pi[g, :K].copy(), self.mu[g, :K].copy(),
                                      self.sigma2[g, :K].copy()))
        return ModelState(G, self.log_tau[:G].copy(), float(self.st_f[0]), self.C.copy(),
                          float(self.st_f[1]), spaces)


@dataclass
class SweepStats:
    accepted: np.ndarray = field(default_factory=lambda: np.zeros(len(BLOCKS), dtype=np.int64))
    proposed: np.ndarray = field(default_factory=lambda: np.zeros(len(BLOCKS), dtype=np.int64))

    def rates(self) -> dict:
        return {b: (float(self.accepted[i] / self.proposed[i]) if self.proposed[i] else float("nan"))
                for i, b in enumerate(BLOCKS)}


def _run_sweeps(packed: PackedState, data: PreparedData, H: Hyperparams, rng, mono: bool,
                n_sweeps: int, t0: int, burn_in: int, tune: bool, delta: np.ndarray,
                tune_step: np.ndarray, stats: SweepStats, gp_path: np.ndarray | None = None) -> None:
    if gp_path is None:
        gp_path = np.zeros(0, dtype=np.int64)
    sweep_kernel(n_sweeps, t0, burn_in, tune, mono, data.ysum, data.n_obs,
                 data.family == BERNOULLI_LOGIT, data.rows, data.cols, hyper_vector(H),
                 H.G_max, H.K_max, packed.st_i, packed.st_f, packed.C, packed.log_tau, packed.Z,
                 packed.S, packed.K, packed.w, packed.log_pi, packed.mu, packed.sigma2, delta,
                 tune_step, stats.accepted, stats.proposed, gp_path, rng)


def sweep(state: ModelState, data: PreparedData, H: Hyperparams, rng: np.random.Generator,
          mono: bool = False, stats: SweepStats | None = None) -> ModelState:
    """One full Gibbs sweep at the fixed proposal scales in ``H``; returns the new state."""
    packed = PackedState(state, H.G_max, H.K_max)
    delta = np.array([H.delta_Z, H.delta_alpha])
    _run_sweeps(packed, data, H, rng, mono, 1, 1, 0, False, delta, np.zeros(1, dtype=np.int64),
                stats if stats is not None else SweepStats())
    return packed.to_state()


# ---------------------------------------------------------------------------
# chains


def _rngs(seed: int, init_seed: int):
    return (np.random.default_rng([init_seed, 0]), np.random.default_rng([seed, 1]),
            np.random.default_rng([seed, 2]))


def _checkpoint_path(cfg: SamplerConfig) -> Path | None:
    if cfg.checkpoint_dir is None:
        return None
    return Path(cfg.checkpoint_dir) / f"checkpoint_seed{cfg.seed}.pkl"


def run_chain(mx: Multiplex, cfg: SamplerConfig, init_state: ModelState | None = None,
              init_seed: int | None = None, perturb: bool = False) -> Trace:
    """Run burn-in plus ``n_iter`` sweeps and keep every ``thin``-th post-burn-in state.

    Deterministic in (data, cfg, init_seed). With ``cfg.checkpoint_dir`` set,
    progress is pickled every ``cfg.checkpoint_every`` sweeps and a rerun
    resumes from the latest checkpoint.
    """
    cfg = cfg.resolve(mx)
    H = cfg.hyper
    init_rng, rng, jitter_rng = _rngs(cfg.seed, cfg.seed if init_seed is None else init_seed)
    data = PreparedData.from_multiplex(mx, data_free=cfg.data_free)
    state = init_chain(mx, cfg, init_rng) if init_state is None else init_state.copy()
    if perturb:
        state = perturb_state(state, jitter_rng)
    packed = PackedState(state, H.G_max, H.K_max)
    delta = np.array([H.delta_Z, H.delta_alpha])
    tune_step = np.zeros(1, dtype=np.int64)
    stats = SweepStats()
    samples, iters = [], []
    total = cfg.burn_in + cfg.n_iter
    gp_path = np.zeros(total, dtype=np.int64)
    t = 0
    ckpt = _checkpoint_path(cfg)
    if ckpt is not None and ckpt.exists():
        with open(ckpt, "rb") as fh:
            saved = pickle.load(fh)
        packed, delta, tune_step, stats = saved["packed"], saved["delta"], saved["tune_step"], saved["stats"]
        samples, iters, t, gp_path = saved["samples"], saved["iters"], saved["t"], saved["gp_path"]
        rng.bit_generator.state = saved["rng"]
    while t < total:
        # advance to the next snapshot, checkpoint or end of burn-in
        stop = total
        if t < cfg.burn_in:
            stop = cfg.burn_in
        else:
            stop = min(stop, t + cfg.thin - (t - cfg.burn_in) % cfg.thin)
        if ckpt is not None:
            stop = min(stop, (t // cfg.checkpoint_every + 1) * cfg.checkpoint_every)
        _run_sweeps(packed, data, H, rng, cfg.mono, stop - t, t, cfg.burn_in, cfg.tune, delta,
                    tune_step, stats, gp_path)
        t = stop
        if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
            samples.append(packed.to_state())
            iters.append(t)
        if ckpt is not None and t % cfg.checkpoint_every == 0 and t < total:
            ckpt.parent.mkdir(parents=True, exist_ok=True)
            tmp = ckpt.with_suffix(".tmp")
            with open(tmp, "wb") as fh:
                pickle.dump(dict(packed=packed, delta=delta, tune_step=tune_step, stats=stats,
                                 samples=samples, iters=iters, t=t, gp_path=gp_path, rng=rng.bit_generator.state), fh)
            os.replace(tmp, ckpt)
    if ckpt is not None and ckpt.exists():
        ckpt.unlink()
    lp = np.array([log_posterior(s, data, H, cfg.mono) for s in samples])
    rates = stats.rates()
    log.info("chain seed=%d acceptance %s", cfg.seed,
             ", ".join(f"{k}={v:.3f}" for k, v in rates.items()))
    return Trace(samples, lp, rates, cfg, np.asarray(iters, dtype=np.int64),
                 {"delta_Z": float(delta[0]), "delta_alpha": float(delta[1])}, gp_path)


def _chain_job(args):
    mx, cfg, init_state, init_seed, perturb = args
    return run_chain(mx, cfg, init_state, init_seed, perturb)


def run_multichain(mx: Multiplex, cfg: SamplerConfig, n_chains: int = 1, perturb: bool = True,
                   jobs: int = 1) -> list:
    """Independent chains with seeds seed, seed+1, ...

    All chains share the initialization built from ``cfg.seed``; chains after
    the first are jittered when ``perturb`` is true.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    cfg = cfg.resolve(mx)
    init_rng, _, _ = _rngs(cfg.seed, cfg.seed)
    init_state = init_chain(mx, cfg, init_rng)
    jobs_args = [(mx, replace(cfg, seed=cfg.seed + i), init_state, cfg.seed, perturb and i > 0)
                 for i in range(n_chains)]
    if jobs <= 1 or n_chains == 1:
        return [_chain_job(a) for a in jobs_args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_chain_job, jobs_args))
