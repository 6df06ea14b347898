import itertools
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.special import gammaln

from conftest import random_space, random_state, random_symmetric
from lapcom.distributions import BnbParams
from lapcom.model import (
    Hyperparams, InvalidStateError, LatentSpace, ModelState, PreparedData,
    component_count_logweights, concentration_logtarget, log_posterior, mh_logratio_alpha,
    mh_logratio_concentration, mh_logratio_Z, mu_full_conditional, network_alloc_logprobs,
    network_loglik, node_alloc_logprobs, sigma2_full_conditional,
)
from lapcom.multiplex import Multiplex, Network

mp.mp.dps = 30


# --- hyperparameter defaults ------------------------------------------------

@pytest.mark.parametrize("M,N,u,gmax,kmax", [
    (20, 30, 11, 5, 8), (20, 50, 11, 5, 12), (50, 60, 21, 5, 8), (100, 60, 21, 10, 8),
    (60, 240, 21, 10, 26),
])
def test_default_table(M, N, u, gmax, kmax):
    H = Hyperparams.defaults(M, N)
    assert (H.u_sigma2, H.v_sigma2, H.G_max, H.K_max) == (u, 2, gmax, kmax)
    assert (H.G0, H.K0, H.m_alpha, H.s_alpha) == (2, 2, 0, 1)
    assert H.bnb_G == H.bnb_K == BnbParams(8, 18, 10)
    assert (H.l_G, H.r_G, H.l_K, H.r_K) == (6, 3, 6, 3)


def test_n_min_override_and_validation():
    assert Hyperparams.defaults(20, 240, n_min=25).K_max == round(240 / 25) + 2
    with pytest.raises(ValueError):
        Hyperparams.defaults(20, 30, G0=6)
    with pytest.raises(ValueError):
        Hyperparams.defaults(20, 4, K_max=5)
    H = Hyperparams.defaults(20, 30)
    assert Hyperparams.from_dict(H.to_dict()) == H


# --- likelihood ---------------------------------------------------------------

def test_network_loglik_examples():
    z = np.zeros((2, 2))
    assert network_loglik(Network(np.zeros((2, 2), int), family="count"), z, 0.0) == pytest.approx(-1.0)
    one = np.array([[0, 1], [1, 0]])
    assert network_loglik(Network(one), z, 0.0) == pytest.approx(math.log(0.5))


def naive_loglik(W, Z, alpha, directed, family):
    n = W.shape[0]
    tot = 0.0
    for i in range(n):
        for j in range(n):
            if i == j or (not directed and j < i):
                continue
            eta = alpha - np.sum((Z[i] - Z[j]) ** 2)
            y = W[i, j]
            if family == "binary":
                p = 1 / (1 + math.exp(-eta))
                tot += math.log(p if y else 1 - p)
            else:
                tot += stats.poisson(math.exp(eta)).logpmf(y)
    return tot


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("directed", [False, True])
@pytest.mark.parametrize("family", ["binary", "count"])
def test_network_loglik_naive(seed, directed, family):
    rng = np.random.default_rng(seed)
    W = rng.integers(0, 2 if family == "binary" else 5, size=(5, 5))
    np.fill_diagonal(W, 0)
    if not directed:
        W = np.triu(W, 1)
        W = W + W.T
    Z, alpha = rng.normal(size=(5, 2)), rng.normal()
    net = Network(W, directed, family)
    assert network_loglik(net, Z, alpha) == pytest.approx(naive_loglik(W, Z, alpha, directed, family), abs=1e-10)
    # sufficient-statistic route agrees with the direct route
    data = PreparedData.from_multiplex(Multiplex((net,)))
    via_stats = data.stats_loglik(data.ysum[0], 1, float(data.const[0]), alpha, data.d2(Z))
    assert via_stats == pytest.approx(naive_loglik(W, Z, alpha, directed, family), abs=1e-10)


def test_network_alloc_logprobs():
    rng = np.random.default_rng(0)
    net = Network(random_symmetric(rng, 5))
    st1 = random_state(rng, 1, 5, G=1)
    assert np.allclose(network_alloc_logprobs(net, st1), [0.0])
    sp = random_space(rng, 5, 2)
    twin = ModelState(2, np.log([0.5, 0.5]), 1.0, np.array([0]), 0.3, [sp, sp.copy()])
    assert np.allclose(network_alloc_logprobs(net, twin), np.log([0.5, 0.5]))
    st2 = random_state(rng, 1, 5, G=2)
    # high-precision unnormalized product oracle
    terms = []
    for g in range(2):
        prod = mp.mpf(st2.tau[g])
        W, Z = net.weights, st2.spaces[g].Z
        for i in range(5):
            for j in range(i + 1, 5):
                eta = mp.mpf(st2.alpha) - mp.mpf(float(np.sum((Z[i] - Z[j]) ** 2)))
                p = 1 / (1 + mp.e ** (-eta))
                prod *= p if W[i, j] else 1 - p
        terms.append(prod)
    oracle = [float(mp.log(t / sum(terms))) for t in terms]
    assert np.allclose(network_alloc_logprobs(net, st2), oracle, atol=1e-12)


def test_node_alloc_logprobs():
    assert np.allclose(node_alloc_logprobs([0.3, 0.1], [1.0], [[0, 0]], [[1, 1]]), [0.0])
    lp = node_alloc_logprobs([0, 0], [0.5, 0.5], [[1, 1], [-1, -1]], [[1, 1], [1, 1]])
    assert np.allclose(lp, np.log([0.5, 0.5]))
    rng = np.random.default_rng(5)
    z, pi = rng.normal(size=2), rng.dirichlet(np.ones(3))
    mu, s2 = rng.normal(size=(3, 2)), rng.uniform(0.3, 2, size=(3, 2))
    dens = np.array([pi[k] * stats.multivariate_normal(mu[k], np.diag(s2[k])).pdf(z) for k in range(3)])
    assert np.allclose(node_alloc_logprobs(z, pi, mu, s2), np.log(dens / dens.sum()), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), K=st.integers(1, 6), scale=st.floats(0.01, 50))
def test_alloc_logprobs_are_simplices(seed, K, scale):
    rng = np.random.default_rng(seed)
    Z = scale * rng.normal(size=(7, 2))
    lp = node_alloc_logprobs(Z, rng.dirichlet(np.ones(K)), rng.normal(size=(K, 2)),
                             rng.uniform(0.1, 2, size=(K, 2)))
    assert np.allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-12)
    net = Network(random_symmetric(rng, 7, high=4), family="count")
    state = random_state(rng, 1, 7, G=K)
    for sp in state.spaces:
        sp.Z *= scale
    assert abs(np.exp(network_alloc_logprobs(net, state)).sum() - 1) < 1e-12


# --- conjugate updates ----------------------------------------------------------

def test_mu_full_conditional_closed_form():
    H = Hyperparams.defaults(1, 10)
    mean, cov = mu_full_conditional(np.array([[2.0, 0.0]]), np.array([0]), 0, [1.0, 1.0], H)
    assert np.allclose(mean, [1.0, 0.0], atol=1e-12) and np.allclose(cov, np.diag([0.5, 0.5]), atol=1e-12)
    rng = np.random.default_rng(0)
    Z = rng.normal(loc=[1.5, -0.5], size=(10_000, 2))
    mean, _ = mu_full_conditional(Z, np.zeros(10_000, int), 0, [1.0, 1.0], H)
    assert np.allclose(mean, Z.mean(axis=0), atol=1e-2)
    pts = np.array([[2.0, 1.0], [1.0, 3.0]])
    shrink = [np.linalg.norm(mu_full_conditional(pts, np.zeros(2, int), 0, [s, s], H)[0])
              for s in (0.1, 1.0, 10.0, 100.0)]
    assert all(a > b for a, b in zip(shrink, shrink[1:]))


def test_mu_grid_posterior_oracle():
    H = Hyperparams.defaults(1, 10)
    Z = np.array([[0.4, -1.1], [1.3, 0.2], [0.9, -0.3], [5.0, 5.0]])
    S = np.array([0, 0, 0, 1])
    s2 = np.array([0.7, 1.9])
    mean, cov = mu_full_conditional(Z, S, 0, s2, H)
    g = np.linspace(-4, 4, 801)
    X, Y = np.meshgrid(g, g, indexing="ij")
    logp = stats.norm(0, 1).logpdf(X) + stats.norm(0, 1).logpdf(Y)
    for z in Z[S == 0]:
        logp += stats.norm(X, math.sqrt(s2[0])).logpdf(z[0]) + stats.norm(Y, math.sqrt(s2[1])).logpdf(z[1])
    p = np.exp(logp - logp.max())
    p /= p.sum()
    m = np.array([(p * X).sum(), (p * Y).sum()])
    v = np.array([(p * (X - m[0]) ** 2).sum(), (p * (Y - m[1]) ** 2).sum()])
    assert np.allclose(m, mean, atol=1e-6)
    assert np.allclose(v, np.diag(cov), atol=1e-6)


def test_sigma2_full_conditional():
    H = Hyperparams.defaults(1, 10)
    Z = np.array([[1.0, 2.0], [0.0, -1.0], [2.0, 0.5], [-1.0, 1.0], [9.0, 9.0]])
    S = np.array([0, 0, 0, 0, 1])
    u, v = sigma2_full_conditional(Z, S, [0.5, 0.5], 2, H)
    assert u == H.u_sigma2 and np.allclose(v, H.v_sigma2)
    u, v = sigma2_full_conditional(Z, S, [9.0, 9.0], 1, H)
    assert u == pytest.approx(H.u_sigma2 + 0.5) and np.allclose(v, H.v_sigma2)
    u, v = sigma2_full_conditional(Z, S, [0.5, 0.5], 0, H)
    ss = np.array([0.25 + 0.25 + 2.25 + 2.25, 2.25 + 2.25 + 0.0 + 0.25])
    assert u == pytest.approx(H.u_sigma2 + 2.0, abs=1e-12)
    assert np.allclose(v, H.v_sigma2 + 0.5 * ss, atol=1e-12)
    assert np.sum(v) - 2 * H.v_sigma2 == pytest.approx(0.5 * ss.sum(), abs=1e-12)


def test_sigma2_grid_posterior_oracle():
    H = Hyperparams.defaults(1, 10)
    Z = np.array([[1.0, 2.0], [0.0, -1.0], [2.0, 0.5], [-1.0, 1.0]])
    mu = np.array([0.5, 0.5])
    u, v = sigma2_full_conditional(Z, np.zeros(4, int), mu, 0, H)
    grid = np.linspace(1e-4, 4, 400_001)
    for q in range(2):
        logp = stats.invgamma(H.u_sigma2, scale=H.v_sigma2).logpdf(grid)
        logp += stats.norm(mu[q], np.sqrt(grid[:, None])).logpdf(Z[:, q]).sum(axis=1)
        p = np.exp(logp - logp.max())
        p /= p.sum()
        assert (p * grid).sum() == pytest.approx(v[q] / (u - 1), rel=1e-6)
        var = v[q] ** 2 / ((u - 1) ** 2 * (u - 2))
        assert (p * (grid - v[q] / (u - 1)) ** 2).sum() == pytest.approx(var, rel=1e-4)


# --- MH log-ratios versus the joint -----------------------------------------------

def two_network_setup(seed=0, family="count"):
    rng = np.random.default_rng(seed)
    high = 3 if family == "count" else 1
    mx = Multiplex.from_arrays([random_symmetric(rng, 4, high) for _ in range(3)], family=family)
    state = random_state(rng, 3, 4, G=2, K=2)
    return rng, mx, state, Hyperparams.defaults(3, 4, K_max=3)


@pytest.mark.parametrize("family", ["count", "binary"])
@pytest.mark.parametrize("seed", range(4))
def test_mh_Z_matches_joint_difference(family, seed):
    rng, mx, state, H = two_network_setup(seed, family)
    g = 0
    prop = state.copy()
    prop.spaces[g].Z = state.spaces[g].Z + 0.3 * rng.normal(size=(4, 2))
    Y_sub = [mx[m] for m in range(3) if state.C[m] == g]
    sp = state.spaces[g]
    r = mh_logratio_Z(Y_sub, sp.Z, prop.spaces[g].Z, sp.S, sp.mu, sp.sigma2, state.alpha)
    diff = log_posterior(prop, mx, H) - log_posterior(state, mx, H)
    assert r == pytest.approx(diff, abs=1e-10)
    assert mh_logratio_Z(Y_sub, sp.Z, sp.Z, sp.S, sp.mu, sp.sigma2, state.alpha) == 0.0


def test_mh_Z_empty_component_is_prior_ratio():
    rng, mx, state, H = two_network_setup(1)
    sp = state.spaces[1]
    Zp = sp.Z + 0.2
    r = mh_logratio_Z([], sp.Z, Zp, sp.S, sp.mu, sp.sigma2, state.alpha)
    prior = lambda Z: sum(stats.multivariate_normal(sp.mu[sp.S[i]], np.diag(sp.sigma2[sp.S[i]])).logpdf(Z[i])
                          for i in range(4))
    assert r == pytest.approx(prior(Zp) - prior(sp.Z), abs=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_mh_alpha_matches_joint_difference(seed):
    rng, mx, state, H = two_network_setup(seed)
    prop = state.copy()
    prop.alpha = state.alpha + 0.17
    Z_all = [sp.Z for sp in state.spaces]
    r = mh_logratio_alpha(list(mx.networks), state.C, Z_all, state.alpha, prop.alpha, H)
    assert r == pytest.approx(log_posterior(prop, mx, H) - log_posterior(state, mx, H), abs=1e-10)
    assert mh_logratio_alpha(list(mx.networks), state.C, Z_all, 0.3, 0.3, H) == 0.0
    prior_only = mh_logratio_alpha([], [], [], 0.2, -0.5, H)
    assert prior_only == pytest.approx(stats.norm.logpdf(-0.5) - stats.norm.logpdf(0.2), abs=1e-12)


def collapsed_concentration_oracle(x, counts, K, n, l, r):
    """log F(x; l, r) + log P(allocations | x) with the weights integrated out."""
    x = mp.mpf(x)
    a = x / K
    out = mp.log(mp.mpf(stats.f(l, r).pdf(float(x))))
    out += mp.loggamma(x) - mp.loggamma(n + x)
    for c in counts:
        out += mp.loggamma(c + a) - mp.loggamma(a)
    return out


@pytest.mark.parametrize("counts,K,n", [((20,), 1, 20), ((12, 8), 3, 20), ((5, 3, 1, 1), 6, 10)])
def test_concentration_ratio_vs_collapsed_oracle(counts, K, n):
    for x0, x1 in [(0.5, 1.7), (1e-3, 2.0), (3.0, 0.2)]:
        r = mh_logratio_concentration(x0, x1, counts, K, n, 6, 3)
        oracle = (collapsed_concentration_oracle(x1, counts, K, n, 6, 3)
                  - collapsed_concentration_oracle(x0, counts, K, n, 6, 3) + mp.log(x1) - mp.log(x0))
        assert r == pytest.approx(float(oracle), abs=1e-9)
    assert mh_logratio_concentration(1.2, 1.2, counts, K, n, 6, 3) == 0.0
    with pytest.raises(ValueError):
        mh_logratio_concentration(0.0, 1.0, counts, K, n, 6, 3)


@given(x0=st.floats(1e-4, 50), x1=st.floats(1e-4, 50))
def test_concentration_acceptance_probability(x0, x1):
    r = mh_logratio_concentration(x0, x1, (7, 2, 1), 4, 10, 6, 3)
    assert np.isfinite(r)
    assert 0 < min(1.0, math.exp(min(r, 0))) <= 1


def test_component_count_logweights():
    bnb = BnbParams(8, 18, 10)
    assert np.allclose(component_count_logweights(3, (4, 4, 2), 1.0, 3, bnb), [0.0])
    lw = component_count_logweights(1, (20,), 0.7, 6, bnb)
    oracle = []
    for k in range(1, 7):
        t = (mp.loggamma(8 + k - 1) + mp.log(mp.beta(26, k - 1 + 10)) - mp.loggamma(8) - mp.loggamma(k)
             - mp.log(mp.beta(18, 10)))
        t += mp.log(0.7) + mp.loggamma(k + 1) - mp.log(k) - mp.loggamma(k)
        t += mp.loggamma(20 + mp.mpf(0.7) / k) - mp.loggamma(1 + mp.mpf(0.7) / k)
        oracle.append(t)
    norm = mp.log(sum(mp.e ** t for t in oracle))
    assert np.allclose(lw, [float(t - norm) for t in oracle], atol=1e-12)
    assert abs(np.exp(lw).sum() - 1) < 1e-12
    with pytest.raises(ValueError):
        component_count_logweights(4, (1, 1, 1, 1), 1.0, 3, bnb)


# --- joint posterior ----------------------------------------------------------------

def test_log_posterior_term_by_term():
    W = np.array([[0, 2, 0], [2, 0, 1], [0, 1, 0]])
    mx = Multiplex.from_arrays([W], family="count")
    H = Hyperparams.defaults(1, 3, K_max=3)
    Z = np.array([[0.1, 0.2], [-0.3, 0.4], [0.5, -0.6]])
    sp = LatentSpace(Z, np.zeros(3, int), 1, 1.3, np.zeros(1), np.array([[0.2, -0.1]]), np.array([[0.3, 0.5]]))
    state = ModelState(1, np.zeros(1), 0.8, np.array([0]), 0.4, [sp])
    hand = naive_loglik(W, Z, 0.4, False, "count")
    hand += stats.f(6, 3).logpdf(0.8) + stats.f(6, 3).logpdf(1.3)
    bnb1 = math.log(mp.beta(26, 10) / mp.beta(18, 10))
    hand += 2 * bnb1 + stats.norm.logpdf(0.4)
    hand += stats.multivariate_normal([0, 0], np.eye(2)).logpdf([0.2, -0.1])
    hand += stats.invgamma(11, scale=2).logpdf([0.3, 0.5]).sum()
    hand += stats.multivariate_normal([0.2, -0.1], np.diag([0.3, 0.5])).logpdf(Z).sum()
    assert log_posterior(state, mx, H) == pytest.approx(hand, abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_log_posterior_label_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    mx = Multiplex.from_arrays([random_symmetric(rng, 5, 2) for _ in range(4)], family="count")
    state = random_state(rng, 4, 5, G=3, K=3)
    H = Hyperparams.defaults(4, 5, K_max=4)
    base = log_posterior(state, mx, H)
    for perm in itertools.permutations(range(3)):
        perm = np.array(perm)
        inv = np.argsort(perm)
        s = ModelState(3, state.log_tau[perm], state.e, inv[state.C], state.alpha,
                       [state.spaces[j].copy() for j in perm])
        for sp in s.spaces:
            kp = rng.permutation(sp.K)
            kinv = np.argsort(kp)
            sp.S, sp.log_pi, sp.mu, sp.sigma2 = kinv[sp.S], sp.log_pi[kp], sp.mu[kp], sp.sigma2[kp]
        assert log_posterior(s, mx, H) == pytest.approx(base, abs=1e-9)


def test_state_check():
    rng = np.random.default_rng(0)
    state = random_state(rng, 4, 5, G=2, K=2)
    state.check()
    bad = state.copy()
    bad.C[:] = 1
    with pytest.raises(InvalidStateError):
        bad.check()
