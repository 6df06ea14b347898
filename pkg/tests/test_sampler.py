import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import lapcom.sampler as sampler_mod
from lapcom.distributions import BnbParams
from conftest import random_symmetric
from lapcom.evaluation.scenarios import generate_scenario, preset
from lapcom.model import Hyperparams, PreparedData
from lapcom.multiplex import Multiplex
from lapcom.sampler import sample_cluster_count_prior
from lapcom.sampler import (
    SamplerConfig, SweepStats, init_chain, run_chain, run_multichain, sweep,
)
from lapcom.traceio import load_trace, save_trace


@pytest.fixture(scope="module")
def scenario_a():
    return generate_scenario(preset("A", seed=11))


def test_config_validation():
    assert SamplerConfig(n_iter=100, thin=7).n_samples == 14
    for bad in (dict(n_iter=0), dict(thin=0), dict(burn_in=-1), dict(variant="x"), dict(init_method="x")):
        with pytest.raises(ValueError):
            SamplerConfig(**bad)
    cfg = SamplerConfig(n_iter=5, hyper=Hyperparams.defaults(3, 8))
    assert SamplerConfig.from_dict(cfg.to_dict()) == cfg


def test_snapshot_count_and_determinism(scenario_a):
    mx, _ = scenario_a
    cfg = SamplerConfig(n_iter=10, burn_in=0, thin=1, seed=4)
    a, b = run_chain(mx, cfg), run_chain(mx, cfg)
    assert len(a.samples) == 10 and list(a.iterations) == list(range(1, 11))
    assert np.array_equal(a.log_posterior, b.log_posterior)
    assert all(0 <= r <= 1 for r in a.acceptance_rates.values())
    c = run_chain(mx, SamplerConfig(n_iter=30, burn_in=20, thin=3, seed=4))
    assert len(c.samples) == 10 and c.iterations[0] == 23


def test_init_single_space(scenario_a):
    mx, _ = scenario_a
    H = Hyperparams.defaults(mx.n_networks, mx.n_nodes, G0=1)
    s = init_chain(mx, SamplerConfig(hyper=H), np.random.default_rng(0))
    assert s.G == 1 and not s.C.any()
    assert s.e == pytest.approx(1e-5)


def test_init_duplicate_networks():
    rng = np.random.default_rng(0)
    W = random_symmetric(rng, 8)
    mx = Multiplex.from_arrays([W, W.copy()])
    s = init_chain(mx, SamplerConfig(), np.random.default_rng(0)).copy()
    assert sorted(s.C.tolist()) == [0, 1]
    s.check()


def test_init_separates_distinct_pairs():
    rng = np.random.default_rng(1)
    dense = lambda: random_symmetric(rng, 12) | np.triu(np.ones((12, 12), int), 1) | np.tril(np.ones((12, 12), int), -1)
    ring = np.roll(np.eye(12, dtype=int), 1, axis=1)
    ring = ring + ring.T
    mx = Multiplex.from_arrays([dense(), ring, dense(), ring.copy()])
    s = init_chain(mx, SamplerConfig(), np.random.default_rng(0))
    assert s.C[0] == s.C[2] and s.C[1] == s.C[3] and s.C[0] != s.C[1]


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10**6), family=st.sampled_from(["binary", "count"]), mono=st.booleans())
def test_sweeps_preserve_invariants(seed, family, mono):
    rng = np.random.default_rng(seed)
    high = 1 if family == "binary" else 3
    mx = Multiplex.from_arrays([random_symmetric(rng, 7, high) for _ in range(5)], family=family)
    H = Hyperparams.defaults(5, 7)
    cfg = SamplerConfig(hyper=H, variant="mono-lapcm" if mono else "lapcom")
    state = init_chain(mx, cfg, rng)
    data = PreparedData.from_multiplex(mx)
    for _ in range(25):
        state = sweep(state, data, H, rng, mono=mono)
        state.check(H, mono=mono)
        assert state.G_plus <= state.G <= H.G_max
        if mono:
            for sp in state.spaces:
                assert sp.K == 1 and np.all(sp.mu == 0) and np.all(sp.sigma2 == 1)


def test_single_component_config_only_moves_z_and_alpha(scenario_a):
    mx, _ = scenario_a
    H = Hyperparams.defaults(mx.n_networks, mx.n_nodes, G0=1, G_max=1, K0=1, K_max=1)
    rng = np.random.default_rng(0)
    state = init_chain(mx, SamplerConfig(hyper=H), rng)
    stats = SweepStats()
    new = sweep(state, PreparedData.from_multiplex(mx), H, rng, stats=stats)
    assert new.G == 1 and new.spaces[0].K == 1
    assert np.array_equal(new.C, state.C) and np.array_equal(new.spaces[0].S, state.spaces[0].S)
    assert stats.proposed[0] == 1 and stats.proposed[1] == 1


def test_multichain(scenario_a):
    mx, _ = scenario_a
    cfg = SamplerConfig(n_iter=5, seed=9)
    one = run_multichain(mx, cfg, n_chains=1)
    assert len(one) == 1
    assert np.array_equal(one[0].log_posterior, run_chain(mx, cfg).log_posterior)
    unperturbed = run_multichain(mx, cfg, n_chains=2, perturb=False)
    assert not np.array_equal(unperturbed[0].log_posterior, unperturbed[1].log_posterior)
    perturbed = run_multichain(mx, cfg, n_chains=2, perturb=True)
    assert np.array_equal(perturbed[0].log_posterior, one[0].log_posterior)
    assert not np.array_equal(perturbed[1].log_posterior, unperturbed[1].log_posterior)


def test_checkpoint_resume(scenario_a, tmp_path, monkeypatch):
    mx, _ = scenario_a
    cfg = SamplerConfig(n_iter=40, burn_in=20, thin=5, seed=2, checkpoint_every=15,
                        checkpoint_dir=str(tmp_path))
    reference = run_chain(mx, SamplerConfig(n_iter=40, burn_in=20, thin=5, seed=2))
    real = sampler_mod._run_sweeps
    calls = {"n": 0}

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] == 6:
            raise KeyboardInterrupt
        return real(*args, **kw)

    monkeypatch.setattr(sampler_mod, "_run_sweeps", flaky)
    with pytest.raises(KeyboardInterrupt):
        run_chain(mx, cfg)
    assert list(tmp_path.glob("checkpoint_*.pkl"))
    monkeypatch.setattr(sampler_mod, "_run_sweeps", real)
    resumed = run_chain(mx, cfg)
    assert np.array_equal(resumed.log_posterior, reference.log_posterior)
    assert not list(tmp_path.glob("checkpoint_*.pkl"))


def test_trace_round_trip(scenario_a, tmp_path):
    mx, _ = scenario_a
    tr = run_chain(mx, SamplerConfig(n_iter=12, thin=3, seed=1))
    save_trace(tr, tmp_path / "chain")
    header = (tmp_path / "chain" / "states" / "states.csv").read_text().splitlines()[0].split(",")
    for name in ("alpha", "tau_1", "C_1", "Z_1_1_1", "mu_1_1_1", "sigma2_1_1_1", "pi_1_1", "S_1_1",
                 "e", "w_1", "G", "K_1"):
        assert name in header
    back = load_trace(tmp_path / "chain")
    assert back.config == tr.config
    assert np.array_equal(back.log_posterior, tr.log_posterior)
    for a, b in zip(back.samples, tr.samples):
        assert a.G == b.G and np.array_equal(a.C, b.C) and a.alpha == b.alpha and a.e == b.e
        assert np.array_equal(a.log_tau, b.log_tau)
        for sa, sb in zip(a.spaces, b.spaces):
            assert np.array_equal(sa.Z, sb.Z) and np.array_equal(sa.S, sb.S)
            assert np.array_equal(sa.mu, sb.mu) and np.array_equal(sa.sigma2, sb.sigma2)
            assert np.array_equal(sa.log_pi, sb.log_pi)


def test_cluster_count_prior_limits():
    rng = np.random.default_rng(0)
    bnb = BnbParams(8.0, 18.0, 10.0)
    assert np.all(sample_cluster_count_prior(20, 200, bnb, 6.0, 3.0, rng, k_max=1) == 1)
    assert np.all(sample_cluster_count_prior(1, 200, bnb, 6.0, 3.0, rng) == 1)
    draws = sample_cluster_count_prior(20, 2000, bnb, 6.0, 3.0, rng, k_max=3)
    assert draws.min() >= 1 and draws.max() <= 3


@pytest.mark.parametrize("how", ["dyad-mean", "per-node"])
def test_alpha_init_options_run(how):
    mx, _ = generate_scenario(preset("A", seed=0, M=4, N=10))
    tr = run_chain(mx, SamplerConfig(n_iter=20, burn_in=5, alpha_init=how))
    assert np.isfinite(tr.log_posterior).all()
    with pytest.raises(ValueError):
        SamplerConfig(alpha_init="other")
