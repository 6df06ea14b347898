"""CSV bundle for chain traces.

Layout of a trace directory::

    states/states.csv   one row per retained draw, wide format, padded with empty cells
    logpost.csv         iteration,log_posterior
    accept.csv          block,rate
    config.json         sampler configuration and final proposal scales

Labels are written 1-based. Column names: ``G``, ``G_plus``, ``e``,
``alpha``, ``tau_g``, ``log_tau_g``, ``C_m``, and per latent space g:
``K_g``, ``K_g_plus``, ``w_g``, ``pi_g_k``, ``log_pi_g_k``, ``mu_g_k_q``,
``sigma2_g_k_q``, ``S_g_i``, ``Z_g_i_q``. Weights are also stored on the log
scale because tiny Dirichlet concentrations underflow them to zero.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .model import LatentSpace, ModelState
from .sampler import SamplerConfig, Trace


def _header(G: int, K: int, M: int, N: int) -> list:
    cols = ["iteration", "G", "G_plus", "e", "alpha"]
    cols += [f"tau_{g}" for g in range(1, G + 1)]
    cols += [f"log_tau_{g}" for g in range(1, G + 1)]
    cols += [f"C_{m}" for m in range(1, M + 1)]
    for g in range(1, G + 1):
        cols += [f"K_{g}", f"K_{g}_plus", f"w_{g}"]
        cols += [f"pi_{g}_{k}" for k in range(1, K + 1)]
        cols += [f"log_pi_{g}_{k}" for k in range(1, K + 1)]
        cols += [f"mu_{g}_{k}_{q}" for k in range(1, K + 1) for q in (1, 2)]
        cols += [f"sigma2_{g}_{k}_{q}" for k in range(1, K + 1) for q in (1, 2)]
        cols += [f"S_{g}_{i}" for i in range(1, N + 1)]
        cols += [f"Z_{g}_{i}_{q}" for i in range(1, N + 1) for q in (1, 2)]
    return cols


def _fmt(x) -> str:
    return repr(float(x))


def _row(it: int, s: ModelState, G: int, K: int) -> list:
    M, N = s.C.size, s.spaces[0].Z.shape[0]
    pad = [""]
    row = [str(it), str(s.G), str(s.G_plus), _fmt(s.e), _fmt(s.alpha)]
    tau = s.tau
    row += [_fmt(tau[g]) if g < s.G else "" for g in range(G)]
    row += [_fmt(s.log_tau[g]) if g < s.G else "" for g in range(G)]
    row += [str(c + 1) for c in s.C]
    for g in range(G):
        if g >= s.G:
            row += pad * (3 + 6 * K + 3 * N)
            continue
        sp = s.spaces[g]
        row += [str(sp.K), str(sp.K_plus), _fmt(sp.w)]
        pi = sp.pi
        row += [_fmt(pi[k]) if k < sp.K else "" for k in range(K)]
        row += [_fmt(sp.log_pi[k]) if k < sp.K else "" for k in range(K)]
        row += [_fmt(sp.mu[k, q]) if k < sp.K else "" for k in range(K) for q in range(2)]
        row += [_fmt(sp.sigma2[k, q]) if k < sp.K else "" for k in range(K) for q in range(2)]
        row += [str(x + 1) for x in sp.S]
        row += [_fmt(sp.Z[i, q]) for i in range(N) for q in range(2)]
    assert len(row) == 5 + 2 * G + M + G * (3 + 6 * K + 3 * N)
    return row


def save_trace(trace: Trace, directory) -> Path:
    d = Path(directory)
    (d / "states").mkdir(parents=True, exist_ok=True)
    samples = trace.samples
    M, N = samples[0].C.size, samples[0].spaces[0].Z.shape[0]
    G = max(s.G for s in samples)
    K = max(sp.K for s in samples for sp in s.spaces)
    with open(d / "states" / "states.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_header(G, K, M, N))
        for it, s in zip(trace.iterations, samples):
            w.writerow(_row(int(it), s, G, K))
    with open(d / "logpost.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "log_posterior"])
        for it, lp in zip(trace.iterations, trace.log_posterior):
            w.writerow([int(it), _fmt(lp)])
    with open(d / "accept.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "rate"])
        for b, r in trace.acceptance_rates.items():
            w.writerow([b, _fmt(r)])
    cfg = {"sampler": trace.config.to_dict(), "final_deltas": trace.final_deltas,
           "G_plus_path": trace.G_plus_path.tolist()}
    (d / "config.json").write_text(json.dumps(cfg))
    return d


def load_trace(directory) -> Trace:
    d = Path(directory)
    with open(d / "states" / "states.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        col = {name: j for j, name in enumerate(header)}
        rows = list(reader)
    M = sum(1 for h in header if h.startswith("C_"))
    N = sum(1 for h in header if h.startswith("S_1_"))
    samples, iters = [], []
    for r in rows:
        G = int(r[col["G"]])
        log_tau = np.array([float(r[col[f"log_tau_{g}"]]) for g in range(1, G + 1)])
        C = np.array([int(r[col[f"C_{m}"]]) - 1 for m in range(1, M + 1)], dtype=np.int64)
        spaces = []
        for g in range(1, G + 1):
            K = int(r[col[f"K_{g}"]])
            log_pi = np.array([float(r[col[f"log_pi_{g}_{k}"]]) for k in range(1, K + 1)])
            mu = np.array([[float(r[col[f"mu_{g}_{k}_{q}"]]) for q in (1, 2)] for k in range(1, K + 1)])
            s2 = np.array([[float(r[col[f"sigma2_{g}_{k}_{q}"]]) for q in (1, 2)] for k in range(1, K + 1)])
            S = np.array([int(r[col[f"S_{g}_{i}"]]) - 1 for i in range(1, N + 1)], dtype=np.int64)
            Z = np.array([[float(r[col[f"Z_{g}_{i}_{q}"]]) for q in (1, 2)] for i in range(1, N + 1)])
            spaces.append(LatentSpace(Z, S, K, float(r[col[f"w_{g}"]]), log_pi, mu, s2))
        samples.append(ModelState(G, log_tau, float(r[col["e"]]), C, float(r[col["alpha"]]), spaces))
        iters.append(int(r[col["iteration"]]))
    lp = np.loadtxt(d / "logpost.csv", delimiter=",", skiprows=1, ndmin=2)[:, 1]
    with open(d / "accept.csv", newline="") as fh:
        rates = {b: float(v) for b, v in list(csv.reader(fh))[1:]}
    meta = json.loads((d / "config.json").read_text())
    return Trace(samples, lp, rates, SamplerConfig.from_dict(meta["sampler"]),
                 np.asarray(iters, dtype=np.int64), meta.get("final_deltas", {}),
                 np.asarray(meta.get("G_plus_path", []), dtype=np.int64))
