"""Posterior predictive checks: replicate multiplexes and fit summaries."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..multiplex import BINARY, Multiplex
from .metrics import metric_binary, metric_count
from .scenarios import linear_predictor, sample_edges
from .schieber import schieber_distance

BINARY_METRICS = ("pr_auc", "f1", "density_sq_diff", "hamming", "schieber")
COUNT_METRICS = ("mad", "tnr", "schieber")


def tie_probability(eta: np.ndarray, family: str) -> np.ndarray:
    """P(y > 0) implied by a linear predictor."""
    if family == BINARY:
        return 1.0 / (1.0 + np.exp(-eta))
    return -np.expm1(-np.exp(eta))


def ppc_simulate(samples, mx: Multiplex, R: int, seed: int = 0):
    """One replicate multiplex per retained draw, using the last ``R`` draws.

    Returns (replicates, tie_probabilities) where tie_probabilities[r][m] is
    the edge probability matrix used for network m in replicate r.
    """
    samples = list(samples)
    if R < 1 or R > len(samples):
        raise ValueError(f"R={R} must lie in 1..{len(samples)} (trace length)")
    rng = np.random.default_rng(seed)
    reps, probs = [], []
    for s in samples[-R:]:
        etas = {}
        arrays, pr = [], []
        for m in range(len(mx)):
            g = int(s.C[m])
            if g not in etas:
                etas[g] = linear_predictor(s.spaces[g].Z, s.alpha)
            arrays.append(sample_edges(etas[g], mx.family, mx.directed, rng))
            pr.append(tie_probability(etas[g], mx.family))
        reps.append(Multiplex.from_arrays(arrays, directed=mx.directed, labels=mx.labels,
                                          family=mx.family))
        probs.append(pr)
    return reps, probs


@dataclass
class PpcReport:
    rows: list = field(default_factory=list)  # (network, replicate, metric, value)
    ecdf: dict = field(default_factory=dict)  # network label -> list of (replicate, log count)
    empty_replicates: dict = field(default_factory=dict)
    n_replicates: int = 0

    def values(self, metric: str, network: str | None = None) -> np.ndarray:
        return np.array([v for n, _, m, v in self.rows
                         if m == metric and (network is None or n == network)], dtype=float)

    def summary(self) -> dict:
        out = {}
        networks = list(dict.fromkeys(n for n, _, _, _ in self.rows))
        metrics = list(dict.fromkeys(m for _, _, m, _ in self.rows))
        for net in networks:
            out[net] = {}
            for met in metrics:
                v = self.values(met, net)
                v = v[np.isfinite(v)]
                if v.size == 0:
                    out[net][met] = None
                    continue
                q1, med, q3 = np.percentile(v, [25, 50, 75])
                out[net][met] = {"median": float(med), "iqr": [float(q1), float(q3)],
                                 "mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
                                 "n": int(v.size)}
            out[net]["empty_replicates"] = int(self.empty_replicates.get(net, 0))
        return out


def run_ppc(samples, mx: Multiplex, R: int, seed: int = 0) -> PpcReport:
    """Replicate the multiplex from the last ``R`` draws and score every network."""
    reps, probs = ppc_simulate(samples, mx, R, seed)
    report = PpcReport(n_replicates=R)
    for r, (rep, pr) in enumerate(zip(reps, probs)):
        for m, label in enumerate(mx.labels):
            obs, new = mx[m], rep[m]
            if not new.weights.any():
                report.empty_replicates[label] = report.empty_replicates.get(label, 0) + 1
            if mx.family == BINARY:
                vals = metric_binary(obs, new, pr[m])
                vals["schieber"] = schieber_distance(obs, new)
                for met in BINARY_METRICS:
                    report.rows.append((label, r, met, vals[met]))
            else:
                vals = metric_count(obs, new)
                vals["schieber"] = schieber_distance(obs, new)
                for met in COUNT_METRICS:
                    report.rows.append((label, r, met, vals[met]))
                report.ecdf.setdefault(label, []).extend((r, x) for x in vals["ecdf_data"])
    return report


def write_ppc(report: PpcReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ppc_report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["network", "replicate", "metric", "value"])
        for net, r, met, v in report.rows:
            w.writerow([net, r + 1, met, repr(float(v))])
    (out / "ppc_summary.json").write_text(json.dumps(report.summary(), indent=2))
    if report.ecdf:
        (out / "ecdf").mkdir(exist_ok=True)
        for net, pts in report.ecdf.items():
            with open(out / "ecdf" / f"{net}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["replicate", "log_count"])
                for r, x in pts:
                    w.writerow([r + 1, repr(float(x))])
    return out
