"""Synthetic multiplex generators, including the preset simulation designs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..multiplex import BINARY, COUNT, Multiplex

MEANS_BY_K = {
    1: ((0.0, 0.0),),
    2: ((-0.8, 0.8), (0.8, -0.8)),
    3: ((-0.9, -0.9), (1.4, 0.4), (-0.9, 1.4)),
}
WEIGHTS_BY_K = {1: (1.0,), 2: (0.7, 0.3), 3: (0.4, 0.3, 0.3)}


@dataclass(frozen=True)
class ScenarioSpec:
    M: int
    N: int
    G_star: int
    tau: tuple
    K: tuple
    pi: tuple
    mu: tuple
    sigma2: float = 0.25
    alpha: float = 0.6
    family: str = COUNT
    directed: bool = False
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.M < 1 or self.N < 2:
            raise ValueError("need M >= 1 and N >= 2")
        if not (len(self.tau) == len(self.K) == len(self.pi) == len(self.mu) == self.G_star):
            raise ValueError("tau, K, pi and mu must each have G_star entries")
        if abs(sum(self.tau) - 1.0) > 1e-9 or min(self.tau) < 0:
            raise ValueError("tau must be a simplex")
        for k, p, m in zip(self.K, self.pi, self.mu):
            if len(p) != k or len(m) != k:
                raise ValueError("pi_g and mu_g must have K_g entries")
            if abs(sum(p) - 1.0) > 1e-9 or min(p) < 0:
                raise ValueError("each pi_g must be a simplex")
            if any(len(v) != 2 for v in m):
                raise ValueError("cluster means must be 2-vectors")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        if self.family not in (BINARY, COUNT):
            raise ValueError(f"unknown family {self.family!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        for key in ("tau", "K"):
            d[key] = tuple(d[key])
        d["pi"] = tuple(tuple(p) for p in d["pi"])
        d["mu"] = tuple(tuple(tuple(v) for v in m) for m in d["mu"])
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ScenarioSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _design(name, M, N, tau, K, pi=None, family=COUNT) -> ScenarioSpec:
    if pi is None:
        pi = tuple(WEIGHTS_BY_K[k] for k in K)
    return ScenarioSpec(M=M, N=N, G_star=len(tau), tau=tuple(tau), K=tuple(K), pi=tuple(pi),
                        mu=tuple(MEANS_BY_K[k] for k in K), sigma2=0.25,
                        alpha=0.6 if N == 30 else -0.4, family=family, name=name)


_HALF = (1.0,), (0.5, 0.5)
PRESETS = {
    "A": _design("A", 20, 30, (0.6, 0.4), (1, 1)),
    "B": _design("B", 20, 50, (0.6, 0.4), (1, 1)),
    "C": _design("C", 20, 30, (0.6, 0.4), (1, 2), _HALF),
    "D": _design("D", 20, 50, (0.6, 0.4), (1, 2), _HALF),
    "E": _design("E", 20, 30, (0.6, 0.4), (2, 3)),
    "F": _design("F", 20, 60, (0.6, 0.4), (2, 3)),
    "G": _design("G", 50, 30, (0.6, 0.4), (2, 3)),
    "H": _design("H", 50, 60, (0.6, 0.4), (2, 3)),
    "I": _design("I", 20, 50, (0.6, 0.4), (1, 1), family=BINARY),
    "II": _design("II", 50, 30, (0.6, 0.4), (2, 3), family=BINARY),
    "III": _design("III", 50, 30, (0.4, 0.3, 0.3), (1, 2, 3), family=BINARY),
    "IV": _design("IV", 50, 60, (0.3, 0.3, 0.2, 0.2), (1, 2, 2, 3),
                  ((1.0,), (0.5, 0.5), (0.7, 0.3), (0.4, 0.3, 0.3)), family=BINARY),
    "V": _design("V", 100, 60, (0.3, 0.3, 0.2, 0.2), (1, 2, 2, 3),
                 ((1.0,), (0.5, 0.5), (0.7, 0.3), (0.4, 0.3, 0.3)), family=BINARY),
}


def preset(name: str, seed: int = 0, **overrides) -> ScenarioSpec:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown scenario preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(spec, seed=seed, **overrides)


@dataclass
class Truth:
    """Generating allocations and positions (0-based labels)."""

    C: np.ndarray
    S: list = field(default_factory=list)
    Z: list = field(default_factory=list)


def sample_edges(eta: np.ndarray, family: str, directed: bool, rng) -> np.ndarray:
    """Draw one adjacency matrix from a linear-predictor matrix."""
    n = eta.shape[0]
    if directed:
        rows, cols = np.nonzero(~np.eye(n, dtype=bool))
    else:
        rows, cols = np.triu_indices(n, k=1)
    e = eta[rows, cols]
    if family == COUNT:
        vals = rng.poisson(np.exp(e))
    else:
        vals = (rng.random(e.size) < 1.0 / (1.0 + np.exp(-e))).astype(np.int64)
    Y = np.zeros((n, n), dtype=np.int64)
    Y[rows, cols] = vals
    if not directed:
        Y[cols, rows] = vals
    return Y


def linear_predictor(Z: np.ndarray, alpha: float) -> np.ndarray:
    diff = Z[:, None, :] - Z[None, :, :]
    return alpha - np.einsum("ijk,ijk->ij", diff, diff)


def generate_scenario(spec: ScenarioSpec, seed: int | None = None):
    """Simulate a multiplex; returns (Multiplex, Truth)."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    C = rng.choice(spec.G_star, size=spec.M, p=np.asarray(spec.tau))
    S_list, Z_list = [], []
    for g in range(spec.G_star):
        S = rng.choice(spec.K[g], size=spec.N, p=np.asarray(spec.pi[g]))
        mu = np.asarray(spec.mu[g], float)
        Z = mu[S] + np.sqrt(spec.sigma2) * rng.standard_normal((spec.N, 2))
        S_list.append(S)
        Z_list.append(Z)
    etas = [linear_predictor(Z, spec.alpha) for Z in Z_list]
    arrays = [sample_edges(etas[C[m]], spec.family, spec.directed, rng) for m in range(spec.M)]
    mx = Multiplex.from_arrays(arrays, directed=spec.directed, family=spec.family)
    return mx, Truth(C.astype(np.int64), S_list, Z_list)


def save_truth(truth: Truth, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "truth_C.csv", truth.C[None, :] + 1, fmt="%d", delimiter=",")
    for g, (S, Z) in enumerate(zip(truth.S, truth.Z), start=1):
        np.savetxt(directory / f"truth_S_{g}.csv", S[None, :] + 1, fmt="%d", delimiter=",")
        np.savetxt(directory / f"truth_Z_{g}.csv", Z, fmt="%.17g", delimiter=",")


def load_truth(directory) -> Truth:
    directory = Path(directory)
    C = np.loadtxt(directory / "truth_C.csv", delimiter=",", dtype=np.int64, ndmin=1) - 1
    S, Z = [], []
    g = 1
    while (directory / f"truth_S_{g}.csv").exists():
        S.append(np.loadtxt(directory / f"truth_S_{g}.csv", delimiter=",", dtype=np.int64, ndmin=1) - 1)
        Z.append(np.loadtxt(directory / f"truth_Z_{g}.csv", delimiter=",", ndmin=2))
        g += 1
    return Truth(C, S, Z)
