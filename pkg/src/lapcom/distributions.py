"""Log-densities and samplers for the distributions used by the model.

Everything is evaluated in log space. Samplers take an explicit
``numpy.random.Generator``; nothing here touches global RNG state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln, logsumexp

BERNOULLI_LOGIT = "bernoulli-logit"
POISSON_LOG = "poisson-log"

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class BnbParams:
    """Beta-negative-binomial parameters for a translated count prior."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ValueError(f"BNB parameters must be positive, got {self}")


def edge_family_for(family: str) -> str:
    """Map a multiplex family tag ('binary'/'count') to its edge model."""
    if family in (BERNOULLI_LOGIT, POISSON_LOG):
        return family
    if family == "binary":
        return BERNOULLI_LOGIT
    if family == "count":
        return POISSON_LOG
    raise ValueError(f"unknown family {family!r}")


def log1pexp(x):
    """Numerically stable log(1 + exp(x))."""
    return np.logaddexp(0.0, x)


def log_partition(eta, family: str):
    """A(eta): log(1+e^eta) for Bernoulli-logit, e^eta for Poisson-log."""
    if family == BERNOULLI_LOGIT:
        return np.logaddexp(0.0, eta)
    return np.exp(eta)


def edge_logpmf(y, eta, family: str):
    y = np.asarray(y)
    if np.any(y < 0):
        raise ValueError("edge value must be non-negative")
    if family == BERNOULLI_LOGIT:
        if np.any(y > 1):
            raise ValueError("Bernoulli edge value must be 0 or 1")
        out = y * eta - np.logaddexp(0.0, eta)
    elif family == POISSON_LOG:
        out = y * eta - np.exp(eta) - gammaln(y + 1.0)
    else:
        raise ValueError(f"unknown edge family {family!r}")
    return float(out) if np.ndim(out) == 0 else out


def logpdf_mvn_diag(x, mu, sigma2):
    """Log density of N(mu, diag(sigma2)); broadcasts over leading axes."""
    x, mu, sigma2 = np.asarray(x, float), np.asarray(mu, float), np.asarray(sigma2, float)
    if np.any(sigma2 <= 0):
        raise ValueError("variances must be strictly positive")
    d = x.shape[-1]
    out = -0.5 * (d * LOG_2PI + np.sum(np.log(sigma2) + (x - mu) ** 2 / sigma2, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def logpmf_translated_bnb(k, p: BnbParams):
    """log P(K = k) where K - 1 ~ BNB(a, b, c); support k = 1, 2, ..."""
    k = np.asarray(k)
    if np.any(k < 1):
        raise ValueError("translated BNB support starts at 1")
    j = k - 1.0
    out = (gammaln(p.a + j) - gammaln(p.a) - gammaln(j + 1.0)
           + betaln(p.a + p.b, j + p.c) - betaln(p.b, p.c))
    return float(out) if np.ndim(out) == 0 else out


def logpdf_fisher_f(x, l: float, r: float):
    x = np.asarray(x, float)
    if np.any(x <= 0):
        raise ValueError("F density is defined for x > 0")
    out = (0.5 * l * np.log(l) + 0.5 * r * np.log(r) + (0.5 * l - 1.0) * np.log(x)
           - 0.5 * (l + r) * np.log(r + l * x) - betaln(0.5 * l, 0.5 * r))
    return float(out) if np.ndim(out) == 0 else out


def sample_fisher_f(l: float, r: float, rng: np.random.Generator, size=None):
    return rng.f(l, r, size=size)


def logpdf_normal(x, mean: float, sd: float):
    return -0.5 * LOG_2PI - np.log(sd) - 0.5 * ((x - mean) / sd) ** 2


def sample_log_dirichlet(conc, rng: np.random.Generator) -> np.ndarray:
    """Log of a Dirichlet draw.

    Concentrations as small as 1e-5 make plain gamma variates underflow to
    zero, so each gamma is drawn on the log scale via
    Gamma(a) = Gamma(a + 1) * U**(1/a). The result is always finite.
    """
    conc = np.asarray(conc, float)
    if conc.ndim != 1 or conc.size == 0:
        raise ValueError("concentration must be a non-empty vector")
    if np.any(~(conc > 0)):
        raise ValueError("Dirichlet concentrations must be positive")
    if conc.size == 1:
        return np.zeros(1)
    log_g = np.log(rng.gamma(conc + 1.0)) + np.log1p(-rng.random(conc.size)) / conc
    return log_g - logsumexp(log_g)


def sample_dirichlet(conc, rng: np.random.Generator) -> np.ndarray:
    x = np.exp(sample_log_dirichlet(conc, rng))
    return x / x.sum()


def logpdf_dirichlet(log_x, conc) -> float:
    """Dirichlet log-density evaluated from log-coordinates ``log_x``."""
    log_x, conc = np.asarray(log_x, float), np.asarray(conc, float)
    if log_x.size == 1:
        return 0.0
    return float(gammaln(conc.sum()) - gammaln(conc).sum() + np.sum((conc - 1.0) * log_x))


def sample_invgamma(u: float, v: float, rng: np.random.Generator, size=None):
    """Inverse-gamma with shape ``u`` and scale ``v`` (mean v/(u-1))."""
    if np.any(np.asarray(u) <= 0) or np.any(np.asarray(v) <= 0):
        raise ValueError("inverse-gamma parameters must be positive")
    if size is None:
        size = np.broadcast_shapes(np.shape(u), np.shape(v))
    return v / rng.gamma(u, 1.0, size=size)


def logpdf_invgamma(x, u: float, v: float):
    x = np.asarray(x, float)
    if np.any(x <= 0) or u <= 0 or np.any(np.asarray(v) <= 0):
        raise ValueError("inverse-gamma arguments must be positive")
    out = -(u + 1.0) * np.log(x) - v / x + u * np.log(v) - gammaln(u)
    return float(out) if np.ndim(out) == 0 else out


def sample_categorical_log(logp: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per row of a (n, k) matrix of log-probabilities."""
    logp = np.atleast_2d(logp)
    p = np.exp(logp - logp.max(axis=1, keepdims=True))
    cdf = np.cumsum(p, axis=1)
    u = rng.random(logp.shape[0]) * cdf[:, -1]
    idx = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(idx, logp.shape[1] - 1)
