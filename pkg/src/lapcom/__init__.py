"""Bayesian co-clustering of multiplex networks with latent space mixtures."""

from .model import Hyperparams, LatentSpace, ModelState, log_posterior
from .multiplex import Multiplex, Network, load_multiplex, save_multiplex
from .sampler import SamplerConfig, Trace, init_chain, run_chain, run_multichain, sweep

__version__ = "0.1.0"

__all__ = [
    "Hyperparams", "LatentSpace", "ModelState", "log_posterior", "Multiplex", "Network",
    "load_multiplex", "save_multiplex", "SamplerConfig", "Trace", "init_chain", "run_chain",
    "run_multichain", "sweep", "__version__",
]
