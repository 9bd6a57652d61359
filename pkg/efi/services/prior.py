"""
Spike-and-slab prior on network weights.

log pi(w) = sum_j log[ rho N(w_j; 0, sigma1^2) + (1 - rho) N(w_j; 0, sigma0^2) ]
"""

import numpy as np
from scipy.special import expit

from efi.schemas.prior import MixturePrior

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _component_logs(w: np.ndarray, prior: MixturePrior) -> tuple[np.ndarray, np.ndarray]:
    log_slab = (
        np.log(prior.rho) - _LOG_SQRT_2PI - np.log(prior.sigma1) - 0.5 * (w / prior.sigma1) ** 2
    )
    log_spike = (
        np.log1p(-prior.rho)
        - _LOG_SQRT_2PI
        - np.log(prior.sigma0)
        - 0.5 * (w / prior.sigma0) ** 2
    )
    return log_slab, log_spike


def log_prior(w: np.ndarray, prior: MixturePrior) -> float:
    if not prior.enabled:
        return 0.0
    w = np.asarray(w, dtype=float)
    log_slab, log_spike = _component_logs(w, prior)
    return float(np.sum(np.logaddexp(log_slab, log_spike)))


def slab_responsibility(w: np.ndarray, prior: MixturePrior) -> np.ndarray:
    """Posterior probability that each weight came from the slab."""
    log_slab, log_spike = _component_logs(np.asarray(w, dtype=float), prior)
    return expit(log_slab - log_spike)


def grad_log_prior(w: np.ndarray, prior: MixturePrior) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if not prior.enabled:
        return np.zeros_like(w)
    r1 = slab_responsibility(w, prior)
    return -w * (r1 / prior.sigma1**2 + (1.0 - r1) / prior.sigma0**2)
