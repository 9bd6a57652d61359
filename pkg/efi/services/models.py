"""
Model Zoo

Data-generating equations, simulators, natural <-> unconstrained
parameterizations and analytic inverses for every supported model family.

Each family declares its parameter layout, how many latent errors belong to
one observation, the error law those latents follow, and how the network
input row is assembled from (y, x, z).
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import special, stats

from efi.core.errors import ConfigError, DataError, DomainError
from efi.core.rng import make_generator
from efi.schemas.experiment import FamilyConfig

logger = logging.getLogger(__name__)

# Certified values of the NIST StRD Gauss2 problem
GAUSS2_CERTIFIED = np.array(
    [
        99.018328406,
        0.010994945399,
        101.88022528,
        107.03095519,
        23.578584029,
        72.045589471,
        153.27010194,
        19.525972636,
    ]
)
GAUSS2_SIGMA = 2.5
GAUSS2_START = np.array([96.0, 0.009, 103.0, 106.0, 18.0, 72.0, 151.0, 18.0])


# ── Error families ─────────────────────────────────────────────────────────


class ErrorFamily(ABC):
    name: str

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: Tuple[int, ...]) -> np.ndarray: ...

    @abstractmethod
    def score(self, z: np.ndarray) -> np.ndarray:
        """Gradient of the log density, component-wise."""

    @abstractmethod
    def log_pdf(self, z: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def cdf(self, z: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def pdf(self, z: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def ppf(self, q: np.ndarray) -> np.ndarray: ...

    @property
    @abstractmethod
    def variance(self) -> float: ...


class GaussianErrors(ErrorFamily):
    name = "gaussian_std"

    def sample(self, rng: np.random.Generator, size: Tuple[int, ...]) -> np.ndarray:
        return rng.standard_normal(size)

    def score(self, z: np.ndarray) -> np.ndarray:
        return -np.asarray(z, dtype=float)

    def log_pdf(self, z: np.ndarray) -> np.ndarray:
        return stats.norm.logpdf(z)

    def cdf(self, z: np.ndarray) -> np.ndarray:
        return stats.norm.cdf(z)

    def pdf(self, z: np.ndarray) -> np.ndarray:
        return stats.norm.pdf(z)

    def ppf(self, q: np.ndarray) -> np.ndarray:
        return stats.norm.ppf(q)

    @property
    def variance(self) -> float:
        return 1.0


class LogisticErrors(ErrorFamily):
    name = "logistic_std"

    def sample(self, rng: np.random.Generator, size: Tuple[int, ...]) -> np.ndarray:
        return rng.logistic(0.0, 1.0, size)

    def score(self, z: np.ndarray) -> np.ndarray:
        return -np.tanh(0.5 * np.asarray(z, dtype=float))

    def log_pdf(self, z: np.ndarray) -> np.ndarray:
        return stats.logistic.logpdf(z)

    def cdf(self, z: np.ndarray) -> np.ndarray:
        return stats.logistic.cdf(z)

    def pdf(self, z: np.ndarray) -> np.ndarray:
        return stats.logistic.pdf(z)

    def ppf(self, q: np.ndarray) -> np.ndarray:
        return stats.logistic.ppf(q)

    @property
    def variance(self) -> float:
        return np.pi**2 / 3.0


GAUSSIAN = GaussianErrors()
LOGISTIC = LogisticErrors()


# ── Datasets ───────────────────────────────────────────────────────────────


@dataclass
class Truth:
    theta: np.ndarray
    Z: np.ndarray
    labels: Optional[np.ndarray] = None


@dataclass
class Dataset:
    """Responses Y (n x q) and covariates X (n x d); label_mask marks missing labels."""

    Y: np.ndarray
    X: np.ndarray
    label_mask: Optional[np.ndarray] = None
    truth: Optional[Truth] = None
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.Y = np.asarray(self.Y, dtype=float)
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X.reshape(self.Y.shape[0], -1)
        if self.X.shape[0] != self.Y.shape[0]:
            raise DataError(f"Y has {self.Y.shape[0]} rows but X has {self.X.shape[0]}")
        if self.label_mask is not None:
            self.label_mask = np.asarray(self.label_mask, dtype=bool)
            if self.label_mask.shape != (self.Y.shape[0],):
                raise DataError("label_mask must have one entry per observation")

    @property
    def n(self) -> int:
        return int(self.Y.shape[0])

    def subset(self, rows: Union[Sequence[int], np.ndarray]) -> "Dataset":
        idx = np.asarray(rows)
        truth = None
        if self.truth is not None:
            truth = Truth(
                theta=self.truth.theta,
                Z=self.truth.Z[idx],
                labels=None if self.truth.labels is None else self.truth.labels[idx],
            )
        return Dataset(
            Y=self.Y[idx],
            X=self.X[idx],
            label_mask=None if self.label_mask is None else self.label_mask[idx],
            truth=truth,
            meta=dict(self.meta),
        )


def _linear_design(rng: np.random.Generator, n: int, p: int) -> np.ndarray:
    X = np.ones((n, p))
    if p > 1:
        X[:, 1:] = rng.standard_normal((n, p - 1))
    return X


def _rowdot(X: np.ndarray, Theta: np.ndarray) -> np.ndarray:
    return np.einsum("nd,nd->n", X, Theta)


# ── Family base ────────────────────────────────────────────────────────────


class ModelFamily(ABC):
    """One data-generating equation y = f(x, z, theta) and its parameterization."""

    name: str = ""
    discrepancy_kind: str = "normal_regression"
    errors: ErrorFamily = GAUSSIAN
    n_latent: int = 1
    y_dim: int = 1
    x_dim: int = 0
    composite: bool = False

    @property
    @abstractmethod
    def param_names(self) -> List[str]: ...

    @property
    def d_theta(self) -> int:
        return len(self.param_names)

    @property
    def input_width(self) -> int:
        return self.y_dim + self.x_dim + self.n_latent

    # -- parameterization --

    def to_natural(self, theta_u: np.ndarray) -> np.ndarray:
        return np.array(theta_u, dtype=float, copy=True)

    def to_unconstrained(self, theta: np.ndarray) -> np.ndarray:
        return np.array(theta, dtype=float, copy=True)

    @abstractmethod
    def default_truth(self) -> np.ndarray: ...

    def check_truth(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d_theta,):
            raise DomainError(
                f"{self.name} expects {self.d_theta} parameters, got shape {theta.shape}"
            )
        return theta

    # -- generation --

    @abstractmethod
    def simulate(self, theta: np.ndarray, n: int, rng: np.random.Generator) -> Dataset: ...

    @abstractmethod
    def forward_model(self, X: np.ndarray, Z: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Y from covariates, latents and natural parameters."""

    def predict(
        self, X: np.ndarray, Z: np.ndarray, Theta_u: np.ndarray, Y: Optional[np.ndarray] = None
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row-wise fitted responses for per-row unconstrained parameters.

        Returns (Yhat n x q, dYhat/dTheta n x q x d, dYhat/dZ n x q x k).
        """
        raise DomainError(f"{self.name} has no regression forward map")

    # -- network input --

    def response_inputs(self, dataset: Dataset, Z: np.ndarray, tau: float) -> np.ndarray:
        return dataset.Y

    def build_inputs(self, dataset: Dataset, Z: np.ndarray, tau: float = 1.0 / 50.0) -> np.ndarray:
        return np.hstack([self.response_inputs(dataset, Z, tau), dataset.X, Z])

    def latent_grad(
        self, dataset: Dataset, Z: np.ndarray, grad_inputs: np.ndarray, tau: float = 1.0 / 50.0
    ) -> np.ndarray:
        """Map input-row gradients onto the latent columns."""
        return grad_inputs[:, -self.n_latent :]

    # -- reporting --

    def derived_quantities(self, draws: np.ndarray) -> Dict[str, np.ndarray]:
        return {}

    def report_targets(self, theta: np.ndarray) -> List[Tuple[str, str, float]]:
        """(quantity name, coverage group, true value) for every reported quantity."""
        return [(name, name, float(v)) for name, v in zip(self.param_names, theta)]

    def check_dataset(self, dataset: Dataset) -> None:
        if dataset.Y.shape[1] != self.y_dim:
            raise DataError(
                f"{self.name} expects {self.y_dim} response column(s), got {dataset.Y.shape[1]}"
            )
        if dataset.X.shape[1] != self.x_dim:
            raise DataError(
                f"{self.name} expects {self.x_dim} covariate column(s), got {dataset.X.shape[1]}"
            )
        if dataset.label_mask is not None and self.discrepancy_kind != "ssl_logistic":
            raise DataError(f"{self.name} does not accept missing labels")


# ── Linear regression ──────────────────────────────────────────────────────


class _LinearBase(ModelFamily):
    def __init__(
        self, p: int, outlier_fraction: float = 0.0, outlier_shift: float = 4.0
    ) -> None:
        self.p = p
        self.x_dim = p
        self.outlier_fraction = outlier_fraction
        self.outlier_shift = outlier_shift

    @property
    def beta_names(self) -> List[str]:
        return [f"beta{j}" for j in range(self.p)]

    def default_truth(self) -> np.ndarray:
        beta = np.zeros(self.p)
        beta[: min(5, self.p)] = 1.0
        return beta

    def _errors(self, rng: np.random.Generator, n: int) -> np.ndarray:
        Z = rng.standard_normal((n, 1))
        n_out = int(round(self.outlier_fraction * n))
        if n_out:
            Z[n - n_out :, 0] += self.outlier_shift
        return Z

    def report_targets(self, theta: np.ndarray) -> List[Tuple[str, str, float]]:
        return [
            (name, "signal" if beta != 0.0 else "noise", float(beta))
            for name, beta in zip(self.beta_names, theta[: self.p])
        ]


class LinearKnownSigma(_LinearBase):
    name = "linear_known_sigma"

    def __init__(
        self, p: int, sigma: float = 1.0, outlier_fraction: float = 0.0, outlier_shift: float = 4.0
    ) -> None:
        super().__init__(p, outlier_fraction, outlier_shift)
        if sigma < 0:
            raise DomainError("sigma must be non-negative")
        self.sigma = sigma

    @property
    def param_names(self) -> List[str]:
        return self.beta_names

    def forward_model(self, X: np.ndarray, Z: np.ndarray, theta: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return (X @ theta + self.sigma * np.asarray(Z).reshape(-1))[:, None]

    def predict(self, X, Z, Theta_u, Y=None):
        n = X.shape[0]
        Yhat = (_rowdot(X, Theta_u) + self.sigma * Z[:, 0])[:, None]
        return Yhat, X[:, None, :], np.full((n, 1, 1), self.sigma)

    def simulate(self, theta: np.ndarray, n: int, rng: np.random.Generator) -> Dataset:
        theta = self.check_truth(theta)
        X = _linear_design(rng, n, self.p)
        Z = self._errors(rng, n)
        return Dataset(Y=self.forward_model(X, Z, theta), X=X, truth=Truth(theta, Z))


class LinearUnknownSigma(_LinearBase):
    name = "linear_unknown_sigma"

    @property
    def param_names(self) -> List[str]:
        return self.beta_names + ["sigma"]

    def default_truth(self) -> np.ndarray:
        return np.append(super().default_truth(), 1.0)

    def to_natural(self, theta_u):
        out = np.array(theta_u, dtype=float, copy=True)
        out[..., -1] = np.exp(out[..., -1])
        return out

    def to_unconstrained(self, theta):
        out = np.array(theta, dtype=float, copy=True)
        out[..., -1] = np.log(out[..., -1])
        return out

    def forward_model(self, X, Z, theta):
        X = np.atleast_2d(X)
        return (X @ theta[: self.p] + theta[-1] * np.asarray(Z).reshape(-1))[:, None]

    def predict(self, X, Z, Theta_u, Y=None):
        s = np.exp(Theta_u[:, -1])
        z = Z[:, 0]
        Yhat = (_rowdot(X, Theta_u[:, : self.p]) + s * z)[:, None]
        J_theta = np.concatenate([X, (s * z)[:, None]], axis=1)[:, None, :]
        return Yhat, J_theta, s[:, None, None]

    def simulate(self, theta, n, rng):
        theta = self.check_truth(theta)
        if theta[-1] < 0:
            raise DomainError("sigma must be non-negative")
        X = _linear_design(rng, n, self.p)
        Z = self._errors(rng, n)
        return Dataset(Y=self.forward_model(X, Z, theta), X=X, truth=Truth(theta, Z))

    def derived_quantities(self, draws):
        draws = np.atleast_2d(draws)
        return {"sigma_sq": draws[:, -1] ** 2}

    def report_targets(self, theta):
        return super().report_targets(theta) + [("sigma_sq", "sigma_sq", float(theta[-1] ** 2))]


def analytic_inverse_linear(
    Y: np.ndarray, X: np.ndarray, Z: np.ndarray, sigma: float
) -> np.ndarray:
    """beta = (X'X)^{-1} X'(Y - sigma Z)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    target = np.asarray(Y, dtype=float).reshape(-1) - sigma * np.asarray(Z, dtype=float).reshape(-1)
    gram = X.T @ X
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise DomainError("X'X is singular")
    return np.linalg.solve(gram, X.T @ target)


# ── Gauss2 nonlinear regression ────────────────────────────────────────────


def gauss2_curve(x: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (
        b[0] * np.exp(-b[1] * x)
        + b[2] * np.exp(-((x - b[3]) ** 2) / b[4] ** 2)
        + b[5] * np.exp(-((x - b[6]) ** 2) / b[7] ** 2)
    )


def gauss2_jacobian(x: np.ndarray, B: np.ndarray) -> np.ndarray:
    """d f / d b for per-row parameter rows B (n x 8); returns n x 8."""
    x = np.asarray(x, dtype=float).reshape(-1)
    B = np.atleast_2d(B)
    e1 = np.exp(-B[:, 1] * x)
    d1 = x - B[:, 3]
    g1 = np.exp(-(d1**2) / B[:, 4] ** 2)
    d2 = x - B[:, 6]
    g2 = np.exp(-(d2**2) / B[:, 7] ** 2)
    return np.stack(
        [
            e1,
            -B[:, 0] * x * e1,
            g1,
            B[:, 2] * g1 * 2.0 * d1 / B[:, 4] ** 2,
            B[:, 2] * g1 * 2.0 * d1**2 / B[:, 4] ** 3,
            g2,
            B[:, 5] * g2 * 2.0 * d2 / B[:, 7] ** 2,
            B[:, 5] * g2 * 2.0 * d2**2 / B[:, 7] ** 3,
        ],
        axis=1,
    )


class Gauss2(ModelFamily):
    name = "gauss2"
    x_dim = 1

    def __init__(self, sigma: float = GAUSS2_SIGMA) -> None:
        self.sigma = sigma

    @property
    def param_names(self) -> List[str]:
        return [f"b{j}" for j in range(1, 9)]

    def default_truth(self) -> np.ndarray:
        return GAUSS2_CERTIFIED.copy()

    def forward_model(self, X, Z, theta):
        x = np.asarray(X, dtype=float).reshape(-1)
        return (gauss2_curve(x, theta) + self.sigma * np.asarray(Z).reshape(-1))[:, None]

    def predict(self, X, Z, Theta_u, Y=None):
        x = X[:, 0]
        B = Theta_u
        d1 = x - B[:, 3]
        d2 = x - B[:, 6]
        f = (
            B[:, 0] * np.exp(-B[:, 1] * x)
            + B[:, 2] * np.exp(-(d1**2) / B[:, 4] ** 2)
            + B[:, 5] * np.exp(-(d2**2) / B[:, 7] ** 2)
        )
        Yhat = (f + self.sigma * Z[:, 0])[:, None]
        return Yhat, gauss2_jacobian(x, B)[:, None, :], np.full((X.shape[0], 1, 1), self.sigma)

    def simulate(self, theta, n, rng):
        theta = self.check_truth(theta)
        X = np.arange(1, n + 1, dtype=float)[:, None]
        Z = rng.standard_normal((n, 1))
        return Dataset(Y=self.forward_model(X, Z, theta), X=X, truth=Truth(theta, Z))


def gauss2_reference(seed: int, n: int = 250) -> Dataset:
    """A Gauss2-shaped dataset simulated at the certified parameter values."""
    family = Gauss2()
    return family.simulate(family.default_truth(), n, make_generator(seed))


# ── Two-sample location-scale (Behrens-Fisher) ─────────────────────────────


class LocationScale(ModelFamily):
    """y = mu + sigma z for one group; one of the two chains of a Behrens-Fisher fit."""

    name = "location_scale"

    def __init__(self, group: int = 1) -> None:
        self.group = group

    @property
    def param_names(self) -> List[str]:
        return [f"mu{self.group}", f"sigma{self.group}"]

    def default_truth(self):
        return np.array([0.0, 1.0])

    def to_natural(self, theta_u):
        out = np.array(theta_u, dtype=float, copy=True)
        out[..., 1] = np.exp(out[..., 1])
        return out

    def to_unconstrained(self, theta):
        out = np.array(theta, dtype=float, copy=True)
        out[..., 1] = np.log(out[..., 1])
        return out

    def forward_model(self, X, Z, theta):
        return (theta[0] + theta[1] * np.asarray(Z).reshape(-1))[:, None]

    def predict(self, X, Z, Theta_u, Y=None):
        s = np.exp(Theta_u[:, 1])
        z = Z[:, 0]
        Yhat = (Theta_u[:, 0] + s * z)[:, None]
        J_theta = np.stack([np.ones_like(z), s * z], axis=1)[:, None, :]
        return Yhat, J_theta, s[:, None, None]

    def simulate(self, theta, n, rng):
        theta = self.check_truth(theta)
        Z = rng.standard_normal((n, 1))
        return Dataset(
            Y=self.forward_model(None, Z, theta), X=np.zeros((n, 0)), truth=Truth(theta, Z)
        )


class BehrensFisher(ModelFamily):
    """Two independent Gaussian samples; the covariate column x1 holds the group (1 or 2)."""

    name = "behrens_fisher"
    x_dim = 1
    composite = True

    def __init__(self, group_sizes: Optional[Tuple[int, int]] = None) -> None:
        self.group_sizes = group_sizes

    @property
    def param_names(self) -> List[str]:
        return ["mu1", "sigma1", "mu2", "sigma2"]

    def default_truth(self):
        return np.array([1.0, 0.5, 0.0, 1.0])

    def components(self) -> List[LocationScale]:
        return [LocationScale(1), LocationScale(2)]

    def to_natural(self, theta_u):
        out = np.array(theta_u, dtype=float, copy=True)
        out[..., [1, 3]] = np.exp(out[..., [1, 3]])
        return out

    def to_unconstrained(self, theta):
        out = np.array(theta, dtype=float, copy=True)
        out[..., [1, 3]] = np.log(out[..., [1, 3]])
        return out

    def _sizes(self, n: int) -> Tuple[int, int]:
        if self.group_sizes is not None:
            if sum(self.group_sizes) != n:
                raise DomainError(f"group sizes {self.group_sizes} do not sum to n={n}")
            return self.group_sizes
        return n // 2, n - n // 2

    def forward_model(self, X, Z, theta):
        group = np.asarray(X, dtype=float).reshape(-1)
        z = np.asarray(Z).reshape(-1)
        mu = np.where(group == 1, theta[0], theta[2])
        sd = np.where(group == 1, theta[1], theta[3])
        return (mu + sd * z)[:, None]

    def simulate(self, theta, n, rng):
        theta = self.check_truth(theta)
        n1, n2 = self._sizes(n)
        X = np.concatenate([np.ones(n1), np.full(n2, 2.0)])[:, None]
        Z = rng.standard_normal((n, 1))
        return Dataset(Y=self.forward_model(X, Z, theta), X=X, truth=Truth(theta, Z))

    def derived_quantities(self, draws):
        draws = np.atleast_2d(draws)
        return {"mu_diff": draws[:, 0] - draws[:, 2]}

    def report_targets(self, theta):
        return [("mu_diff", "mu_diff", float(theta[0] - theta[2]))]

    def check_dataset(self, dataset: Dataset) -> None:
        super().check_dataset(dataset)
        groups = set(np.unique(dataset.X[:, 0]).tolist())
        if not groups <= {1.0, 2.0}:
            raise DataError("behrens_fisher group column x1 must hold 1 or 2")


def split_groups(dataset: Dataset) -> Tuple[Dataset, Dataset]:
    """Split a two-group dataset into single-group datasets with no covariates."""
    parts = []
    for g in (1.0, 2.0):
        rows = np.flatnonzero(dataset.X[:, 0] == g)
        if rows.size < 2:
            raise DataError(f"group {int(g)} has fewer than 2 observations")
        part = dataset.subset(rows)
        part.X = np.zeros((rows.size, 0))
        if dataset.truth is not None:
            k = 0 if g == 1.0 else 2
            part.truth = Truth(dataset.truth.theta[k : k + 2], part.truth.Z)
        parts.append(part)
    return parts[0], parts[1]


# ── Bivariate normal ───────────────────────────────────────────────────────


class BivariateNormal(ModelFamily):
    """y1 = mu1 + l1 z1, y2 = mu2 + l2 z1 + l3 z2 with l1, l3 > 0."""

    name = "bivariate_normal"
    y_dim = 2
    n_latent = 2

    @property
    def param_names(self) -> List[str]:
        return ["mu1", "mu2", "l1", "l2", "l3"]

    def default_truth(self):
        return bivariate_from_moments(1.0, 0.0, 1.0, 1.0, 0.5)

    def to_natural(self, theta_u):
        out = np.array(theta_u, dtype=float, copy=True)
        out[..., [2, 4]] = np.exp(out[..., [2, 4]])
        return out

    def to_unconstrained(self, theta):
        out = np.array(theta, dtype=float, copy=True)
        out[..., [2, 4]] = np.log(out[..., [2, 4]])
        return out

    def forward_model(self, X, Z, theta):
        Z = np.atleast_2d(Z)
        y1 = theta[0] + theta[2] * Z[:, 0]
        y2 = theta[1] + theta[3] * Z[:, 0] + theta[4] * Z[:, 1]
        return np.stack([y1, y2], axis=1)

    def predict(self, X, Z, Theta_u, Y=None):
        n = Z.shape[0]
        l1 = np.exp(Theta_u[:, 2])
        l2 = Theta_u[:, 3]
        l3 = np.exp(Theta_u[:, 4])
        z1, z2 = Z[:, 0], Z[:, 1]
        Yhat = np.stack([Theta_u[:, 0] + l1 * z1, Theta_u[:, 1] + l2 * z1 + l3 * z2], axis=1)
        J_theta = np.zeros((n, 2, 5))
        J_theta[:, 0, 0] = 1.0
        J_theta[:, 0, 2] = l1 * z1
        J_theta[:, 1, 1] = 1.0
        J_theta[:, 1, 3] = z1
        J_theta[:, 1, 4] = l3 * z2
        J_z = np.zeros((n, 2, 2))
        J_z[:, 0, 0] = l1
        J_z[:, 1, 0] = l2
        J_z[:, 1, 1] = l3
        return Yhat, J_theta, J_z

    def simulate(self, theta, n, rng):
        theta = self.check_truth(theta)
        Z = rng.standard_normal((n, 2))
        return Dataset(
            Y=self.forward_model(None, Z, theta), X=np.zeros((n, 0)), truth=Truth(theta, Z)
        )

    def derived_quantities(self, draws):
        draws = np.atleast_2d(draws)
        l1, l2, l3 = draws[:, 2], draws[:, 3], draws[:, 4]
        sigma2 = np.sqrt(l2**2 + l3**2)
        return {
            "sigma1": l1,
            "sigma2": sigma2,
            "rho": l2 / sigma2,
            "sigma1_sq": l1**2,
            "sigma2_sq": sigma2**2,
        }

    def report_targets(self, theta):
        derived = self.derived_quantities(theta[None, :])
        return [
            ("mu1", "mu1", float(theta[0])),
            ("mu2", "mu2", float(theta[1])),
            ("sigma1_sq", "sigma1_sq", float(derived["sigma1_sq"][0])),
            ("sigma2_sq", "sigma2_sq", float(derived["sigma2_sq"][0])),
            ("rho", "rho", float(derived["rho"][0])),
        ]


def bivariate_from_moments(
    mu1: float, mu2: float, sigma1: float, sigma2: float, rho: float
) -> np.ndarray:
    """Natural decomposition parameters (mu1, mu2, l1, l2, l3) of a bivariate normal."""
    if sigma1 <= 0 or sigma2 <= 0 or not -1.0 < rho < 1.0:
        raise DomainError("need sigma1, sigma2 > 0 and |rho| < 1")
    return np.array([mu1, mu2, sigma1, rho * sigma2, sigma2 * np.sqrt(1.0 - rho**2)])


# ── Mediation ──────────────────────────────────────────────────────────────


class Mediation(ModelFamily):
    """
    Y = beta_T T + beta M + beta_x' X + sigma_Y z_Y
    M = gamma T + gamma_x' X + sigma_M z_M

    Responses are (y, m); covariates are (t, x1, x2); latents are (z_Y, z_M).
    """

    name = "mediation"
    y_dim = 2
    x_dim = 3
    n_latent = 2

    @property
    def param_names(self) -> List[str]:
        return [
            "beta_t",
            "beta",
            "beta_x1",
            "beta_x2",
            "sigma_y",
            "gamma",
            "gamma_x1",
            "gamma_x2",
            "sigma_m",
        ]

    def default_truth(self):
        return mediation_truth(0.0, 0.0)

    def to_natural(self, theta_u):
        out = np.array(theta_u, dtype=float, copy=True)
        out[..., [4, 8]] = np.exp(out[..., [4, 8]])
        return out

    def to_unconstrained(self, theta):
        out = np.array(theta, dtype=float, copy=True)
        out[..., [4, 8]] = np.log(out[..., [4, 8]])
        return out

    def forward_model(self, X, Z, theta):
        X = np.atleast_2d(X)
        Z = np.atleast_2d(Z)
        t, x1, x2 = X[:, 0], X[:, 1], X[:, 2]
        m = theta[5] * t + theta[6] * x1 + theta[7] * x2 + theta[8] * Z[:, 1]
        y = theta[0] * t + theta[1] * m + theta[2] * x1 + theta[3] * x2 + theta[4] * Z[:, 0]
        return np.stack([y, m], axis=1)

    def predict(self, X, Z, Theta_u, Y=None):
        if Y is None:
            raise DomainError("mediation residuals need the observed mediator")
        n = X.shape[0]
        t, x1, x2 = X[:, 0], X[:, 1], X[:, 2]
        m_obs = Y[:, 1]
        s_y = np.exp(Theta_u[:, 4])
        s_m = np.exp(Theta_u[:, 8])
        zy, zm = Z[:, 0], Z[:, 1]
        y_hat = (
            Theta_u[:, 0] * t
            + Theta_u[:, 1] * m_obs
            + Theta_u[:, 2] * x1
            + Theta_u[:, 3] * x2
            + s_y * zy
        )
        m_hat = Theta_u[:, 5] * t + Theta_u[:, 6] * x1 + Theta_u[:, 7] * x2 + s_m * zm
        J_theta = np.zeros((n, 2, 9))
        J_theta[:, 0, 0] = t
        J_theta[:, 0, 1] = m_obs
        J_theta[:, 0, 2] = x1
        J_theta[:, 0, 3] = x2
        J_theta[:, 0, 4] = s_y * zy
        J_theta[:, 1, 5] = t
        J_theta[:, 1, 6] = x1
        J_theta[:, 1, 7] = x2
        J_theta[:, 1, 8] = s_m * zm
        J_z = np.zeros((n, 2, 2))
        J_z[:, 0, 0] = s_y
        J_z[:, 1, 1] = s_m
        return np.stack([y_hat, m_hat], axis=1), J_theta, J_z

    def simulate(self, theta, n, rng):
        theta = self.check_truth(theta)
        X = rng.standard_normal((n, 3))
        Z = rng.standard_normal((n, 2))
        return Dataset(Y=self.forward_model(X, Z, theta), X=X, truth=Truth(theta, Z))

    def derived_quantities(self, draws):
        draws = np.atleast_2d(draws)
        return {"mediation_effect": draws[:, 1] * draws[:, 5]}

    def report_targets(self, theta):
        return [("mediation_effect", "mediation_effect", float(theta[1] * theta[5]))]


def mediation_truth(beta: float, gamma: float) -> np.ndarray:
    return np.array([1.0, beta, 0.2, 0.4, np.sqrt(2.0), gamma, 0.4, 0.6, 1.0])


# ── Logistic regression ────────────────────────────────────────────────────


class LogisticBinary(ModelFamily):
    """y = 1 iff z <= x'theta with z ~ logistic(0, 1)."""

    name = "logistic_binary"
    discrepancy_kind = "logistic_binary"
    errors = LOGISTIC

    def __init__(self, p: int) -> None:
        self.p = p
        self.x_dim = p

    @property
    def param_names(self) -> List[str]:
        return [f"theta{j}" for j in range(self.p)]

    def default_truth(self):
        base = np.array([1.0, 1.0, 1.0, -1.0, -1.0])
        return np.resize(base, self.p)

    def forward_model(self, X, Z, theta):
        X = np.atleast_2d(X)
        return (np.asarray(Z).reshape(-1) <= X @ theta).astype(float)[:, None]

    def simulate(self, theta, n, rng):
        theta = self.check_truth(theta)
        X = _linear_design(rng, n, self.p)
        Z = self.errors.sample(rng, (n, 1))
        return Dataset(Y=self.forward_model(X, Z, theta), X=X, truth=Truth(theta, Z))

    def check_dataset(self, dataset: Dataset) -> None:
        super().check_dataset(dataset)
        observed = dataset.Y[:, 0]
        if dataset.label_mask is not None:
            observed = observed[~dataset.label_mask]
        if not np.all(np.isin(observed, (0.0, 1.0))):
            raise DataError(f"{self.name} responses must be 0 or 1")


class LogisticMulticlass(ModelFamily):
    """Multinomial logit over S classes; the label is carried as one scalar response."""

    name = "logistic_multiclass"
    discrepancy_kind = "logistic_multiclass"
    errors = LOGISTIC

    def __init__(self, p: int, n_classes: int) -> None:
        self.p = p
        self.x_dim = p
        self.n_classes = n_classes

    @property
    def param_names(self) -> List[str]:
        return [f"theta{c}_{j}" for c in range(self.n_classes) for j in range(self.p)]

    def default_truth(self):
        # class 0 is the zero-score reference; class c loads on one covariate
        coef = np.zeros((self.n_classes, self.p))
        k = max(self.p - 1, 1)
        for c in range(1, self.n_classes):
            j = (c - 1) % k + (1 if self.p > 1 else 0)
            coef[c, j] = 1.0 if ((c - 1) // k) % 2 == 0 else -1.0
        return coef.ravel()

    def class_scores(self, X: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ theta.reshape(self.n_classes, self.p).T

    def forward_model(self, X, Z, theta):
        scores = self.class_scores(X, theta)
        return np.argmax(scores, axis=1).astype(float)[:, None]

    def simulate(self, theta, n, rng):
        # Labels follow the top class score; z is logistic truncated above at that score.
        theta = self.check_truth(theta)
        X = _linear_design(rng, n, self.p)
        labels = self.forward_model(X, None, theta)
        own = self.class_scores(X, theta)[np.arange(n), labels[:, 0].astype(int)]
        q = (1.0 - rng.random(n)) * self.errors.cdf(own)
        Z = np.minimum(self.errors.ppf(q), own)[:, None]
        return Dataset(Y=labels, X=X, truth=Truth(theta, Z))

    def check_dataset(self, dataset: Dataset) -> None:
        super().check_dataset(dataset)
        if not np.all(np.isin(dataset.Y[:, 0], np.arange(self.n_classes, dtype=float))):
            raise DataError(f"{self.name} labels must be integers in 0..{self.n_classes - 1}")


class SSLLogistic(LogisticBinary):
    """
    Binary logistic regression with missing labels. Latents per row are (u, v):
    u is the logistic error; v drives the soft label sigmoid(v / tau) of an
    unlabeled row. Simulated v carries the sign of the hidden label.
    """

    name = "ssl_logistic"
    discrepancy_kind = "ssl_logistic"
    n_latent = 2

    def __init__(self, p: int, label_missing_fraction: float = 0.5) -> None:
        super().__init__(p)
        self.label_missing_fraction = label_missing_fraction

    def simulate(self, theta, n, rng):
        theta = self.check_truth(theta)
        X = _linear_design(rng, n, self.p)
        U = self.errors.sample(rng, (n, 1))
        labels = self.forward_model(X, U, theta)[:, 0]
        V = np.abs(self.errors.sample(rng, (n, 1))) * (2.0 * labels[:, None] - 1.0)
        n_missing = int(round(self.label_missing_fraction * n))
        mask = np.zeros(n, dtype=bool)
        mask[rng.permutation(n)[:n_missing]] = True
        Y = np.where(mask, 0.0, labels)[:, None]
        return Dataset(
            Y=Y,
            X=X,
            label_mask=mask,
            truth=Truth(theta, np.hstack([U, V]), labels=labels),
        )

    def response_inputs(self, dataset, Z, tau):
        y = dataset.Y[:, 0].copy()
        if dataset.label_mask is not None and dataset.label_mask.any():
            miss = dataset.label_mask
            y[miss] = special.expit(Z[miss, 1] / tau)
        return y[:, None]

    def build_inputs(self, dataset, Z, tau=1.0 / 50.0):
        # (y or soft label, x, u)
        return np.hstack([self.response_inputs(dataset, Z, tau), dataset.X, Z[:, :1]])

    @property
    def input_width(self) -> int:
        return 1 + self.x_dim + 1

    def latent_grad(self, dataset, Z, grad_inputs, tau=1.0 / 50.0):
        out = np.zeros_like(Z)
        out[:, 0] = grad_inputs[:, -1]
        if dataset.label_mask is not None and dataset.label_mask.any():
            miss = dataset.label_mask
            s = special.expit(Z[miss, 1] / tau)
            out[miss, 1] = grad_inputs[miss, 0] * s * (1.0 - s) / tau
        return out


# ── Factory / module API ───────────────────────────────────────────────────


def make_family(config: FamilyConfig) -> ModelFamily:
    name = config.name
    if name == "linear_known_sigma":
        return LinearKnownSigma(
            config.p,
            1.0 if config.sigma is None else config.sigma,
            config.outlier_fraction,
            config.outlier_shift,
        )
    if name == "linear_unknown_sigma":
        return LinearUnknownSigma(config.p, config.outlier_fraction, config.outlier_shift)
    if name == "gauss2":
        return Gauss2(GAUSS2_SIGMA if config.sigma is None else config.sigma)
    if name == "logistic_binary":
        return LogisticBinary(config.p)
    if name == "logistic_multiclass":
        return LogisticMulticlass(config.p, config.n_classes)
    if name == "ssl_logistic":
        return SSLLogistic(config.p, config.label_missing_fraction)
    if name == "behrens_fisher":
        return BehrensFisher(config.group_sizes)
    if name == "bivariate_normal":
        return BivariateNormal()
    if name == "mediation":
        return Mediation()
    raise ConfigError(f"unknown model family '{name}'")


def family_truth(family: ModelFamily, config: FamilyConfig) -> np.ndarray:
    if config.truth is None:
        return family.default_truth()
    try:
        return family.check_truth(np.asarray(config.truth, dtype=float))
    except DomainError as exc:
        raise ConfigError("invalid family truth", [f"family.truth: {exc}"]) from exc


def simulate(family: ModelFamily, true_params: np.ndarray, n: int, seed: int) -> Dataset:
    if n < 0:
        raise DomainError("n must be non-negative")
    dataset = family.simulate(np.asarray(true_params, dtype=float), n, make_generator(seed))
    dataset.meta["family"] = family.name
    return dataset


def forward_model(
    family: ModelFamily, x: np.ndarray, z: np.ndarray, theta: np.ndarray
) -> np.ndarray:
    return family.forward_model(x, z, family.check_truth(theta))


def derived_quantities(family: ModelFamily, theta: np.ndarray) -> Dict[str, np.ndarray]:
    """Derived functionals; a 1-D theta gives scalar entries."""
    theta = np.asarray(theta, dtype=float)
    out = family.derived_quantities(np.atleast_2d(theta))
    if theta.ndim == 1:
        return {name: values[0] for name, values in out.items()}
    return out


# ── CSV dataset format ─────────────────────────────────────────────────────


def _response_names(q: int) -> List[str]:
    return ["y"] + [f"y{j}" for j in range(2, q + 1)]


def write_csv(dataset: Dataset, path: Union[str, Path]) -> None:
    frame = pd.DataFrame()
    if dataset.label_mask is not None:
        frame["label"] = np.where(dataset.label_mask, np.nan, dataset.Y[:, 0])
    else:
        for name, column in zip(_response_names(dataset.Y.shape[1]), dataset.Y.T):
            frame[name] = column
    for j in range(dataset.X.shape[1]):
        frame[f"x{j + 1}"] = dataset.X[:, j]
    if frame.columns.empty:
        raise DataError("dataset has no columns to write")
    try:
        frame.to_csv(path, index=False, float_format="%.17g", na_rep="")
    except OSError as exc:
        raise DataError(f"cannot write dataset to {path}: {exc}") from exc


def read_csv(path: Union[str, Path], family: Optional[ModelFamily] = None) -> Dataset:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc

    y_cols = [c for c in _response_names(len(frame.columns)) if c in frame.columns]
    x_cols = sorted(
        (c for c in frame.columns if c.startswith("x") and c[1:].isdigit()),
        key=lambda c: int(c[1:]),
    )
    unknown = set(frame.columns) - set(y_cols) - set(x_cols) - {"label"}
    if unknown:
        raise DataError(f"unexpected dataset columns: {sorted(unknown)}")
    if x_cols != [f"x{j}" for j in range(1, len(x_cols) + 1)]:
        raise DataError("covariate columns must be x1..xd without gaps")

    try:
        numeric = frame.apply(pd.to_numeric, errors="raise").astype(float)
    except (ValueError, TypeError) as exc:
        raise DataError(f"dataset {path} has non-numeric values: {exc}") from exc

    label_mask = None
    if "label" in numeric.columns:
        if y_cols:
            raise DataError("a dataset has either y columns or a label column, not both")
        labels = numeric["label"].to_numpy()
        label_mask = np.isnan(labels)
        Y = np.where(label_mask, 0.0, labels)[:, None]
    else:
        if not y_cols:
            raise DataError("dataset has no response column 'y'")
        Y = numeric[y_cols].to_numpy()
        if np.isnan(Y).any():
            raise DataError("response columns contain missing values")
    X = numeric[x_cols].to_numpy() if x_cols else np.zeros((len(numeric), 0))
    if np.isnan(X).any():
        raise DataError("covariate columns contain missing values")

    dataset = Dataset(Y=Y, X=X, label_mask=label_mask)
    if family is not None:
        family.check_dataset(dataset)
        dataset.meta["family"] = family.name
    return dataset
