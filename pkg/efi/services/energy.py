"""
Fitting Energy

U(Z, w) = eta * sum_i ||theta_i - theta_bar||^2 + sum_i d(i, .)

theta_i is the network's per-observation estimate and theta_bar their mean.
The efi_default variant evaluates every fitting error at theta_bar; efi_a
evaluates observation i at its own theta_i. Gradients are returned with
respect to the imputed latents Z and the network weights w.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from efi.core.errors import ConfigError, DomainError
from efi.schemas.energy import EnergyConfig
from efi.schemas.network import NetworkShape
from efi.services import nn_core
from efi.services.models import Dataset, ModelFamily

logger = logging.getLogger(__name__)


@dataclass
class EnergyTerms:
    total: float
    penalty: float
    discrepancy: float


@dataclass
class DiscrepancyTerms:
    """Per-row fitting errors with their partials w.r.t. the row's parameters and latents."""

    values: np.ndarray
    d_theta: np.ndarray
    d_z: np.ndarray


def theta_bar(thetas: np.ndarray) -> np.ndarray:
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[0] == 0:
        raise DomainError("theta_bar of an empty set")
    return thetas.mean(axis=0)


# ── Discrepancies ──────────────────────────────────────────────────────────


def _rowdot(X: np.ndarray, Theta: np.ndarray) -> np.ndarray:
    return np.einsum("nd,nd->n", X, Theta)


def discrepancy_normal(
    family: ModelFamily, dataset: Dataset, Z: np.ndarray, Theta: np.ndarray
) -> DiscrepancyTerms:
    """Squared residual ||y_i - f(x_i, z_i, theta_i)||^2."""
    Yhat, J_theta, J_z = family.predict(dataset.X, Z, Theta, dataset.Y)
    r = dataset.Y - Yhat
    return DiscrepancyTerms(
        values=np.sum(r * r, axis=1),
        d_theta=-2.0 * np.einsum("nq,nqd->nd", r, J_theta),
        d_z=-2.0 * np.einsum("nq,nqk->nk", r, J_z),
    )


def discrepancy_logistic(
    y: np.ndarray, X: np.ndarray, z: np.ndarray, Theta: np.ndarray
) -> DiscrepancyTerms:
    """relu((z_i - x_i'theta_i)(2 y_i - 1)); zero iff the latent agrees with the label."""
    sign = 2.0 * y - 1.0
    a = (z - _rowdot(X, Theta)) * sign
    active = (a > 0.0).astype(float)
    return DiscrepancyTerms(
        values=np.maximum(a, 0.0),
        d_theta=-(active * sign)[:, None] * X,
        d_z=(active * sign)[:, None],
    )


def discrepancy_multiclass(
    labels: np.ndarray, X: np.ndarray, z: np.ndarray, Theta: np.ndarray, n_classes: int
) -> DiscrepancyTerms:
    """sum_{j != m} relu(x'theta_j - x'theta_m) + relu(z - x'theta_m) for observed class m."""
    n, p = X.shape
    T = Theta.reshape(n, n_classes, p)
    scores = np.einsum("np,nsp->ns", X, T)
    rows = np.arange(n)
    m = labels.astype(int)
    own = scores[rows, m]
    gaps = scores - own[:, None]
    gaps[rows, m] = 0.0
    active = (gaps > 0.0).astype(float)
    z_gap = z - own
    z_active = (z_gap > 0.0).astype(float)

    values = np.maximum(gaps, 0.0).sum(axis=1) + np.maximum(z_gap, 0.0)
    dT = active[:, :, None] * X[:, None, :]
    dT[rows, m, :] -= (active.sum(axis=1) + z_active)[:, None] * X
    return DiscrepancyTerms(
        values=values, d_theta=dT.reshape(n, n_classes * p), d_z=z_active[:, None]
    )


def discrepancy_ssl(
    y: np.ndarray,
    X: np.ndarray,
    Z: np.ndarray,
    Theta: np.ndarray,
    label_mask: Optional[np.ndarray],
    tau: float,
) -> DiscrepancyTerms:
    """Labeled rows use the logistic hinge with latent u; an unlabeled row replaces
    (2y - 1) by tanh(v / tau)."""
    if tau <= 0:
        raise DomainError("tau must be positive")
    n = X.shape[0]
    u = Z[:, 0]
    margin = u - _rowdot(X, Theta)
    sign = 2.0 * y - 1.0
    d_v = np.zeros(n)
    if label_mask is not None and label_mask.any():
        soft = np.tanh(Z[:, 1] / tau)
        sign = np.where(label_mask, soft, sign)
    a = margin * sign
    active = (a > 0.0).astype(float)
    if label_mask is not None and label_mask.any():
        d_v = np.where(label_mask, active * margin * (1.0 - sign * sign) / tau, 0.0)
    return DiscrepancyTerms(
        values=np.maximum(a, 0.0),
        d_theta=-(active * sign)[:, None] * X,
        d_z=np.stack([active * sign, d_v], axis=1),
    )


def discrepancy_terms(
    family: ModelFamily, dataset: Dataset, Z: np.ndarray, Theta: np.ndarray, tau: float
) -> DiscrepancyTerms:
    kind = family.discrepancy_kind
    if kind == "normal_regression":
        return discrepancy_normal(family, dataset, Z, Theta)
    if kind == "logistic_binary":
        return discrepancy_logistic(dataset.Y[:, 0], dataset.X, Z[:, 0], Theta)
    if kind == "logistic_multiclass":
        return discrepancy_multiclass(
            dataset.Y[:, 0], dataset.X, Z[:, 0], Theta, family.n_classes  # type: ignore[attr-defined]
        )
    if kind == "ssl_logistic":
        return discrepancy_ssl(dataset.Y[:, 0], dataset.X, Z, Theta, dataset.label_mask, tau)
    raise ConfigError(f"unknown discrepancy '{kind}'")


# ── Energy over per-row estimates ──────────────────────────────────────────


def energy_gradients_from_thetas(
    Theta_hat: np.ndarray,
    Z: np.ndarray,
    dataset: Dataset,
    family: ModelFamily,
    config: EnergyConfig,
    coupling: Optional[str] = None,
    frozen_bar: Optional[np.ndarray] = None,
) -> Tuple[EnergyTerms, np.ndarray, np.ndarray]:
    """
    Energy at fixed per-row estimates, the upstream gradient dU/dTheta_hat
    (n x d) and the direct partial dU/dZ (n x k).

    ``frozen_bar`` evaluates the energy with theta_bar held at the given value.
    """
    Theta_hat = np.atleast_2d(np.asarray(Theta_hat, dtype=float))
    n = Theta_hat.shape[0]
    coupling = coupling or config.z_coupling
    bar = theta_bar(Theta_hat) if frozen_bar is None else np.asarray(frozen_bar, dtype=float)

    diff = Theta_hat - bar
    penalty = config.eta * float(np.sum(diff * diff))
    at = Theta_hat if config.variant == "efi_a" else np.broadcast_to(bar, Theta_hat.shape)
    terms = discrepancy_terms(family, dataset, Z, np.ascontiguousarray(at), config.tau)
    discrepancy = float(np.sum(terms.values))

    exact = coupling == "exact" and frozen_bar is None
    G = 2.0 * config.eta * diff
    if exact:
        G = G - (2.0 * config.eta / n) * diff.sum(axis=0)
    if config.variant == "efi_a":
        G = G + terms.d_theta
    elif exact:
        G = G + terms.d_theta.mean(axis=0)

    return EnergyTerms(penalty + discrepancy, penalty, discrepancy), G, terms.d_z


def energy_from_thetas(
    Theta_hat: np.ndarray,
    Z: np.ndarray,
    dataset: Dataset,
    family: ModelFamily,
    config: EnergyConfig,
    frozen_bar: Optional[np.ndarray] = None,
) -> EnergyTerms:
    terms, _, _ = energy_gradients_from_thetas(
        Theta_hat, Z, dataset, family, config, frozen_bar=frozen_bar
    )
    return terms


# ── Energy through the network ─────────────────────────────────────────────


@dataclass
class EnergyEvaluation:
    Z: np.ndarray
    w: np.ndarray
    raw_inputs: np.ndarray
    tape: nn_core.ForwardTape
    theta_hat: np.ndarray
    terms: EnergyTerms
    upstream_w: np.ndarray
    upstream_z: np.ndarray
    d_z: np.ndarray

    @property
    def theta_bar(self) -> np.ndarray:
        return self.theta_hat.mean(axis=0)


class EnergyModel:
    """Binds a family, a dataset, a network shape and an energy configuration."""

    def __init__(
        self,
        family: ModelFamily,
        dataset: Dataset,
        shape: NetworkShape,
        config: EnergyConfig,
    ) -> None:
        if config.discrepancy is not None and config.discrepancy != family.discrepancy_kind:
            raise ConfigError(
                "energy discrepancy does not match the model family",
                [f"energy.discrepancy: {config.discrepancy} vs {family.name}"],
            )
        problems = []
        if shape.input_width != family.input_width:
            problems.append(
                f"network.layer_widths: input width {shape.input_width}, "
                f"{family.name} needs {family.input_width}"
            )
        if shape.output_width != family.d_theta:
            problems.append(
                f"network.layer_widths: output width {shape.output_width}, "
                f"{family.name} needs {family.d_theta}"
            )
        if problems:
            raise ConfigError("network shape does not match the model family", problems)
        family.check_dataset(dataset)

        self.family = family
        self.dataset = dataset
        self.shape = shape
        self.config = config
        self.scaler: Optional[nn_core.InputScaler] = None
        if shape.standardize_inputs:
            data_cols = np.hstack(
                [family.response_inputs(dataset, np.zeros((dataset.n, family.n_latent)), config.tau),
                 dataset.X]
            )
            n_net_latent = family.input_width - data_cols.shape[1]
            self.scaler = nn_core.InputScaler.fit(
                data_cols, n_net_latent, family.errors.cdf, family.errors.pdf
            )

    @property
    def n(self) -> int:
        return self.dataset.n

    def network_inputs(self, Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        raw = self.family.build_inputs(self.dataset, Z, self.config.tau)
        return raw, raw if self.scaler is None else self.scaler.transform(raw)

    def evaluate(self, Z: np.ndarray, w: np.ndarray) -> EnergyEvaluation:
        raw, net_in = self.network_inputs(Z)
        theta_hat, tape = nn_core.forward(self.shape, w, net_in)
        terms, G_w, d_z = energy_gradients_from_thetas(
            theta_hat, Z, self.dataset, self.family, self.config, coupling="exact"
        )
        G_z = G_w
        if self.config.z_coupling != "exact":
            _, G_z, d_z = energy_gradients_from_thetas(
                theta_hat, Z, self.dataset, self.family, self.config
            )
        return EnergyEvaluation(
            Z=Z,
            w=w,
            raw_inputs=raw,
            tape=tape,
            theta_hat=theta_hat,
            terms=terms,
            upstream_w=G_w,
            upstream_z=G_z,
            d_z=d_z,
        )

    def grad_z(self, ev: EnergyEvaluation) -> np.ndarray:
        """dU/dZ through the network input plus the direct dependence of d on z."""
        _, grad_in = nn_core.backward(self.shape, ev.w, ev.tape, ev.upstream_z)
        if self.scaler is not None:
            grad_in = self.scaler.backprop(ev.raw_inputs, grad_in)
        return self.family.latent_grad(self.dataset, ev.Z, grad_in, self.config.tau) + ev.d_z

    def grad_w(
        self, ev: EnergyEvaluation, batch: Optional[Union[Sequence[int], np.ndarray]] = None
    ) -> np.ndarray:
        """Unbiased estimate of dU/dw from the rows in ``batch`` (all rows when None)."""
        if batch is None:
            grad, _ = nn_core.backward(self.shape, ev.w, ev.tape, ev.upstream_w)
            return grad
        rows = np.asarray(batch)
        if rows.size == 0:
            raise DomainError("empty minibatch")
        grad, _ = nn_core.backward(self.shape, ev.w, ev.tape.take(rows), ev.upstream_w[rows])
        return grad * (self.n / rows.size)


# ── Functional API ─────────────────────────────────────────────────────────


def energy_total(
    Z: np.ndarray,
    w: np.ndarray,
    dataset: Dataset,
    family: ModelFamily,
    shape: NetworkShape,
    config: EnergyConfig,
) -> EnergyTerms:
    return EnergyModel(family, dataset, shape, config).evaluate(Z, w).terms


def grad_energy_z(
    Z: np.ndarray,
    w: np.ndarray,
    dataset: Dataset,
    family: ModelFamily,
    shape: NetworkShape,
    config: EnergyConfig,
) -> np.ndarray:
    model = EnergyModel(family, dataset, shape, config)
    return model.grad_z(model.evaluate(Z, w))


def grad_energy_w_minibatch(
    Z: np.ndarray,
    w: np.ndarray,
    batch: Union[Sequence[int], np.ndarray],
    dataset: Dataset,
    family: ModelFamily,
    shape: NetworkShape,
    config: EnergyConfig,
) -> np.ndarray:
    """Minibatch estimate of the log-likelihood gradient, -lambda (n/m) sum_batch dU_i/dw."""
    model = EnergyModel(family, dataset, shape, config)
    return -config.lam * model.grad_w(model.evaluate(Z, w), batch)
