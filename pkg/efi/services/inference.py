"""
Inference from fiducial samples.

Percentile intervals, point estimates, the fiducial mediation test,
per-parameter summaries and plot-data bundles.
"""

from __future__ import annotations

import logging
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from efi.core.config import settings
from efi.core.errors import DomainError
from efi.schemas.samples import FiducialSamples
from efi.services.models import Dataset, ModelFamily

logger = logging.getLogger(__name__)

Target = Union[str, int, Callable[[FiducialSamples], np.ndarray]]

SUMMARY_COLUMNS = ["name", "estimate", "lower", "upper", "width", "truth", "contains_truth"]
Z_SCATTER_COLUMNS = ["obs", "latent", "z_hat", "z_true"]
QQ_COLUMNS = ["latent", "theoretical", "z_hat", "z_true"]
RESIDUAL_COLUMNS = ["obs", "fitted", "residual"]
INTERVAL_COLUMNS = ["name", "estimate", "lower", "upper", "truth"]


def _values(samples: FiducialSamples, target: Target) -> np.ndarray:
    if callable(target):
        return np.asarray(target(samples), dtype=float).reshape(-1)
    if isinstance(target, (int, np.integer)):
        return samples.draws[:, int(target)]
    try:
        return samples.column(target)
    except KeyError as exc:
        raise DomainError(str(exc)) from exc


def quantile_interval(values: np.ndarray, level: float) -> Tuple[float, float]:
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size < 2:
        raise DomainError(f"percentile interval needs at least 2 draws, got {values.size}")
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(values, [tail, 1.0 - tail], method=settings.QUANTILE_METHOD)
    return float(lo), float(hi)


def percentile_ci(samples: FiducialSamples, target: Target, level: float) -> Tuple[float, float]:
    """
    Equal-tailed percentile interval of one column, a derived quantity, or a
    functional evaluated row-by-row on the draws.
    """
    return quantile_interval(_values(samples, target), level)


def point_estimate(samples: FiducialSamples) -> np.ndarray:
    if samples.n_draws == 0:
        raise DomainError("no draws to average")
    return samples.draws.mean(axis=0)


def mediation_product(samples: FiducialSamples) -> np.ndarray:
    missing = [name for name in ("beta", "gamma") if name not in samples.param_names]
    if missing:
        raise DomainError(f"samples have no column(s) {missing}")
    return samples.column("beta") * samples.column("gamma")


def mediation_decision(samples: FiducialSamples, level: float) -> bool:
    """Reject H0: beta * gamma = 0 when the product's interval excludes zero."""
    lo, hi = percentile_ci(samples, mediation_product, level)
    return not lo <= 0.0 <= hi


def summarize(
    samples: FiducialSamples,
    level: float,
    truth: Optional[np.ndarray] = None,
    family: Optional[ModelFamily] = None,
) -> pd.DataFrame:
    truth_map: Dict[str, float] = {}
    if truth is not None:
        truth = np.asarray(truth, dtype=float)
        truth_map.update(zip(samples.param_names, truth.tolist()))
        if family is not None:
            for name, values in family.derived_quantities(truth[None, :]).items():
                truth_map[name] = float(values[0])

    rows = []
    for name in samples.names:
        values = samples.column(name)
        true_value = truth_map.get(name)
        if values.size >= 2:
            lo, hi = quantile_interval(values, level)
            estimate = float(values.mean())
        else:
            lo = hi = estimate = float("nan")
        contains = None
        if true_value is not None and np.isfinite(lo):
            contains = bool(lo <= true_value <= hi)
        rows.append(
            {
                "name": name,
                "estimate": estimate,
                "lower": lo,
                "upper": hi,
                "width": hi - lo,
                "truth": true_value,
                "contains_truth": contains,
            }
        )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def ssl_accuracy(theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Accuracy of the classifier 1{x'theta >= 0}."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size == 0:
        raise DomainError("no observations to score")
    predicted = (np.asarray(X, dtype=float) @ np.asarray(theta, dtype=float) >= 0.0).astype(float)
    return float(np.mean(predicted == y))


# ── Plot data ──────────────────────────────────────────────────────────────


def _empty(columns: List[str]) -> pd.DataFrame:
    return pd.DataFrame({name: pd.Series(dtype=float) for name in columns})


def diagnostics(
    samples: FiducialSamples,
    dataset: Dataset,
    family: ModelFamily,
    level: float = 0.95,
) -> Dict[str, pd.DataFrame]:
    """
    Plot-data tables: imputed versus true latents, Q-Q pairs, residuals at the
    point estimate, and per-parameter interval endpoints. Columns that need
    the true latents are dropped when the dataset carries no truth.
    """
    has_truth = dataset.truth is not None
    z_cols = Z_SCATTER_COLUMNS if has_truth else Z_SCATTER_COLUMNS[:-1]
    qq_cols = QQ_COLUMNS if has_truth else QQ_COLUMNS[:-1]
    bundles: Dict[str, pd.DataFrame] = {}

    if samples.latents:
        Z_hat = samples.latents[-1]
        n, k = Z_hat.shape
        scatter = pd.DataFrame(
            {
                "obs": np.tile(np.arange(n), k),
                "latent": np.repeat(np.arange(k), n),
                "z_hat": Z_hat.T.reshape(-1),
            }
        )
        probs = (np.arange(1, n + 1) - 0.5) / n
        qq = pd.DataFrame(
            {
                "latent": np.repeat(np.arange(k), n),
                "theoretical": np.tile(family.errors.ppf(probs), k),
                "z_hat": np.sort(Z_hat, axis=0).T.reshape(-1),
            }
        )
        if has_truth and dataset.truth.Z.shape == Z_hat.shape:
            scatter["z_true"] = dataset.truth.Z.T.reshape(-1)
            qq["z_true"] = np.sort(dataset.truth.Z, axis=0).T.reshape(-1)
        bundles["z_scatter"] = scatter.reindex(columns=z_cols)
        bundles["qq"] = qq.reindex(columns=qq_cols)
    else:
        bundles["z_scatter"] = _empty(z_cols)
        bundles["qq"] = _empty(qq_cols)

    if samples.n_draws and family.discrepancy_kind == "normal_regression":
        theta = point_estimate(samples)
        zeros = np.zeros((dataset.n, family.n_latent))
        fitted = family.forward_model(dataset.X, zeros, theta)[:, 0]
        bundles["residuals"] = pd.DataFrame(
            {"obs": np.arange(dataset.n), "fitted": fitted, "residual": dataset.Y[:, 0] - fitted}
        )
    else:
        bundles["residuals"] = _empty(RESIDUAL_COLUMNS)

    summary = summarize(
        samples, level, None if dataset.truth is None else dataset.truth.theta, family
    )
    bundles["intervals"] = summary.reindex(columns=INTERVAL_COLUMNS)
    return bundles
